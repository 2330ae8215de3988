#include "lungfpr/training.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "text_util.hpp"

namespace lungfpr::train {

using preprocess::Patch;

Tensor stack_batch(std::span<const Patch* const> patches) {
  if (patches.empty()) throw std::invalid_argument("stack_batch: empty batch");
  const Shape& s = patches.front()->data.shape();
  if (s.size() != 3) throw std::invalid_argument("stack_batch: patches must be {D, H, W}");
  const std::size_t per = patches.front()->data.size();
  std::vector<float> data;
  data.reserve(per * patches.size());
  for (const Patch* p : patches) {
    if (p->data.shape() != s) throw std::invalid_argument("stack_batch: patches differ in shape");
    data.insert(data.end(), p->data.begin(), p->data.end());
  }
  return Tensor({patches.size(), 1, s[0], s[1], s[2]}, std::move(data));
}

std::vector<Patch> augment_positives(std::span<const Patch> patches) {
  std::vector<Patch> out;
  for (const Patch& p : patches) {
    if (p.label != 1) {
      out.push_back(p);
      continue;
    }
    for (Tensor& variant : preprocess::augment16(p.data)) {
      Patch copy = p;
      copy.data = std::move(variant);
      out.push_back(std::move(copy));
    }
  }
  return out;
}

TrainResult train_fold(const nn::ModelSpec& spec, std::span<const Patch> patches, const TrainConfig& config) {
  spec.validate();
  if (config.batch_size == 0) throw std::invalid_argument("train_fold: batch size must be positive");
  TrainResult result{nn::build_model<float>(spec, derive_seed(config.seed, "init")), {}};
  if (config.epochs == 0) return result;

  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const Shape expected{spec.input.depth, spec.input.height, spec.input.width};
    if (patches[i].data.shape() != expected) {
      throw std::invalid_argument("train_fold: patch " + std::to_string(i) + " has shape " +
                                  shape_string(patches[i].data.shape()));
    }
    (patches[i].label == 1 ? positives : negatives).push_back(i);
  }

  BalancedSampler sampler(std::move(positives), std::move(negatives), derive_seed(config.seed, "sampler"));
  Rng dropout_rng(derive_seed(config.seed, "dropout"));
  AdamState<float> adam{config.adam, 0, {}, {}};

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const Chunk chunk = sampler.next_chunk();
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto batch : split_batches(chunk.samples, config.batch_size)) {
      std::vector<const Patch*> members;
      std::vector<int> labels;
      for (const Sample& s : batch) {
        members.push_back(&patches[s.index]);
        labels.push_back(s.label);
      }
      const Tensor input = stack_batch(members);
      const auto trace = nn::forward_train(result.params, input, dropout_rng);
      loss_sum += nn::cross_entropy(trace.probs, labels) * static_cast<double>(labels.size());
      for (std::size_t i = 0; i < labels.size(); ++i) {
        const int predicted = trace.probs[i * 2 + 1] > trace.probs[i * 2] ? 1 : 0;
        correct += predicted == labels[i] ? 1 : 0;
      }
      const auto grads = nn::backward(result.params, trace, labels);
      adam_step(result.params, grads, adam);
    }
    const auto total = static_cast<double>(chunk.samples.size());
    result.history.push_back({epoch, loss_sum / total, static_cast<double>(correct) / total});
  }
  return result;
}

double evaluate_accuracy(const nn::ModelParams<float>& params, std::span<const Patch> patches, std::size_t batch_size) {
  if (patches.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < patches.size(); start += batch_size) {
    const std::size_t end = std::min(patches.size(), start + batch_size);
    std::vector<const Patch*> members;
    for (std::size_t i = start; i < end; ++i) members.push_back(&patches[i]);
    const Tensor probs = nn::predict(params, stack_batch(members));
    for (std::size_t i = 0; i < members.size(); ++i) {
      const int predicted = probs[i * 2 + 1] > probs[i * 2] ? 1 : 0;
      correct += predicted == members[i]->label ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(patches.size());
}

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,chunk_loss,chunk_accuracy\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << detail::format_double(r.chunk_loss) << ',' << detail::format_double(r.chunk_accuracy)
        << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace lungfpr::train
