#include "lungfpr/sampling.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace lungfpr::train {

BalancedSampler::BalancedSampler(std::vector<std::size_t> positives, std::vector<std::size_t> negatives,
                                 std::uint64_t seed)
    : positives_(std::move(positives)), pool_(std::move(negatives)), rng_(seed) {
  if (positives_.empty()) throw std::invalid_argument("balanced sampler: empty positive set");
  if (pool_.empty()) throw std::invalid_argument("balanced sampler: empty negative pool");
  rng_.shuffle(std::span<std::size_t>(pool_));
}

Chunk BalancedSampler::next_chunk() {
  const std::size_t n = positives_.size();
  Chunk chunk;
  chunk.samples.reserve(2 * n);
  chunk.negatives_drawn.reserve(n);
  for (std::size_t idx : positives_) chunk.samples.push_back({idx, 1});
  while (chunk.negatives_drawn.size() < n) {
    if (cursor_ == pool_.size()) {
      rng_.shuffle(std::span<std::size_t>(pool_));
      cursor_ = 0;
      ++pass_;
    }
    const std::size_t idx = pool_[cursor_++];
    chunk.negatives_drawn.push_back(idx);
    chunk.samples.push_back({idx, 0});
  }
  rng_.shuffle(std::span<Sample>(chunk.samples));
  return chunk;
}

std::vector<std::span<const Sample>> split_batches(std::span<const Sample> chunk, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<std::span<const Sample>> batches;
  for (std::size_t start = 0; start < chunk.size(); start += batch_size) {
    batches.push_back(chunk.subspan(start, std::min(batch_size, chunk.size() - start)));
  }
  return batches;
}

std::size_t FoldPlan::fold_of(const std::string& scan_id) const {
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (std::find(folds[f].begin(), folds[f].end(), scan_id) != folds[f].end()) return f;
  }
  throw std::out_of_range("scan " + scan_id + " is not in the fold plan");
}

FoldPlan make_folds(std::span<const std::string> scan_ids, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("fold count must be positive");
  if (scan_ids.size() < k) {
    throw std::invalid_argument("fewer scans (" + std::to_string(scan_ids.size()) + ") than folds (" +
                                std::to_string(k) + ")");
  }
  std::vector<std::string> ids(scan_ids.begin(), scan_ids.end());
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
    throw std::invalid_argument("duplicate scan id in fold input");
  }
  Rng rng(seed);
  rng.shuffle(std::span<std::string>(ids));
  FoldPlan plan;
  plan.folds.resize(k);
  for (std::size_t i = 0; i < ids.size(); ++i) plan.folds[i % k].push_back(std::move(ids[i]));
  return plan;
}

}  // namespace lungfpr::train
