#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lungfpr/adam.hpp"
#include "lungfpr/model.hpp"
#include "lungfpr/preprocess.hpp"
#include "lungfpr/sampling.hpp"

namespace lungfpr::train {

struct TrainConfig {
  std::size_t batch_size = kDefaultBatchSize;
  /// One epoch is one balanced chunk (all positives + as many negatives).
  std::size_t epochs = 0;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::size_t fold = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double chunk_loss = 0.0;      // mean cross-entropy over the chunk
  double chunk_accuracy = 0.0;  // train-mode argmax accuracy over the chunk
};

struct TrainResult {
  nn::ModelParams<float> params;
  std::vector<EpochRecord> history;
};

/// Trains `spec` on `patches` (the training partition; positives already
/// augmented). Sub-seeds "init", "sampler" and "dropout" derive from config.seed.
TrainResult train_fold(const nn::ModelSpec& spec, std::span<const preprocess::Patch> patches,
                       const TrainConfig& config);

/// Positives replaced by their 16 flip/rotation variants (inheriting ids);
/// negatives copied unchanged.
std::vector<preprocess::Patch> augment_positives(std::span<const preprocess::Patch> patches);

/// Stacks patch tensors into an (N, 1, D, H, W) batch.
Tensor stack_batch(std::span<const preprocess::Patch* const> patches);

/// Eval-mode argmax accuracy.
double evaluate_accuracy(const nn::ModelParams<float>& params, std::span<const preprocess::Patch> patches,
                         std::size_t batch_size = kDefaultBatchSize);

/// `epoch,chunk_loss,chunk_accuracy` rows.
void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history);

}  // namespace lungfpr::train
