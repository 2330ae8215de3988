#pragma once

// Class-balanced chunk stream and scan-level cross-validation folds.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lungfpr/rng.hpp"

namespace lungfpr::train {

inline constexpr std::size_t kDefaultBatchSize = 32;
inline constexpr std::size_t kDefaultFolds = 10;

struct Sample {
  std::size_t index = 0;  // caller's sample id
  int label = 0;
};

struct Chunk {
  /// All positives plus as many negatives, jointly shuffled.
  std::vector<Sample> samples;
  /// Negatives in the order they were drawn from the pool.
  std::vector<std::size_t> negatives_drawn;
};

/// Emits chunks made of every positive and an equal number of fresh
/// negatives. Negatives are drawn without replacement from a shuffled pool;
/// when fewer remain than needed, the rest are taken and the whole pool is
/// reshuffled for the next pass, so a chunk that straddles two passes may
/// repeat a negative.
class BalancedSampler {
 public:
  BalancedSampler(std::vector<std::size_t> positives, std::vector<std::size_t> negatives, std::uint64_t seed);

  Chunk next_chunk();

  std::size_t positives_per_chunk() const { return positives_.size(); }
  std::size_t pool_size() const { return pool_.size(); }
  /// Number of completed pool passes plus the current one (starts at 1).
  std::size_t pool_pass() const { return pass_; }

 private:
  std::vector<std::size_t> positives_;
  std::vector<std::size_t> pool_;
  std::size_t cursor_ = 0;
  std::size_t pass_ = 1;
  Rng rng_;
};

/// Consecutive slices of at most `batch_size` samples.
std::vector<std::span<const Sample>> split_batches(std::span<const Sample> chunk,
                                                   std::size_t batch_size = kDefaultBatchSize);

struct FoldPlan {
  std::vector<std::vector<std::string>> folds;

  std::size_t size() const { return folds.size(); }
  /// Fold holding `scan_id`; throws std::out_of_range if absent.
  std::size_t fold_of(const std::string& scan_id) const;
};

/// Shuffle scan ids with `seed` and deal them round-robin into k folds.
FoldPlan make_folds(std::span<const std::string> scan_ids, std::size_t k, std::uint64_t seed);

}  // namespace lungfpr::train
