#pragma once

// Candidate scoring, score tables and probability-averaging fusion.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lungfpr/model.hpp"
#include "lungfpr/preprocess.hpp"

namespace lungfpr::eval {

struct ScoredCandidate {
  std::int64_t candidate_id = 0;
  std::string scan_id;
  std::optional<std::int64_t> nodule_id;  // present iff ground-truth positive
  double score = 0.0;                     // P(nodule)

  bool operator==(const ScoredCandidate&) const = default;
};

using ScoreTable = std::vector<ScoredCandidate>;

/// Eval-mode P(nodule) for each patch, in input order.
ScoreTable score_candidates(const nn::ModelParams<float>& params, std::span<const preprocess::Patch> patches,
                            std::size_t batch_size = 32);

/// CSV `candidate_id,scan_id,nodule_id,score`; nodule_id is empty for negatives.
std::string format_score_csv(const ScoreTable& table);
ScoreTable parse_score_csv(std::string_view text);
void write_score_csv(const std::filesystem::path& path, const ScoreTable& table);
ScoreTable read_score_csv(const std::filesystem::path& path);

struct FusionSpec {
  std::vector<int> members;  // model ids, distinct, nonempty
};

/// Fusion 1..4: {1,3,5}, {1,2,5}, {1,4,5}, {1,2,3,4,5}.
FusionSpec fusion_preset(int fusion_id);

/// Per-candidate arithmetic mean of the member tables' scores. Tables must
/// cover the same candidate ids; output follows the first member's order.
ScoreTable fuse(const std::map<int, ScoreTable>& tables, const FusionSpec& spec);

}  // namespace lungfpr::eval
