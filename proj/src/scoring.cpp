#include "lungfpr/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "lungfpr/ct_ingest.hpp"
#include "lungfpr/training.hpp"
#include "text_util.hpp"

namespace lungfpr::eval {

ScoreTable score_candidates(const nn::ModelParams<float>& params, std::span<const preprocess::Patch> patches,
                            std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("score_candidates: batch size must be positive");
  ScoreTable table;
  table.reserve(patches.size());
  for (std::size_t start = 0; start < patches.size(); start += batch_size) {
    const std::size_t end = std::min(patches.size(), start + batch_size);
    std::vector<const preprocess::Patch*> members;
    for (std::size_t i = start; i < end; ++i) members.push_back(&patches[i]);
    const Tensor probs = nn::predict(params, train::stack_batch(members));
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto& p = *members[i];
      table.push_back({p.candidate_id, p.series_id, p.nodule_id, static_cast<double>(probs[i * 2 + 1])});
    }
  }
  return table;
}

std::string format_score_csv(const ScoreTable& table) {
  std::ostringstream os;
  os << "candidate_id,scan_id,nodule_id,score\n";
  for (const auto& c : table) {
    os << c.candidate_id << ',' << c.scan_id << ',';
    if (c.nodule_id) os << *c.nodule_id;
    os << ',' << detail::format_double(c.score) << '\n';
  }
  return os.str();
}

ScoreTable parse_score_csv(std::string_view text) {
  const auto rows = detail::lines(text);
  if (rows.empty() || detail::trim(rows.front()) != "candidate_id,scan_id,nodule_id,score") {
    throw std::runtime_error("score table: wrong header");
  }
  ScoreTable table;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (detail::trim(rows[i]).empty()) continue;
    const auto cells = detail::split(rows[i], ',');
    const std::string where = "score table line " + std::to_string(i + 1);
    if (cells.size() != 4) throw std::runtime_error(where + ": expected 4 columns");
    ScoredCandidate c;
    const auto id = detail::parse_int(cells[0]);
    if (!id) throw std::runtime_error(where + ": bad candidate_id");
    c.candidate_id = *id;
    c.scan_id = std::string(detail::trim(cells[1]));
    if (!detail::trim(cells[2]).empty()) {
      const auto nodule = detail::parse_int(cells[2]);
      if (!nodule) throw std::runtime_error(where + ": bad nodule_id");
      c.nodule_id = *nodule;
    }
    const auto score = detail::parse_double(cells[3]);
    if (!score || !std::isfinite(*score)) throw std::runtime_error(where + ": bad score");
    c.score = *score;
    table.push_back(std::move(c));
  }
  return table;
}

void write_score_csv(const std::filesystem::path& path, const ScoreTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_score_csv(table);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

ScoreTable read_score_csv(const std::filesystem::path& path) { return parse_score_csv(ingest::read_text_file(path)); }

FusionSpec fusion_preset(int fusion_id) {
  switch (fusion_id) {
    case 1: return {{1, 3, 5}};
    case 2: return {{1, 2, 5}};
    case 3: return {{1, 4, 5}};
    case 4: return {{1, 2, 3, 4, 5}};
    default: throw std::invalid_argument("fusion id must be in 1..4, got " + std::to_string(fusion_id));
  }
}

ScoreTable fuse(const std::map<int, ScoreTable>& tables, const FusionSpec& spec) {
  if (spec.members.empty()) throw std::invalid_argument("fuse: empty fusion spec");
  if (std::set<int>(spec.members.begin(), spec.members.end()).size() != spec.members.size()) {
    throw std::invalid_argument("fuse: fusion members must be distinct");
  }
  std::vector<const ScoreTable*> members;
  for (int id : spec.members) {
    const auto it = tables.find(id);
    if (it == tables.end()) throw std::invalid_argument("fuse: no score table for model " + std::to_string(id));
    members.push_back(&it->second);
  }

  const ScoreTable& base = *members.front();
  std::unordered_map<std::int64_t, std::size_t> position;
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (!position.emplace(base[i].candidate_id, i).second) {
      throw std::invalid_argument("fuse: duplicate candidate id " + std::to_string(base[i].candidate_id));
    }
  }

  std::vector<double> sums(base.size(), 0.0);
  for (const ScoreTable* table : members) {
    if (table->size() != base.size()) throw std::invalid_argument("fuse: candidate-set mismatch between tables");
    std::vector<bool> seen(base.size(), false);
    for (const auto& c : *table) {
      const auto it = position.find(c.candidate_id);
      if (it == position.end() || seen[it->second]) {
        throw std::invalid_argument("fuse: candidate-set mismatch at id " + std::to_string(c.candidate_id));
      }
      seen[it->second] = true;
      sums[it->second] += c.score;
    }
  }

  ScoreTable fused = base;
  const auto k = static_cast<double>(members.size());
  for (std::size_t i = 0; i < fused.size(); ++i) fused[i].score = sums[i] / k;
  return fused;
}

}  // namespace lungfpr::eval
