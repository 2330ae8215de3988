#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "lungfpr/froc.hpp"
#include "lungfpr/scoring.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace lungfpr;
using namespace lungfpr::eval;

namespace {

ScoredCandidate pos(std::int64_t id, std::int64_t nodule, double score, std::string scan = "a") {
  return {id, std::move(scan), nodule, score};
}
ScoredCandidate neg(std::int64_t id, double score, std::string scan = "a") {
  return {id, std::move(scan), std::nullopt, score};
}

// Example instance: nodule A (0.9), nodule B (0.4, 0.6), negatives 0.8, 0.5, 0.3 over 2 scans.
std::vector<ScoredCandidate> example() {
  return {pos(0, 0, 0.9), pos(1, 1, 0.4), pos(2, 1, 0.6, "b"), neg(3, 0.8), neg(4, 0.5, "b"), neg(5, 0.3)};
}

const FrocPoint* point_at(const FrocCurve& c, double t) {
  for (const auto& p : c.points) {
    if (p.threshold == t) return &p;
  }
  return nullptr;
}

std::vector<ScoredCandidate> random_instance(std::mt19937_64& gen, std::size_t& n_scans) {
  std::uniform_int_distribution<int> n_cand(1, 50), n_nod(1, 10), scans(1, 5), coin(0, 3), level(0, 20);
  const int nodules = n_nod(gen);
  n_scans = static_cast<std::size_t>(scans(gen));
  std::vector<ScoredCandidate> out;
  const int count = std::max(n_cand(gen), nodules);
  for (int i = 0; i < count; ++i) {
    ScoredCandidate c;
    c.candidate_id = i;
    c.scan_id = "s" + std::to_string(i % n_scans);
    // coarse levels force plenty of ties
    c.score = level(gen) / 20.0;
    if (i < nodules) {
      c.nodule_id = i;
    } else if (coin(gen) == 0) {
      c.nodule_id = std::uniform_int_distribution<int>(0, nodules - 1)(gen);
    }
    out.push_back(c);
  }
  std::shuffle(out.begin(), out.end(), gen);
  return out;
}

}  // namespace

TEST(Froc, WorkedExample) {
  const auto curve = compute_froc(example(), 2);
  EXPECT_EQ(curve.n_nodules, 2u);
  const auto* at06 = point_at(curve, 0.6);
  const auto* at09 = point_at(curve, 0.9);
  ASSERT_TRUE(at06 && at09);
  EXPECT_EQ(at06->sensitivity, 1.0);
  EXPECT_EQ(at06->fp_per_scan, 0.5);
  EXPECT_EQ(at09->sensitivity, 0.5);
  EXPECT_EQ(at09->fp_per_scan, 0.0);
  EXPECT_EQ(sensitivity_at(curve, 1.0), 1.0);
  EXPECT_EQ(sensitivity_at(curve, 0.25), 0.5);
}

TEST(Froc, PerfectSeparation) {
  const auto curve = compute_froc(std::vector<ScoredCandidate>{pos(0, 0, 0.9), pos(1, 1, 0.8), neg(2, 0.2), neg(3, 0.1)}, 1);
  EXPECT_EQ(sensitivity_at(curve, 0.125), 1.0);
  const auto* p = point_at(curve, 0.8);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->fp_per_scan, 0.0);
  EXPECT_EQ(p->sensitivity, 1.0);
}

TEST(Froc, AllScoresEqualGiveOnePoint) {
  const auto curve = compute_froc(std::vector<ScoredCandidate>{pos(0, 0, 0.5), neg(1, 0.5), neg(2, 0.5), neg(3, 0.5)}, 2);
  ASSERT_EQ(curve.points.size(), 1u);
  EXPECT_EQ(curve.points[0].sensitivity, 1.0);
  EXPECT_EQ(curve.points[0].fp_per_scan, 1.5);
}

TEST(Froc, Errors) {
  EXPECT_THROW(compute_froc(std::vector<ScoredCandidate>{neg(0, 0.3)}, 1), std::invalid_argument);
  EXPECT_THROW(compute_froc(example(), 0), std::invalid_argument);
}

TEST(Froc, SensitivityAtEdges) {
  const auto curve = compute_froc(std::vector<ScoredCandidate>{neg(0, 0.9), neg(1, 0.8), pos(2, 0, 0.7)}, 1);
  EXPECT_EQ(sensitivity_at(curve, 0.5), 0.0);  // below the first point with a detection
  EXPECT_EQ(sensitivity_at(curve, 100.0), 1.0);
}

TEST(Froc, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t n_scans = 0;
    const auto scored = random_instance(gen, n_scans);
    const auto curve = compute_froc(scored, n_scans);
    const auto expected = oracle::brute_force_froc(scored, n_scans);
    ASSERT_EQ(curve.points.size(), expected.size()) << "trial " << trial;
    for (std::size_t i = 0; i < expected.size(); ++i) {
      ASSERT_EQ(curve.points[i], expected[i]) << "trial " << trial << " point " << i;
    }
  }
}

TEST(Froc, MonotoneCurvesAndOperatingPoints) {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n_scans = 0;
    const auto scored = random_instance(gen, n_scans);
    const auto curve = compute_froc(scored, n_scans);
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
      ASSERT_LT(curve.points[i].threshold, curve.points[i - 1].threshold);
      ASSERT_GE(curve.points[i].fp_per_scan, curve.points[i - 1].fp_per_scan);
      ASSERT_GE(curve.points[i].sensitivity, curve.points[i - 1].sensitivity);
    }
    double prev = 0.0;
    for (double r = 0.01; r < 20; r *= 1.3) {
      const double s = sensitivity_at(curve, r);
      ASSERT_GE(s, prev);
      ASSERT_LE(s, 1.0);
      prev = s;
    }
    const auto ops = operating_sensitivities(curve);
    const double c = cpm(curve);
    ASSERT_GE(c, *std::min_element(ops.begin(), ops.end()));
    ASSERT_LE(c, *std::max_element(ops.begin(), ops.end()));
  }
}

TEST(Cpm, ReferenceColumnsReproduceTheirAverages) {
  struct Column {
    const char* name;
    std::array<double, 7> sens;
    double average;
  };
  const Column columns[] = {
      {"M1", {0.431, 0.504, 0.593, 0.68, 0.739, 0.79, 0.844}, 0.654},
      {"M2", {0.444, 0.537, 0.631, 0.709, 0.763, 0.811, 0.856}, 0.679},
      {"M3", {0.51, 0.613, 0.689, 0.76, 0.815, 0.868, 0.9}, 0.736},
      {"M4", {0.547, 0.632, 0.708, 0.78, 0.825, 0.858, 0.89}, 0.749},
      {"M5", {0.591, 0.676, 0.736, 0.779, 0.822, 0.847, 0.879}, 0.761},
      {"F1", {0.57, 0.654, 0.737, 0.802, 0.855, 0.89, 0.915}, 0.775},
      {"F2", {0.548, 0.633, 0.722, 0.784, 0.84, 0.873, 0.892}, 0.756},
      {"F3", {0.577, 0.681, 0.761, 0.815, 0.86, 0.887, 0.904}, 0.784},
      {"F4", {0.588, 0.669, 0.749, 0.831, 0.863, 0.892, 0.913}, 0.786},
  };
  for (const auto& col : columns) {
    const auto curve = compute_froc(oracle::candidates_for_operating_points(col.sens), 8);
    const auto ops = operating_sensitivities(curve);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(ops[i], col.sens[i], 1e-12) << col.name << " point " << i;
    EXPECT_NEAR(cpm(curve), col.average, 0.0005) << col.name;
  }
  const auto f4 = compute_froc(oracle::candidates_for_operating_points(columns[8].sens), 8);
  EXPECT_EQ(sensitivity_at(f4, 1.0), 0.831);
}

TEST(Report, FilesHeadersDeterminismAndSelfConsistency) {
  const auto dir = oracle::scratch_dir("report");
  const std::vector<FrocCurve> curves{compute_froc(example(), 2)};
  const std::vector<std::string> labels{"model1"};
  const auto written = emit_report(curves, labels, dir);
  ASSERT_EQ(written.size(), 2u);
  const auto curve_csv = ingest::read_text_file(dir / "froc_model1.csv");
  const auto summary = ingest::read_text_file(dir / "summary.csv");
  EXPECT_EQ(curve_csv.substr(0, curve_csv.find('\n')), "threshold,fp_per_scan,sensitivity");
  EXPECT_EQ(summary.substr(0, summary.find('\n')), "label,s0.125,s0.25,s0.5,s1,s2,s4,s8,cpm");

  emit_report(curves, labels, dir);
  EXPECT_EQ(ingest::read_text_file(dir / "froc_model1.csv"), curve_csv);
  EXPECT_EQ(ingest::read_text_file(dir / "summary.csv"), summary);

  // recompute the cpm column from the seven sensitivity columns
  const auto row = summary.substr(summary.find('\n') + 1);
  std::vector<double> cells;
  std::stringstream ss(row.substr(row.find(',') + 1));
  for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(std::stod(cell));
  ASSERT_EQ(cells.size(), 8u);
  EXPECT_DOUBLE_EQ(std::accumulate(cells.begin(), cells.begin() + 7, 0.0) / 7.0, cells[7]);
}

TEST(Report, RejectsBadArguments) {
  const auto dir = oracle::scratch_dir("report_bad");
  const std::vector<FrocCurve> curves{compute_froc(example(), 2)};
  EXPECT_THROW(emit_report(std::vector<FrocCurve>{}, std::vector<std::string>{}, dir), std::invalid_argument);
  EXPECT_THROW(emit_report(curves, std::vector<std::string>{"a", "b"}, dir), std::invalid_argument);
  EXPECT_THROW(emit_report(curves, std::vector<std::string>{"a/b"}, dir), std::invalid_argument);
}

TEST(Fusion, MeanOfMembers) {
  std::map<int, ScoreTable> tables;
  tables[1] = {neg(0, 0.2), pos(1, 0, 0.9)};
  tables[2] = {pos(1, 0, 0.5), neg(0, 0.4)};  // different order, same ids
  const auto fused = fuse(tables, {{1, 2}});
  ASSERT_EQ(fused.size(), 2u);
  EXPECT_EQ(fused[0].candidate_id, 0);
  EXPECT_NEAR(fused[0].score, 0.3, 1e-15);
  EXPECT_NEAR(fused[1].score, 0.7, 1e-15);
  EXPECT_EQ(fused[1].nodule_id, 0);
}

TEST(Fusion, IdenticalTablesAreUnchanged) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0, 1);
  ScoreTable t;
  for (int i = 0; i < 200; ++i) t.push_back(neg(i, u(gen)));
  std::map<int, ScoreTable> tables;
  for (int m = 1; m <= 5; ++m) tables[m] = t;
  for (int preset = 1; preset <= 4; ++preset) {
    const auto fused = fuse(tables, fusion_preset(preset));
    for (std::size_t i = 0; i < t.size(); ++i) ASSERT_NEAR(fused[i].score, t[i].score, 1e-12);
  }
}

TEST(Fusion, AllFiveModelsMatchesArithmeticMean) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0, 1);
  std::map<int, ScoreTable> tables;
  std::vector<double> sums(50, 0.0);
  for (int m = 1; m <= 5; ++m) {
    for (int i = 0; i < 50; ++i) {
      const double s = u(gen);
      tables[m].push_back(neg(i, s));
      sums[i] += s;
    }
  }
  EXPECT_EQ(fusion_preset(4).members, (std::vector<int>{1, 2, 3, 4, 5}));
  const auto fused = fuse(tables, fusion_preset(4));
  for (int i = 0; i < 50; ++i) ASSERT_LT(std::abs(fused[i].score - sums[i] / 5.0), 1e-12);
}

TEST(Fusion, Presets) {
  EXPECT_EQ(fusion_preset(1).members, (std::vector<int>{1, 3, 5}));
  EXPECT_EQ(fusion_preset(2).members, (std::vector<int>{1, 2, 5}));
  EXPECT_EQ(fusion_preset(3).members, (std::vector<int>{1, 4, 5}));
  EXPECT_THROW(fusion_preset(0), std::invalid_argument);
  EXPECT_THROW(fusion_preset(5), std::invalid_argument);
}

TEST(Fusion, Errors) {
  std::map<int, ScoreTable> tables;
  tables[1] = {neg(0, 0.1), neg(1, 0.2)};
  tables[2] = {neg(0, 0.1), neg(2, 0.2)};
  tables[3] = {neg(0, 0.1)};
  EXPECT_THROW(fuse(tables, {{1, 2}}), std::invalid_argument);
  EXPECT_THROW(fuse(tables, {{1, 3}}), std::invalid_argument);
  EXPECT_THROW(fuse(tables, {{}}), std::invalid_argument);
  EXPECT_THROW(fuse(tables, {{1, 1}}), std::invalid_argument);
  EXPECT_THROW(fuse(tables, {{1, 4}}), std::invalid_argument);
}

TEST(ScoreCsv, RoundTripAndErrors) {
  const ScoreTable t{pos(3, 7, 0.125, "1.2.3"), neg(4, 0.3333333333333333, "1.2.3")};
  const auto text = format_score_csv(t);
  EXPECT_EQ(text, "candidate_id,scan_id,nodule_id,score\n3,1.2.3,7,0.125\n4,1.2.3,,0.3333333333333333\n");
  EXPECT_EQ(parse_score_csv(text), t);
  EXPECT_THROW(parse_score_csv("id,score\n"), std::runtime_error);
  EXPECT_THROW(parse_score_csv("candidate_id,scan_id,nodule_id,score\n1,a,,x\n"), std::runtime_error);
  EXPECT_THROW(parse_score_csv("candidate_id,scan_id,nodule_id,score\n1,a,\n"), std::runtime_error);
}

TEST(Scoring, ZeroOutputLayerScoresOneHalf) {
  auto params = nn::build_model<float>(nn::ModelSpec::reduced(1), 1);
  params.dense2_weights.fill(0.0f);
  const auto patches = oracle::separable_patches(5, params.spec.input, 2);
  const auto table = score_candidates(params, patches, 2);
  ASSERT_EQ(table.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(table[i].score, 0.5);
    EXPECT_EQ(table[i].candidate_id, patches[i].candidate_id);
    EXPECT_EQ(table[i].nodule_id, patches[i].nodule_id);
  }
}

TEST(Scoring, PermutationEquivariantAndDeterministic) {
  const auto params = nn::build_model<float>(nn::ModelSpec::reduced(1, 3, 4), 5);
  auto patches = oracle::separable_patches(9, params.spec.input, 3);
  const auto base = score_candidates(params, patches, 4);
  EXPECT_EQ(score_candidates(params, patches, 4), base);
  std::reverse(patches.begin(), patches.end());
  const auto reversed = score_candidates(params, patches, 32);
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_EQ(reversed[base.size() - 1 - i], base[i]);
}
