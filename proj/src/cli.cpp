#include "lungfpr/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>

#include "lungfpr/checkpoint.hpp"
#include "lungfpr/ct_ingest.hpp"
#include "lungfpr/froc.hpp"
#include "lungfpr/grad_check.hpp"
#include "lungfpr/model.hpp"
#include "lungfpr/rng.hpp"
#include "lungfpr/sampling.hpp"
#include "lungfpr/scoring.hpp"
#include "lungfpr/training.hpp"
#include "text_util.hpp"

namespace lungfpr::cli {

namespace fs = std::filesystem;
using detail::format_double;

namespace {

constexpr std::array<const char*, 6> kSubcommands{"preprocess", "train", "score", "fuse", "froc", "gradcheck"};
constexpr double kGradTolerance = 1e-5;

std::string usage() {
  return "usage: lungfpr <preprocess|train|score|fuse|froc|gradcheck> [--config FILE] [options]\n"
         "run 'lungfpr <subcommand> --help' for the options of a subcommand\n";
}

std::string model_tag(const RunConfig& c) { return "model" + std::to_string(c.model) + "_fold" + std::to_string(c.fold); }

nn::ModelSpec model_spec(const RunConfig& c) {
  if (c.conv_filters == 0 && c.hidden_units == 0) return nn::ModelSpec::table(c.model);
  const auto full = nn::ModelSpec::table(c.model);
  return nn::ModelSpec::reduced(c.model, c.conv_filters ? c.conv_filters : full.conv1_filters,
                                c.hidden_units ? c.hidden_units : full.hidden_units);
}

// Every cached scan for the configured model, in file-name order.
std::vector<preprocess::PatchCache> load_caches(const RunConfig& c) {
  const fs::path dir = patch_dir(c);
  if (!fs::is_directory(dir)) throw std::runtime_error("no patch cache at " + dir.string() + " (run preprocess)");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".ndp") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("patch cache " + dir.string() + " is empty");
  std::vector<preprocess::PatchCache> caches;
  for (const auto& f : files) caches.push_back(preprocess::read_patch_cache(f));
  return caches;
}

train::FoldPlan plan_folds(const RunConfig& c, const std::vector<preprocess::PatchCache>& caches) {
  std::vector<std::string> ids;
  for (const auto& cache : caches) ids.push_back(cache.series_id);
  return train::make_folds(ids, c.folds, derive_seed(c.seed, "folds"));
}

// Patches of scans inside (`in_fold`) or outside the configured fold.
std::vector<preprocess::Patch> partition(const RunConfig& c, const std::vector<preprocess::PatchCache>& caches,
                                         bool in_fold) {
  const auto plan = plan_folds(c, caches);
  std::vector<preprocess::Patch> out;
  for (const auto& cache : caches) {
    if ((plan.fold_of(cache.series_id) == c.fold) != in_fold) continue;
    out.insert(out.end(), cache.patches.begin(), cache.patches.end());
  }
  return out;
}

int do_preprocess(const RunConfig& c, std::ostream& out) {
  const auto candidates = ingest::parse_candidates_csv(ingest::read_text_file(c.data_dir / "candidates.csv"));
  std::vector<ingest::AnnotationRecord> annotations;
  std::vector<std::string> warnings;
  if (fs::exists(c.data_dir / "annotations.csv")) {
    annotations = ingest::parse_annotations_csv(ingest::read_text_file(c.data_dir / "annotations.csv"), &warnings);
  }
  for (const auto& w : warnings) out << "warning: " << w << '\n';
  const auto nodule_ids = ingest::assign_nodule_ids(candidates, annotations);

  std::map<std::string, std::vector<std::size_t>> by_series;
  for (std::size_t i = 0; i < candidates.size(); ++i) by_series[candidates[i].series_id].push_back(i);

  const Extent3 extent = nn::table_input_sizes()[static_cast<std::size_t>(c.model - 1)];
  const fs::path dir = patch_dir(c);
  fs::create_directories(dir);
  std::size_t total = 0;
  for (const auto& [series, rows] : by_series) {
    const auto volume = preprocess::resample(ingest::read_metaimage(c.data_dir / (series + ".mhd")), c.spacing());
    std::vector<preprocess::Patch> patches;
    for (std::size_t i : rows) {
      const auto& cand = candidates[i];
      preprocess::Patch p;
      p.data = preprocess::normalize_hu(
          preprocess::extract_patch(volume, ingest::world_to_voxel(volume.meta(), cand.world_mm), extent));
      p.label = cand.label;
      p.candidate_id = cand.candidate_id;
      if (nodule_ids[i] >= 0) p.nodule_id = nodule_ids[i];
      p.series_id = series;
      patches.push_back(std::move(p));
    }
    preprocess::write_patch_cache(dir / (series + ".ndp"), series, extent, patches);
    total += patches.size();
  }
  out << "preprocessed " << by_series.size() << " scans, " << total << " candidates into " << dir.string() << '\n';
  return 0;
}

int do_train(const RunConfig& c, std::ostream& out) {
  const auto caches = load_caches(c);
  const auto training = train::augment_positives(partition(c, caches, false));
  train::TrainConfig tc;
  tc.batch_size = c.batch_size;
  tc.epochs = c.epochs;
  tc.adam.learning_rate = c.lr;
  tc.seed = c.seed;
  tc.fold = c.fold;
  const auto result = train::train_fold(model_spec(c), training, tc);
  fs::create_directories(c.output_dir);
  train::save_checkpoint(result.params, checkpoint_path(c));
  train::write_history_csv(history_path(c), result.history);
  out << "trained " << model_tag(c) << " on " << training.size() << " patches for " << c.epochs << " epochs";
  if (!result.history.empty()) out << ", final chunk loss " << format_double(result.history.back().chunk_loss);
  out << "\nwrote " << checkpoint_path(c).string() << '\n';
  return 0;
}

int do_score(const RunConfig& c, const std::string& checkpoint, std::ostream& out) {
  const auto params = train::load_checkpoint(checkpoint.empty() ? checkpoint_path(c) : fs::path(checkpoint));
  const auto caches = load_caches(c);
  const auto test = partition(c, caches, true);
  const auto table = eval::score_candidates(params, test, c.batch_size);
  fs::create_directories(c.output_dir);
  const auto path = scores_path(c.output_dir, c.model, c.fold);
  eval::write_score_csv(path, table);
  out << "scored " << table.size() << " candidates, wrote " << path.string() << '\n';
  return 0;
}

int do_fuse(const RunConfig& c, const std::vector<std::string>& inputs, const std::string& output, std::ostream& out) {
  std::map<int, eval::ScoreTable> tables;
  eval::FusionSpec spec;
  fs::path target;
  if (!inputs.empty()) {
    if (output.empty()) throw std::invalid_argument("fuse: --output is required with --scores");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const int id = static_cast<int>(i + 1);
      tables[id] = eval::read_score_csv(inputs[i]);
      spec.members.push_back(id);
    }
    target = output;
  } else {
    spec = c.members.empty() ? eval::fusion_preset(c.fusion) : eval::FusionSpec{c.members};
    for (int m : spec.members) {
      if (tables.count(m) == 0) tables[m] = eval::read_score_csv(scores_path(c.output_dir, m, c.fold));
    }
    target = output.empty() ? fused_scores_path(c) : fs::path(output);
  }
  const auto fused = eval::fuse(tables, spec);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  eval::write_score_csv(target, fused);
  out << "fused " << spec.members.size() << " tables over " << fused.size() << " candidates, wrote " << target.string()
      << '\n';
  return 0;
}

int do_froc(const std::string& scores, std::size_t scans, const std::string& label, const std::string& report_dir,
            std::ostream& out) {
  if (scores.empty()) throw std::invalid_argument("froc: --scores is required");
  const auto table = eval::read_score_csv(scores);
  if (scans == 0) {
    std::set<std::string> ids;
    for (const auto& s : table) ids.insert(s.scan_id);
    scans = ids.size();
  }
  const auto curve = eval::compute_froc(table, scans);
  const auto sens = eval::operating_sensitivities(curve);
  for (std::size_t i = 0; i < sens.size(); ++i) {
    out << "sensitivity@" << format_double(eval::kOperatingPoints[i]) << " " << format_double(sens[i]) << '\n';
  }
  out << "cpm " << format_double(eval::cpm(curve)) << '\n';
  if (!report_dir.empty()) {
    const std::vector<eval::FrocCurve> curves{curve};
    const std::vector<std::string> labels{label};
    eval::emit_report(curves, labels, report_dir);
  }
  return 0;
}

int do_gradcheck(std::uint64_t seed, std::ostream& out) {
  double worst = 0.0;
  for (int m = 1; m <= 5; ++m) {
    const auto spec = nn::ModelSpec::reduced(m);
    const auto params = nn::build_model<double>(spec, derive_seed(seed, "init"));
    Rng rng(derive_seed(seed, "batch"));
    TensorD batch({2, 1, spec.input.depth, spec.input.height, spec.input.width});
    for (double& v : batch) v = rng.uniform();
    const std::array<int, 2> labels{0, 1};
    nn::GradCheckOptions options;
    options.seed = derive_seed(seed, "gradcheck");
    const auto report = nn::grad_check(params, batch, labels, options);
    out << "model " << m << " max_relative_error " << format_double(report.max_relative_error) << " ("
        << report.worst_parameter << ", " << report.checked << " entries, " << report.reduced_steps
        << " with reduced step, " << report.skipped << " skipped)\n";
    worst = std::max(worst, report.max_relative_error);
  }
  out << "max_relative_error " << format_double(worst) << '\n';
  return worst < kGradTolerance ? 0 : 1;
}

// Tokens for `key = value` lines whose `--key` the subcommand knows and the
// command line does not already set. Values split on whitespace.
std::vector<std::string> config_tokens(const fs::path& path, const CLI::App& sub,
                                       const std::vector<std::string>& given) {
  std::vector<std::string> tokens;
  const std::string text = ingest::read_text_file(path);
  std::size_t line_no = 0;
  for (const auto& raw : detail::lines(text)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string flag = "--" + std::string(detail::trim(line.substr(0, eq)));
    if (sub.get_option_no_throw(flag) == nullptr || flag == "--config") continue;
    const bool overridden = std::any_of(given.begin(), given.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (overridden) continue;
    tokens.push_back(flag);
    for (auto v : detail::split_whitespace(line.substr(eq + 1))) {
      if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) v = v.substr(1, v.size() - 2);
      tokens.emplace_back(v);
    }
  }
  return tokens;
}

void add_config_option(CLI::App& app, std::string& config_file) {
  app.add_option("--config", config_file, "flat key = value file; command-line flags take precedence");
}

void add_common_options(CLI::App& app, RunConfig& c) {
  app.add_option("--data-dir", c.data_dir, "directory with candidates.csv, annotations.csv and <series>.mhd");
  app.add_option("--output-dir", c.output_dir, "directory for patch caches, checkpoints and score tables");
  app.add_option("--spacing", c.target_spacing, "target spacing x y z in mm")->expected(3);
  app.add_option("--model", c.model, "model id 1..5");
  app.add_option("--fold", c.fold, "held-out fold index");
  app.add_option("--folds", c.folds, "number of cross-validation folds");
  app.add_option("--seed", c.seed, "base seed for all randomness");
}

void add_train_options(CLI::App& app, RunConfig& c) {
  app.add_option("--batch-size", c.batch_size, "mini-batch size");
  app.add_option("--epochs", c.epochs, "number of balanced chunks to train on");
  app.add_option("--lr", c.lr, "Adam learning rate");
  app.add_option("--conv-filters", c.conv_filters, "filters per convolution (0 = full width)");
  app.add_option("--hidden-units", c.hidden_units, "hidden dense width (0 = full width)");
}

}  // namespace

void RunConfig::validate() const {
  if (model < 1 || model > 5) throw std::invalid_argument("model must be in 1..5, got " + std::to_string(model));
  if (target_spacing.size() != 3) throw std::invalid_argument("spacing needs exactly 3 values");
  for (double s : target_spacing) {
    if (!(s > 0.0)) throw std::invalid_argument("spacing must be positive, got " + format_double(s));
  }
  if (folds < 2) throw std::invalid_argument("folds must be at least 2");
  if (fold >= folds) {
    throw std::invalid_argument("fold must be in [0," + std::to_string(folds) + "), got " + std::to_string(fold));
  }
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
}

fs::path patch_dir(const RunConfig& c) { return c.output_dir / "patches" / ("model" + std::to_string(c.model)); }
fs::path checkpoint_path(const RunConfig& c) { return c.output_dir / (model_tag(c) + ".ndl"); }
fs::path history_path(const RunConfig& c) { return c.output_dir / ("history_" + model_tag(c) + ".csv"); }
fs::path scores_path(const fs::path& output_dir, int model, std::size_t fold) {
  return output_dir / ("scores_model" + std::to_string(model) + "_fold" + std::to_string(fold) + ".csv");
}
fs::path fused_scores_path(const RunConfig& c) {
  const std::string name = c.members.empty() ? "fusion" + std::to_string(c.fusion) : std::string("fusion_custom");
  return c.output_dir / ("scores_" + name + "_fold" + std::to_string(c.fold) + ".csv");
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty()) {
    err << usage();
    return 2;
  }
  if (args[0] == "-h" || args[0] == "--help") {
    out << usage();
    return 0;
  }
  if (std::find(kSubcommands.begin(), kSubcommands.end(), args[0]) == kSubcommands.end()) {
    err << "unknown subcommand '" << args[0] << "'\n" << usage();
    return 2;
  }

  RunConfig config;
  std::string checkpoint, fuse_output, froc_scores, label = "run", report_dir;
  std::vector<std::string> fuse_inputs;
  std::size_t scans = 0;

  CLI::App app{"lung nodule candidate false-positive reduction", "lungfpr"};
  app.require_subcommand(1);

  auto* pre = app.add_subcommand("preprocess", "resample scans and cache candidate patches");
  add_common_options(*pre, config);

  auto* tr = app.add_subcommand("train", "train one model on one cross-validation split");
  add_common_options(*tr, config);
  add_train_options(*tr, config);

  auto* sc = app.add_subcommand("score", "score the held-out fold with a checkpoint");
  add_common_options(*sc, config);
  add_train_options(*sc, config);
  sc->add_option("--checkpoint", checkpoint, "checkpoint file (default: output-dir/model<m>_fold<f>.ndl)");

  auto* fu = app.add_subcommand("fuse", "average score tables");
  add_common_options(*fu, config);
  fu->add_option("--fusion", config.fusion, "fusion preset 1..4");
  fu->add_option("--members", config.members, "explicit model ids, overriding --fusion");
  fu->add_option("--scores", fuse_inputs, "explicit score tables to average");
  fu->add_option("--output", fuse_output, "fused table path");

  auto* fr = app.add_subcommand("froc", "FROC sensitivities and CPM of a score table");
  fr->add_option("--scores", froc_scores, "score table CSV");
  fr->add_option("--scans", scans, "number of scans (default: distinct scan ids in the table)");
  fr->add_option("--label", label, "curve label for report files");
  fr->add_option("--report-dir", report_dir, "write froc_<label>.csv and summary.csv here");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of reduced models 1-5");
  gc->add_option("--seed", config.seed, "seed for parameters, batch and sampled entries");

  std::string config_file;
  for (auto* sub : app.get_subcommands({})) add_config_option(*sub, config_file);

  // The config file is read first and its keys become flags placed before
  // the user's own arguments.
  std::vector<std::string> full{args.front()};
  try {
    const std::vector<std::string> given(args.begin() + 1, args.end());
    for (std::size_t i = 0; i < given.size(); ++i) {
      std::string path;
      if (given[i] == "--config" && i + 1 < given.size()) path = given[i + 1];
      if (given[i].rfind("--config=", 0) == 0) path = given[i].substr(9);
      if (path.empty()) continue;
      const auto tokens = config_tokens(path, *app.get_subcommand(args.front()), given);
      full.insert(full.end(), tokens.begin(), tokens.end());
    }
    full.insert(full.end(), given.begin(), given.end());
  } catch (const std::exception& e) {
    err << "error: config: " << e.what() << '\n';
    return 1;
  }

  std::vector<std::string> reversed(full.rbegin(), full.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    config.validate();
    if (pre->parsed()) return do_preprocess(config, out);
    if (tr->parsed()) return do_train(config, out);
    if (sc->parsed()) return do_score(config, checkpoint, out);
    if (fu->parsed()) return do_fuse(config, fuse_inputs, fuse_output, out);
    if (fr->parsed()) return do_froc(froc_scores, scans, label, report_dir, out);
    return do_gradcheck(config.seed, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace lungfpr::cli
