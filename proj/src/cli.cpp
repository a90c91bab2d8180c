#include "mcrfm/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "mcrfm/binary_io.hpp"
#include "mcrfm/error.hpp"
#include "mcrfm/kernels.hpp"
#include "mcrfm/trainer.hpp"

namespace mcrfm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const std::string& path) {
  try {
    return json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw FormatError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  io::write_file(path.string(), canonical_dump(j) + "\n");
}

void make_layout(const std::string& out) {
  for (const char* sub : {"reports", "checkpoints", "episodes", "logs"}) fs::create_directories(fs::path(out) / sub);
}

Config base_config(const std::string& config_path) {
  Config cfg;
  if (!config_path.empty()) cfg = config_from_json(read_json(config_path));
  return cfg;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw InvalidArgument("bad seed '" + tok + "'");
    }
  }
  if (out.empty()) throw InvalidArgument("no seeds given");
  return out;
}

std::string fmt_pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

struct Options {
  std::string features, out, config, episode, checkpoint, spec, grid, variant = "full", seeds = "42,43,44";
  std::vector<std::string> inputs;
  std::uint64_t seed = 42;
  int shots = 4, n_per_class = 200, jobs = 1, epochs = 0;
  bool baselines = false;
};

Config with_overrides(Config cfg, const Options& o) {
  if (o.epochs > 0) {
    cfg.train.epochs = o.epochs;
    cfg.train.warmup_epochs = std::min(cfg.train.warmup_epochs, o.epochs);
  }
  return cfg;
}

int cmd_gen_data(const Options& o, std::ostream& out) {
  data::HierarchySpec spec;
  if (!o.spec.empty()) spec = data::hierarchy_from_json(read_json(o.spec));
  const data::FeatureCache cache = data::generate_hierarchy(spec, o.n_per_class, o.seed);
  if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
  data::write_cache(o.out, cache);
  out << "wrote " << o.out << " (" << cache.count << " x " << cache.dim << ", " << cache.num_labels << " classes)\n";
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  Config cfg = apply_variant(with_overrides(base_config(o.config), o), o.variant);
  cfg.train.seed = o.seed;
  const data::FeatureCache cache = data::read_cache(o.features);
  make_layout(o.out);
  RunJob job{run_name(o.variant, o.shots, o.seed), cfg, o.shots, std::nullopt};
  if (!o.episode.empty()) {
    job.episode = data::read_episode(o.episode);
    job.shots = job.episode->k_shot;
    job.name = run_name(o.variant, job.shots, o.seed);
  }
  const json report = run_job(o.out, cache, job);
  out << job.name << ": query top-1 " << fmt_pct(report.at("query_accuracy").get<double>()) << "%, support top-1 "
      << fmt_pct(report.at("support_accuracy").get<double>()) << "%\n";
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const data::FeatureCache cache = data::read_cache(o.features);
  const data::Episode ep = data::read_episode(o.episode);
  data::check_episode(ep, cache);
  train::TrainResult loaded = train::load_checkpoint(o.checkpoint);
  if (loaded.config.model.feature_dim != static_cast<int>(cache.dim) || loaded.params.num_classes != ep.num_classes()) {
    throw IncompatibleCheckpoint("checkpoint dimensions do not match the feature cache/episode");
  }
  const std::vector<std::size_t> sup = ep.support_flat();
  const Matrix sx = cache.rows(sup);
  const std::vector<int> sy = cache.labels_of(sup);
  const std::vector<int> qy = cache.labels_of(ep.query);
  const train::Inference q = train::infer(loaded.params, sx, sy, cache.rows(ep.query), loaded.config, false);
  const train::Inference s = train::infer(loaded.params, sx, sy, sx, loaded.config, false);
  json logits = json::array();
  for (std::size_t r = 0; r < q.logits.rows; ++r) {
    logits.push_back(std::vector<double>(q.logits.row(r).begin(), q.logits.row(r).end()));
  }
  const json metrics = {{"schema", "mcrfm-eval/1"},
                        {"config_hash", config_hash(loaded.config)},
                        {"query_accuracy", train::accuracy(q.predictions, qy)},
                        {"support_accuracy", train::accuracy(s.predictions, sy)},
                        {"query_indices", ep.query},
                        {"labels", qy},
                        {"predictions", q.predictions},
                        {"logits", logits}};
  if (!o.out.empty()) write_json(o.out, metrics);
  out << "query top-1 " << fmt_pct(metrics["query_accuracy"].get<double>()) << "%, support top-1 "
      << fmt_pct(metrics["support_accuracy"].get<double>()) << "%\n";
  return 0;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  const data::FeatureCache cache = data::read_cache(o.features);
  const std::vector<std::uint64_t> seeds = parse_seeds(o.seeds);
  const Config base = with_overrides(base_config(o.config), o);
  std::vector<std::string> variants = {"full"};
  for (const std::string& v : ablation_variants()) variants.push_back(v);
  if (o.baselines) {
    for (const std::string& v : baseline_variants()) variants.push_back(v);
  }
  make_layout(o.out);
  std::vector<RunJob> jobs;
  for (const std::string& v : variants) {
    for (std::uint64_t seed : seeds) {
      Config cfg = apply_variant(base, v);
      cfg.train.seed = seed;
      jobs.push_back({run_name(v, o.shots, seed), cfg, o.shots, std::nullopt});
    }
  }
  const std::vector<json> reports = run_jobs(o.out, cache, jobs, o.jobs);
  const json meta = {{"kind", "ablation"},
                     {"features", data::cache_hash(cache)},
                     {"source", cache.sidecar.value("source", "unknown")},
                     {"shots", o.shots},
                     {"base_config_hash", config_hash(base)}};
  const json table = consolidate_ablation(variants, seeds, reports, meta);
  write_json(fs::path(o.out) / "ablation.json", table);
  for (const json& row : table.at("rows")) {
    out << row.at("label").get<std::string>() << ": " << fmt_pct(row.at("top1_mean").get<double>()) << " +- "
        << fmt_pct(row.at("top1_std").get<double>()) << " (delta " << row.at("delta_pp").get<double>() << " pp)\n";
  }
  return 0;
}

std::string cell_name(double c, int dh, int de, int nfe) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "c%g_h%d_e%d_nfe%d", c, dh, de, nfe);
  return buf;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const data::FeatureCache cache = data::read_cache(o.features);
  std::vector<double> curvatures = {0.5, 1.0, 2.0};
  std::vector<std::pair<int, int>> splits = {{64, 192}, {128, 128}, {192, 64}};
  std::vector<int> nfes = {1, 3, 8};
  std::vector<std::uint64_t> seeds = parse_seeds(o.seeds);
  if (!o.grid.empty()) {
    const json g = read_json(o.grid);
    try {
      for (const auto& [key, v] : g.items()) {
        if (key == "curvature") curvatures = v.get<std::vector<double>>();
        else if (key == "split") splits = v.get<std::vector<std::pair<int, int>>>();
        else if (key == "nfe") nfes = v.get<std::vector<int>>();
        else if (key == "seeds") seeds = v.get<std::vector<std::uint64_t>>();
        else throw InvalidArgument("grid: unknown key '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw InvalidArgument("grid: " + std::string(e.what()));
    }
  }
  const Config base = with_overrides(base_config(o.config), o);
  make_layout(o.out);
  std::vector<RunJob> jobs;
  std::vector<std::string> cells;
  for (double c : curvatures) {
    for (const auto& [dh, de] : splits) {
      for (int nfe : nfes) {
        Config cfg = base;
        cfg.model.curvature = c;
        cfg.model.d_h = dh;
        cfg.model.d_e = de;
        cfg.train.nfe = nfe;
        validate(cfg);
        const std::string cell = cell_name(c, dh, de, nfe);
        cells.push_back(cell);
        for (std::uint64_t seed : seeds) {
          cfg.train.seed = seed;
          jobs.push_back({run_name("sweep_" + cell, o.shots, seed), cfg, o.shots, std::nullopt});
        }
      }
    }
  }
  const std::vector<json> reports = run_jobs(o.out, cache, jobs, o.jobs);
  const std::string reference = cell_name(base.model.curvature, base.model.d_h, base.model.d_e, base.train.nfe);
  std::map<std::string, double> means;
  json rows = json::array();
  std::size_t idx = 0;
  for (const std::string& cell : cells) {
    std::vector<double> acc;
    for (std::size_t s = 0; s < seeds.size(); ++s) acc.push_back(reports[idx++].at("query_accuracy").get<double>());
    const auto [m, sd] = mean_std(acc);
    means[cell] = m;
    rows.push_back({{"cell", cell}, {"seeds", seeds}, {"top1", acc}, {"top1_mean", m}, {"top1_std", sd}});
  }
  const bool has_ref = means.count(reference) > 0;
  for (json& row : rows) {
    row["delta_pp"] = has_ref ? json(100.0 * (row["top1_mean"].get<double>() - means[reference])) : json(nullptr);
  }
  // One curvature x split matrix per nfe value.
  json matrices = json::array();
  for (int nfe : nfes) {
    json values = json::array();
    std::vector<std::string> row_labels, col_labels;
    for (const auto& [dh, de] : splits) col_labels.push_back(std::to_string(dh) + "/" + std::to_string(de));
    for (double c : curvatures) {
      char lab[32];
      std::snprintf(lab, sizeof lab, "c=%g", c);
      row_labels.push_back(lab);
      json r = json::array();
      for (const auto& [dh, de] : splits) {
        const double m = means[cell_name(c, dh, de, nfe)];
        r.push_back(has_ref ? json(100.0 * (m - means[reference])) : json(nullptr));
      }
      values.push_back(r);
    }
    matrices.push_back({{"nfe", nfe}, {"metric", "delta_top1_pp"}, {"row_labels", row_labels},
                        {"col_labels", col_labels}, {"values", values}});
  }
  const json table = {{"schema", kConsolidatedSchema},
                      {"schema_version", kConsolidatedVersion},
                      {"kind", "sweep"},
                      {"metadata", {{"features", data::cache_hash(cache)}, {"shots", o.shots}, {"reference", reference},
                                    {"base_config_hash", config_hash(base)}}},
                      {"rows", rows},
                      {"matrices", matrices}};
  write_json(fs::path(o.out) / "sweep.json", table);
  for (const json& row : rows) {
    out << row["cell"].get<std::string>() << ": " << fmt_pct(row["top1_mean"].get<double>()) << " +- "
        << fmt_pct(row["top1_std"].get<double>()) << "\n";
  }
  return 0;
}

int cmd_report(const Options& o, std::ostream& out) {
  std::vector<std::string> files = o.inputs;
  std::sort(files.begin(), files.end());
  std::map<std::string, std::vector<double>> acc;
  std::map<std::string, std::vector<std::uint64_t>> seeds;
  for (const std::string& f : files) {
    const json r = read_json(f);
    if (r.value("schema", "") != train::kReportSchema) throw FormatError("'" + f + "' is not a run report");
    const std::string key = r.at("variant").get<std::string>() + " k" + std::to_string(r.at("episode").at("k_shot").get<int>()) +
                            " " + r.at("config_hash").get<std::string>().substr(0, 8);
    acc[key].push_back(r.at("query_accuracy").get<double>());
    seeds[key].push_back(r.at("seed").get<std::uint64_t>());
  }
  json groups = json::array();
  for (const auto& [key, v] : acc) {
    const auto [m, sd] = mean_std(v);
    groups.push_back({{"group", key}, {"seeds", seeds[key]}, {"top1", v}, {"top1_mean", m}, {"top1_std", sd}});
    out << key << ": " << fmt_pct(m) << " +- " << fmt_pct(sd) << " (n=" << v.size() << ")\n";
  }
  if (!o.out.empty()) {
    write_json(o.out, {{"schema", kConsolidatedSchema}, {"schema_version", kConsolidatedVersion}, {"kind", "report"},
                       {"groups", groups}});
  }
  return 0;
}

}  // namespace

std::string run_name(const std::string& variant, int shots, std::uint64_t seed) {
  return variant + "_k" + std::to_string(shots) + "_s" + std::to_string(seed);
}

data::Episode episode_for(const std::string& out_dir, const data::FeatureCache& cache, int shots, std::uint64_t seed) {
  const fs::path path = fs::path(out_dir) / "episodes" / ("episode_k" + std::to_string(shots) + "_s" + std::to_string(seed) + ".json");
  if (fs::exists(path)) {
    data::Episode ep = data::read_episode(path.string());
    if (ep.cache_hash == data::cache_hash(cache) && ep.k_shot == shots && ep.seed == seed) return ep;
  }
  data::Episode ep = data::sample_episode(cache, shots, seed);
  data::write_episode(path.string(), ep);
  return ep;
}

json run_job(const std::string& out_dir, const data::FeatureCache& cache, const RunJob& job) {
  const fs::path out(out_dir);
  data::Episode ep;
  if (job.episode) {
    ep = *job.episode;
  } else {
#pragma omp critical(mcrfm_episode_io)
    ep = episode_for(out_dir, cache, job.shots, job.config.train.seed);
  }
  std::ofstream log(out / "logs" / (job.name + ".jsonl"), std::ios::trunc);
  train::TrainOptions opts;
  opts.checkpoint_stem = (out / "checkpoints" / job.name).string();
  opts.checkpoint_label = "checkpoints/" + job.name;
  opts.log = &log;
  const train::TrainResult res = train::train_episode(cache, ep, job.config, opts);
  write_json(out / "reports" / (job.name + ".json"), res.report);
  return res.report;
}

std::vector<json> run_jobs(const std::string& out_dir, const data::FeatureCache& cache, const std::vector<RunJob>& list,
                           int jobs) {
  std::vector<json> reports(list.size());
  std::exception_ptr failure;
  const int threads = std::max(1, jobs);
  const int saved = kernels::num_threads();
  if (threads > 1) kernels::set_num_threads(1);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::size_t i = 0; i < list.size(); ++i) {
    try {
      reports[i] = run_job(out_dir, cache, list[i]);
    } catch (...) {
#pragma omp critical(mcrfm_job_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  kernels::set_num_threads(saved);
  if (failure) std::rethrow_exception(failure);
  return reports;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

json consolidate_ablation(const std::vector<std::string>& variants, const std::vector<std::uint64_t>& seeds,
                          const std::vector<json>& reports, const json& metadata) {
  if (reports.size() != variants.size() * seeds.size()) throw InvalidArgument("consolidate: report count mismatch");
  json rows = json::array();
  double ref_mean = 0.0;
  std::size_t idx = 0;
  for (const std::string& v : variants) {
    std::vector<double> acc, ratio, init_loss, final_loss;
    int collapse = 0, boundary = 0, imbalance = 0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const json& r = reports[idx++];
      acc.push_back(r.at("query_accuracy").get<double>());
      init_loss.push_back(r.at("initial_loss").get<double>());
      final_loss.push_back(r.at("final_loss").get<double>());
      const json& st = r.at("stability");
      if (!st.at("ratio_median").is_null()) ratio.push_back(st.at("ratio_median").get<double>());
      collapse += st.at("events").at("collapse").get<bool>();
      boundary += st.at("events").at("boundary_risk").get<bool>();
      imbalance += st.at("events").at("loss_imbalance").get<bool>();
    }
    const auto [m, sd] = mean_std(acc);
    if (v == "full") ref_mean = m;
    const bool is_baseline = std::find(baseline_variants().begin(), baseline_variants().end(), v) != baseline_variants().end();
    rows.push_back({{"variant", v},
                    {"label", variant_label(v)},
                    {"role", v == "full" ? "reference" : (is_baseline ? "baseline" : "ablation")},
                    {"seeds", seeds},
                    {"top1", acc},
                    {"top1_mean", m},
                    {"top1_std", sd},
                    {"initial_loss", init_loss},
                    {"final_loss", final_loss},
                    {"ratio_median", ratio.empty() ? json(nullptr) : json(ratio)},
                    {"ratio_median_mean", ratio.empty() ? json(nullptr) : json(mean_std(ratio).first)},
                    {"events", {{"collapse", collapse}, {"boundary_risk", boundary}, {"loss_imbalance", imbalance}}}});
  }
  std::vector<std::string> labels;
  json delta = json::array(), ratio_m = json::array();
  for (json& row : rows) {
    row["delta_pp"] = 100.0 * (row["top1_mean"].get<double>() - ref_mean);
    if (row["role"] == "baseline") continue;
    labels.push_back(row["label"].get<std::string>());
    delta.push_back(json::array({row["delta_pp"]}));
    ratio_m.push_back(json::array({row["ratio_median_mean"]}));
  }
  const std::string col = metadata.value("source", "synthetic");
  return {{"schema", kConsolidatedSchema},
          {"schema_version", kConsolidatedVersion},
          {"kind", "ablation"},
          {"metadata", metadata},
          {"reference", "full"},
          {"rows", rows},
          {"matrices", json::array({{{"metric", "delta_top1_pp"}, {"row_labels", labels}, {"col_labels", {col}}, {"values", delta}},
                                    {{"metric", "median_ratio_h_over_e"}, {"row_labels", labels}, {"col_labels", {col}},
                                     {"values", ratio_m}}})}};
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixed-curvature flow-matching few-shot adapter"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic hierarchical feature cache");
  gen->add_option("--out", o.out, "Output FVEC1 path")->required();
  gen->add_option("--spec", o.spec, "Hierarchy spec JSON");
  gen->add_option("--seed", o.seed, "Generator seed");
  gen->add_option("--n-per-class", o.n_per_class, "Samples per leaf class")->check(CLI::PositiveNumber);

  auto* trn = app.add_subcommand("train", "Train one adapter on a persisted episode");
  trn->add_option("--features", o.features, "FVEC1 feature cache")->required();
  trn->add_option("--shots", o.shots, "Support samples per class")->check(CLI::PositiveNumber);
  trn->add_option("--seed", o.seed, "Run and episode seed");
  trn->add_option("--variant", o.variant, "full, an ablation, or a baseline");
  trn->add_option("--config", o.config, "Config JSON overlay");
  trn->add_option("--episode", o.episode, "Use this episode file instead of sampling");
  trn->add_option("--epochs", o.epochs, "Override the epoch count");
  trn->add_option("--out", o.out, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on an episode's queries");
  ev->add_option("--features", o.features, "FVEC1 feature cache")->required();
  ev->add_option("--episode", o.episode, "Episode JSON")->required();
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint stem (without .json/.bin)")->required();
  ev->add_option("--out", o.out, "Metrics JSON path");

  auto* abl = app.add_subcommand("ablate", "Run the component ablation matrix");
  auto* swp = app.add_subcommand("sweep", "Run the sensitivity grid");
  for (CLI::App* sub : {abl, swp}) {
    sub->add_option("--features", o.features, "FVEC1 feature cache")->required();
    sub->add_option("--shots", o.shots, "Support samples per class")->check(CLI::PositiveNumber);
    sub->add_option("--seeds", o.seeds, "Comma-separated seeds");
    sub->add_option("--config", o.config, "Config JSON overlay");
    sub->add_option("--epochs", o.epochs, "Override the epoch count");
    sub->add_option("--jobs", o.jobs, "Concurrent runs")->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "Output directory")->required();
  }
  abl->add_flag("--baselines", o.baselines, "Also run the single-geometry baselines");
  swp->add_option("--grid", o.grid, "Grid JSON (curvature, split, nfe, seeds)");

  auto* rep = app.add_subcommand("report", "Aggregate run reports (mean +- std over seeds)");
  rep->add_option("inputs", o.inputs, "Run report JSON files")->required();
  rep->add_option("--out", o.out, "Consolidated JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return static_cast<int>(ExitCode::kUsage);
  }

  kernels::configure_threads_from_env();
  try {
    if (gen->parsed()) return cmd_gen_data(o, out);
    if (trn->parsed()) return cmd_train(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (abl->parsed()) return cmd_ablate(o, out);
    if (swp->parsed()) return cmd_sweep(o, out);
    if (rep->parsed()) return cmd_report(o, out);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kUsage);
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  } catch (const InvalidEpisode& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kDivergence);
  } catch (const IncompatibleCheckpoint& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kIncompatibleCheckpoint);
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  }
  return static_cast<int>(ExitCode::kUsage);
}

}  // namespace mcrfm::cli
