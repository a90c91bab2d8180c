#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mcrfm/cli.hpp"

using namespace mcrfm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "mcrfm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path workdir() {
  const fs::path d = fs::temp_directory_path() / "mcrfm_unit_cli";
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"frobnicate"}).code == 2);
  CHECK(invoke({"train"}).code == 2);
  CHECK(invoke({"train", "--features", "x", "--out", "y", "--variant", "bogus"}).code == 2);
  CHECK(invoke({"--help"}).code == 0);
}

TEST_CASE("gen-data, train, eval and report") {
  const fs::path d = workdir();
  const std::string spec = (d / "spec.json").string();
  write_text(spec, R"({"dim": 16, "nuisance_dims": 4})");
  const std::string cache = (d / "f.fvec").string();
  REQUIRE(invoke({"gen-data", "--out", cache, "--spec", spec, "--n-per-class", "8"}).code == 0);
  CHECK(fs::file_size(cache) == 20 + 72 * 16 * 4 + 72 * 4);

  const std::string cfg = (d / "cfg.json").string();
  write_text(cfg, R"({"model": {"d_h": 4, "d_e": 4, "d_c": 4, "token_dim": 4, "field_width": 8, "mix_hidden": 4},
                      "train": {"warmup_epochs": 1}})");
  const std::string out = (d / "run").string();
  const Outcome t = invoke({"train", "--features", cache, "--out", out, "--config", cfg, "--epochs", "2", "--shots", "2"});
  REQUIRE(t.code == 0);
  const fs::path report = fs::path(out) / "reports" / "full_k2_s42.json";
  CHECK(fs::exists(report));
  CHECK(fs::exists(fs::path(out) / "episodes" / "episode_k2_s42.json"));
  CHECK(fs::exists(fs::path(out) / "logs" / "full_k2_s42.jsonl"));

  const std::string ckpt = (fs::path(out) / "checkpoints" / "full_k2_s42").string();
  const std::string episode = (fs::path(out) / "episodes" / "episode_k2_s42.json").string();
  const std::string eval_out = (d / "eval.json").string();
  CHECK(invoke({"eval", "--features", cache, "--episode", episode, "--checkpoint", ckpt, "--out", eval_out}).code == 0);
  CHECK(fs::exists(eval_out));

  CHECK(invoke({"eval", "--features", cache, "--episode", episode, "--checkpoint", (d / "none").string()}).code == 3);
  CHECK(invoke({"train", "--features", (d / "missing.fvec").string(), "--out", out}).code == 3);

  // A checkpoint whose tensor shapes no longer match its config.
  std::ifstream in(ckpt + ".json");
  nlohmann::json manifest = nlohmann::json::parse(in);
  in.close();
  manifest["metadata"]["config"]["model"]["d_h"] = 5;
  write_text(ckpt + ".json", manifest.dump());
  CHECK(invoke({"eval", "--features", cache, "--episode", episode, "--checkpoint", ckpt}).code == 5);

  const std::string table = (d / "table.json").string();
  CHECK(invoke({"report", report.string(), "--out", table}).code == 0);
  CHECK(fs::exists(table));
}

TEST_CASE("sample statistics and run names") {
  const auto [m, s] = cli::mean_std({1.0, 2.0, 3.0});
  CHECK(m == doctest::Approx(2.0));
  CHECK(s == doctest::Approx(1.0));
  CHECK(cli::mean_std({4.0}).second == 0.0);
  CHECK(cli::run_name("no_ce", 4, 43) == "no_ce_k4_s43");
}

TEST_CASE("consolidated ablation table") {
  std::vector<nlohmann::json> reports;
  const std::vector<std::string> variants{"full", "no_ce"};
  for (const auto& v : variants) {
    for (int s = 0; s < 2; ++s) {
      reports.push_back({{"variant", v},
                         {"query_accuracy", v == "full" ? 0.6 + 0.1 * s : 0.3},
                         {"initial_loss", 2.0},
                         {"final_loss", 1.0},
                         {"stability",
                          {{"ratio_median", 1.0},
                           {"events", {{"collapse", false}, {"boundary_risk", false}, {"loss_imbalance", false}}}}}});
    }
  }
  const nlohmann::json t = cli::consolidate_ablation(variants, {42, 43}, reports, nlohmann::json::object());
  CHECK(t["schema"] == cli::kConsolidatedSchema);
  CHECK(t["schema_version"] == cli::kConsolidatedVersion);
  CHECK(t["rows"].size() == 2);
  CHECK(t["rows"][1]["delta_pp"].get<double>() == doctest::Approx(-35.0));
}
