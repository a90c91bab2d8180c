#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "mcrfm/checkpoint.hpp"
#include "mcrfm/error.hpp"
#include "mcrfm/trainer.hpp"

using namespace mcrfm;
namespace fs = std::filesystem;

namespace {

Config small_config(int epochs = 4) {
  Config c;
  c.model = testing::small_model(16);
  c.train.epochs = epochs;
  c.train.warmup_epochs = 1;
  c.train.ramp_epochs = 2;
  c.train.batch = 8;
  c.train.base_lr = 5e-3;
  return c;
}

data::FeatureCache small_cache(double noise = 2.0) {
  data::HierarchySpec spec;
  spec.dim = 16;
  spec.nuisance_dims = 4;
  spec.noise = noise;
  return data::generate_hierarchy(spec, 12, 1);
}

}  // namespace

TEST_CASE("time and order streams are deterministic and in range") {
  const Matrix t = train::sample_times(42, 3, 1, 50, 0.01);
  CHECK(t == train::sample_times(42, 3, 1, 50, 0.01));
  CHECK_FALSE(t == train::sample_times(42, 3, 2, 50, 0.01));
  for (double v : t.data) {
    CHECK(v >= 0.01);
    CHECK(v <= 0.99);
  }
  std::vector<std::size_t> o = train::epoch_order(42, 0, 20);
  CHECK(o == train::epoch_order(42, 0, 20));
  std::sort(o.begin(), o.end());
  for (std::size_t i = 0; i < 20; ++i) CHECK(o[i] == i);
}

TEST_CASE("untrained field makes transport the identity") {
  Config cfg = small_config();
  cfg.model.feature_dim = 16;
  AdapterParams p = AdapterParams::make(cfg.model, 3, 42);
  const Matrix x = testing::random_matrix(6, 16, 1);
  const std::vector<int> y{0, 0, 1, 1, 2, 2};
  const std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5};
  const Matrix t = train::sample_times(1, 0, 0, 6, 0.01);
  const double l3 = train::loss_value(p, x, y, rows, t, 0, cfg, false);
  cfg.train.nfe = 1;
  CHECK(train::loss_value(p, x, y, rows, t, 0, cfg, false) == doctest::Approx(l3).epsilon(1e-12));
  cfg.train.nfe = 7;
  CHECK(train::loss_value(p, x, y, rows, t, 0, cfg, false) == doctest::Approx(l3).epsilon(1e-12));
}

TEST_CASE("zero field at init: transported gaps match the projector radius") {
  Config cfg = small_config();
  cfg.model.feature_dim = 16;
  AdapterParams p = AdapterParams::make(cfg.model, 3, 42);
  const Matrix x = testing::random_matrix(6, 16, 2);
  const train::Inference inf = train::infer(p, x, {0, 0, 1, 1, 2, 2}, testing::random_matrix(4, 16, 3), cfg);
  CHECK(inf.predictions.size() == 4);
  CHECK(inf.gaps.size() == 4 * (cfg.train.nfe + 1));
  for (double g : inf.gaps) CHECK(g == doctest::Approx(1.0 - std::tanh(0.5)).epsilon(1e-6));
}

TEST_CASE("full objective gradients on a toy episode") {
  Config cfg = small_config();
  cfg.model.feature_dim = 16;
  cfg.train.fm_gate_gradient = true;
  AdapterParams p = AdapterParams::make(cfg.model, 3, 7);
  // Move every zero-initialized layer off zero so all paths carry gradient.
  CounterRng rng(99);
  for (ad::ParamTensor* t : p.params()) {
    for (double& v : t->value.data) v += rng.uniform(-0.05, 0.05);
  }
  const Matrix x = testing::random_matrix(6, 16, 4);
  const std::vector<int> y{0, 0, 1, 1, 2, 2};
  const std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5};
  const Matrix t = train::sample_times(3, 2, 0, 6, 0.01);
  train::loss_value(p, x, y, rows, t, 2, cfg, true);
  double worst = 0.0;
  const double h = 1e-5;
  for (ad::ParamTensor* tensor : p.params()) {
    const std::size_t stride = std::max<std::size_t>(1, tensor->value.size() / 4);
    for (std::size_t k = 0; k < tensor->value.size(); k += stride) {
      const double v = tensor->value.data[k];
      const double g = tensor->grad.data[k];
      tensor->value.data[k] = v + h;
      const double fp = train::loss_value(p, x, y, rows, t, 2, cfg, false);
      tensor->value.data[k] = v - h;
      const double fm = train::loss_value(p, x, y, rows, t, 2, cfg, false);
      tensor->value.data[k] = v;
      const double fd = (fp - fm) / (2.0 * h);
      worst = std::max(worst, std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-6}));
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("training is deterministic and reduces the loss") {
  const data::FeatureCache cache = small_cache();
  const data::Episode ep = data::sample_episode(cache, 3, 42);
  std::ostringstream log;
  const train::TrainResult a = train::train_episode(cache, ep, small_config(), {.log = &log});
  const train::TrainResult b = train::train_episode(cache, ep, small_config());
  CHECK(canonical_dump(a.report) == canonical_dump(b.report));
  CHECK(a.report["schema"] == train::kReportSchema);
  CHECK(a.report["final_loss"].get<double>() < a.report["initial_loss"].get<double>());
  CHECK(a.report["epochs"].size() == 4);
  CHECK(a.report["fm_grid_final"].get<double>() < a.report["fm_grid_initial"].get<double>());
  CHECK(log.str().find("\"done\"") != std::string::npos);
  const auto& ev = a.report["stability"]["events"];
  CHECK_FALSE(ev["boundary_risk"].get<bool>());
  CHECK_FALSE(ev["collapse"].get<bool>());
}

TEST_CASE("support set is classified after training on separable data") {
  const data::FeatureCache cache = small_cache(0.5);
  const data::Episode ep = data::sample_episode(cache, 3, 1);
  Config cfg = small_config(20);
  const train::TrainResult r = train::train_episode(cache, ep, cfg);
  CHECK(r.report["support_accuracy"].get<double>() == 1.0);
  CHECK(r.report["support_accuracy"].get<double>() >= r.report["query_accuracy"].get<double>());
  CHECK(r.report["query_accuracy"].get<double>() >= 0.9);
}

TEST_CASE("checkpoints reload to identical predictions") {
  const data::FeatureCache cache = small_cache();
  const data::Episode ep = data::sample_episode(cache, 3, 42);
  const fs::path dir = fs::temp_directory_path() / "mcrfm_unit_trainer";
  fs::create_directories(dir);
  const std::string stem = (dir / "run").string();
  const train::TrainResult r = train::train_episode(cache, ep, small_config(2), {.checkpoint_stem = stem});
  train::TrainResult back = train::load_checkpoint(stem);
  CHECK(config_hash(back.config) == config_hash(r.config));
  const Matrix sx = cache.rows(ep.support_flat());
  const std::vector<int> sy = cache.labels_of(ep.support_flat());
  const Matrix qx = cache.rows(ep.query);
  train::TrainResult copy = train::load_checkpoint(stem);
  CHECK(train::infer(back.params, sx, sy, qx, back.config).logits == train::infer(copy.params, sx, sy, qx, copy.config).logits);
  CHECK_THROWS_AS(train::load_checkpoint((dir / "nothing").string()), FormatError);
}

TEST_CASE("stability events") {
  Config cfg = small_config();
  std::vector<train::EpochRecord> epochs(6);
  for (auto& e : epochs) {
    e.mean_g = 0.5;
    e.ratio_median = 1.0;
  }
  train::StabilityReport ok = train::diagnostics(epochs, {0.4, 0.5}, cfg);
  CHECK_FALSE(ok.collapse);
  CHECK_FALSE(ok.boundary_risk);
  CHECK_FALSE(ok.loss_imbalance);
  CHECK(*ok.ratio_median == 1.0);

  for (auto& e : epochs) e.mean_g = 0.995;
  CHECK(train::diagnostics(epochs, {}, cfg).collapse);
  epochs[2].mean_g = 0.5;
  CHECK_FALSE(train::diagnostics(epochs, {}, cfg).collapse);

  CHECK(train::diagnostics(epochs, {5e-5}, cfg).boundary_risk);
  epochs[1].ratio_median = 1e-3;
  CHECK(train::diagnostics(epochs, {}, cfg).loss_imbalance);

  cfg = apply_variant(cfg, "euclidean");
  const train::StabilityReport e = train::diagnostics(epochs, {}, cfg);
  CHECK_FALSE(e.ratio_applicable);
  CHECK_FALSE(e.loss_imbalance);
  CHECK_THROWS_AS(train::diagnostics({}, {}, cfg), InvalidArgument);
}
