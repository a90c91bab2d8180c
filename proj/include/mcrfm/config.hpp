#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace mcrfm {

enum class Geometry { kMixed, kEuclidean, kHyperbolic };
enum class HeadMode { kHybrid, kLinear, kPrototype };
/// kAdaptive: sigmoid(rho + Delta(r) + b(c_S)); kGlobal: sigmoid(rho) only.
enum class MixMode { kAdaptive, kGlobal };
enum class PrototypeRefresh { kEpoch, kBatch };

struct ModelConfig {
  int feature_dim = 0;  // filled from the feature cache
  int d_h = 128;
  int d_e = 128;
  double curvature = 1.0;
  double alpha_min = 0.05;
  double alpha_max = 1.5;
  double alpha_h_init = 0.5;
  double alpha_e_init = 1.0;
  double eps_norm = 1e-6;
  bool euclid_ln_affine = true;
  int d_c = 64;
  int token_dim = 64;
  int d_t = 32;
  double omega_max = 1000.0;
  int field_width = 256;
  int field_layers = 2;
  int mix_hidden = 64;
  int k_max = 1000;
  Geometry geometry = Geometry::kMixed;
  HeadMode head = HeadMode::kHybrid;
  MixMode gate = MixMode::kAdaptive;
  MixMode beta = MixMode::kAdaptive;
  bool use_context = true;
};

struct TrainConfig {
  int epochs = 50;
  int batch = 64;
  double base_lr = 5e-4;
  double weight_decay = 1e-4;
  int warmup_epochs = 5;
  double clip = 1.0;
  int nfe = 3;
  std::uint64_t seed = 42;
  std::vector<std::uint64_t> seeds = {42, 43, 44};
  double tau = 0.2;
  double lambda_e = 1.0;
  double lambda_cls = 1.0;
  double smoothing = 0.1;
  int ramp_epochs = 10;
  double eps_t = 0.01;
  double eps_ball = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  PrototypeRefresh prototype_refresh = PrototypeRefresh::kEpoch;
  bool detach_prototypes = false;
  /// Let the flow-matching term push gradients into the branch gate.
  bool fm_gate_gradient = false;
};

struct StabilityThresholds {
  double collapse_low = 0.01;
  double collapse_high = 0.99;
  int collapse_epochs = 5;
  double boundary_risk_factor = 10.0;  // gap < factor * eps_ball
  double ratio_low = 0.01;
  double ratio_high = 100.0;
};

struct Config {
  std::string variant = "full";
  ModelConfig model;
  TrainConfig train;
  StabilityThresholds stability;
};

/// Ablation variants (component removed/replaced) in the order of the
/// ablation table, followed by the two single-geometry baselines.
inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v = {"no_ce",      "linear_head",  "proto_head", "no_gate",
                                             "no_beta",    "no_shrinkage", "no_context"};
  return v;
}
inline const std::vector<std::string>& baseline_variants() {
  static const std::vector<std::string> v = {"euclidean", "hyperbolic"};
  return v;
}
/// Human-readable row label used in consolidated tables.
std::string variant_label(const std::string& variant);

/// Applies a named variant on top of `base` (throws InvalidArgument on unknown names).
Config apply_variant(Config base, const std::string& variant);

/// Structural checks (positive sizes, ranges, branch consistency).
void validate(const Config& cfg);

nlohmann::json to_json(const Config& cfg);
/// Overlays keys from `j` on top of `base`; unknown keys are an error.
Config config_from_json(const nlohmann::json& j, Config base = {});

/// Canonical (sorted-key, compact) serialization.
std::string canonical_dump(const nlohmann::json& j);
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);
/// Hash of the canonical configuration JSON.
std::string config_hash(const Config& cfg);

}  // namespace mcrfm
