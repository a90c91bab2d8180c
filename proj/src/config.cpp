#include "mcrfm/config.hpp"

#include <cstdio>

#include "mcrfm/error.hpp"

namespace mcrfm {

using nlohmann::json;

namespace {

const char* to_string(Geometry g) {
  switch (g) {
    case Geometry::kMixed: return "mixed";
    case Geometry::kEuclidean: return "euclidean";
    case Geometry::kHyperbolic: return "hyperbolic";
  }
  return "?";
}
const char* to_string(HeadMode h) {
  switch (h) {
    case HeadMode::kHybrid: return "hybrid";
    case HeadMode::kLinear: return "linear";
    case HeadMode::kPrototype: return "prototype";
  }
  return "?";
}
const char* to_string(MixMode m) { return m == MixMode::kAdaptive ? "adaptive" : "global"; }
const char* to_string(PrototypeRefresh p) { return p == PrototypeRefresh::kEpoch ? "epoch" : "batch"; }

template <class E>
E parse_enum(const json& j, std::initializer_list<std::pair<const char*, E>> table, const char* key) {
  const std::string s = j.get<std::string>();
  for (const auto& [name, value] : table) {
    if (s == name) return value;
  }
  throw InvalidArgument(std::string("config: bad value '") + s + "' for " + key);
}

// Reads every key present in `j` into the matching field; rejects leftovers.
class Reader {
 public:
  Reader(const json& j, const char* section) : j_(j), section_(section) {
    if (!j.is_object()) throw InvalidArgument(std::string("config: ") + section + " must be an object");
  }
  template <class T>
  void get(const char* key, T& out) {
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        out = it->template get<T>();
      } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + section_ + "." + key + ": " + e.what());
      }
      seen_++;
    }
  }
  template <class E>
  void get_enum(const char* key, E& out, std::initializer_list<std::pair<const char*, E>> table) {
    if (auto it = j_.find(key); it != j_.end()) {
      out = parse_enum(*it, table, key);
      seen_++;
    }
  }
  /// Counts a sub-section parsed by its own Reader.
  void mark(const char* key) {
    if (j_.contains(key)) seen_++;
  }
  void finish() const {
    if (seen_ != j_.size()) {
      throw InvalidArgument(std::string("config: unknown key in section '") + section_ + "'");
    }
  }

 private:
  const json& j_;
  const char* section_;
  std::size_t seen_ = 0;
};

}  // namespace

std::string variant_label(const std::string& v) {
  if (v == "full") return "Full MC-RFM";
  if (v == "no_ce") return "No cross-entropy loss";
  if (v == "linear_head") return "MC head -> linear head";
  if (v == "proto_head") return "MC head -> prototype head";
  if (v == "no_gate") return "No feature-adaptive branch gate";
  if (v == "no_beta") return "No feature-adaptive beta";
  if (v == "no_shrinkage") return "No prototype shrinkage";
  if (v == "no_context") return "No task context";
  if (v == "euclidean") return "Euclidean";
  if (v == "hyperbolic") return "Hyperbolic-only";
  return v;
}

Config apply_variant(Config cfg, const std::string& v) {
  cfg.variant = v;
  const int m = cfg.model.d_h + cfg.model.d_e;
  if (v == "full") {
  } else if (v == "no_ce") {
    cfg.train.lambda_cls = 0.0;
  } else if (v == "linear_head") {
    cfg.model.head = HeadMode::kLinear;
  } else if (v == "proto_head") {
    cfg.model.head = HeadMode::kPrototype;
  } else if (v == "no_gate") {
    cfg.model.gate = MixMode::kGlobal;
  } else if (v == "no_beta") {
    cfg.model.beta = MixMode::kGlobal;
  } else if (v == "no_shrinkage") {
    cfg.train.tau = 0.0;
  } else if (v == "no_context") {
    cfg.model.use_context = false;
  } else if (v == "euclidean") {
    cfg.model.geometry = Geometry::kEuclidean;
    cfg.model.d_h = 0;
    cfg.model.d_e = m;
  } else if (v == "hyperbolic") {
    cfg.model.geometry = Geometry::kHyperbolic;
    cfg.model.d_h = m;
    cfg.model.d_e = 0;
  } else {
    throw InvalidArgument("unknown variant '" + v + "'");
  }
  return cfg;
}

void validate(const Config& cfg) {
  const ModelConfig& m = cfg.model;
  const TrainConfig& t = cfg.train;
  auto req = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string("config: ") + what);
  };
  req(m.d_h >= 0 && m.d_e >= 0 && m.d_h + m.d_e > 0, "branch dims must be non-negative with positive sum");
  req(m.geometry != Geometry::kMixed || (m.d_h > 0 && m.d_e > 0), "mixed geometry needs both branches");
  req(m.geometry != Geometry::kEuclidean || m.d_h == 0, "euclidean geometry requires d_h = 0");
  req(m.geometry != Geometry::kHyperbolic || m.d_e == 0, "hyperbolic geometry requires d_e = 0");
  req(m.curvature > 0.0, "curvature must be positive");
  req(m.alpha_min > 0.0 && m.alpha_min < m.alpha_max, "need 0 < alpha_min < alpha_max");
  req(m.alpha_h_init > m.alpha_min && m.alpha_h_init < m.alpha_max, "alpha_h_init must lie inside the clamp");
  req(m.alpha_e_init > 0.0, "alpha_e_init must be positive");
  req(m.d_c > 0 && m.token_dim > 0 && m.d_t > 0 && m.d_t % 2 == 0, "context/token/time dims must be positive (d_t even)");
  req(m.field_width > 0 && m.field_layers >= 1 && m.mix_hidden > 0, "network sizes must be positive");
  req(m.k_max > 0 && m.omega_max >= 1.0, "k_max and omega_max must be positive");
  req(t.epochs > 0 && t.batch > 0, "epochs and batch must be positive");
  req(t.base_lr > 0.0 && t.weight_decay >= 0.0, "lr must be positive and weight decay non-negative");
  req(t.warmup_epochs >= 0 && t.warmup_epochs <= t.epochs, "warmup must lie in [0, epochs]");
  req(t.clip > 0.0 && t.nfe >= 1, "clip must be positive and nfe >= 1");
  req(t.tau >= 0.0 && t.tau <= 1.0, "tau must lie in [0, 1]");
  req(t.lambda_e >= 0.0 && t.lambda_cls >= 0.0, "loss weights must be non-negative");
  req(t.smoothing >= 0.0 && t.smoothing < 1.0, "smoothing must lie in [0, 1)");
  req(t.ramp_epochs >= 0, "ramp_epochs must be non-negative");
  req(t.eps_t > 0.0 && t.eps_t < 0.5, "eps_t must lie in (0, 0.5)");
  req(t.eps_ball > 0.0 && t.eps_ball < 1.0, "eps_ball must lie in (0, 1)");
}

json to_json(const Config& cfg) {
  const ModelConfig& m = cfg.model;
  const TrainConfig& t = cfg.train;
  const StabilityThresholds& s = cfg.stability;
  json jm = {{"feature_dim", m.feature_dim},
             {"d_h", m.d_h},
             {"d_e", m.d_e},
             {"curvature", m.curvature},
             {"alpha_min", m.alpha_min},
             {"alpha_max", m.alpha_max},
             {"alpha_h_init", m.alpha_h_init},
             {"alpha_e_init", m.alpha_e_init},
             {"eps_norm", m.eps_norm},
             {"euclid_ln_affine", m.euclid_ln_affine},
             {"d_c", m.d_c},
             {"token_dim", m.token_dim},
             {"d_t", m.d_t},
             {"omega_max", m.omega_max},
             {"field_width", m.field_width},
             {"field_layers", m.field_layers},
             {"mix_hidden", m.mix_hidden},
             {"k_max", m.k_max},
             {"geometry", to_string(m.geometry)},
             {"head", to_string(m.head)},
             {"gate", to_string(m.gate)},
             {"beta", to_string(m.beta)},
             {"use_context", m.use_context}};
  json jt = {{"epochs", t.epochs},
             {"batch", t.batch},
             {"base_lr", t.base_lr},
             {"weight_decay", t.weight_decay},
             {"warmup_epochs", t.warmup_epochs},
             {"clip", t.clip},
             {"nfe", t.nfe},
             {"seed", t.seed},
             {"seeds", t.seeds},
             {"tau", t.tau},
             {"lambda_e", t.lambda_e},
             {"lambda_cls", t.lambda_cls},
             {"smoothing", t.smoothing},
             {"ramp_epochs", t.ramp_epochs},
             {"eps_t", t.eps_t},
             {"eps_ball", t.eps_ball},
             {"adam_beta1", t.adam_beta1},
             {"adam_beta2", t.adam_beta2},
             {"adam_eps", t.adam_eps},
             {"prototype_refresh", to_string(t.prototype_refresh)},
             {"detach_prototypes", t.detach_prototypes},
             {"fm_gate_gradient", t.fm_gate_gradient}};
  json js = {{"collapse_low", s.collapse_low},
             {"collapse_high", s.collapse_high},
             {"collapse_epochs", s.collapse_epochs},
             {"boundary_risk_factor", s.boundary_risk_factor},
             {"ratio_low", s.ratio_low},
             {"ratio_high", s.ratio_high}};
  return {{"variant", cfg.variant}, {"model", jm}, {"train", jt}, {"stability", js}};
}

Config config_from_json(const json& j, Config cfg) {
  Reader top(j, "config");
  top.get("variant", cfg.variant);
  if (auto it = j.find("model"); it != j.end()) {
    Reader r(*it, "model");
    ModelConfig& m = cfg.model;
    r.get("feature_dim", m.feature_dim);
    r.get("d_h", m.d_h);
    r.get("d_e", m.d_e);
    r.get("curvature", m.curvature);
    r.get("alpha_min", m.alpha_min);
    r.get("alpha_max", m.alpha_max);
    r.get("alpha_h_init", m.alpha_h_init);
    r.get("alpha_e_init", m.alpha_e_init);
    r.get("eps_norm", m.eps_norm);
    r.get("euclid_ln_affine", m.euclid_ln_affine);
    r.get("d_c", m.d_c);
    r.get("token_dim", m.token_dim);
    r.get("d_t", m.d_t);
    r.get("omega_max", m.omega_max);
    r.get("field_width", m.field_width);
    r.get("field_layers", m.field_layers);
    r.get("mix_hidden", m.mix_hidden);
    r.get("k_max", m.k_max);
    r.get_enum("geometry", m.geometry,
               {{"mixed", Geometry::kMixed}, {"euclidean", Geometry::kEuclidean}, {"hyperbolic", Geometry::kHyperbolic}});
    r.get_enum("head", m.head,
               {{"hybrid", HeadMode::kHybrid}, {"linear", HeadMode::kLinear}, {"prototype", HeadMode::kPrototype}});
    r.get_enum("gate", m.gate, {{"adaptive", MixMode::kAdaptive}, {"global", MixMode::kGlobal}});
    r.get_enum("beta", m.beta, {{"adaptive", MixMode::kAdaptive}, {"global", MixMode::kGlobal}});
    r.get("use_context", m.use_context);
    r.finish();
    top.mark("model");
  }
  if (auto it = j.find("train"); it != j.end()) {
    Reader r(*it, "train");
    TrainConfig& t = cfg.train;
    r.get("epochs", t.epochs);
    r.get("batch", t.batch);
    r.get("base_lr", t.base_lr);
    r.get("weight_decay", t.weight_decay);
    r.get("warmup_epochs", t.warmup_epochs);
    r.get("clip", t.clip);
    r.get("nfe", t.nfe);
    r.get("seed", t.seed);
    r.get("seeds", t.seeds);
    r.get("tau", t.tau);
    r.get("lambda_e", t.lambda_e);
    r.get("lambda_cls", t.lambda_cls);
    r.get("smoothing", t.smoothing);
    r.get("ramp_epochs", t.ramp_epochs);
    r.get("eps_t", t.eps_t);
    r.get("eps_ball", t.eps_ball);
    r.get("adam_beta1", t.adam_beta1);
    r.get("adam_beta2", t.adam_beta2);
    r.get("adam_eps", t.adam_eps);
    r.get_enum("prototype_refresh", t.prototype_refresh,
               {{"epoch", PrototypeRefresh::kEpoch}, {"batch", PrototypeRefresh::kBatch}});
    r.get("detach_prototypes", t.detach_prototypes);
    r.get("fm_gate_gradient", t.fm_gate_gradient);
    r.finish();
    top.mark("train");
  }
  if (auto it = j.find("stability"); it != j.end()) {
    Reader r(*it, "stability");
    StabilityThresholds& s = cfg.stability;
    r.get("collapse_low", s.collapse_low);
    r.get("collapse_high", s.collapse_high);
    r.get("collapse_epochs", s.collapse_epochs);
    r.get("boundary_risk_factor", s.boundary_risk_factor);
    r.get("ratio_low", s.ratio_low);
    r.get("ratio_high", s.ratio_high);
    r.finish();
    top.mark("stability");
  }
  top.finish();
  return cfg;
}

std::string canonical_dump(const json& j) { return j.dump(); }

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001B3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string config_hash(const Config& cfg) { return hex64(fnv1a64(canonical_dump(to_json(cfg)))); }

}  // namespace mcrfm
