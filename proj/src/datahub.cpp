#include "mcrfm/datahub.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "mcrfm/binary_io.hpp"
#include "mcrfm/config.hpp"
#include "mcrfm/error.hpp"
#include "mcrfm/rng.hpp"

namespace mcrfm::data {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'F', 'V', 'E', 'C', '1', '\0', '\0', '\0'};

// Stream tags for the generator's independent random streams.
enum : std::uint64_t { kTagOffsets = 1, kTagSamples = 2, kTagRotation = 3, kTagEpisode = 4 };

}  // namespace

Matrix FeatureCache::rows(const std::vector<std::size_t>& index) const {
  Matrix out(index.size(), dim);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= count) throw InvalidArgument("feature row " + std::to_string(index[r]) + " out of range");
    const float* src = features.data() + index[r] * dim;
    for (std::size_t c = 0; c < dim; ++c) out(r, c) = static_cast<double>(src[c]);
  }
  return out;
}

std::vector<int> FeatureCache::labels_of(const std::vector<std::size_t>& index) const {
  std::vector<int> out(index.size());
  for (std::size_t r = 0; r < index.size(); ++r) out[r] = static_cast<int>(labels.at(index[r]));
  return out;
}

void validate(const FeatureCache& c) {
  if (c.dim == 0) throw FormatError("feature cache: dimension must be positive");
  if (c.num_labels < 2) throw FormatError("feature cache: need at least two labels");
  if (c.count < c.num_labels) throw FormatError("feature cache: fewer samples than labels");
  if (c.features.size() != static_cast<std::size_t>(c.count) * c.dim) {
    throw FormatError("feature cache: feature buffer does not match n x d");
  }
  if (c.labels.size() != c.count) throw FormatError("feature cache: label count does not match n");
  for (std::size_t i = 0; i < c.labels.size(); ++i) {
    if (c.labels[i] >= c.num_labels) {
      throw FormatError("feature cache: label " + std::to_string(c.labels[i]) + " at row " + std::to_string(i) +
                        " exceeds K");
    }
  }
  for (float f : c.features) {
    if (!std::isfinite(f)) throw FormatError("feature cache: non-finite feature value");
  }
}

std::size_t cache_file_bytes(std::uint32_t d, std::uint32_t n) {
  return kHeaderBytes + static_cast<std::size_t>(n) * d * 4 + static_cast<std::size_t>(n) * 4;
}

std::string encode_cache(const FeatureCache& c) {
  validate(c);
  std::string out(kMagic, sizeof kMagic);
  out.reserve(cache_file_bytes(c.dim, c.count));
  io::put_le(out, c.dim);
  io::put_le(out, c.count);
  io::put_le(out, c.num_labels);
  for (float f : c.features) io::put_f32(out, f);
  for (std::uint32_t y : c.labels) io::put_le(out, y);
  return out;
}

FeatureCache decode_cache(const std::string& bytes) {
  if (bytes.size() < kHeaderBytes) {
    throw FormatError("feature cache truncated: expected at least " + std::to_string(kHeaderBytes) +
                      " header bytes, found " + std::to_string(bytes.size()));
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw FormatError("feature cache: bad magic at offset 0");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  FeatureCache c;
  c.dim = io::get_le<std::uint32_t>(p + 8);
  c.count = io::get_le<std::uint32_t>(p + 12);
  c.num_labels = io::get_le<std::uint32_t>(p + 16);
  const std::size_t expected = cache_file_bytes(c.dim, c.count);
  if (bytes.size() != expected) {
    throw FormatError("feature cache size mismatch: expected " + std::to_string(expected) + " bytes, found " +
                      std::to_string(bytes.size()));
  }
  const std::size_t nf = static_cast<std::size_t>(c.count) * c.dim;
  c.features.resize(nf);
  for (std::size_t i = 0; i < nf; ++i) c.features[i] = io::get_f32(p + kHeaderBytes + 4 * i);
  c.labels.resize(c.count);
  const unsigned char* lp = p + kHeaderBytes + 4 * nf;
  for (std::size_t i = 0; i < c.count; ++i) c.labels[i] = io::get_le<std::uint32_t>(lp + 4 * i);
  validate(c);
  return c;
}

void write_cache(const std::string& path, const FeatureCache& c) {
  io::write_file(path, encode_cache(c));
  io::write_file(path + ".json", c.sidecar.dump(2) + "\n");
}

FeatureCache read_cache(const std::string& path) {
  FeatureCache c = decode_cache(io::read_file(path));
  const std::string side = path + ".json";
  std::ifstream probe(side);
  if (probe) {
    try {
      c.sidecar = json::parse(io::read_file(side));
    } catch (const json::exception& e) {
      throw FormatError("feature cache sidecar is not valid JSON: " + std::string(e.what()));
    }
  }
  return c;
}

std::string cache_hash(const FeatureCache& c) { return hex64(fnv1a64(encode_cache(c))); }

std::vector<std::size_t> Episode::support_flat() const {
  std::vector<std::size_t> out;
  for (const auto& s : support) out.insert(out.end(), s.begin(), s.end());
  return out;
}

Episode sample_episode(const FeatureCache& cache, int k_shot, std::uint64_t seed) {
  if (k_shot < 1) throw InvalidArgument("sample_episode: k_shot must be positive");
  std::vector<std::vector<std::size_t>> by_class(cache.num_labels);
  for (std::size_t i = 0; i < cache.count; ++i) by_class[cache.labels[i]].push_back(i);
  Episode e;
  e.k_shot = k_shot;
  e.seed = seed;
  e.cache_hash = cache_hash(cache);
  e.support.resize(cache.num_labels);
  std::vector<char> in_support(cache.count, 0);
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    std::vector<std::size_t>& pool = by_class[k];
    if (pool.size() <= static_cast<std::size_t>(k_shot)) {
      throw InvalidArgument("sample_episode: class " + std::to_string(k) + " has " + std::to_string(pool.size()) +
                            " samples, need more than " + std::to_string(k_shot));
    }
    // Partial Fisher-Yates on the class pool.
    CounterRng rng(stream_key(seed, kTagEpisode, k));
    for (std::size_t j = 0; j < static_cast<std::size_t>(k_shot); ++j) {
      const std::size_t pick = j + static_cast<std::size_t>(rng.below(pool.size() - j));
      std::swap(pool[j], pool[pick]);
      e.support[k].push_back(pool[j]);
      in_support[pool[j]] = 1;
    }
    std::sort(e.support[k].begin(), e.support[k].end());
  }
  for (std::size_t i = 0; i < cache.count; ++i) {
    if (!in_support[i]) e.query.push_back(i);
  }
  return e;
}

json to_json(const Episode& e) {
  return {{"format", "mcrfm-episode"}, {"version", 1},          {"k_shot", e.k_shot}, {"seed", e.seed},
          {"cache_hash", e.cache_hash}, {"support", e.support}, {"query", e.query}};
}

Episode episode_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "mcrfm-episode" || j.at("version").get<int>() != 1) {
      throw FormatError("episode: unrecognized format/version");
    }
    Episode e;
    e.k_shot = j.at("k_shot").get<int>();
    e.seed = j.at("seed").get<std::uint64_t>();
    e.cache_hash = j.at("cache_hash").get<std::string>();
    e.support = j.at("support").get<std::vector<std::vector<std::size_t>>>();
    e.query = j.at("query").get<std::vector<std::size_t>>();
    return e;
  } catch (const json::exception& ex) {
    throw FormatError("episode: " + std::string(ex.what()));
  }
}

void write_episode(const std::string& path, const Episode& e) { io::write_file(path, to_json(e).dump(1) + "\n"); }

Episode read_episode(const std::string& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& ex) {
    throw FormatError("episode file is not valid JSON: " + std::string(ex.what()));
  }
  return episode_from_json(j);
}

void check_episode(const Episode& e, const FeatureCache& cache) {
  if (e.cache_hash != cache_hash(cache)) throw InvalidEpisode("episode was sampled from a different feature cache");
  if (e.support.size() != cache.num_labels) throw InvalidEpisode("episode class count does not match the cache");
  std::vector<char> seen(cache.count, 0);
  auto mark = [&](std::size_t i) {
    if (i >= cache.count) throw InvalidEpisode("episode index " + std::to_string(i) + " out of range");
    if (seen[i]) throw InvalidEpisode("episode index " + std::to_string(i) + " appears twice");
    seen[i] = 1;
  };
  for (std::size_t k = 0; k < e.support.size(); ++k) {
    if (e.support[k].size() != static_cast<std::size_t>(e.k_shot)) {
      throw InvalidEpisode("episode class " + std::to_string(k) + " does not have k_shot support samples");
    }
    for (std::size_t i : e.support[k]) {
      mark(i);
      if (cache.labels[i] != k) throw InvalidEpisode("episode support index " + std::to_string(i) + " has wrong label");
    }
  }
  for (std::size_t i : e.query) mark(i);
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw InvalidEpisode("episode does not cover every sample");
}

int HierarchySpec::num_classes() const {
  int k = 1;
  for (int l = 0; l < depth; ++l) k *= branching;
  return k;
}

void validate(const HierarchySpec& s) {
  if (s.depth < 1 || s.branching < 2) throw InvalidArgument("hierarchy: need depth >= 1 and branching >= 2");
  if (static_cast<int>(s.level_scales.size()) != s.depth) {
    throw InvalidArgument("hierarchy: level_scales needs one entry per level");
  }
  for (double v : s.level_scales) {
    if (!(v >= 0.0)) throw InvalidArgument("hierarchy: level scales must be non-negative");
  }
  if (!(s.noise >= 0.0)) throw InvalidArgument("hierarchy: noise must be non-negative");
  if (s.nuisance_dims < 0 || s.dim - s.nuisance_dims < 1) {
    throw InvalidArgument("hierarchy: need 0 <= nuisance_dims < dim");
  }
}

json to_json(const HierarchySpec& s) {
  return {{"depth", s.depth},         {"branching", s.branching},         {"dim", s.dim},
          {"level_scales", s.level_scales}, {"noise", s.noise}, {"nuisance_dims", s.nuisance_dims},
          {"rotation_seed", s.rotation_seed}};
}

HierarchySpec hierarchy_from_json(const json& j, HierarchySpec s) {
  if (!j.is_object()) throw InvalidArgument("hierarchy spec must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "depth") s.depth = v.get<int>();
      else if (key == "branching") s.branching = v.get<int>();
      else if (key == "dim") s.dim = v.get<int>();
      else if (key == "level_scales") s.level_scales = v.get<std::vector<double>>();
      else if (key == "noise") s.noise = v.get<double>();
      else if (key == "nuisance_dims") s.nuisance_dims = v.get<int>();
      else if (key == "rotation_seed") s.rotation_seed = v.get<std::uint64_t>();
      else throw InvalidArgument("hierarchy spec: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw InvalidArgument("hierarchy spec: " + std::string(e.what()));
  }
  validate(s);
  return s;
}

Matrix leaf_means(const HierarchySpec& s, std::uint64_t seed) {
  validate(s);
  const auto k = static_cast<std::size_t>(s.num_classes());
  const auto ds = static_cast<std::size_t>(s.dim - s.nuisance_dims);
  Matrix means(k, ds);
  // Node at level l (1-based) covering leaf `leaf` has index leaf / B^(D-l).
  for (int l = 1; l <= s.depth; ++l) {
    std::size_t span = 1;
    for (int r = l; r < s.depth; ++r) span *= static_cast<std::size_t>(s.branching);
    const double sd = s.level_scales[static_cast<std::size_t>(l - 1)] / std::sqrt(static_cast<double>(ds));
    for (std::size_t node = 0; node < k / span; ++node) {
      CounterRng rng(stream_key(seed, kTagOffsets, static_cast<std::uint64_t>(l), node));
      std::vector<double> off(ds);
      for (double& v : off) v = sd * rng.normal();
      for (std::size_t leaf = node * span; leaf < (node + 1) * span; ++leaf)
        for (std::size_t c = 0; c < ds; ++c) means(leaf, c) += off[c];
    }
  }
  return means;
}

FeatureCache generate_hierarchy(const HierarchySpec& s, int n_per_class, std::uint64_t seed) {
  validate(s);
  if (n_per_class < 1) throw InvalidArgument("generate_hierarchy: n_per_class must be positive");
  const Matrix means = leaf_means(s, seed);
  const auto k = means.rows;
  const auto ds = means.cols;
  const auto d = static_cast<std::size_t>(s.dim);

  CounterRng rot_rng(stream_key(s.rotation_seed, kTagRotation));
  Eigen::MatrixXd g(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < g.rows(); ++r)
    for (Eigen::Index c = 0; c < g.cols(); ++c) g(r, c) = rot_rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd rr = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index c = 0; c < q.cols(); ++c) {
    if (rr(c, c) < 0.0) q.col(c) = -q.col(c);
  }

  FeatureCache out;
  out.dim = static_cast<std::uint32_t>(d);
  out.num_labels = static_cast<std::uint32_t>(k);
  out.count = static_cast<std::uint32_t>(k * static_cast<std::size_t>(n_per_class));
  out.features.resize(static_cast<std::size_t>(out.count) * d);
  out.labels.resize(out.count);
  const double sd = s.noise / std::sqrt(static_cast<double>(ds));
  Eigen::VectorXd raw(static_cast<Eigen::Index>(d));
  std::size_t row = 0;
  for (std::size_t cls = 0; cls < k; ++cls) {
    for (int i = 0; i < n_per_class; ++i, ++row) {
      CounterRng rng(stream_key(seed, kTagSamples, cls, static_cast<std::uint64_t>(i)));
      for (std::size_t c = 0; c < d; ++c) {
        const double mean = c < ds ? means(cls, c) : 0.0;
        raw(static_cast<Eigen::Index>(c)) = mean + sd * rng.normal();
      }
      const Eigen::VectorXd x = q * raw;
      for (std::size_t c = 0; c < d; ++c) out.features[row * d + c] = static_cast<float>(x(static_cast<Eigen::Index>(c)));
      out.labels[row] = static_cast<std::uint32_t>(cls);
    }
  }
  std::vector<std::string> names;
  for (std::size_t cls = 0; cls < k; ++cls) {
    std::string name = "leaf";
    std::size_t rem = cls, span = k;
    for (int l = 0; l < s.depth; ++l) {
      span /= static_cast<std::size_t>(s.branching);
      name += (l ? "." : "_") + std::to_string(rem / span);
      rem %= span;
    }
    names.push_back(name);
  }
  out.sidecar = {{"source", "synthetic-hierarchy"}, {"spec", to_json(s)},     {"seed", seed},
                 {"n_per_class", n_per_class},       {"class_names", names}};
  return out;
}

}  // namespace mcrfm::data
