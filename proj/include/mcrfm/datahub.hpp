#pragma once

// FVEC1 feature caches, persisted few-shot episodes and the synthetic
// hierarchical feature generator.
//
// FVEC1 layout (all little-endian):
//   offset 0   8 bytes  magic "FVEC1\0\0\0"
//   offset 8   u32      d (feature dim)
//   offset 12  u32      n (sample count)
//   offset 16  u32      K (label count)
//   offset 20  n*d f32  feature rows
//   then       n u32    labels
// A JSON sidecar lives next to the cache at `<path>.json`.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcrfm/matrix.hpp"

namespace mcrfm::data {

inline constexpr std::size_t kHeaderBytes = 20;

struct FeatureCache {
  std::uint32_t dim = 0;
  std::uint32_t count = 0;
  std::uint32_t num_labels = 0;
  std::vector<float> features;  // count x dim, row-major
  std::vector<std::uint32_t> labels;
  nlohmann::json sidecar = nlohmann::json::object();

  /// Selected rows promoted to 64-bit.
  Matrix rows(const std::vector<std::size_t>& index) const;
  std::vector<int> labels_of(const std::vector<std::size_t>& index) const;
};

/// Checks n >= K, label range and buffer sizes.
void validate(const FeatureCache& cache);

std::size_t cache_file_bytes(std::uint32_t d, std::uint32_t n);
std::string encode_cache(const FeatureCache& cache);
FeatureCache decode_cache(const std::string& bytes);

/// Writes `path` and `path.json`.
void write_cache(const std::string& path, const FeatureCache& cache);
/// Reads `path`; the sidecar is optional on read.
FeatureCache read_cache(const std::string& path);
/// FNV-1a of the encoded cache bytes, hex.
std::string cache_hash(const FeatureCache& cache);

struct Episode {
  int k_shot = 0;
  std::vector<std::vector<std::size_t>> support;  // per class, ascending
  std::vector<std::size_t> query;                 // ascending
  std::uint64_t seed = 0;
  std::string cache_hash;

  std::size_t num_classes() const { return support.size(); }
  /// Support indices class by class.
  std::vector<std::size_t> support_flat() const;
};

/// Per-class draw without replacement keyed by (seed, class); everything
/// else becomes query. Throws InvalidArgument when a class has <= k_shot samples.
Episode sample_episode(const FeatureCache& cache, int k_shot, std::uint64_t seed);

nlohmann::json to_json(const Episode& e);
Episode episode_from_json(const nlohmann::json& j);
void write_episode(const std::string& path, const Episode& e);
Episode read_episode(const std::string& path);
/// Partition, disjointness, shot count and hash checks against a cache.
void check_episode(const Episode& e, const FeatureCache& cache);

struct HierarchySpec {
  int depth = 2;
  int branching = 3;
  int dim = 256;
  std::vector<double> level_scales = {4.0, 1.5};
  double noise = 6.0;
  int nuisance_dims = 32;
  std::uint64_t rotation_seed = 7;

  int num_classes() const;
};

void validate(const HierarchySpec& spec);
nlohmann::json to_json(const HierarchySpec& spec);
HierarchySpec hierarchy_from_json(const nlohmann::json& j, HierarchySpec base = {});

/// Leaf means (K x d_sig, before nuisance dims and rotation).
Matrix leaf_means(const HierarchySpec& spec, std::uint64_t seed);

/// Samples ordered class by class; labels are leaf indices in path order.
FeatureCache generate_hierarchy(const HierarchySpec& spec, int n_per_class, std::uint64_t seed);

}  // namespace mcrfm::data
