#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "mcrfm/datahub.hpp"
#include "mcrfm/error.hpp"

using namespace mcrfm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const char* name) {
  fs::path d = fs::temp_directory_path() / "mcrfm_unit_data";
  fs::create_directories(d);
  return d / name;
}

data::FeatureCache tiny_cache() {
  data::FeatureCache c;
  c.dim = 2;
  c.count = 6;
  c.num_labels = 2;
  c.features = {0.f, 1.f, 2.f, 3.f, 4.f, 5.f, 6.f, 7.f, 8.f, 9.f, 10.f, 11.f};
  c.labels = {0, 0, 0, 1, 1, 1};
  return c;
}

double row_dist(const Matrix& m, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (std::size_t j = 0; j < m.cols; ++j) s += (m(a, j) - m(b, j)) * (m(a, j) - m(b, j));
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("cache size formula") {
  CHECK(data::cache_file_bytes(512, 1000) == 20 + 1000 * 512 * 4 + 1000 * 4);
  CHECK(data::encode_cache(tiny_cache()).size() == data::cache_file_bytes(2, 6));
}

TEST_CASE("cache encode/decode and file round trip") {
  data::FeatureCache c = tiny_cache();
  c.sidecar = {{"source", "unit"}};
  const data::FeatureCache back = data::decode_cache(data::encode_cache(c));
  CHECK(back.features == c.features);
  CHECK(back.labels == c.labels);
  CHECK(back.num_labels == 2);

  const fs::path p = scratch("tiny.fvec");
  data::write_cache(p.string(), c);
  CHECK(fs::exists(p.string() + ".json"));
  const data::FeatureCache disk = data::read_cache(p.string());
  CHECK(disk.features == c.features);
  CHECK(disk.sidecar["source"] == "unit");
  CHECK(data::cache_hash(disk) == data::cache_hash(c));

  const Matrix m = c.rows({4, 1});
  CHECK(m(0, 1) == 9.0);
  CHECK(m(1, 0) == 2.0);
  CHECK(c.labels_of({4, 1}) == std::vector<int>{1, 0});
}

TEST_CASE("malformed caches") {
  const std::string bytes = data::encode_cache(tiny_cache());
  CHECK_THROWS_WITH_AS(data::decode_cache(bytes.substr(0, bytes.size() - 3)), doctest::Contains("expected"),
                       FormatError);
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(data::decode_cache(magic), FormatError);
  CHECK_THROWS_AS(data::decode_cache(bytes.substr(0, 10)), FormatError);
  std::string bad_label = bytes;
  bad_label[bad_label.size() - 4] = 7;
  CHECK_THROWS_AS(data::decode_cache(bad_label), FormatError);
  CHECK_THROWS_AS(data::read_cache(scratch("absent.fvec").string()), FormatError);
}

TEST_CASE("episode sampling partitions each class") {
  const data::FeatureCache c = data::generate_hierarchy({.dim = 16, .nuisance_dims = 4}, 10, 1);
  const data::Episode e = data::sample_episode(c, 4, 42);
  CHECK(e.num_classes() == 9);
  std::set<std::size_t> seen;
  for (std::size_t k = 0; k < 9; ++k) {
    CHECK(e.support[k].size() == 4);
    CHECK(std::is_sorted(e.support[k].begin(), e.support[k].end()));
    for (std::size_t i : e.support[k]) {
      CHECK(c.labels[i] == k);
      seen.insert(i);
    }
  }
  for (std::size_t i : e.query) CHECK(seen.insert(i).second);
  CHECK(seen.size() == c.count);
  CHECK_NOTHROW(data::check_episode(e, c));

  const data::Episode again = data::sample_episode(c, 4, 42);
  CHECK(again.support == e.support);
  CHECK(data::sample_episode(c, 4, 43).support != e.support);
  CHECK_THROWS_AS(data::sample_episode(c, 10, 42), InvalidArgument);
}

TEST_CASE("episode persistence and validation") {
  const data::FeatureCache c = data::generate_hierarchy({.dim = 16, .nuisance_dims = 4}, 6, 2);
  const data::Episode e = data::sample_episode(c, 2, 5);
  const fs::path p = scratch("ep.json");
  data::write_episode(p.string(), e);
  const data::Episode back = data::read_episode(p.string());
  CHECK(back.support == e.support);
  CHECK(back.query == e.query);
  CHECK(back.cache_hash == e.cache_hash);

  data::Episode overlap = e;
  overlap.query.push_back(e.support[0][0]);
  CHECK_THROWS_AS(data::check_episode(overlap, c), InvalidEpisode);
  data::Episode wrong_hash = e;
  wrong_hash.cache_hash = "0";
  CHECK_THROWS_AS(data::check_episode(wrong_hash, c), InvalidEpisode);
  std::ofstream(p) << R"({"format":"other"})";
  CHECK_THROWS_AS(data::read_episode(p.string()), FormatError);
}

TEST_CASE("hierarchy generator") {
  const data::HierarchySpec spec;
  CHECK(spec.num_classes() == 9);
  const data::FeatureCache a = data::generate_hierarchy(spec, 5, 3);
  CHECK(a.count == 45);
  CHECK(a.dim == 256);
  CHECK(a.num_labels == 9);
  CHECK(a.sidecar["class_names"].size() == 9);
  CHECK(data::encode_cache(a) == data::encode_cache(data::generate_hierarchy(spec, 5, 3)));
  CHECK(data::cache_hash(a) != data::cache_hash(data::generate_hierarchy(spec, 5, 4)));

  data::HierarchySpec quiet = spec;
  quiet.noise = 0.0;
  const data::FeatureCache q = data::generate_hierarchy(quiet, 3, 3);
  for (std::size_t j = 0; j < q.dim; ++j) CHECK(q.features[j] == q.features[q.dim + j]);

  data::HierarchySpec bad = spec;
  bad.level_scales = {1.0};
  CHECK_THROWS_AS(data::validate(bad), InvalidArgument);
  CHECK(data::to_json(data::hierarchy_from_json(data::to_json(spec))) == data::to_json(spec));
}

TEST_CASE("sibling leaves are closer than cross-branch leaves") {
  data::HierarchySpec spec;
  spec.level_scales = {4.0, 1.0};
  const Matrix m = data::leaf_means(spec, 11);
  const int b = spec.branching;
  double sib = 0.0, cross = 0.0;
  int ns = 0, nc = 0;
  for (int i = 0; i < 9; ++i) {
    for (int j = i + 1; j < 9; ++j) {
      const double d = row_dist(m, i, j);
      if (i / b == j / b) {
        sib += d;
        ++ns;
      } else {
        cross += d;
        ++nc;
      }
    }
  }
  CHECK(sib / ns < cross / nc);
}
