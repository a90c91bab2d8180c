#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mcrfm/checkpoint.hpp"
#include "mcrfm/error.hpp"

using namespace mcrfm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const char* name) {
  fs::path d = fs::temp_directory_path() / "mcrfm_unit_ckpt";
  fs::create_directories(d);
  return d / name;
}

}  // namespace

TEST_CASE("checkpoint round trip") {
  ad::ParamTensor a("a", Matrix(2, 2, std::vector<double>{1.0, -2.5, 3.0e-300, 0.1}));
  ad::ParamTensor b("b", Matrix(1, 3, std::vector<double>{7.0, 8.0, 9.0}));
  std::vector<ad::ParamTensor*> ps{&a, &b};
  const fs::path stem = scratch("rt");
  checkpoint::write(stem, ps, {{"variant", "full"}});
  CHECK(fs::file_size(checkpoint::data_path(stem)) == 7 * 8);

  ad::ParamTensor a2("a", Matrix(2, 2)), b2("b", Matrix(1, 3));
  std::vector<ad::ParamTensor*> ps2{&a2, &b2};
  const nlohmann::json meta = checkpoint::load(stem, ps2);
  CHECK(meta["variant"] == "full");
  CHECK(a2.value == a.value);
  CHECK(b2.value == b.value);
}

TEST_CASE("incompatible and malformed checkpoints") {
  ad::ParamTensor a("a", Matrix(2, 2, 1.0));
  std::vector<ad::ParamTensor*> ps{&a};
  const fs::path stem = scratch("bad");
  checkpoint::write(stem, ps, nlohmann::json::object());

  ad::ParamTensor wrong_shape("a", Matrix(2, 3));
  std::vector<ad::ParamTensor*> w1{&wrong_shape};
  CHECK_THROWS_AS(checkpoint::load(stem, w1), IncompatibleCheckpoint);
  ad::ParamTensor wrong_name("z", Matrix(2, 2));
  std::vector<ad::ParamTensor*> w2{&wrong_name};
  CHECK_THROWS_AS(checkpoint::load(stem, w2), IncompatibleCheckpoint);
  ad::ParamTensor extra("b", Matrix(1, 1));
  ad::ParamTensor same("a", Matrix(2, 2));
  std::vector<ad::ParamTensor*> w3{&same, &extra};
  CHECK_THROWS_AS(checkpoint::load(stem, w3), IncompatibleCheckpoint);

  fs::resize_file(checkpoint::data_path(stem), 16);
  std::vector<ad::ParamTensor*> ok{&same};
  CHECK_THROWS_AS(checkpoint::load(stem, ok), FormatError);

  std::ofstream(checkpoint::manifest_path(stem)) << "{not json";
  CHECK_THROWS_AS(checkpoint::read_manifest(stem), FormatError);
  CHECK_THROWS_AS(checkpoint::read_manifest(scratch("missing")), FormatError);
}
