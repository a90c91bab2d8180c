#include "mcrfm/checkpoint.hpp"

#include <fstream>

#include "mcrfm/binary_io.hpp"
#include "mcrfm/error.hpp"

namespace mcrfm {

namespace io {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to '" + path + "'");
}

}  // namespace io

namespace checkpoint {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path manifest_path(const fs::path& stem) { return fs::path(stem.string() + ".json"); }
fs::path data_path(const fs::path& stem) { return fs::path(stem.string() + ".bin"); }

void write(const fs::path& stem, std::span<ad::ParamTensor* const> params, const json& metadata) {
  std::string blob;
  json tensors = json::array();
  for (const ad::ParamTensor* p : params) {
    tensors.push_back({{"name", p->name},
                       {"rows", p->value.rows},
                       {"cols", p->value.cols},
                       {"offset", blob.size()}});
    for (double v : p->value.data) io::put_f64(blob, v);
  }
  json manifest = {{"format", "mcrfm-checkpoint"},
                   {"version", kFormatVersion},
                   {"dtype", "f64le"},
                   {"data_file", data_path(stem).filename().string()},
                   {"data_bytes", blob.size()},
                   {"tensors", tensors},
                   {"metadata", metadata}};
  io::write_file(data_path(stem).string(), blob);
  io::write_file(manifest_path(stem).string(), manifest.dump(2) + "\n");
}

json read_manifest(const fs::path& stem) {
  const std::string text = io::read_file(manifest_path(stem).string());
  json m;
  try {
    m = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint manifest is not valid JSON: " + std::string(e.what()));
  }
  if (m.value("format", "") != "mcrfm-checkpoint" || m.value("version", 0) != kFormatVersion) {
    throw FormatError("unrecognized checkpoint manifest format/version");
  }
  return m;
}

json load(const fs::path& stem, std::span<ad::ParamTensor* const> params) {
  json m = read_manifest(stem);
  const json& tensors = m.at("tensors");
  if (tensors.size() != params.size()) {
    throw IncompatibleCheckpoint("checkpoint has " + std::to_string(tensors.size()) +
                                 " tensors, model expects " + std::to_string(params.size()));
  }
  const std::string blob = io::read_file(data_path(stem).string());
  if (blob.size() != m.at("data_bytes").get<std::size_t>()) {
    throw FormatError("checkpoint data: expected " + m.at("data_bytes").dump() + " bytes, found " +
                      std::to_string(blob.size()));
  }
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::ParamTensor& p = *params[i];
    const json& t = tensors[i];
    if (t.at("name").get<std::string>() != p.name || t.at("rows").get<std::size_t>() != p.value.rows ||
        t.at("cols").get<std::size_t>() != p.value.cols) {
      throw IncompatibleCheckpoint("checkpoint tensor " + std::to_string(i) + " (" +
                                   t.at("name").get<std::string>() + ") does not match " + p.name);
    }
    std::size_t off = t.at("offset").get<std::size_t>();
    if (off + 8 * p.value.size() > blob.size()) throw FormatError("checkpoint tensor overruns data file");
    for (double& v : p.value.data) {
      v = io::get_f64(bytes + off);
      off += 8;
    }
  }
  return m.at("metadata");
}

}  // namespace checkpoint
}  // namespace mcrfm
