#include "mgtr/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "mgtr/errors.hpp"

namespace mgtr {

namespace {

constexpr char kMagic[4] = {'M', 'G', 'T', 'R'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xFFFFFFFFull));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw ParseError("checkpoint: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& in) {
  const std::uint64_t lo = get_u32(in);
  const std::uint64_t hi = get_u32(in);
  return lo | (hi << 32);
}

nlohmann::json read_manifest(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw SchemaError("checkpoint: bad magic (not a checkpoint file)");
  const std::uint32_t version = get_u32(in);
  if (version != kVersion)
    throw SchemaError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint64_t mlen = get_u64(in);
  std::string manifest(mlen, '\0');
  in.read(manifest.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw ParseError("checkpoint: truncated manifest");
  try {
    return nlohmann::json::parse(manifest);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint manifest: ") + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const ParameterStore& params,
                     const CheckpointInfo& info) {
  nlohmann::json manifest;
  manifest["schema_version"] = 1;
  manifest["config_hash"] = info.config_hash;
  manifest["epoch"] = info.epoch;
  manifest["metrics"] = info.metrics;
  nlohmann::json arrays = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : params.all()) {
    arrays.push_back({{"name", p.name},
                      {"shape", {p.var.rows(), p.var.cols()}},
                      {"offset", offset},
                      {"count", p.var.size()}});
    offset += static_cast<std::uint64_t>(p.var.size()) * 4;
  }
  manifest["arrays"] = std::move(arrays);
  const std::string mstr = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, mstr.size());
  out.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  for (const auto& p : params.all()) {
    const Mat& m = p.var.value();
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) {
        const float f = static_cast<float>(m(i, j));
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        unsigned char b[4] = {static_cast<unsigned char>(u & 0xFF),
                              static_cast<unsigned char>((u >> 8) & 0xFF),
                              static_cast<unsigned char>((u >> 16) & 0xFF),
                              static_cast<unsigned char>((u >> 24) & 0xFF)};
        out.write(reinterpret_cast<const char*>(b), 4);
      }
  }
  if (!out) throw IoError("checkpoint write failed: " + path);
}

CheckpointInfo load_checkpoint(const std::string& path, ParameterStore& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  const nlohmann::json manifest = read_manifest(in);

  CheckpointInfo info;
  try {
    info.epoch = manifest.at("epoch").get<int>();
    info.config_hash = manifest.at("config_hash").get<std::string>();
    info.metrics = manifest.value("metrics", nlohmann::json::object());

    const auto& arrays = manifest.at("arrays");
    if (arrays.size() != params.count())
      throw SchemaError("checkpoint: parameter count mismatch (" + std::to_string(arrays.size()) +
                        " stored, " + std::to_string(params.count()) + " expected)");
    const std::streampos payload_start = in.tellg();
    for (const auto& a : arrays) {
      const std::string name = a.at("name").get<std::string>();
      const Parameter* p = params.find(name);
      if (!p) throw SchemaError("checkpoint: unknown parameter '" + name + "'");
      const Index rows = a.at("shape")[0].get<Index>(), cols = a.at("shape")[1].get<Index>();
      ad::Var var = p->var;
      if (rows != var.rows() || cols != var.cols())
        throw SchemaError("checkpoint: shape mismatch for '" + name + "'");
      in.seekg(payload_start + static_cast<std::streamoff>(a.at("offset").get<std::uint64_t>()));
      Mat& m = var.value_mut();
      for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) {
          unsigned char b[4];
          in.read(reinterpret_cast<char*>(b), 4);
          if (!in) throw ParseError("checkpoint: truncated payload at '" + name + "'");
          std::uint32_t u = static_cast<std::uint32_t>(b[0]) |
                            (static_cast<std::uint32_t>(b[1]) << 8) |
                            (static_cast<std::uint32_t>(b[2]) << 16) |
                            (static_cast<std::uint32_t>(b[3]) << 24);
          float f;
          std::memcpy(&f, &u, 4);
          m(i, j) = static_cast<double>(f);
        }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint manifest: ") + e.what());
  }
  return info;
}

CheckpointInfo peek_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  const nlohmann::json manifest = read_manifest(in);
  CheckpointInfo info;
  try {
    info.epoch = manifest.at("epoch").get<int>();
    info.config_hash = manifest.at("config_hash").get<std::string>();
    info.metrics = manifest.value("metrics", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint manifest: ") + e.what());
  }
  return info;
}

void round_params_to_f32(ParameterStore& params) {
  for (auto& p : params.all()) {
    Mat& m = p.var.value_mut();
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<double>(static_cast<float>(m(i, j)));
  }
}

}  // namespace mgtr
