#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mgtr/errors.hpp"
#include "mgtr/scene.hpp"

namespace mgtr {

namespace {

using nlohmann::json;

constexpr char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const unsigned char* data, std::size_t len) {
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    unsigned int b = static_cast<unsigned int>(data[i]) << 16;
    if (i + 1 < len) b |= static_cast<unsigned int>(data[i + 1]) << 8;
    if (i + 2 < len) b |= static_cast<unsigned int>(data[i + 2]);
    out.push_back(kB64Alphabet[(b >> 18) & 0x3F]);
    out.push_back(kB64Alphabet[(b >> 12) & 0x3F]);
    out.push_back(i + 1 < len ? kB64Alphabet[(b >> 6) & 0x3F] : '=');
    out.push_back(i + 2 < len ? kB64Alphabet[b & 0x3F] : '=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& in) {
  static const auto lut = [] {
    std::array<int, 256> t{};
    t.fill(-1);
    for (int i = 0; i < 64; ++i) t[static_cast<unsigned char>(kB64Alphabet[i])] = i;
    return t;
  }();
  std::vector<unsigned char> out;
  out.reserve(in.size() / 4 * 3);
  int acc = 0, bits = 0;
  for (char c : in) {
    if (c == '=') break;
    const int v = lut[static_cast<unsigned char>(c)];
    if (v < 0) throw ParseError("invalid base64 character");
    acc = (acc << 6) | v;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((acc >> bits) & 0xFF));
    }
  }
  return out;
}

// Voxel payload: little-endian float32, flat [C_v, D, H, W] row-major.
std::string encode_features(const Mat& features) {
  std::vector<unsigned char> bytes(static_cast<std::size_t>(features.size()) * 4);
  std::size_t off = 0;
  for (Index r = 0; r < features.rows(); ++r) {
    for (Index c = 0; c < features.cols(); ++c) {
      const float f = static_cast<float>(features(r, c));
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      bytes[off++] = static_cast<unsigned char>(u & 0xFF);
      bytes[off++] = static_cast<unsigned char>((u >> 8) & 0xFF);
      bytes[off++] = static_cast<unsigned char>((u >> 16) & 0xFF);
      bytes[off++] = static_cast<unsigned char>((u >> 24) & 0xFF);
    }
  }
  return base64_encode(bytes.data(), bytes.size());
}

Mat decode_features(const std::string& b64, Index rows, Index cols) {
  const std::vector<unsigned char> bytes = base64_decode(b64);
  if (bytes.size() != static_cast<std::size_t>(rows * cols) * 4)
    throw SchemaError("voxel features: payload size disagrees with declared shape");
  Mat out(rows, cols);
  std::size_t off = 0;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      std::uint32_t u = static_cast<std::uint32_t>(bytes[off]) |
                        (static_cast<std::uint32_t>(bytes[off + 1]) << 8) |
                        (static_cast<std::uint32_t>(bytes[off + 2]) << 16) |
                        (static_cast<std::uint32_t>(bytes[off + 3]) << 24);
      off += 4;
      float f;
      std::memcpy(&f, &u, 4);
      out(r, c) = static_cast<double>(f);
    }
  }
  return out;
}

json agent_to_json(const AgentTrack& a) {
  json j;
  j["agent_id"] = a.agent_id;
  j["agent_type"] = to_string(a.agent_type);
  json states = json::array();
  for (const auto& s : a.states)
    states.push_back({s.x, s.y, s.vx, s.vy, s.heading, s.length, s.width, s.height});
  j["states"] = std::move(states);
  json valid = json::array();
  for (auto v : a.valid) valid.push_back(static_cast<bool>(v));
  j["valid"] = std::move(valid);
  if (!a.future.empty()) {
    json fut = json::array();
    for (const auto& f : a.future) fut.push_back({f.x, f.y, f.vx, f.vy});
    j["future"] = std::move(fut);
  }
  return j;
}

AgentTrack agent_from_json(const json& j) {
  AgentTrack a;
  a.agent_id = j.at("agent_id").get<int>();
  a.agent_type = agent_type_from_string(j.at("agent_type").get<std::string>());
  for (const auto& row : j.at("states")) {
    if (row.size() != 8) throw SchemaError("agent state must have 8 entries");
    AgentState s;
    s.x = row[0];
    s.y = row[1];
    s.vx = row[2];
    s.vy = row[3];
    s.heading = row[4];
    s.length = row[5];
    s.width = row[6];
    s.height = row[7];
    a.states.push_back(s);
  }
  for (const auto& v : j.at("valid")) a.valid.push_back(v.get<bool>() ? 1 : 0);
  if (j.contains("future")) {
    for (const auto& row : j.at("future")) {
      if (row.size() != 4) throw SchemaError("future state must have 4 entries");
      a.future.push_back(FutureState{row[0], row[1], row[2], row[3]});
    }
  }
  return a;
}

json map_to_json(const MapElement& e) {
  json j;
  j["element_id"] = e.element_id;
  j["kind"] = to_string(e.kind);
  json pts = json::array();
  for (Index i = 0; i < e.points.rows(); ++i) pts.push_back({e.points(i, 0), e.points(i, 1)});
  j["points"] = std::move(pts);
  json curv = json::array();
  for (Index i = 0; i < e.curvature.size(); ++i) curv.push_back(e.curvature(i));
  j["curvature"] = std::move(curv);
  if (e.speed_limit) j["speed_limit"] = *e.speed_limit;
  return j;
}

MapElement map_from_json(const json& j) {
  MapElement e;
  e.element_id = j.at("element_id").get<int>();
  e.kind = map_kind_from_string(j.at("kind").get<std::string>());
  const auto& pts = j.at("points");
  e.points.resize(static_cast<Index>(pts.size()), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].size() != 2) throw SchemaError("map point must have 2 entries");
    e.points(static_cast<Index>(i), 0) = pts[i][0];
    e.points(static_cast<Index>(i), 1) = pts[i][1];
  }
  const auto& curv = j.at("curvature");
  e.curvature.resize(static_cast<Index>(curv.size()));
  for (std::size_t i = 0; i < curv.size(); ++i) e.curvature(static_cast<Index>(i)) = curv[i];
  if (j.contains("speed_limit")) e.speed_limit = j.at("speed_limit").get<double>();
  return e;
}

json voxels_to_json(const VoxelGrid& g) {
  json j;
  j["origin"] = {g.origin.x(), g.origin.y()};
  j["cell_size"] = g.cell_size;
  j["depth"] = g.depth;
  j["height"] = g.height;
  j["width"] = g.width;
  j["features"] = {{"shape", {VoxelGrid::kFeatureDim, g.depth, g.height, g.width}},
                   {"b64", encode_features(g.features)}};
  return j;
}

VoxelGrid voxels_from_json(const json& j) {
  VoxelGrid g;
  g.origin = Vec2(j.at("origin")[0], j.at("origin")[1]);
  g.cell_size = j.at("cell_size").get<double>();
  g.depth = j.at("depth").get<Index>();
  g.height = j.at("height").get<Index>();
  g.width = j.at("width").get<Index>();
  const auto& f = j.at("features");
  const auto& shape = f.at("shape");
  if (shape.size() != 4 || shape[0].get<Index>() != VoxelGrid::kFeatureDim ||
      shape[1].get<Index>() != g.depth || shape[2].get<Index>() != g.height ||
      shape[3].get<Index>() != g.width)
    throw SchemaError("voxel features: declared shape disagrees with grid dimensions");
  g.features = decode_features(f.at("b64").get<std::string>(), VoxelGrid::kFeatureDim, g.cell_count());
  return g;
}

}  // namespace

std::string scenario_to_json_line(const Scenario& s) {
  json j;
  j["schema_version"] = 1;
  j["scenario_id"] = s.scenario_id;
  j["timestamp_step"] = s.timestamp_step;
  json agents = json::array();
  for (const auto& a : s.agents) agents.push_back(agent_to_json(a));
  j["agents"] = std::move(agents);
  json map = json::array();
  for (const auto& e : s.map) map.push_back(map_to_json(e));
  j["map"] = std::move(map);
  j["voxels"] = voxels_to_json(s.voxels);
  j["targets"] = s.targets;
  return j.dump();
}

Scenario scenario_from_json_line(const std::string& line, int line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError("scenario parse error at line " + std::to_string(line_number) + ", byte " +
                     std::to_string(e.byte) + ": " + e.what());
  }
  try {
    if (!j.contains("schema_version"))
      throw SchemaError("missing schema_version");
    const int sv = j.at("schema_version").get<int>();
    if (sv != 1) throw SchemaError("unsupported schema_version " + std::to_string(sv));
    Scenario s;
    s.scenario_id = j.at("scenario_id").get<std::string>();
    s.timestamp_step = j.at("timestamp_step").get<double>();
    for (const auto& a : j.at("agents")) s.agents.push_back(agent_from_json(a));
    for (const auto& e : j.at("map")) s.map.push_back(map_from_json(e));
    s.voxels = voxels_from_json(j.at("voxels"));
    for (const auto& t : j.at("targets")) s.targets.push_back(t.get<int>());
    validate_scenario(s);
    return s;
  } catch (const json::exception& e) {
    throw SchemaError("scenario at line " + std::to_string(line_number) + ": " + e.what());
  }
}

void save_scenarios(const std::string& path, const std::vector<Scenario>& scenarios) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const auto& s : scenarios) out << scenario_to_json_line(s) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

std::vector<Scenario> load_scenarios(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::vector<Scenario> out;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    out.push_back(scenario_from_json_line(line, line_number));
  }
  return out;
}

ScenarioReader::ScenarioReader(const std::string& path) : path_(path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string line;
  std::streamoff pos = 0;
  while (true) {
    const std::streamoff start = pos;
    if (!std::getline(in, line)) break;
    pos = in.tellg() == std::streampos(-1) ? start + static_cast<std::streamoff>(line.size()) + 1
                                           : static_cast<std::streamoff>(in.tellg());
    if (!line.empty()) offsets_.push_back(start);
  }
}

Scenario ScenarioReader::load(std::size_t i) const {
  if (i >= offsets_.size()) throw ContractError("ScenarioReader: index out of range");
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path_);
  in.seekg(offsets_[i]);
  std::string line;
  if (!std::getline(in, line)) throw IoError("read failed: " + path_);
  return scenario_from_json_line(line, static_cast<int>(i) + 1);
}

}  // namespace mgtr
