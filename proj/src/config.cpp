#include "mgtr/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "mgtr/errors.hpp"

namespace mgtr {

using nlohmann::json;

double ScheduleConfig::factor(int epoch) const {
  if (every_epochs <= 0) return 1.0;
  const int decays = std::max(0, (epoch - start_after_epochs) / every_epochs);
  return std::max(min_factor, std::pow(decay, decays));
}

namespace {

void require_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::desk_profile() {
  RunConfig c;
  c.model.model_dim = 64;
  c.model.enc_layers = 2;
  c.model.dec_layers = 2;
  c.model.heads = 2;
  c.model.ffn_dim = 128;
  c.model.knn_k = 8;
  c.model.num_modes = 16;
  c.model.map_budget = 64;
  c.model.voxel_budget = 32;
  c.model.dec_traj_budget = 48;
  c.model.dec_motion_budget = 48;
  c.model.granularity.map_levels = {{20, 0.5}, {10, 0.5}};
  c.model.granularity.voxel_levels = {3.2, 1.6};
  c.data.voxel_cell = 1.6;
  c.data.voxel_hw = 40;
  c.data.num_scenarios = 128;
  c.optimizer.lr = 2e-3;
  c.optimizer.schedule.start_after_epochs = 8;
  c.optimizer.schedule.every_epochs = 4;
  c.optimizer.schedule.min_factor = 0.0625;
  c.train.batch_size = 8;
  c.train.epochs = 6;
  return c;
}

RunConfig RunConfig::paper_profile() {
  RunConfig c;
  c.model.model_dim = 256;
  c.model.enc_layers = 6;
  c.model.dec_layers = 6;
  c.model.heads = 8;
  c.model.ffn_dim = 1024;
  c.model.knn_k = 32;
  c.model.num_modes = 64;
  c.model.map_budget = 768;
  c.model.voxel_budget = 256;
  c.model.dec_traj_budget = 256;
  c.model.dec_motion_budget = 256;
  c.model.granularity.map_levels = {{20, 0.5}, {10, 0.5}};
  c.model.granularity.voxel_levels = {1.6, 0.8};
  c.data.voxel_cell = 0.8;
  c.data.voxel_hw = 96;
  c.data.num_scenarios = 1024;
  c.optimizer.lr = 1e-4;
  c.optimizer.weight_decay = 0.01;
  c.train.batch_size = 10;
  c.train.epochs = 30;
  return c;
}

RunConfig RunConfig::profile_by_name(const std::string& name) {
  if (name == "desk") return desk_profile();
  if (name == "paper") return paper_profile();
  throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
}

RunConfig RunConfig::from_json(const json& j, RunConfig c) {
  require_keys(j, {"seed", "paths", "model", "loss", "optimizer", "train", "nms", "data"}, "config");
  maybe(j, "seed", c.seed);
  if (j.contains("paths")) {
    const json& p = j.at("paths");
    require_keys(p, {"train", "val", "goals", "out_dir"}, "paths");
    maybe(p, "train", c.paths.train);
    maybe(p, "val", c.paths.val);
    maybe(p, "goals", c.paths.goals);
    maybe(p, "out_dir", c.paths.out_dir);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    require_keys(m,
                 {"model_dim", "enc_layers", "dec_layers", "heads", "ffn_dim", "knn_k", "num_modes",
                  "map_levels", "voxel_levels", "map_tokens", "voxel_tokens", "dec_traj_tokens",
                  "dec_motion_tokens", "tau", "motion_aware", "per_level_budget"},
                 "model");
    maybe(m, "model_dim", c.model.model_dim);
    maybe(m, "enc_layers", c.model.enc_layers);
    maybe(m, "dec_layers", c.model.dec_layers);
    maybe(m, "heads", c.model.heads);
    maybe(m, "ffn_dim", c.model.ffn_dim);
    maybe(m, "knn_k", c.model.knn_k);
    maybe(m, "num_modes", c.model.num_modes);
    maybe(m, "map_tokens", c.model.map_budget);
    maybe(m, "voxel_tokens", c.model.voxel_budget);
    maybe(m, "dec_traj_tokens", c.model.dec_traj_budget);
    maybe(m, "dec_motion_tokens", c.model.dec_motion_budget);
    maybe(m, "tau", c.model.tau);
    maybe(m, "motion_aware", c.model.motion_aware);
    maybe(m, "per_level_budget", c.model.per_level_budget);
    if (m.contains("map_levels")) {
      c.model.granularity.map_levels.clear();
      for (const auto& lv : m.at("map_levels")) {
        require_keys(lv, {"points", "spacing"}, "model.map_levels[]");
        GranularityLevel g;
        g.points_per_polyline = lv.at("points").get<Index>();
        g.point_spacing = lv.at("spacing").get<double>();
        c.model.granularity.map_levels.push_back(g);
      }
    }
    if (m.contains("voxel_levels"))
      c.model.granularity.voxel_levels = m.at("voxel_levels").get<std::vector<double>>();
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    require_keys(l, {"w_aux", "w_cls", "w_gmm", "assignment"}, "loss");
    maybe(l, "w_aux", c.loss.w_aux);
    maybe(l, "w_cls", c.loss.w_cls);
    maybe(l, "w_gmm", c.loss.w_gmm);
    if (l.contains("assignment"))
      c.loss.assignment = assignment_from_string(l.at("assignment").get<std::string>());
  }
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    require_keys(o, {"lr", "weight_decay", "beta1", "beta2", "clip_norm", "schedule"}, "optimizer");
    maybe(o, "lr", c.optimizer.lr);
    maybe(o, "weight_decay", c.optimizer.weight_decay);
    maybe(o, "beta1", c.optimizer.beta1);
    maybe(o, "beta2", c.optimizer.beta2);
    maybe(o, "clip_norm", c.optimizer.clip_norm);
    if (o.contains("schedule")) {
      const json& s = o.at("schedule");
      require_keys(s, {"decay", "start_after_epochs", "every_epochs", "min_factor"},
                   "optimizer.schedule");
      maybe(s, "decay", c.optimizer.schedule.decay);
      maybe(s, "start_after_epochs", c.optimizer.schedule.start_after_epochs);
      maybe(s, "every_epochs", c.optimizer.schedule.every_epochs);
      maybe(s, "min_factor", c.optimizer.schedule.min_factor);
    }
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    require_keys(t, {"batch_size", "epochs", "checkpoint_every"}, "train");
    maybe(t, "batch_size", c.train.batch_size);
    maybe(t, "epochs", c.train.epochs);
    maybe(t, "checkpoint_every", c.train.checkpoint_every);
  }
  if (j.contains("nms")) {
    const json& n = j.at("nms");
    require_keys(n, {"keep", "radius"}, "nms");
    maybe(n, "keep", c.nms.keep);
    maybe(n, "radius", c.nms.radius);
  }
  if (j.contains("data")) {
    const json& d = j.at("data");
    require_keys(d,
                 {"num_scenarios", "history_steps", "future_steps", "dt", "voxel_cell", "voxel_hw",
                  "voxel_depth", "road_half_length", "lane_half_width"},
                 "data");
    maybe(d, "num_scenarios", c.data.num_scenarios);
    maybe(d, "history_steps", c.data.history_steps);
    maybe(d, "future_steps", c.data.future_steps);
    maybe(d, "dt", c.data.dt);
    maybe(d, "voxel_cell", c.data.voxel_cell);
    maybe(d, "voxel_hw", c.data.voxel_hw);
    maybe(d, "voxel_depth", c.data.voxel_depth);
    maybe(d, "road_half_length", c.data.road_half_length);
    maybe(d, "lane_half_width", c.data.lane_half_width);
  }
  // the model's horizons mirror the data settings
  c.model.history_steps = c.data.history_steps;
  c.model.future_steps = c.data.future_steps;
  return c;
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["paths"] = {{"train", paths.train},
                {"val", paths.val},
                {"goals", paths.goals},
                {"out_dir", paths.out_dir}};
  json levels = json::array();
  for (const auto& lv : model.granularity.map_levels)
    levels.push_back({{"points", lv.points_per_polyline}, {"spacing", lv.point_spacing}});
  j["model"] = {{"model_dim", model.model_dim},
                {"enc_layers", model.enc_layers},
                {"dec_layers", model.dec_layers},
                {"heads", model.heads},
                {"ffn_dim", model.ffn_dim},
                {"knn_k", model.knn_k},
                {"num_modes", model.num_modes},
                {"map_levels", levels},
                {"voxel_levels", model.granularity.voxel_levels},
                {"map_tokens", model.map_budget},
                {"voxel_tokens", model.voxel_budget},
                {"dec_traj_tokens", model.dec_traj_budget},
                {"dec_motion_tokens", model.dec_motion_budget},
                {"tau", model.tau},
                {"motion_aware", model.motion_aware},
                {"per_level_budget", model.per_level_budget}};
  j["loss"] = {{"w_aux", loss.w_aux},
               {"w_cls", loss.w_cls},
               {"w_gmm", loss.w_gmm},
               {"assignment", to_string(loss.assignment)}};
  j["optimizer"] = {{"lr", optimizer.lr},
                    {"weight_decay", optimizer.weight_decay},
                    {"beta1", optimizer.beta1},
                    {"beta2", optimizer.beta2},
                    {"clip_norm", optimizer.clip_norm},
                    {"schedule",
                     {{"decay", optimizer.schedule.decay},
                      {"start_after_epochs", optimizer.schedule.start_after_epochs},
                      {"every_epochs", optimizer.schedule.every_epochs},
                      {"min_factor", optimizer.schedule.min_factor}}}};
  j["train"] = {{"batch_size", train.batch_size},
                {"epochs", train.epochs},
                {"checkpoint_every", train.checkpoint_every}};
  j["nms"] = {{"keep", nms.keep}, {"radius", nms.radius}};
  j["data"] = {{"num_scenarios", data.num_scenarios},
               {"history_steps", data.history_steps},
               {"future_steps", data.future_steps},
               {"dt", data.dt},
               {"voxel_cell", data.voxel_cell},
               {"voxel_hw", data.voxel_hw},
               {"voxel_depth", data.voxel_depth},
               {"road_half_length", data.road_half_length},
               {"lane_half_width", data.lane_half_width}};
  return j;
}

void RunConfig::apply_override(const std::string& dotted_key, const std::string& value) {
  json doc = to_json();
  json* cursor = &doc;
  std::string rest = dotted_key;
  while (true) {
    const auto dot = rest.find('.');
    const std::string head = rest.substr(0, dot);
    if (!cursor->is_object() || !cursor->contains(head))
      throw ConfigError("override: unknown key '" + dotted_key + "'");
    cursor = &cursor->at(head);
    if (dot == std::string::npos) break;
    rest = rest.substr(dot + 1);
  }
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;  // plain strings need no quotes on the command line
  }
  *cursor = parsed;
  *this = from_json(doc, RunConfig{});
}

std::string RunConfig::config_hash() const {
  nlohmann::json j = to_json();
  j.erase("paths");  // file locations do not change the trained artifact
  const std::string dump = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

MetricsConfig RunConfig::metrics_config() const {
  MetricsConfig m;
  m.dt = data.dt;
  return m;
}

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  data.validate();
  if (train.batch_size < 1 || train.epochs < 1 || train.checkpoint_every < 1)
    throw ConfigError("train: counts must be positive");
  if (optimizer.lr <= 0 || optimizer.beta1 <= 0 || optimizer.beta1 >= 1 || optimizer.beta2 <= 0 ||
      optimizer.beta2 >= 1 || optimizer.weight_decay < 0)
    throw ConfigError("optimizer: parameter out of range");
  if (nms.keep < 1 || nms.keep > model.num_modes) throw ConfigError("nms.keep must be in [1, K]");
  if (nms.radius <= 0) throw ConfigError("nms.radius must be positive");
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config file: ") + e.what());
  }
  return RunConfig::from_json(j, std::move(base));
}

}  // namespace mgtr
