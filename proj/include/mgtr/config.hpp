#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "mgtr/loss.hpp"
#include "mgtr/metrics.hpp"
#include "mgtr/model.hpp"
#include "mgtr/optim.hpp"
#include "mgtr/scene.hpp"

namespace mgtr {

struct ScheduleConfig {
  double decay = 0.5;
  int start_after_epochs = 20;
  int every_epochs = 2;
  double min_factor = 0.0;  // decay floor (0: none)

  // learning-rate factor at a 1-based epoch
  double factor(int epoch) const;
};

struct OptimizerRunConfig {
  double lr = 8e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double clip_norm = 50.0;
  ScheduleConfig schedule;
};

struct TrainRunConfig {
  int batch_size = 8;
  int epochs = 4;
  int checkpoint_every = 1;  // epochs
};

struct NmsConfig {
  Index keep = 6;
  double radius = 2.5;
};

struct PathsConfig {
  std::string train, val, goals;
  std::string out_dir = ".";
};

// The one configuration document: a single JSON object, dotted-path CLI
// overrides, unknown keys rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  PathsConfig paths;
  ModelConfig model;  // horizons mirrored from `data` when composed
  LossWeights loss;
  OptimizerRunConfig optimizer;
  TrainRunConfig train;
  NmsConfig nms;
  SceneGenConfig data;

  static RunConfig desk_profile();
  static RunConfig paper_profile();
  static RunConfig profile_by_name(const std::string& name);

  static RunConfig from_json(const nlohmann::json& j, RunConfig base);
  nlohmann::json to_json() const;

  // `--model.knn_k 16` style override; value parsed as JSON, else string
  void apply_override(const std::string& dotted_key, const std::string& value);

  std::string config_hash() const;  // FNV-1a 64 hex of the canonical dump
  MetricsConfig metrics_config() const;
  void validate() const;
};

RunConfig load_config_file(const std::string& path, RunConfig base);

}  // namespace mgtr
