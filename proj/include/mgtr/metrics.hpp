#pragma once

#include <string>
#include <vector>

#include "mgtr/decoder.hpp"
#include "mgtr/scene.hpp"
#include "mgtr/types.hpp"

namespace mgtr {

struct MetricsConfig {
  std::vector<double> horizons_s = {3.0, 5.0, 8.0};
  // scalar endpoint thresholds per horizon, a documented simplification of
  // the velocity-scaled benchmark criterion
  std::vector<double> miss_thresholds = {2.0, 3.6, 6.0};
  double dt = 0.1;

  Index horizon_step(std::size_t h) const;  // 1-based step index at horizon h
};

// One evaluated target: post-NMS modes plus ground truth in the same frame.
struct PredictionRecord {
  AgentType type = AgentType::Vehicle;
  GmmModeSet modes;
  Mat gt_xy;                              // T x 2
  std::vector<std::uint8_t> gt_valid;     // T
};

// Minimum over modes of the mean position error over steps 1..horizon_step.
double min_ade(const GmmModeSet& modes, const Mat& gt_xy, Index horizon_step);
// Minimum over modes of the endpoint error at horizon_step.
double min_fde(const GmmModeSet& modes, const Mat& gt_xy, Index horizon_step);
// Fraction of records whose every mode misses the endpoint threshold.
double miss_rate(const std::vector<PredictionRecord>& records, Index horizon_step,
                 double threshold);
// Detection-style AP: modes pooled across records, ranked by probability,
// one match per target, precision-envelope integration over recall.
double average_precision(const std::vector<PredictionRecord>& records, Index horizon_step,
                         double threshold);

struct MetricCell {
  double minADE = 0, minFDE = 0, MR = 0, mAP = 0;
  int count = 0;  // records aggregated
};

struct EvalReport {
  // cells[type][horizon]; aggregates are arithmetic means of present cells
  MetricCell cells[kNumAgentTypes][3];
  MetricCell per_type[kNumAgentTypes];  // averaged over horizons
  MetricCell per_horizon[3];            // averaged over types
  MetricCell overall;
  MetricsConfig config;

  std::string to_json() const;
  std::string to_table() const;
};

// Records with no valid ground truth through a horizon are excluded from that
// horizon's aggregation. Empty input raises ContractError.
EvalReport evaluate_predictions(const std::vector<PredictionRecord>& records,
                                const MetricsConfig& cfg);

}  // namespace mgtr
