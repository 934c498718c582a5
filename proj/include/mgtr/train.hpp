#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "mgtr/checkpoint.hpp"
#include "mgtr/config.hpp"
#include "mgtr/decoder.hpp"
#include "mgtr/loss.hpp"
#include "mgtr/metrics.hpp"
#include "mgtr/model.hpp"
#include "mgtr/scene.hpp"

namespace mgtr {

// (scenario index, target agent id) pairs in deterministic order
std::vector<std::pair<std::size_t, int>> enumerate_samples(const std::vector<Scenario>& data);

SampleForward run_sample(const MgtrModel& model, const Scenario& s, int target_id,
                         const IntentionGoalSet& goals);

// Loss on the first `max_samples` samples with parameters rounded through
// float32 (checkpoint precision); parameter values are restored afterwards.
LossBreakdown probe_loss_f32(MgtrModel& model, const std::vector<Scenario>& data,
                             const IntentionGoalSet& goals, const LossWeights& weights,
                             std::size_t max_samples);

struct TrainSummary {
  int steps = 0;
  std::string last_checkpoint;
  LossBreakdown last_breakdown;
};

// Deterministic given (config, data, goals): per-epoch shuffling derives from
// the run seed, updates are strictly sequential.
TrainSummary train_model(MgtrModel& model, const RunConfig& cfg,
                         const std::vector<Scenario>& train_data, const IntentionGoalSet& goals,
                         const std::string& out_dir, std::ostream* metrics_jsonl);

// Inference for one target: forward, final-layer modes, NMS.
PredictionRecord predict_target(const MgtrModel& model, const Scenario& s, int target_id,
                                const IntentionGoalSet& goals, const NmsConfig& nms);

// Evaluation over a scenario source (streaming-friendly).
EvalReport evaluate_model(const MgtrModel& model, const std::function<Scenario(std::size_t)>& get,
                          std::size_t count, const IntentionGoalSet& goals, const NmsConfig& nms,
                          const MetricsConfig& mcfg);

// Endpoints of target agents' ground-truth futures (target frame), keyed by type.
std::array<std::vector<Vec2>, kNumAgentTypes> collect_goal_endpoints(
    const std::function<Scenario(std::size_t)>& get, std::size_t count);

}  // namespace mgtr
