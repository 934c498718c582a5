#include "mgtr/train.hpp"

#include <algorithm>
#include <filesystem>
#include <random>

#include "mgtr/errors.hpp"
#include "mgtr/log.hpp"

namespace mgtr {

std::vector<std::pair<std::size_t, int>> enumerate_samples(const std::vector<Scenario>& data) {
  std::vector<std::pair<std::size_t, int>> samples;
  for (std::size_t i = 0; i < data.size(); ++i)
    for (int t : data[i].targets) samples.push_back({i, t});
  return samples;
}

SampleForward run_sample(const MgtrModel& model, const Scenario& s, int target_id,
                         const IntentionGoalSet& goals) {
  MgtrModel::Forward fwd = model.forward(s, target_id, goals);
  SampleForward out;
  out.logits = std::move(fwd.logits);
  out.raw = std::move(fwd.raw);
  out.modes = std::move(fwd.modes);
  out.aux_traj = fwd.aux_traj;
  out.gt = build_sample_gt(s, fwd.pose, fwd.aux_agent_ids, target_id,
                           model.config().future_steps);
  out.goals = goals.goals[static_cast<std::size_t>(s.find_agent(target_id)->agent_type)];
  return out;
}

LossBreakdown probe_loss_f32(MgtrModel& model, const std::vector<Scenario>& data,
                             const IntentionGoalSet& goals, const LossWeights& weights,
                             std::size_t max_samples) {
  // snapshot, round to checkpoint precision, evaluate, restore
  std::vector<Mat> saved;
  for (const auto& p : model.params().all()) saved.push_back(p.var.value());
  round_params_to_f32(model.params());

  LossBreakdown out;
  {
    ad::NoGradGuard guard;
    const auto samples = enumerate_samples(data);
    const std::size_t n = std::min(max_samples, samples.size());
    if (n == 0) throw ContractError("probe_loss: no samples");
    std::vector<SampleForward> batch;
    for (std::size_t i = 0; i < n; ++i)
      batch.push_back(run_sample(model, data[samples[i].first], samples[i].second, goals));
    out = total_loss(batch, weights).breakdown;
  }

  auto& ps = model.params().all();
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i].var.value_mut() = saved[i];
  return out;
}

TrainSummary train_model(MgtrModel& model, const RunConfig& cfg,
                         const std::vector<Scenario>& train_data, const IntentionGoalSet& goals,
                         const std::string& out_dir, std::ostream* metrics_jsonl) {
  cfg.validate();
  if (train_data.empty()) throw ContractError("train: no scenarios");
  std::filesystem::create_directories(out_dir);

  AdamWConfig ocfg;
  ocfg.lr = cfg.optimizer.lr;
  ocfg.weight_decay = cfg.optimizer.weight_decay;
  ocfg.beta1 = cfg.optimizer.beta1;
  ocfg.beta2 = cfg.optimizer.beta2;
  ocfg.clip_norm = cfg.optimizer.clip_norm;
  AdamW opt(model.params(), ocfg);

  const auto base_samples = enumerate_samples(train_data);
  if (base_samples.empty()) throw ContractError("train: scenarios contain no targets");

  TrainSummary summary;
  int step = 0;
  for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    const double lr = cfg.optimizer.lr * cfg.optimizer.schedule.factor(epoch);
    opt.set_lr(lr);

    auto order = base_samples;
    std::mt19937_64 shuffle_rng(cfg.seed * 1000003ull + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.train.batch_size)) {
      const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(cfg.train.batch_size));
      std::vector<SampleForward> batch;
      for (std::size_t i = at; i < end; ++i)
        batch.push_back(run_sample(model, train_data[order[i].first], order[i].second, goals));
      const TotalLossResult loss = total_loss(batch, cfg.loss);
      model.params().zero_grad();
      ad::backprop(loss.total);
      opt.step();
      ++step;
      summary.last_breakdown = loss.breakdown;
      if (metrics_jsonl) {
        nlohmann::json line = {{"step", step},       {"epoch", epoch},
                               {"total", loss.breakdown.total}, {"aux", loss.breakdown.aux},
                               {"cls", loss.breakdown.cls},     {"gmm", loss.breakdown.gmm},
                               {"lr", lr}};
        (*metrics_jsonl) << line.dump() << "\n";
      }
    }

    if (epoch % cfg.train.checkpoint_every == 0 || epoch == cfg.train.epochs) {
      const LossBreakdown probe =
          probe_loss_f32(model, train_data, goals, cfg.loss,
                         static_cast<std::size_t>(cfg.train.batch_size));
      CheckpointInfo info;
      info.epoch = epoch;
      info.config_hash = cfg.config_hash();
      info.metrics = {{"probe_total", probe.total},
                      {"probe_aux", probe.aux},
                      {"probe_cls", probe.cls},
                      {"probe_gmm", probe.gmm}};
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_epoch_%03d.mgtr", epoch);
      const std::string path = (std::filesystem::path(out_dir) / name).string();
      save_checkpoint(path, model.params(), info);
      summary.last_checkpoint = path;
      log::info("saved " + path + " (probe total " + std::to_string(probe.total) + ")");
    }
  }
  summary.steps = step;
  return summary;
}

PredictionRecord predict_target(const MgtrModel& model, const Scenario& s, int target_id,
                                const IntentionGoalSet& goals, const NmsConfig& nms) {
  ad::NoGradGuard guard;
  MgtrModel::Forward fwd = model.forward(s, target_id, goals);
  const GmmModeSet pruned = nms_select(fwd.modes.back(), nms.keep, nms.radius);

  PredictionRecord rec;
  const AgentTrack* target = s.find_agent(target_id);
  rec.type = target->agent_type;
  rec.modes = pruned;
  const Index T = model.config().future_steps;
  rec.gt_xy = Mat::Zero(T, 2);
  rec.gt_valid.assign(static_cast<std::size_t>(T), 0);
  const Index have = std::min<Index>(T, static_cast<Index>(target->future.size()));
  for (Index t = 0; t < have; ++t) {
    const FutureState& f = target->future[static_cast<std::size_t>(t)];
    const Vec2 p = to_agent_frame_point(Vec2(f.x, f.y), fwd.pose);
    rec.gt_xy(t, 0) = p.x();
    rec.gt_xy(t, 1) = p.y();
    rec.gt_valid[static_cast<std::size_t>(t)] = 1;
  }
  return rec;
}

EvalReport evaluate_model(const MgtrModel& model, const std::function<Scenario(std::size_t)>& get,
                          std::size_t count, const IntentionGoalSet& goals, const NmsConfig& nms,
                          const MetricsConfig& mcfg) {
  std::vector<PredictionRecord> records;
  for (std::size_t i = 0; i < count; ++i) {
    const Scenario s = get(i);
    for (int target : s.targets) records.push_back(predict_target(model, s, target, goals, nms));
  }
  return evaluate_predictions(records, mcfg);
}

std::array<std::vector<Vec2>, kNumAgentTypes> collect_goal_endpoints(
    const std::function<Scenario(std::size_t)>& get, std::size_t count) {
  std::array<std::vector<Vec2>, kNumAgentTypes> out;
  for (std::size_t i = 0; i < count; ++i) {
    const Scenario s = get(i);
    for (int target : s.targets) {
      const AgentTrack* tr = s.find_agent(target);
      if (!tr || tr->future.empty()) continue;
      const Pose2 pose = target_pose(*tr);
      const FutureState& last = tr->future.back();
      out[static_cast<std::size_t>(tr->agent_type)].push_back(
          to_agent_frame_point(Vec2(last.x, last.y), pose));
    }
  }
  return out;
}

}  // namespace mgtr
