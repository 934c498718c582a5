#include "mgtr/loss.hpp"

#include <cmath>
#include <limits>

#include "mgtr/errors.hpp"

namespace mgtr {

const char* to_string(AssignmentRule r) {
  switch (r) {
    case AssignmentRule::Anchor: return "anchor";
    case AssignmentRule::Trajectory: return "trajectory";
    case AssignmentRule::Endpoint: return "endpoint";
  }
  return "?";
}

AssignmentRule assignment_from_string(const std::string& s) {
  if (s == "anchor") return AssignmentRule::Anchor;
  if (s == "trajectory") return AssignmentRule::Trajectory;
  if (s == "endpoint") return AssignmentRule::Endpoint;
  throw ConfigError("unknown assignment rule '" + s + "'");
}

void LossWeights::validate() const {
  if (w_aux < 0 || w_cls < 0 || w_gmm < 0) throw ContractError("loss weights must be non-negative");
  if (w_aux == 0 && w_cls == 0 && w_gmm == 0)
    throw ContractError("at least one loss weight must be positive");
}

Index anchor_assign(const MatX2& goal_endpoints, const Mat& gt_xy,
                    const std::vector<std::uint8_t>& valid) {
  if (goal_endpoints.rows() < 1) throw ContractError("anchor_assign: no goals");
  Index last = static_cast<Index>(valid.size()) - 1;
  while (last > 0 && !valid[static_cast<std::size_t>(last)]) --last;
  if (!valid[static_cast<std::size_t>(last)])
    throw ContractError("anchor_assign: no valid ground-truth step");
  const Vec2 end(gt_xy(last, 0), gt_xy(last, 1));
  Index best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < goal_endpoints.rows(); ++k) {
    const double d = (goal_endpoints.row(k).transpose() - end).norm();
    if (d < bd) {
      bd = d;
      best = k;
    }
  }
  return best;
}

ad::Var aux_loss(const ad::Var& aux_traj, const Mat& gt, const Mat& step_valid) {
  if (aux_traj.rows() != gt.rows() || aux_traj.cols() != gt.cols())
    throw DimensionError("aux_loss: prediction/gt shape mismatch");
  const Index n = gt.rows();
  const Index steps = step_valid.cols();
  if (step_valid.rows() != n || steps * 4 != gt.cols())
    throw DimensionError("aux_loss: validity mask shape mismatch");

  Mat mask(n, steps * 4);
  double count = 0;
  for (Index a = 0; a < n; ++a)
    for (Index t = 0; t < steps; ++t) {
      const double v = step_valid(a, t) != 0 ? 1.0 : 0.0;
      for (Index c = 0; c < 4; ++c) mask(a, t * 4 + c) = v;
      count += 4 * v;
    }
  if (count == 0) throw ContractError("aux_loss: no valid entries");
  ad::Var diff = ad::abs_of(ad::sub(aux_traj, ad::Var(gt)));
  return ad::scale(ad::sum_all(ad::mul_const(diff, mask)), 1.0 / count);
}

Index hard_assign(const GmmModeSet& modes, const Mat& gt_xy,
                  const std::vector<std::uint8_t>& valid, bool endpoint_only) {
  if (modes.modes() < 1) throw ContractError("hard_assign: no modes");
  if (gt_xy.rows() != modes.steps || static_cast<Index>(valid.size()) != modes.steps)
    throw DimensionError("hard_assign: gt length mismatch");
  Index best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (Index m = 0; m < modes.modes(); ++m) {
    double score = 0;
    int n = 0;
    if (endpoint_only) {
      Index last = modes.steps - 1;
      while (last > 0 && !valid[static_cast<std::size_t>(last)]) --last;
      if (!valid[static_cast<std::size_t>(last)]) continue;
      score = (modes.mean(m, last) - Vec2(gt_xy(last, 0), gt_xy(last, 1))).norm();
      n = 1;
    } else {
      for (Index t = 0; t < modes.steps; ++t) {
        if (!valid[static_cast<std::size_t>(t)]) continue;
        score += (modes.mean(m, t) - Vec2(gt_xy(t, 0), gt_xy(t, 1))).norm();
        ++n;
      }
    }
    if (n == 0) throw ContractError("hard_assign: no valid ground-truth steps");
    score /= n;
    if (score < best_score) {
      best_score = score;
      best = m;
    }
  }
  return best;
}

ad::Var gmm_nll(const ad::Var& raw, Index best_mode, const Mat& gt,
                const std::vector<std::uint8_t>& valid) {
  const Index T = static_cast<Index>(valid.size());
  if (raw.cols() != T * kGmmChannels) throw DimensionError("gmm_nll: raw width must be T*7");
  if (gt.rows() != T || gt.cols() != 4) throw DimensionError("gmm_nll: gt must be T x 4");
  if (best_mode < 0 || best_mode >= raw.rows()) throw ContractError("gmm_nll: bad mode index");

  ad::Var mode = ad::reshape(ad::slice_rows(raw, best_mode, 1), T, kGmmChannels);
  ad::Var mu_x = ad::slice_cols(mode, 0, 1);
  ad::Var mu_y = ad::slice_cols(mode, 1, 1);
  ad::Var log_sx = ad::slice_cols(mode, 2, 1);
  ad::Var log_sy = ad::slice_cols(mode, 3, 1);
  ad::Var rho = ad::tanh_of(ad::slice_cols(mode, 4, 1));
  ad::Var vel = ad::slice_cols(mode, 5, 2);

  Mat gx = gt.col(0), gy = gt.col(1);
  ad::Var dx = ad::sub(ad::Var(gx), mu_x);
  ad::Var dy = ad::sub(ad::Var(gy), mu_y);

  ad::Var one(Mat::Ones(T, 1));
  ad::Var one_m_rho2 = ad::sub(one, ad::mul(rho, rho));
  ad::Var inv_sx2 = ad::exp_of(ad::scale(log_sx, -2.0));
  ad::Var inv_sy2 = ad::exp_of(ad::scale(log_sy, -2.0));
  ad::Var inv_sxsy = ad::exp_of(ad::scale(ad::add(log_sx, log_sy), -1.0));

  ad::Var z = ad::sub(ad::add(ad::mul(ad::mul(dx, dx), inv_sx2), ad::mul(ad::mul(dy, dy), inv_sy2)),
                      ad::scale(ad::mul(ad::mul(rho, ad::mul(dx, dy)), inv_sxsy), 2.0));
  ad::Var nll_t = ad::add(
      ad::add(ad::add(log_sx, log_sy), ad::scale(ad::log_of(one_m_rho2), 0.5)),
      ad::add(ad::Var(Mat::Constant(T, 1, std::log(2.0 * kPi))),
              ad::div(z, ad::scale(one_m_rho2, 2.0))));

  Mat step_mask(T, 1);
  double nv = 0;
  for (Index t = 0; t < T; ++t) {
    step_mask(t, 0) = valid[static_cast<std::size_t>(t)] ? 1.0 : 0.0;
    nv += step_mask(t, 0);
  }
  if (nv == 0) throw ContractError("gmm_nll: no valid steps");
  ad::Var nll = ad::scale(ad::sum_all(ad::mul_const(nll_t, step_mask)), 1.0 / nv);

  // velocities are point-regressed: L1 over valid steps and both channels
  Mat gv = gt.rightCols(2);
  Mat vel_mask(T, 2);
  vel_mask.col(0) = step_mask;
  vel_mask.col(1) = step_mask;
  ad::Var vel_l1 = ad::scale(
      ad::sum_all(ad::mul_const(ad::abs_of(ad::sub(vel, ad::Var(gv))), vel_mask)), 1.0 / (2.0 * nv));

  return ad::add(nll, vel_l1);
}

ad::Var cls_loss(const ad::Var& logits, Index best_mode) {
  if (logits.cols() != 1) throw DimensionError("cls_loss: logits must be K x 1");
  if (best_mode < 0 || best_mode >= logits.rows()) throw ContractError("cls_loss: bad mode index");
  ad::Var lse = ad::logsumexp_rows(ad::transpose(logits));  // 1 x 1
  return ad::sub(lse, ad::slice_rows(logits, best_mode, 1));
}

SampleGroundTruth build_sample_gt(const Scenario& s, const Pose2& pose,
                                  const std::vector<int>& agent_ids, int target_id, Index steps) {
  SampleGroundTruth out;
  const Index n = static_cast<Index>(agent_ids.size());
  out.aux_gt = Mat::Zero(n, steps * 4);
  out.aux_step_valid = Mat::Zero(n, steps);
  for (Index a = 0; a < n; ++a) {
    const AgentTrack* tr = s.find_agent(agent_ids[static_cast<std::size_t>(a)]);
    if (!tr) throw ContractError("build_sample_gt: unknown agent id");
    const Index have = std::min<Index>(steps, static_cast<Index>(tr->future.size()));
    for (Index t = 0; t < have; ++t) {
      const FutureState& f = tr->future[static_cast<std::size_t>(t)];
      const Vec2 p = to_agent_frame_point(Vec2(f.x, f.y), pose);
      const Vec2 v = to_agent_frame_vector(Vec2(f.vx, f.vy), pose);
      out.aux_gt(a, t * 4 + 0) = p.x();
      out.aux_gt(a, t * 4 + 1) = p.y();
      out.aux_gt(a, t * 4 + 2) = v.x();
      out.aux_gt(a, t * 4 + 3) = v.y();
      out.aux_step_valid(a, t) = 1.0;
    }
    if (tr->agent_id == target_id) {
      if (have == 0) throw ContractError("build_sample_gt: target has no future");
      out.target_gt = Mat::Zero(steps, 4);
      out.target_valid.assign(static_cast<std::size_t>(steps), 0);
      for (Index t = 0; t < have; ++t) {
        out.target_gt.row(t) = out.aux_gt.row(a).segment(t * 4, 4);
        out.target_valid[static_cast<std::size_t>(t)] = 1;
      }
    }
  }
  if (out.target_gt.rows() == 0) throw ContractError("build_sample_gt: target not among agents");
  return out;
}

TotalLossResult total_loss(const std::vector<SampleForward>& batch, const LossWeights& w) {
  w.validate();
  if (batch.empty()) throw ContractError("total_loss: empty batch");

  TotalLossResult out;
  std::vector<ad::Var> aux_terms, cls_terms, gmm_terms;
  for (const auto& sample : batch) {
    aux_terms.push_back(aux_loss(sample.aux_traj, sample.gt.aux_gt, sample.gt.aux_step_valid));
    Mat gt_xy(sample.gt.target_gt.rows(), 2);
    gt_xy.col(0) = sample.gt.target_gt.col(0);
    gt_xy.col(1) = sample.gt.target_gt.col(1);
    std::vector<Index> best_per_layer;
    for (std::size_t layer = 0; layer < sample.raw.size(); ++layer) {
      Index best = 0;
      switch (w.assignment) {
        case AssignmentRule::Anchor:
          if (sample.goals.rows() == 0)
            throw ContractError("total_loss: anchor assignment needs goal endpoints");
          best = anchor_assign(sample.goals, gt_xy, sample.gt.target_valid);
          break;
        case AssignmentRule::Trajectory:
          best = hard_assign(sample.modes[layer], gt_xy, sample.gt.target_valid, false);
          break;
        case AssignmentRule::Endpoint:
          best = hard_assign(sample.modes[layer], gt_xy, sample.gt.target_valid, true);
          break;
      }
      best_per_layer.push_back(best);
      cls_terms.push_back(cls_loss(sample.logits[layer], best));
      gmm_terms.push_back(gmm_nll(sample.raw[layer], best, sample.gt.target_gt, sample.gt.target_valid));
    }
    out.breakdown.best_modes.push_back(std::move(best_per_layer));
  }

  auto mean_of = [](const std::vector<ad::Var>& terms) {
    ad::Var sum = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) sum = ad::add(sum, terms[i]);
    return ad::scale(sum, 1.0 / static_cast<double>(terms.size()));
  };

  ad::Var aux = mean_of(aux_terms);
  ad::Var cls = mean_of(cls_terms);
  ad::Var gmm = mean_of(gmm_terms);
  out.total = ad::add(ad::add(ad::scale(aux, w.w_aux), ad::scale(cls, w.w_cls)),
                      ad::scale(gmm, w.w_gmm));
  out.breakdown.aux = aux.value()(0, 0);
  out.breakdown.cls = cls.value()(0, 0);
  out.breakdown.gmm = gmm.value()(0, 0);
  out.breakdown.total = out.total.value()(0, 0);
  return out;
}

}  // namespace mgtr
