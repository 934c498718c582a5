#pragma once

#include <vector>

#include "mgtr/autodiff.hpp"
#include "mgtr/decoder.hpp"
#include "mgtr/scene.hpp"
#include "mgtr/tokenizer.hpp"
#include "mgtr/types.hpp"

namespace mgtr {

// Positive-mode selection rule for the hard assignment.
//   Anchor:     intention goal nearest the ground-truth endpoint (stable from
//               step zero; the training default)
//   Trajectory: predicted mean trajectory nearest the ground truth
//   Endpoint:   predicted endpoint nearest the ground-truth endpoint
enum class AssignmentRule { Anchor = 0, Trajectory = 1, Endpoint = 2 };

const char* to_string(AssignmentRule r);
AssignmentRule assignment_from_string(const std::string& s);

struct LossWeights {
  double w_aux = 1.0;
  double w_cls = 1.0;
  double w_gmm = 1.0;
  AssignmentRule assignment = AssignmentRule::Anchor;

  void validate() const;  // at least one weight positive, none negative
};

struct LossBreakdown {
  double total = 0, aux = 0, cls = 0, gmm = 0;
  std::vector<std::vector<Index>> best_modes;  // [target][decoder layer]
};

// Mean absolute error over valid (agent, step, channel) entries of the
// auxiliary trajectories. gt is N x (T*4) in the target frame; step_valid is
// N x T. Zero valid entries raise ContractError.
ad::Var aux_loss(const ad::Var& aux_traj, const Mat& gt, const Mat& step_valid);

// Index of the mode whose mean trajectory is closest to ground truth:
// average Euclidean distance over valid steps (or endpoint distance only).
// Ties break toward the lower index.
Index hard_assign(const GmmModeSet& modes, const Mat& gt_xy,
                  const std::vector<std::uint8_t>& valid, bool endpoint_only = false);

// Index of the intention goal nearest the last valid ground-truth position.
Index anchor_assign(const MatX2& goal_endpoints, const Mat& gt_xy,
                    const std::vector<std::uint8_t>& valid);

// Negative log-likelihood of the best mode's bivariate Gaussians over valid
// steps, plus an L1 term on the velocity channels. raw is the decoder's
// K x (T*7) output; gt is T x 4 [x y vx vy].
ad::Var gmm_nll(const ad::Var& raw, Index best_mode, const Mat& gt,
                const std::vector<std::uint8_t>& valid);

// -log p[best], computed from logits (K x 1) in fused log-sum-exp form.
ad::Var cls_loss(const ad::Var& logits, Index best_mode);

// Ground truth for one sample, everything in the target frame.
struct SampleGroundTruth {
  Mat aux_gt;          // N x (T*4), rows aligned with the aux trajectory rows
  Mat aux_step_valid;  // N x T
  Mat target_gt;       // T x 4
  std::vector<std::uint8_t> target_valid;  // T
};

SampleGroundTruth build_sample_gt(const Scenario& s, const Pose2& pose,
                                  const std::vector<int>& agent_ids, int target_id, Index steps);

struct SampleForward {
  std::vector<ad::Var> logits;  // per decoder layer
  std::vector<ad::Var> raw;
  std::vector<GmmModeSet> modes;
  ad::Var aux_traj;
  SampleGroundTruth gt;
  MatX2 goals;  // K x 2 intention endpoints for the target's type
};

struct TotalLossResult {
  ad::Var total;
  LossBreakdown breakdown;
};

// gmm and cls averaged over decoder layers and targets; aux averaged over
// targets (each target's aux already averages over its scene agents).
TotalLossResult total_loss(const std::vector<SampleForward>& batch, const LossWeights& w);

}  // namespace mgtr
