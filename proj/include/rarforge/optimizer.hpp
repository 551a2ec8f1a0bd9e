#pragma once

#include <span>
#include <stdexcept>
#include <utility>

#include "rarforge/policy.hpp"
#include "rarforge/rollout.hpp"

namespace rarforge {

struct GroupStats {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation (divide by G)
};

struct GrpoConfig {
  int group_size = 5;
  double beta = 0.001;
  double epsilon = 0.2;
  // The paper-parity preset records 1e-6 (billion-parameter scale); the toy
  // softmax policy needs a step size matched to ~1e2 parameters.
  double learning_rate = 0.05;
  double warmup_ratio = 0.285;
  int total_steps = 200;
  int top_k = 3;
  double temperature = 1.0;
  bool use_baseline = true;

  void validate() const;
};

struct LossReport {
  double surrogate = 0.0;  // mean clipped-surrogate term (maximization sense)
  double kl = 0.0;         // mean k3 divergence to the reference policy
  double total = 0.0;      // -surrogate + beta * kl
  double grad_norm = 0.0;
  int masked_steps = 0;
  int unmasked_steps = 0;
};

class OptimizerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mean and population std over the group's personalized rewards.
GroupStats group_stats(std::span<const double> rewards);

// A_i = (r_i - baseline_reward - mean) / std. A zero-std group is degenerate:
// all advantages are 0 and the caller skips the update. Callers running the
// no-baseline ablation pass baseline_reward = 0.
AdvantageVector advantages(std::span<const double> rewards, double baseline_reward,
                           const GroupStats& stats);

// k3 estimator with rho = pi_ref / pi_theta: rho - ln(rho) - 1. Non-negative,
// zero iff the two log-probabilities agree.
double kl_step(double logp_theta, double logp_ref);

// Clipped surrogate with rho = exp(logp_theta - logp_old):
// min(rho * A, clip(rho, 1-eps, 1+eps) * A). epsilon may be +infinity.
double surrogate_step(double logp_theta, double logp_old, double advantage, double epsilon);

// Per trajectory: mean surrogate and mean k3 over unmasked steps. Across the
// group: plain mean. total = -surrogate + beta * kl. Masked steps contribute
// exactly zero to both loss and gradient. The gradient is with respect to
// `params` and has the same shape. Throws if a trajectory has no unmasked
// steps or advantages were not computed.
std::pair<LossReport, PolicyParams> grpo_loss(const GroupRollout& group,
                                              const PolicyParams& params,
                                              const PolicySnapshot& reference,
                                              const GrpoConfig& config);

// Linear warmup over ceil(warmup_ratio * total_steps) steps — step s inside
// the ramp gets learning_rate * (s+1) / W — then constant.
double lr_at(int step, const GrpoConfig& config);

// theta <- theta - lr * gradient. Non-finite gradient entries abort the step.
void apply_update(PolicyParams& params, const PolicyParams& gradient, double lr);

}  // namespace rarforge
