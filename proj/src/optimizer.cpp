#include "rarforge/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace rarforge {

void GrpoConfig::validate() const {
  if (group_size < 1) throw OptimizerError("group_size must be positive");
  if (beta < 0.0) throw OptimizerError("beta must be non-negative");
  if (!(epsilon > 0.0)) throw OptimizerError("epsilon must be positive");
  if (!(learning_rate > 0.0)) throw OptimizerError("learning_rate must be positive");
  if (warmup_ratio < 0.0 || warmup_ratio >= 1.0) throw OptimizerError("warmup_ratio must be in [0, 1)");
  if (total_steps < 1) throw OptimizerError("total_steps must be positive");
  if (top_k < 1) throw OptimizerError("top_k must be positive");
  if (!(temperature > 0.0)) throw OptimizerError("temperature must be positive");
}

GroupStats group_stats(std::span<const double> rewards) {
  if (rewards.empty()) throw OptimizerError("group_stats on an empty list");
  // A constant group must come out with std exactly 0 — the degenerate-group
  // rule keys on it, and rounding noise here would explode the advantages.
  const auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
  if (*lo == *hi) return {*lo, 0.0};
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(rewards.size());
  return {mean, std::sqrt(var)};
}

AdvantageVector advantages(std::span<const double> rewards, double baseline_reward,
                           const GroupStats& stats) {
  AdvantageVector adv;
  adv.values.resize(rewards.size(), 0.0);
  if (stats.std > 0.0) {
    for (std::size_t i = 0; i < rewards.size(); ++i) {
      adv.values[i] = (rewards[i] - baseline_reward - stats.mean) / stats.std;
    }
  } else {
    adv.degenerate = true;
  }
  return adv;
}

double kl_step(double logp_theta, double logp_ref) {
  if (!std::isfinite(logp_theta) || !std::isfinite(logp_ref)) {
    throw OptimizerError("kl_step requires finite log-probabilities");
  }
  const double delta = logp_ref - logp_theta;
  return std::exp(delta) - delta - 1.0;
}

double surrogate_step(double logp_theta, double logp_old, double advantage, double epsilon) {
  if (!std::isfinite(logp_theta) || !std::isfinite(logp_old) || !std::isfinite(advantage)) {
    throw OptimizerError("surrogate_step requires finite inputs");
  }
  const double ratio = std::exp(logp_theta - logp_old);
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

std::pair<LossReport, PolicyParams> grpo_loss(const GroupRollout& group,
                                              const PolicyParams& params,
                                              const PolicySnapshot& reference,
                                              const GrpoConfig& config) {
  if (group.personalized.empty()) throw OptimizerError("empty rollout group");
  if (group.advantages.values.size() != group.personalized.size()) {
    throw OptimizerError("advantages not computed for this group");
  }
  if (!params.same_shape(reference.params)) {
    throw OptimizerError("reference snapshot shape differs from live parameters");
  }

  const double group_size = static_cast<double>(group.personalized.size());
  LossReport report;
  PolicyParams gradient = PolicyParams::zeros(params.num_actions, params.feature_dim);

  for (std::size_t g = 0; g < group.personalized.size(); ++g) {
    const Trajectory& traj = group.personalized[g].trajectory;
    const double advantage = group.advantages.values[g];

    std::vector<const ActionRecord*> steps;
    for (const auto& record : traj.actions) {
      if (record.loss_mask) {
        steps.push_back(&record);
      } else {
        ++report.masked_steps;
      }
    }
    if (steps.empty()) {
      throw OptimizerError("trajectory for instance \"" + traj.instance_id +
                           "\" has no unmasked steps");
    }
    report.unmasked_steps += static_cast<int>(steps.size());

    const double inv_len = 1.0 / static_cast<double>(steps.size());
    double traj_surrogate = 0.0;
    double traj_kl = 0.0;
    for (const ActionRecord* record : steps) {
      if (!record->logprob_old.has_value()) {
        throw OptimizerError("unmasked step without a recorded old log-probability");
      }
      const std::span<const double> phi(record->features);
      const double lp_theta = logprob(params, phi, record->action_id, config.temperature);
      const double lp_ref = logprob(reference.params, phi, record->action_id, config.temperature);
      const double lp_old = *record->logprob_old;

      traj_surrogate += surrogate_step(lp_theta, lp_old, advantage, config.epsilon);
      traj_kl += kl_step(lp_theta, lp_ref);

      // d surrogate / d logp_theta: ratio*A when the unclipped branch is the
      // minimum, otherwise the clip is active and the derivative vanishes.
      const double ratio = std::exp(lp_theta - lp_old);
      const double unclipped = ratio * advantage;
      const double clipped = std::clamp(ratio, 1.0 - config.epsilon, 1.0 + config.epsilon) * advantage;
      const double d_surr = unclipped <= clipped ? unclipped : 0.0;
      // d k3 / d logp_theta with rho_ref = exp(lp_ref - lp_theta).
      const double d_kl = 1.0 - std::exp(lp_ref - lp_theta);
      // total = -mean(surrogate) + beta * mean(kl)
      const double coeff = (-d_surr + config.beta * d_kl) * inv_len / group_size;

      const PolicyParams step_grad = grad_logprob(params, phi, record->action_id, config.temperature);
      for (std::size_t i = 0; i < gradient.theta.size(); ++i) {
        gradient.theta[i] += coeff * step_grad.theta[i];
      }
    }
    report.surrogate += traj_surrogate * inv_len / group_size;
    report.kl += traj_kl * inv_len / group_size;
  }

  report.total = -report.surrogate + config.beta * report.kl;
  double norm_sq = 0.0;
  for (double v : gradient.theta) norm_sq += v * v;
  report.grad_norm = std::sqrt(norm_sq);
  return {report, std::move(gradient)};
}

double lr_at(int step, const GrpoConfig& config) {
  if (step < 0) throw OptimizerError("step must be non-negative");
  const int warmup_steps =
      static_cast<int>(std::ceil(config.warmup_ratio * static_cast<double>(config.total_steps)));
  if (warmup_steps > 0 && step < warmup_steps) {
    return config.learning_rate * static_cast<double>(step + 1) / warmup_steps;
  }
  return config.learning_rate;
}

void apply_update(PolicyParams& params, const PolicyParams& gradient, double lr) {
  if (!params.same_shape(gradient)) throw OptimizerError("gradient shape mismatch");
  for (double g : gradient.theta) {
    if (!std::isfinite(g)) throw OptimizerError("non-finite gradient; update aborted");
  }
  for (std::size_t i = 0; i < params.theta.size(); ++i) {
    params.theta[i] -= lr * gradient.theta[i];
  }
}

}  // namespace rarforge
