#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "rarforge/dataset.hpp"
#include "rarforge/optimizer.hpp"
#include "rarforge/policy.hpp"
#include "rarforge/retrieval.hpp"
#include "rarforge/reward.hpp"
#include "rarforge/rollout.hpp"

namespace rarforge {

struct TrainMetrics {
  int step = 0;
  double mean_reward = 0.0;
  double baseline_reward = 0.0;
  double mean_retrievals = 0.0;
  double mean_response_len = 0.0;  // total action steps, toy-policy unit
  double loss = 0.0;
  double kl = 0.0;
  double lr = 0.0;
  int degenerate_groups = 0;
};

inline constexpr const char* kMetricsCsvHeader =
    "step,mean_reward,baseline_reward,mean_retrievals,mean_response_len,loss,kl,lr,"
    "degenerate_groups";

void write_metrics_csv(const std::filesystem::path& path, const std::vector<TrainMetrics>& rows);
std::vector<TrainMetrics> read_metrics_csv(const std::filesystem::path& path);

// Dataset-derived pieces the policy and rollout loop share: the macro-action
// vocabulary, the feature map, and the keyphrase slots observable in
// information text. Serialized alongside params so eval can rebuild it.
struct EnvironmentSpec {
  std::vector<std::string> query_terms;
  std::vector<std::string> slots;
  int max_search_turns = 4;
};

// Query terms are the attribute names, slots the full value vocabulary, so
// the action space covers any world drawn from the same schema.
EnvironmentSpec environment_from_schema(const std::vector<AttributeSpec>& schema,
                                        const ProtocolConfig& protocol);

class Environment {
 public:
  static Environment build(const std::vector<TrainingInstance>& instances,
                           const ProtocolConfig& protocol);
  static Environment from_spec(EnvironmentSpec spec);

  const ActionVocabulary& vocabulary() const { return vocabulary_; }
  const FeatureMap& feature_map() const { return feature_map_; }
  const EnvironmentSpec& spec() const { return spec_; }

  Segment materialize(const MacroAction& action, const RolloutObservation& obs) const;
  // Appends newly observed slot phrases, in slot order, to obs.
  void observe(const std::string& information_text, RolloutObservation& obs) const;

 private:
  explicit Environment(EnvironmentSpec spec);

  EnvironmentSpec spec_;
  ActionVocabulary vocabulary_;
  FeatureMap feature_map_;
};

struct TrainConfig {
  GrpoConfig grpo;
  ProtocolConfig protocol;
  int workers = 1;
  int embedding_dim = 256;

  void validate() const;
};

RolloutRecord rollout_personalized(const TrainingInstance& instance,
                                   const PolicySnapshot& policy_snapshot,
                                   const ProfileIndex& index, const Environment& env,
                                   const ProtocolConfig& protocol, int top_k, double temperature,
                                   const Judge& judge, std::mt19937_64& rng);

// Same loop with every Search action masked out of the alphabet and the
// frozen reference as the sampler, so the trajectory is structurally
// retrieval-free.
RolloutRecord rollout_baseline(const TrainingInstance& instance,
                               const PolicySnapshot& reference_snapshot, const Environment& env,
                               const ProtocolConfig& protocol, double temperature,
                               const Judge& judge, std::mt19937_64& rng);

// Greedy variant used by evaluation.
RolloutRecord rollout_greedy(const TrainingInstance& instance, const PolicyParams& params,
                             const ProfileIndex& index, const Environment& env,
                             const ProtocolConfig& protocol, int top_k, double temperature,
                             const Judge& judge);

using StepObserver =
    std::function<void(const TrainMetrics&, const GroupRollout&, const PolicyParams&)>;

// One GRPO step on one instance: snapshot pi_old, G personalized rollouts,
// optional baseline rollout from pi_ref, rewards, advantages, clipped update.
// Zero-variance groups skip the update and are counted in the metrics.
TrainMetrics train_step(const TrainingInstance& instance, PolicyParams& live_params,
                        const PolicySnapshot& reference, const ProfileIndex& index,
                        const Environment& env, const TrainConfig& config, int step,
                        const Judge& judge, std::mt19937_64& rng,
                        const StepObserver& observer = nullptr);

struct TrainResult {
  PolicyParams params;
  PolicyParams reference_params;  // the step-0 snapshot, for audit
  std::vector<TrainMetrics> metrics;
  EnvironmentSpec environment;
};

// Cycles instances for grpo.total_steps steps, reshuffling once per epoch.
// The reference snapshot is taken at step 0 and never refreshed. The action
// space and features come from `environment` when given, otherwise they are
// mined from the instances.
TrainResult train(const std::vector<TrainingInstance>& instances, const TrainConfig& config,
                  std::uint64_t seed, const Judge& judge, const StepObserver& observer = nullptr,
                  const EnvironmentSpec* environment = nullptr);

struct EvalSummary {
  double mean_reward = 0.0;
  double mean_retrievals = 0.0;
  double mean_response_len = 0.0;
  int instances = 0;
};

// One rollout per instance, no updates. Greedy when `greedy`, otherwise
// sampled at the configured temperature under `seed`.
EvalSummary evaluate(const std::vector<TrainingInstance>& instances, const PolicyParams& params,
                     const Environment& env, const TrainConfig& config, std::uint64_t seed,
                     bool greedy, const Judge& judge);

}  // namespace rarforge
