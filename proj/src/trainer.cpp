#include "rarforge/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "rarforge/rng.hpp"
#include "rarforge/text.hpp"

namespace rarforge {
namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct RolloutOptions {
  const ProfileIndex* index = nullptr;  // null => retrieval unavailable
  int top_k = 3;
  double temperature = 1.0;
  bool greedy = false;
  bool personalized = true;
};

RolloutRecord run_rollout(const TrainingInstance& instance, const PolicyParams& params,
                          const Environment& env, const ProtocolConfig& protocol,
                          const RolloutOptions& opts, const Judge& judge, std::mt19937_64* rng) {
  RolloutState state(protocol);
  const FeatureMap& fm = env.feature_map();
  const ActionVocabulary& vocab = env.vocabulary();
  RolloutObservation obs(fm.query_terms().size());
  const std::vector<std::uint8_t> mentions = fm.question_mentions(instance.question);

  // Baseline rollouts drop every Search action from the alphabet, so no
  // retrieval (and no personalization) is structurally possible.
  std::vector<std::uint8_t> allowed;
  const std::vector<std::uint8_t>* mask = nullptr;
  if (!opts.personalized) {
    allowed.assign(static_cast<std::size_t>(vocab.size()), 1);
    for (int a = 0; a < vocab.size(); ++a) {
      if (vocab.action(a).kind == MacroAction::Kind::Search) {
        allowed[static_cast<std::size_t>(a)] = 0;
      }
    }
    mask = &allowed;
  }

  Trajectory traj;
  traj.instance_id = instance.id;
  traj.personalized = opts.personalized;
  int step_index = 0;

  while (state.phase() == RolloutPhase::AwaitingPolicy) {
    const std::vector<double> phi = fm.features(mentions, obs);
    const SampledAction sampled =
        opts.greedy ? greedy_action(params, phi, opts.temperature, mask)
                    : sample_action(params, phi, opts.temperature, *rng, mask);
    const MacroAction& action = vocab.action(sampled.action);
    const Segment segment = env.materialize(action, obs);

    try {
      state.apply(segment);
    } catch (const ProtocolError&) {
      traj.truncated = true;
      break;
    }
    traj.segments.push_back(segment);
    traj.actions.push_back({step_index++, sampled.action, sampled.logprob, true, phi});
    if (state.truncated()) {
      traj.truncated = true;
      break;
    }
    if (segment.kind == SegmentKind::Answer) {
      traj.answer_text = segment.text;
      break;
    }
    if (segment.kind == SegmentKind::Search) {
      obs.searched[static_cast<std::size_t>(action.template_id)] = 1;
      ++obs.searches_so_far;
      if (opts.index == nullptr) {
        // Unreachable while Search is masked; treat as a protocol failure.
        traj.truncated = true;
        break;
      }
      const std::vector<SearchResult> results = search(*opts.index, segment.text, opts.top_k);
      const Segment info{SegmentKind::Information, format_information(results)};
      state.apply(info);
      traj.segments.push_back(info);
      traj.actions.push_back({step_index++, kInjectedContent, std::nullopt, false, {}});
      ++traj.retrieval_count;
      if (state.truncated()) {
        traj.truncated = true;
        break;
      }
      env.observe(info.text, obs);
      obs.last_was_information = true;
    } else {
      obs.last_was_information = false;
    }
  }
  if (state.truncated()) traj.truncated = true;

  RewardRecord reward = reward_trajectory(traj, instance, judge);
  return {std::move(traj), std::move(reward)};
}

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, const std::vector<TrainMetrics>& rows) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open metrics file for writing: " + path.string());
  out << kMetricsCsvHeader << '\n';
  for (const auto& m : rows) {
    out << m.step << ',' << format_double(m.mean_reward) << ',' << format_double(m.baseline_reward)
        << ',' << format_double(m.mean_retrievals) << ',' << format_double(m.mean_response_len)
        << ',' << format_double(m.loss) << ',' << format_double(m.kl) << ','
        << format_double(m.lr) << ',' << m.degenerate_groups << '\n';
  }
}

std::vector<TrainMetrics> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open metrics file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsCsvHeader) {
    throw ParseError("metrics file " + path.string() + ": row 1: bad or missing header");
  }
  std::vector<TrainMetrics> rows;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 9) {
      throw ParseError("metrics file " + path.string() + ": row " + std::to_string(row) +
                       ": expected 9 fields, got " + std::to_string(fields.size()));
    }
    try {
      TrainMetrics m;
      m.step = std::stoi(fields[0]);
      m.mean_reward = std::stod(fields[1]);
      m.baseline_reward = std::stod(fields[2]);
      m.mean_retrievals = std::stod(fields[3]);
      m.mean_response_len = std::stod(fields[4]);
      m.loss = std::stod(fields[5]);
      m.kl = std::stod(fields[6]);
      m.lr = std::stod(fields[7]);
      m.degenerate_groups = std::stoi(fields[8]);
      rows.push_back(m);
    } catch (const std::exception&) {
      throw ParseError("metrics file " + path.string() + ": row " + std::to_string(row) +
                       ": malformed value");
    }
  }
  return rows;
}

Environment::Environment(EnvironmentSpec spec)
    : spec_(std::move(spec)),
      vocabulary_(ActionVocabulary::from_terms(spec_.query_terms)),
      feature_map_(spec_.query_terms, spec_.max_search_turns) {}

EnvironmentSpec environment_from_schema(const std::vector<AttributeSpec>& schema,
                                        const ProtocolConfig& protocol) {
  EnvironmentSpec spec;
  for (const auto& attribute : schema) {
    if (static_cast<int>(spec.query_terms.size()) < 16) {
      spec.query_terms.push_back(attribute.name);
    }
    for (const auto& value : attribute.values) spec.slots.push_back(value);
  }
  spec.max_search_turns = protocol.max_search_turns;
  return spec;
}

Environment Environment::build(const std::vector<TrainingInstance>& instances,
                               const ProtocolConfig& protocol) {
  EnvironmentSpec spec;
  const ActionVocabulary vocab = ActionVocabulary::build(instances);
  spec.query_terms = vocab.query_terms();
  std::unordered_set<std::string> seen;
  for (const auto& inst : instances) {
    for (const auto& aspect : inst.aspects) {
      for (const auto& phrase : aspect.keyphrases) {
        if (seen.insert(phrase).second) spec.slots.push_back(phrase);
      }
    }
  }
  spec.max_search_turns = protocol.max_search_turns;
  return Environment(std::move(spec));
}

Environment Environment::from_spec(EnvironmentSpec spec) { return Environment(std::move(spec)); }

Segment Environment::materialize(const MacroAction& action, const RolloutObservation& obs) const {
  switch (action.kind) {
    case MacroAction::Kind::Think:
      return {SegmentKind::Think, "Weighing what the profile suggests before answering."};
    case MacroAction::Kind::Search:
      return {SegmentKind::Search,
              spec_.query_terms.at(static_cast<std::size_t>(action.template_id))};
    case MacroAction::Kind::Answer:
      if (action.template_id == kAnswerGeneric || obs.observed_keyphrases.empty()) {
        return {SegmentKind::Answer, "A balanced general recommendation that fits most people."};
      }
      return {SegmentKind::Answer,
              "Drawing on this user's history: " + join(obs.observed_keyphrases, ", ") + "."};
  }
  throw PolicyError("unknown macro action");
}

void Environment::observe(const std::string& information_text, RolloutObservation& obs) const {
  const std::vector<std::string> tokens = tokenize(information_text);
  for (const auto& slot : spec_.slots) {
    if (!contains_phrase(tokens, slot)) continue;
    if (std::find(obs.observed_keyphrases.begin(), obs.observed_keyphrases.end(), slot) ==
        obs.observed_keyphrases.end()) {
      obs.observed_keyphrases.push_back(slot);
    }
  }
}

void TrainConfig::validate() const {
  grpo.validate();
  protocol.validate();
  if (workers < 1) throw OptimizerError("workers must be at least 1");
  if (embedding_dim < 1) throw OptimizerError("embedding_dim must be at least 1");
}

RolloutRecord rollout_personalized(const TrainingInstance& instance,
                                   const PolicySnapshot& policy_snapshot,
                                   const ProfileIndex& index, const Environment& env,
                                   const ProtocolConfig& protocol, int top_k, double temperature,
                                   const Judge& judge, std::mt19937_64& rng) {
  RolloutOptions opts;
  opts.index = &index;
  opts.top_k = top_k;
  opts.temperature = temperature;
  opts.personalized = true;
  return run_rollout(instance, policy_snapshot.params, env, protocol, opts, judge, &rng);
}

RolloutRecord rollout_baseline(const TrainingInstance& instance,
                               const PolicySnapshot& reference_snapshot, const Environment& env,
                               const ProtocolConfig& protocol, double temperature,
                               const Judge& judge, std::mt19937_64& rng) {
  RolloutOptions opts;
  opts.index = nullptr;
  opts.temperature = temperature;
  opts.personalized = false;
  return run_rollout(instance, reference_snapshot.params, env, protocol, opts, judge, &rng);
}

RolloutRecord rollout_greedy(const TrainingInstance& instance, const PolicyParams& params,
                             const ProfileIndex& index, const Environment& env,
                             const ProtocolConfig& protocol, int top_k, double temperature,
                             const Judge& judge) {
  RolloutOptions opts;
  opts.index = &index;
  opts.top_k = top_k;
  opts.temperature = temperature;
  opts.greedy = true;
  opts.personalized = true;
  return run_rollout(instance, params, env, protocol, opts, judge, nullptr);
}

TrainMetrics train_step(const TrainingInstance& instance, PolicyParams& live_params,
                        const PolicySnapshot& reference, const ProfileIndex& index,
                        const Environment& env, const TrainConfig& config, int step,
                        const Judge& judge, std::mt19937_64& rng, const StepObserver& observer) {
  const GrpoConfig& grpo = config.grpo;
  const PolicySnapshot old_policy = snapshot(live_params, SnapshotRole::Old, step);

  // Seeds drawn up front so the rollout results are identical whatever the
  // worker count or scheduling.
  const auto group_size = static_cast<std::size_t>(grpo.group_size);
  std::vector<std::uint64_t> seeds(group_size);
  for (auto& s : seeds) s = rng();
  std::uint64_t baseline_seed = 0;
  if (grpo.use_baseline) baseline_seed = rng();

  std::vector<RolloutRecord> personalized(group_size);
  const auto run_one = [&](std::size_t g) {
    std::mt19937_64 worker_rng(seeds[g]);
    personalized[g] = rollout_personalized(instance, old_policy, index, env, config.protocol,
                                           grpo.top_k, grpo.temperature, judge, worker_rng);
  };
  if (config.workers > 1) {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const auto nthreads = std::min<std::size_t>(static_cast<std::size_t>(config.workers), group_size);
    for (std::size_t t = 0; t < nthreads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t g = next.fetch_add(1); g < group_size; g = next.fetch_add(1)) run_one(g);
      });
    }
    for (auto& t : pool) t.join();
  } else {
    for (std::size_t g = 0; g < group_size; ++g) run_one(g);
  }

  std::optional<RolloutRecord> baseline;
  if (grpo.use_baseline) {
    std::mt19937_64 baseline_rng(baseline_seed);
    baseline = rollout_baseline(instance, reference, env, config.protocol, grpo.temperature, judge,
                                baseline_rng);
  }

  std::vector<double> rewards(group_size);
  for (std::size_t g = 0; g < group_size; ++g) rewards[g] = personalized[g].reward.normalized;
  const GroupStats stats = group_stats(rewards);
  const double baseline_reward = grpo.use_baseline ? baseline->reward.normalized : 0.0;

  GroupRollout group;
  group.instance_id = instance.id;
  group.personalized = std::move(personalized);
  group.baseline = std::move(baseline);
  group.advantages = advantages(rewards, baseline_reward, stats);

  TrainMetrics metrics;
  metrics.step = step;
  metrics.mean_reward = stats.mean;
  metrics.baseline_reward = baseline_reward;
  double retrievals = 0.0;
  double length = 0.0;
  for (const auto& record : group.personalized) {
    retrievals += record.trajectory.retrieval_count;
    length += static_cast<double>(record.trajectory.actions.size());
  }
  metrics.mean_retrievals = retrievals / static_cast<double>(group_size);
  metrics.mean_response_len = length / static_cast<double>(group_size);
  metrics.lr = lr_at(step, grpo);

  if (group.advantages.degenerate) {
    metrics.degenerate_groups = 1;
  } else {
    auto [report, gradient] = grpo_loss(group, live_params, reference, grpo);
    apply_update(live_params, gradient, metrics.lr);
    metrics.loss = report.total;
    metrics.kl = report.kl;
  }
  if (observer) observer(metrics, group, live_params);
  return metrics;
}

TrainResult train(const std::vector<TrainingInstance>& instances, const TrainConfig& config,
                  std::uint64_t seed, const Judge& judge, const StepObserver& observer,
                  const EnvironmentSpec* environment) {
  config.validate();
  if (instances.empty()) throw ValidationError("training dataset is empty");

  const Environment env = environment ? Environment::from_spec(*environment)
                                      : Environment::build(instances, config.protocol);
  const auto embedder = std::make_shared<HashedBowEmbedder>(config.embedding_dim);
  std::vector<ProfileIndex> indexes;
  indexes.reserve(instances.size());
  for (const auto& inst : instances) indexes.push_back(build_index(inst.profile, embedder));

  PolicyParams live = PolicyParams::zeros(env.vocabulary().size(), env.feature_map().dimension());
  const PolicySnapshot reference = snapshot(live, SnapshotRole::Reference, 0);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.environment = env.spec();
  result.reference_params = reference.params;
  result.metrics.reserve(static_cast<std::size_t>(config.grpo.total_steps));
  for (int step = 0; step < config.grpo.total_steps; ++step) {
    const std::size_t pos = static_cast<std::size_t>(step) % instances.size();
    if (pos == 0) fisher_yates(order, rng);
    const std::size_t idx = order[pos];
    try {
      result.metrics.push_back(train_step(instances[idx], live, reference, indexes[idx], env,
                                          config, step, judge, rng, observer));
    } catch (const std::exception& e) {
      throw OptimizerError("step " + std::to_string(step) + ": " + e.what());
    }
  }
  result.params = std::move(live);
  return result;
}

EvalSummary evaluate(const std::vector<TrainingInstance>& instances, const PolicyParams& params,
                     const Environment& env, const TrainConfig& config, std::uint64_t seed,
                     bool greedy, const Judge& judge) {
  config.validate();
  if (instances.empty()) throw ValidationError("evaluation dataset is empty");

  const auto embedder = std::make_shared<HashedBowEmbedder>(config.embedding_dim);
  const PolicySnapshot frozen = snapshot(params, SnapshotRole::Old, 0);
  std::mt19937_64 rng(seed);

  EvalSummary summary;
  for (const auto& inst : instances) {
    const ProfileIndex index = build_index(inst.profile, embedder);
    RolloutRecord record;
    if (greedy) {
      record = rollout_greedy(inst, params, index, env, config.protocol, config.grpo.top_k,
                              config.grpo.temperature, judge);
    } else {
      std::mt19937_64 rollout_rng(rng());
      record = rollout_personalized(inst, frozen, index, env, config.protocol, config.grpo.top_k,
                                    config.grpo.temperature, judge, rollout_rng);
    }
    summary.mean_reward += record.reward.normalized;
    summary.mean_retrievals += record.trajectory.retrieval_count;
    summary.mean_response_len += static_cast<double>(record.trajectory.actions.size());
  }
  const auto n = static_cast<double>(instances.size());
  summary.mean_reward /= n;
  summary.mean_retrievals /= n;
  summary.mean_response_len /= n;
  summary.instances = static_cast<int>(instances.size());
  return summary;
}

}  // namespace rarforge
