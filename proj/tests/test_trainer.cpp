#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "rarforge/serialize.hpp"
#include "rarforge/trainer.hpp"

using namespace rarforge;
using rarforge::testing::TempDir;
using rarforge::testing::make_instance;

namespace {

std::vector<TrainingInstance> small_world(std::uint64_t seed = 7, int users = 12) {
  SyntheticWorldConfig cfg;
  cfg.num_users = users;
  cfg.attributes_per_user = 2;
  cfg.aspects_per_question = 2;
  cfg.distractor_docs_per_user = 4;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

// Hand-built policy: search every pending term, then answer with everything
// observed. Decisive at C = 25 even under temperature-1 sampling.
PolicyParams oracle_theta(const Environment& env, double weight = 25.0) {
  const auto& vocab = env.vocabulary();
  const int q = static_cast<int>(env.feature_map().query_terms().size());
  PolicyParams p = PolicyParams::zeros(vocab.size(), env.feature_map().dimension());
  for (int i = 0; i < q; ++i) p.at(vocab.search_action(i), 1 + i) = weight;  // pending_i
  p.at(vocab.observed_answer_action(), 2 * q + 2) = weight;  // all mentioned searched
  return p;
}

bool records_equal(const RolloutRecord& a, const RolloutRecord& b) {
  if (a.trajectory.segments.size() != b.trajectory.segments.size()) return false;
  for (std::size_t i = 0; i < a.trajectory.segments.size(); ++i) {
    if (a.trajectory.segments[i].kind != b.trajectory.segments[i].kind) return false;
    if (a.trajectory.segments[i].text != b.trajectory.segments[i].text) return false;
  }
  if (a.trajectory.actions.size() != b.trajectory.actions.size()) return false;
  for (std::size_t i = 0; i < a.trajectory.actions.size(); ++i) {
    const auto& x = a.trajectory.actions[i];
    const auto& y = b.trajectory.actions[i];
    if (x.action_id != y.action_id || x.loss_mask != y.loss_mask ||
        x.logprob_old != y.logprob_old || x.features != y.features) {
      return false;
    }
  }
  return a.trajectory.retrieval_count == b.trajectory.retrieval_count &&
         a.trajectory.truncated == b.trajectory.truncated &&
         a.reward.normalized == b.reward.normalized;
}

bool metrics_equal(const std::vector<TrainMetrics>& a, const std::vector<TrainMetrics>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].step != b[i].step || a[i].mean_reward != b[i].mean_reward ||
        a[i].baseline_reward != b[i].baseline_reward ||
        a[i].mean_retrievals != b[i].mean_retrievals ||
        a[i].mean_response_len != b[i].mean_response_len || a[i].loss != b[i].loss ||
        a[i].kl != b[i].kl || a[i].lr != b[i].lr ||
        a[i].degenerate_groups != b[i].degenerate_groups) {
      return false;
    }
  }
  return true;
}

TrainConfig fast_config(int steps = 20) {
  TrainConfig config;
  config.grpo.total_steps = steps;
  config.grpo.learning_rate = 1.0;
  return config;
}

}  // namespace

TEST_CASE("environment derives query terms and slots from the dataset") {
  const auto instances = small_world();
  const Environment env = Environment::build(instances, ProtocolConfig{});

  // Aspect texts in the synthetic world are attribute names.
  CHECK_FALSE(env.spec().query_terms.empty());
  for (const auto& term : env.spec().query_terms) {
    bool found = false;
    for (const auto& inst : instances) {
      for (const auto& aspect : inst.aspects) {
        if (aspect.text == term) found = true;
      }
    }
    CHECK_MESSAGE(found, "term " << term);
  }
  // Every keyphrase is an observable slot.
  for (const auto& inst : instances) {
    for (const auto& aspect : inst.aspects) {
      for (const auto& phrase : aspect.keyphrases) {
        CHECK(std::find(env.spec().slots.begin(), env.spec().slots.end(), phrase) !=
              env.spec().slots.end());
      }
    }
  }
}

TEST_CASE("observe extracts slots from information text in slot order") {
  Environment env = Environment::from_spec({{"occupation"}, {"florist", "chess"}, 4});
  RolloutObservation obs(1);
  env.observe("[1] My occupation: florist.\n[2] noise", obs);
  CHECK(obs.observed_keyphrases == std::vector<std::string>{"florist"});
  env.observe("[1] chess and florist again", obs);
  CHECK(obs.observed_keyphrases == std::vector<std::string>{"florist", "chess"});

  const Segment answer = env.materialize({MacroAction::Kind::Answer, kAnswerObserved}, obs);
  CHECK(answer.text.find("florist") != std::string::npos);
  CHECK(answer.text.find("chess") != std::string::npos);
}

TEST_CASE("a think-then-answer rollout scores zero without retrieval") {
  const auto instance = make_instance();
  const Environment env = Environment::build({instance}, ProtocolConfig{});
  const auto embedder = std::make_shared<HashedBowEmbedder>(64);
  const ProfileIndex index = build_index(instance.profile, embedder);
  const SyntheticJudge judge;

  // Suppress search so the sampler walks among think/answer only, then scan
  // for a seed whose first two draws are think followed by answer.
  PolicyParams p = PolicyParams::zeros(env.vocabulary().size(), env.feature_map().dimension());
  for (std::size_t i = 0; i < env.spec().query_terms.size(); ++i) {
    p.at(env.vocabulary().search_action(static_cast<int>(i)), 0) = -50.0;
  }
  const auto frozen = snapshot(p, SnapshotRole::Old, 0);

  bool found = false;
  for (std::uint64_t seed = 0; seed < 200 && !found; ++seed) {
    std::mt19937_64 rng(seed);
    const auto record =
        rollout_personalized(instance, frozen, index, env, ProtocolConfig{}, 3, 1.0, judge, rng);
    if (record.trajectory.segments.size() == 2 &&
        record.trajectory.segments[0].kind == SegmentKind::Think &&
        record.trajectory.segments[1].kind == SegmentKind::Answer) {
      found = true;
      CHECK(record.trajectory.retrieval_count == 0);
      CHECK(record.reward.normalized == 0.0);
      CHECK(record.trajectory.answer_text.has_value());
      for (const auto& action : record.trajectory.actions) {
        CHECK(action.loss_mask);
        CHECK(action.logprob_old.has_value());
      }
    }
  }
  CHECK(found);
}

TEST_CASE("the oracle policy retrieves what it needs and earns full reward") {
  const auto instance = make_instance();
  const Environment env = Environment::build({instance}, ProtocolConfig{});
  const auto embedder = std::make_shared<HashedBowEmbedder>(256);
  const ProfileIndex index = build_index(instance.profile, embedder);
  const SyntheticJudge judge;

  const auto record = rollout_greedy(instance, oracle_theta(env), index, env, ProtocolConfig{}, 3,
                                     1.0, judge);
  CHECK(record.reward.normalized == 1.0);
  CHECK(record.trajectory.retrieval_count == 2);
  CHECK_FALSE(record.trajectory.truncated);
  REQUIRE(record.trajectory.answer_text.has_value());
  CHECK(record.trajectory.answer_text->find("florist") != std::string::npos);
  CHECK(record.trajectory.answer_text->find("chess") != std::string::npos);

  // Mask placement: information records masked, policy records not.
  REQUIRE(record.trajectory.segments.size() == record.trajectory.actions.size());
  for (std::size_t i = 0; i < record.trajectory.segments.size(); ++i) {
    const bool injected = record.trajectory.segments[i].kind == SegmentKind::Information;
    CHECK(record.trajectory.actions[i].loss_mask == !injected);
    CHECK(record.trajectory.actions[i].logprob_old.has_value() == !injected);
    if (injected) CHECK(record.trajectory.actions[i].action_id == kInjectedContent);
  }
}

TEST_CASE("rollouts are deterministic per seed") {
  const auto instance = make_instance();
  const Environment env = Environment::build({instance}, ProtocolConfig{});
  const auto embedder = std::make_shared<HashedBowEmbedder>(64);
  const ProfileIndex index = build_index(instance.profile, embedder);
  const SyntheticJudge judge;
  const auto frozen = snapshot(
      PolicyParams::zeros(env.vocabulary().size(), env.feature_map().dimension()),
      SnapshotRole::Old, 0);

  std::mt19937_64 rng_a(99);
  std::mt19937_64 rng_b(99);
  const auto a = rollout_personalized(instance, frozen, index, env, ProtocolConfig{}, 3, 1.0,
                                      judge, rng_a);
  const auto b = rollout_personalized(instance, frozen, index, env, ProtocolConfig{}, 3, 1.0,
                                      judge, rng_b);
  CHECK(records_equal(a, b));
}

TEST_CASE("exhausting the search budget truncates with zero reward") {
  const auto instance = make_instance();
  const Environment env = Environment::build({instance}, ProtocolConfig{});
  const auto embedder = std::make_shared<HashedBowEmbedder>(64);
  const ProfileIndex index = build_index(instance.profile, embedder);
  const SyntheticJudge judge;

  // Unconditional search: the fifth attempt breaks the turn budget.
  PolicyParams p = PolicyParams::zeros(env.vocabulary().size(), env.feature_map().dimension());
  p.at(env.vocabulary().search_action(0), 0) = 50.0;

  const auto record =
      rollout_greedy(instance, p, index, env, ProtocolConfig{}, 3, 1.0, judge);
  CHECK(record.trajectory.truncated);
  CHECK_FALSE(record.trajectory.answer_text.has_value());
  CHECK(record.reward.normalized == 0.0);
  CHECK(record.trajectory.retrieval_count == ProtocolConfig{}.max_search_turns);

  int searches = 0, informations = 0;
  for (const auto& s : record.trajectory.segments) {
    if (s.kind == SegmentKind::Search) ++searches;
    if (s.kind == SegmentKind::Information) ++informations;
  }
  CHECK(searches == informations);
}

TEST_CASE("baseline rollouts are structurally retrieval-free") {
  const auto instance = make_instance();
  const Environment env = Environment::build({instance}, ProtocolConfig{});
  const SyntheticJudge judge;
  const auto reference = snapshot(
      PolicyParams::zeros(env.vocabulary().size(), env.feature_map().dimension()),
      SnapshotRole::Reference, 0);

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const auto record =
        rollout_baseline(instance, reference, env, ProtocolConfig{}, 1.0, judge, rng);
    CHECK_FALSE(record.trajectory.personalized);
    CHECK(record.trajectory.retrieval_count == 0);
    for (const auto& segment : record.trajectory.segments) {
      CHECK(segment.kind != SegmentKind::Search);
      CHECK(segment.kind != SegmentKind::Information);
    }
    // Keyphrases live only in the profile, so no retrieval means no reward.
    CHECK(record.reward.normalized == 0.0);
  }

  std::mt19937_64 rng_a(5), rng_b(5);
  CHECK(records_equal(
      rollout_baseline(instance, reference, env, ProtocolConfig{}, 1.0, judge, rng_a),
      rollout_baseline(instance, reference, env, ProtocolConfig{}, 1.0, judge, rng_b)));
}

TEST_CASE("constant-reward groups skip the update") {
  const auto instances = small_world();
  const Environment env = Environment::build(instances, ProtocolConfig{});
  const auto embedder = std::make_shared<HashedBowEmbedder>(256);
  const ProfileIndex index = build_index(instances[0].profile, embedder);
  const SyntheticJudge judge;

  PolicyParams live = oracle_theta(env, 50.0);  // every rollout scores 1.0
  const PolicyParams before = live;
  const auto reference = snapshot(live, SnapshotRole::Reference, 0);
  std::mt19937_64 rng(1);

  const TrainMetrics metrics = train_step(instances[0], live, reference, index, env,
                                          fast_config(), 0, judge, rng);
  CHECK(metrics.degenerate_groups == 1);
  CHECK(metrics.mean_reward == 1.0);
  CHECK(metrics.loss == 0.0);
  CHECK(live.theta == before.theta);
}

TEST_CASE("train emits one metrics row per step and is seed-deterministic") {
  const auto instances = small_world();
  const SyntheticJudge judge;
  const auto config = fast_config(23);

  const TrainResult a = train(instances, config, 42, judge);
  CHECK(a.metrics.size() == 23);
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].step == static_cast<int>(i));
    CHECK(std::isfinite(a.metrics[i].loss));
    CHECK(a.metrics[i].lr > 0.0);
  }

  const TrainResult b = train(instances, config, 42, judge);
  CHECK(metrics_equal(a.metrics, b.metrics));
  CHECK(a.params.theta == b.params.theta);

  const TrainResult c = train(instances, config, 43, judge);
  CHECK_FALSE(metrics_equal(a.metrics, c.metrics));
}

TEST_CASE("worker count never changes results") {
  const auto instances = small_world(3, 6);
  const SyntheticJudge judge;
  auto config = fast_config(10);

  const TrainResult serial = train(instances, config, 9, judge);
  config.workers = 4;
  const TrainResult parallel = train(instances, config, 9, judge);
  CHECK(metrics_equal(serial.metrics, parallel.metrics));
  CHECK(serial.params.theta == parallel.params.theta);
}

TEST_CASE("the reference snapshot stays at its step-0 value") {
  const auto instances = small_world(5, 6);
  const SyntheticJudge judge;
  const TrainResult result = train(instances, fast_config(12), 4, judge);

  const Environment env = Environment::build(instances, ProtocolConfig{});
  const auto zeros =
      PolicyParams::zeros(env.vocabulary().size(), env.feature_map().dimension());
  CHECK(result.reference_params.theta == zeros.theta);
  // Training moved the live parameters away from the reference.
  CHECK(result.params.theta != zeros.theta);
}

TEST_CASE("group invariants hold at every observed step") {
  const auto instances = small_world(11, 8);
  const SyntheticJudge judge;
  auto config = fast_config(30);

  int observed = 0;
  const StepObserver observer = [&](const TrainMetrics& metrics, const GroupRollout& group,
                                    const PolicyParams&) {
    ++observed;
    REQUIRE(group.personalized.size() == static_cast<std::size_t>(config.grpo.group_size));
    REQUIRE(group.baseline.has_value());
    CHECK_FALSE(group.baseline->trajectory.personalized);
    CHECK(group.baseline->trajectory.retrieval_count == 0);

    // Stored advantages recompute exactly from rewards + baseline.
    std::vector<double> rewards;
    for (const auto& record : group.personalized) {
      CHECK(record.trajectory.personalized);
      rewards.push_back(record.reward.normalized);
    }
    const auto stats = group_stats(rewards);
    const auto recomputed = advantages(rewards, group.baseline->reward.normalized, stats);
    REQUIRE(recomputed.values.size() == group.advantages.values.size());
    CHECK(recomputed.degenerate == group.advantages.degenerate);
    for (std::size_t i = 0; i < recomputed.values.size(); ++i) {
      CHECK(std::abs(recomputed.values[i] - group.advantages.values[i]) <= 1e-12);
    }
    CHECK(metrics.baseline_reward == group.baseline->reward.normalized);
    // Ceiling-zero world: no retrieval, no reward.
    CHECK(metrics.baseline_reward == 0.0);
  };
  train(instances, config, 21, judge, observer);
  CHECK(observed == 30);
}

TEST_CASE("disabling the baseline matches the standard GRPO advantage") {
  const auto instances = small_world(13, 8);
  const SyntheticJudge judge;
  auto config = fast_config(25);
  config.grpo.use_baseline = false;

  const StepObserver observer = [&](const TrainMetrics& metrics, const GroupRollout& group,
                                    const PolicyParams&) {
    CHECK_FALSE(group.baseline.has_value());
    CHECK(metrics.baseline_reward == 0.0);
    std::vector<double> rewards;
    for (const auto& record : group.personalized) rewards.push_back(record.reward.normalized);
    // Independent path: plain group normalization.
    const auto stats = group_stats(rewards);
    if (stats.std > 0.0) {
      for (std::size_t i = 0; i < rewards.size(); ++i) {
        const double expected = (rewards[i] - stats.mean) / stats.std;
        CHECK(std::abs(expected - group.advantages.values[i]) <= 1e-12);
      }
    } else {
      CHECK(group.advantages.degenerate);
    }
  };
  train(instances, config, 31, judge, observer);
}

TEST_CASE("evaluation behaves across policy quality levels") {
  const auto instances = small_world(17, 10);
  const Environment env = Environment::build(instances, ProtocolConfig{});
  const SyntheticJudge judge;
  const auto config = fast_config();

  SUBCASE("the untrained uniform policy stays near the no-retrieval floor") {
    const auto zeros =
        PolicyParams::zeros(env.vocabulary().size(), env.feature_map().dimension());
    const EvalSummary summary = evaluate(instances, zeros, env, config, 3, false, judge);
    CHECK(summary.instances == 10);
    CHECK(summary.mean_reward < 0.3);
  }

  SUBCASE("the oracle policy scores perfectly under greedy eval") {
    const EvalSummary summary =
        evaluate(instances, oracle_theta(env), env, config, 3, true, judge);
    CHECK(summary.mean_reward == 1.0);
    CHECK(summary.mean_retrievals == 2.0);
  }

  SUBCASE("sampled evaluation is deterministic per seed") {
    const auto params = oracle_theta(env, 5.0);
    const EvalSummary a = evaluate(instances, params, env, config, 8, false, judge);
    const EvalSummary b = evaluate(instances, params, env, config, 8, false, judge);
    CHECK(a.mean_reward == b.mean_reward);
    CHECK(a.mean_retrievals == b.mean_retrievals);
    CHECK(a.mean_response_len == b.mean_response_len);
  }
}

TEST_CASE("saved params reproduce training-end reward on a fresh eval set") {
  const auto train_set = small_world(7, 12);
  const SyntheticJudge judge;
  TrainConfig config;
  config.grpo.learning_rate = 1.0;
  config.grpo.total_steps = 400;  // well onto the converged plateau
  // Schema-wide action space, so fresh worlds from the same schema are in
  // distribution for the trained policy.
  const auto env_spec = environment_from_schema(default_attribute_schema(), config.protocol);
  const TrainResult result = train(train_set, config, 42, judge, nullptr, &env_spec);

  double last20 = 0.0;
  for (std::size_t i = result.metrics.size() - 20; i < result.metrics.size(); ++i) {
    last20 += result.metrics[i].mean_reward;
  }
  last20 /= 20.0;

  const auto eval_set = small_world(123, 200);
  const Environment env = Environment::from_spec(result.environment);
  const EvalSummary summary = evaluate(eval_set, result.params, env, config, 77, false, judge);
  CHECK(summary.instances == 200);
  CHECK(std::abs(summary.mean_reward - last20) <= 0.05);
}

TEST_CASE("metrics csv round-trips exactly and rejects malformed rows") {
  TempDir dir;
  std::vector<TrainMetrics> rows;
  std::mt19937_64 rng(55);
  for (int i = 0; i < 25; ++i) {
    TrainMetrics m;
    m.step = i;
    m.mean_reward = rarforge::testing::rand_unit(rng);
    m.baseline_reward = rarforge::testing::rand_unit(rng);
    m.mean_retrievals = 4.0 * rarforge::testing::rand_unit(rng);
    m.mean_response_len = 10.0 * rarforge::testing::rand_unit(rng);
    m.loss = rarforge::testing::rand_range(rng, -1.0, 1.0);
    m.kl = rarforge::testing::rand_unit(rng);
    m.lr = rarforge::testing::rand_unit(rng);
    m.degenerate_groups = static_cast<int>(rng() % 2);
    rows.push_back(m);
  }
  write_metrics_csv(dir.file("m.csv"), rows);
  CHECK(metrics_equal(rows, read_metrics_csv(dir.file("m.csv"))));

  {
    std::ofstream out(dir.file("bad.csv"));
    out << kMetricsCsvHeader << "\n0,1,2,3\n";
  }
  CHECK_THROWS_WITH_AS(read_metrics_csv(dir.file("bad.csv")), doctest::Contains("row 2"),
                       ParseError);

  {
    std::ofstream out(dir.file("bad_header.csv"));
    out << "nope\n";
  }
  CHECK_THROWS_AS(read_metrics_csv(dir.file("bad_header.csv")), ParseError);
}
