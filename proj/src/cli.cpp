#include "rarforge/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rarforge/dataset.hpp"
#include "rarforge/remote.hpp"
#include "rarforge/serialize.hpp"
#include "rarforge/trainer.hpp"

namespace rarforge {
namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string strip(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

// Flat key=value config support. CLI11 2.x only processes config files bound
// to the top-level app, so the file is expanded into arguments ahead of the
// command line; TakeLast options make explicit flags win.
std::vector<std::string> expand_config_args(std::vector<std::string> args) {
  if (args.empty() || args[0] != "train") return args;
  std::string config_path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    }
  }
  if (config_path.empty()) return args;

  std::ifstream in(config_path);
  if (!in) throw UsageError("cannot open config file: " + config_path);
  std::vector<std::string> expanded = {args[0]};
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const std::string text = strip(line);
    if (text.empty() || text[0] == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config file " + config_path + ": line " + std::to_string(line_number) +
                       ": expected key=value");
    }
    const std::string key = strip(text.substr(0, eq));
    std::string value = strip(text.substr(eq + 1));
    if (value.size() >= 2 && ((value.front() == '"' && value.back() == '"') ||
                              (value.front() == '\'' && value.back() == '\''))) {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty()) {
      throw UsageError("config file " + config_path + ": line " + std::to_string(line_number) +
                       ": empty key");
    }
    expanded.push_back("--" + key + "=" + value);
  }
  expanded.insert(expanded.end(), args.begin() + 1, args.end());
  return expanded;
}

struct SyntheticFlags {
  bool enabled = false;
  int users = 16;
  int attributes_per_user = 2;
  int aspects_per_question = 2;
  int distractors = 4;
};

struct CommonFlags {
  std::string data_path;
  SyntheticFlags synthetic;
  std::uint64_t seed = 0;
};

void add_synthetic_options(CLI::App* cmd, SyntheticFlags& flags) {
  cmd->add_flag("--synthetic", flags.enabled, "Generate a synthetic world instead of loading --data");
  cmd->add_option("--users", flags.users, "Synthetic users (one instance each)")
      ->capture_default_str();
  cmd->add_option("--attrs-per-user", flags.attributes_per_user,
                  "Latent attributes assigned to each synthetic user")
      ->capture_default_str();
  cmd->add_option("--aspects-per-question", flags.aspects_per_question,
                  "Rubric aspects per synthetic question")
      ->capture_default_str();
  cmd->add_option("--distractors", flags.distractors, "Distractor documents per synthetic profile")
      ->capture_default_str();
}

SyntheticWorldConfig synthetic_config(const CommonFlags& common) {
  SyntheticWorldConfig cfg;
  cfg.num_users = common.synthetic.users;
  cfg.attributes_per_user = common.synthetic.attributes_per_user;
  cfg.aspects_per_question = common.synthetic.aspects_per_question;
  cfg.distractor_docs_per_user = common.synthetic.distractors;
  cfg.seed = common.seed;
  return cfg;
}

// Exactly one of --data / --synthetic; returns nullopt (and prints usage) otherwise.
std::optional<std::vector<TrainingInstance>> load_instances(const CommonFlags& common,
                                                            const char* cmd_name) {
  if (common.data_path.empty() == !common.synthetic.enabled) {
    std::cerr << cmd_name << ": exactly one of --data or --synthetic is required\n";
    return std::nullopt;
  }
  if (!common.data_path.empty()) return load_dataset(common.data_path);
  return generate_synthetic(synthetic_config(common));
}

std::unique_ptr<Judge> make_judge(const std::string& spec) {
  if (spec == "synthetic") return std::make_unique<SyntheticJudge>();
  const std::string prefix = "http://";
  if (spec.rfind(prefix, 0) == 0) {
    const std::string rest = spec.substr(prefix.size());
    const auto colon = rest.find(':');
    if (colon == std::string::npos) {
      throw ValidationError("--judge URL must look like http://host:port");
    }
    const std::string host = rest.substr(0, colon);
    const int port = std::stoi(rest.substr(colon + 1));
    return std::make_unique<ExternalJudge>(host, port);
  }
  throw ValidationError("--judge must be \"synthetic\" or an http://host:port URL");
}

double tail_mean(const std::vector<TrainMetrics>& rows, std::size_t window,
                 double TrainMetrics::* field) {
  if (rows.empty()) return 0.0;
  const std::size_t take = std::min(window, rows.size());
  double sum = 0.0;
  for (std::size_t i = rows.size() - take; i < rows.size(); ++i) sum += rows[i].*field;
  return sum / static_cast<double>(take);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

struct TrainFlags {
  CommonFlags common;
  std::string out_dir;
  std::string judge = "synthetic";
  std::string topk_sweep;
  bool no_baseline = false;
  int eval_every = 50;
  TrainConfig config;
};

int run_single_train(const std::vector<TrainingInstance>& instances, TrainFlags& flags,
                     const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const auto judge = make_judge(flags.judge);

  // Synthetic worlds share a schema, so fix the action space to it; loaded
  // datasets get their query terms and slots mined from the instances.
  std::optional<EnvironmentSpec> env_spec;
  if (flags.common.synthetic.enabled) {
    env_spec = environment_from_schema(default_attribute_schema(), flags.config.protocol);
  }

  StepObserver observer = nullptr;
  if (flags.eval_every > 0) {
    // Greedy eval on the training set, printed only; the metrics CSV stays
    // byte-deterministic.
    const Environment env = env_spec ? Environment::from_spec(*env_spec)
                                     : Environment::build(instances, flags.config.protocol);
    const TrainConfig config = flags.config;
    const Judge* judge_ptr = judge.get();
    const int every = flags.eval_every;
    const auto* data = &instances;
    observer = [env, config, judge_ptr, every, data](const TrainMetrics& m, const GroupRollout&,
                                                     const PolicyParams& params) {
      if ((m.step + 1) % every != 0) return;
      const EvalSummary s = evaluate(*data, params, env, config, 0, /*greedy=*/true, *judge_ptr);
      std::cout << "eval step=" << m.step + 1 << " mean_reward=" << fmt(s.mean_reward)
                << " mean_retrievals=" << fmt(s.mean_retrievals) << "\n";
    };
  }

  const TrainResult result = train(instances, flags.config, flags.common.seed, *judge, observer,
                                   env_spec ? &*env_spec : nullptr);
  write_metrics_csv(out_dir / "metrics.csv", result.metrics);
  save_policy(out_dir / "params.json", {result.params, result.environment});

  std::cout << "trained steps=" << result.metrics.size()
            << " mean_reward_last20=" << fmt(tail_mean(result.metrics, 20, &TrainMetrics::mean_reward))
            << " out=" << out_dir.string() << "\n";
  return 0;
}

int run_train(TrainFlags& flags, CLI::App* cmd) {
  const auto instances = load_instances(flags.common, "train");
  if (!instances) return 2;
  flags.config.grpo.use_baseline = !flags.no_baseline;
  flags.config.validate();

  fs::create_directories(flags.out_dir);
  {
    std::ofstream resolved(fs::path(flags.out_dir) / "config.resolved");
    resolved << cmd->config_to_str(true, false);
  }

  if (flags.topk_sweep.empty()) {
    return run_single_train(*instances, flags, flags.out_dir);
  }

  std::vector<int> ks;
  std::stringstream ss(flags.topk_sweep);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) ks.push_back(std::stoi(item));
  }
  if (ks.empty()) {
    std::cerr << "train: --topk-sweep needs a comma-separated list of k values\n";
    return 2;
  }

  std::ofstream sweep(fs::path(flags.out_dir) / "sweep.csv");
  sweep << "topk,mean_reward_last20,mean_retrievals_last20,steps\n";
  for (int k : ks) {
    TrainFlags run_flags = flags;
    run_flags.config.grpo.top_k = k;
    const fs::path sub = fs::path(flags.out_dir) / ("topk_" + std::to_string(k));
    const int rc = run_single_train(*instances, run_flags, sub);
    if (rc != 0) return rc;
    const auto rows = read_metrics_csv(sub / "metrics.csv");
    sweep << k << ',' << fmt(tail_mean(rows, 20, &TrainMetrics::mean_reward)) << ','
          << fmt(tail_mean(rows, 20, &TrainMetrics::mean_retrievals)) << ',' << rows.size() << "\n";
  }
  std::cout << "sweep complete: " << (fs::path(flags.out_dir) / "sweep.csv").string() << "\n";
  return 0;
}

struct EvalFlags {
  CommonFlags common;
  std::string params_path;
  std::string out_path;
  std::string judge = "synthetic";
  bool greedy = false;
  TrainConfig config;
};

int run_eval(EvalFlags& flags) {
  const auto instances = load_instances(flags.common, "eval");
  if (!instances) return 2;

  const SavedPolicy saved = load_policy(flags.params_path);
  const Environment env = Environment::from_spec(saved.environment);
  const auto judge = make_judge(flags.judge);
  const EvalSummary summary = evaluate(*instances, saved.params, env, flags.config,
                                       flags.common.seed, flags.greedy, *judge);

  std::cout << "mean_reward=" << fmt(summary.mean_reward)
            << " mean_retrievals=" << fmt(summary.mean_retrievals)
            << " mean_response_len=" << fmt(summary.mean_response_len)
            << " instances=" << summary.instances << "\n";
  if (!flags.out_path.empty()) {
    nlohmann::json doc = {{"mean_reward", summary.mean_reward},
                          {"mean_retrievals", summary.mean_retrievals},
                          {"mean_response_len", summary.mean_response_len},
                          {"instances", summary.instances}};
    std::ofstream out(flags.out_path);
    if (!out) throw ParseError("cannot open summary file for writing: " + flags.out_path);
    out << doc.dump(2) << '\n';
  }
  return 0;
}

struct ReportFlags {
  std::vector<std::string> inputs;
  std::string out_dir;
};

std::string run_name(const fs::path& path, std::set<std::string>& taken) {
  std::string name = path.stem().string();
  if (name == "metrics" && path.has_parent_path()) {
    name = path.parent_path().filename().string();
  }
  std::string candidate = name;
  int suffix = 2;
  while (!taken.insert(candidate).second) candidate = name + "_" + std::to_string(suffix++);
  return candidate;
}

int run_report(ReportFlags& flags) {
  struct Row {
    std::string name;
    std::vector<TrainMetrics> metrics;
  };
  std::vector<Row> runs;
  std::set<std::string> taken;
  for (const auto& input : flags.inputs) {
    runs.push_back({run_name(input, taken), read_metrics_csv(input)});
  }

  std::printf("%-24s %6s %16s %20s %16s\n", "run", "steps", "reward(last20)",
              "retrievals(last20)", "length(last20)");
  for (const auto& run : runs) {
    std::printf("%-24s %6zu %16s %20s %16s\n", run.name.c_str(), run.metrics.size(),
                fmt(tail_mean(run.metrics, 20, &TrainMetrics::mean_reward)).c_str(),
                fmt(tail_mean(run.metrics, 20, &TrainMetrics::mean_retrievals)).c_str(),
                fmt(tail_mean(run.metrics, 20, &TrainMetrics::mean_response_len)).c_str());
  }

  if (!flags.out_dir.empty()) {
    fs::create_directories(flags.out_dir);
    std::ofstream comparison(fs::path(flags.out_dir) / "comparison.csv");
    comparison << "run,steps,mean_reward_last20,mean_retrievals_last20,mean_response_len_last20\n";
    for (const auto& run : runs) {
      comparison << run.name << ',' << run.metrics.size() << ','
                 << fmt(tail_mean(run.metrics, 20, &TrainMetrics::mean_reward)) << ','
                 << fmt(tail_mean(run.metrics, 20, &TrainMetrics::mean_retrievals)) << ','
                 << fmt(tail_mean(run.metrics, 20, &TrainMetrics::mean_response_len)) << "\n";
    }
    for (const auto& run : runs) {
      // Plot-ready series: the reward, retrieval-count and response-length
      // trajectories over training steps.
      std::ofstream series(fs::path(flags.out_dir) / ("series_" + run.name + ".csv"));
      series << "step,mean_reward,mean_retrievals,mean_response_len\n";
      for (const auto& m : run.metrics) {
        series << m.step << ',' << m.mean_reward << ',' << m.mean_retrievals << ','
               << m.mean_response_len << "\n";
      }
    }
  }
  return 0;
}

void add_train_options(CLI::App* cmd, TrainFlags& flags) {
  cmd->add_option("--data", flags.common.data_path, "Dataset JSONL path");
  add_synthetic_options(cmd, flags.common.synthetic);
  cmd->add_option("--seed", flags.common.seed, "Random seed")
      ->envname("RAR_FORGE_SEED")
      ->capture_default_str();
  cmd->add_option("--out-dir", flags.out_dir, "Output directory")->required();
  cmd->add_option("--steps", flags.config.grpo.total_steps, "Training steps")
      ->capture_default_str();
  cmd->add_option("--group-size", flags.config.grpo.group_size, "Personalized rollouts per step")
      ->capture_default_str();
  cmd->add_option("--topk", flags.config.grpo.top_k, "Documents injected per search")
      ->capture_default_str();
  cmd->add_option("--beta", flags.config.grpo.beta, "KL regularization coefficient")
      ->capture_default_str();
  cmd->add_option("--epsilon", flags.config.grpo.epsilon, "Surrogate clipping width")
      ->capture_default_str();
  cmd->add_option("--lr", flags.config.grpo.learning_rate, "Learning rate")
      ->capture_default_str();
  cmd->add_option("--warmup-ratio", flags.config.grpo.warmup_ratio,
                  "Fraction of steps spent ramping the learning rate")
      ->capture_default_str();
  cmd->add_option("--temperature", flags.config.grpo.temperature, "Sampling temperature")
      ->capture_default_str();
  cmd->add_option("--max-steps", flags.config.protocol.max_steps, "Rollout step budget")
      ->capture_default_str();
  cmd->add_option("--max-search-turns", flags.config.protocol.max_search_turns,
                  "Search turns allowed per rollout")
      ->capture_default_str();
  cmd->add_flag("--no-baseline", flags.no_baseline,
                "Drop the non-personalized baseline from the advantage");
  cmd->add_option("--workers", flags.config.workers, "Parallel rollout workers")
      ->capture_default_str();
  cmd->add_option("--embed-dim", flags.config.embedding_dim, "Hashed embedding dimension")
      ->capture_default_str();
  cmd->add_option("--judge", flags.judge, "\"synthetic\" or an external http://host:port judge")
      ->capture_default_str();
  cmd->add_option("--eval-every", flags.eval_every,
                  "Print a greedy eval line every N steps (0 disables)")
      ->capture_default_str();
  cmd->add_option("--topk-sweep", flags.topk_sweep,
                  "Comma-separated k values; runs one training per k");
  cmd->set_config("--config", "", "Read options from a key=value file");
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Desk-scale GRPO training over retrieval-augmented personalized QA rollouts"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic personalized-QA dataset");
  SyntheticFlags gen_flags;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--users", gen_flags.users, "Users (one instance each)")->capture_default_str();
  gen->add_option("--attrs-per-user", gen_flags.attributes_per_user, "Attributes per user")
      ->capture_default_str();
  gen->add_option("--aspects-per-question", gen_flags.aspects_per_question, "Aspects per question")
      ->capture_default_str();
  gen->add_option("--distractors", gen_flags.distractors, "Distractor documents per profile")
      ->capture_default_str();
  gen->add_option("--seed", gen_seed, "Random seed")->envname("RAR_FORGE_SEED")->capture_default_str();
  gen->add_option("--out", gen_out, "Output JSONL path")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Run GRPO training and write metrics + params");
  TrainFlags train_flags;
  add_train_options(train_cmd, train_flags);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate saved params on a dataset");
  EvalFlags eval_flags;
  eval_cmd->add_option("--params", eval_flags.params_path, "params.json from a training run")
      ->required();
  eval_cmd->add_option("--data", eval_flags.common.data_path, "Dataset JSONL path");
  add_synthetic_options(eval_cmd, eval_flags.common.synthetic);
  eval_cmd->add_option("--seed", eval_flags.common.seed, "Random seed")
      ->envname("RAR_FORGE_SEED")
      ->capture_default_str();
  eval_cmd->add_flag("--greedy", eval_flags.greedy, "Greedy rollouts instead of sampling");
  eval_cmd->add_option("--temperature", eval_flags.config.grpo.temperature, "Sampling temperature")
      ->capture_default_str();
  eval_cmd->add_option("--topk", eval_flags.config.grpo.top_k, "Documents injected per search")
      ->capture_default_str();
  eval_cmd->add_option("--max-steps", eval_flags.config.protocol.max_steps, "Rollout step budget")
      ->capture_default_str();
  eval_cmd->add_option("--max-search-turns", eval_flags.config.protocol.max_search_turns,
                       "Search turns allowed per rollout")
      ->capture_default_str();
  eval_cmd->add_option("--embed-dim", eval_flags.config.embedding_dim, "Hashed embedding dimension")
      ->capture_default_str();
  eval_cmd->add_option("--judge", eval_flags.judge, "\"synthetic\" or http://host:port")
      ->capture_default_str();
  eval_cmd->add_option("--out", eval_flags.out_path, "Write the summary as JSON here");

  // report
  auto* report_cmd = app.add_subcommand("report", "Aggregate metrics CSVs into a comparison");
  ReportFlags report_flags;
  report_cmd->add_option("inputs", report_flags.inputs, "metrics.csv files")
      ->required()
      ->expected(-1);
  report_cmd->add_option("--out-dir", report_flags.out_dir,
                         "Write comparison.csv and per-run series here");

  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      SyntheticWorldConfig cfg;
      cfg.num_users = gen_flags.users;
      cfg.attributes_per_user = gen_flags.attributes_per_user;
      cfg.aspects_per_question = gen_flags.aspects_per_question;
      cfg.distractor_docs_per_user = gen_flags.distractors;
      cfg.seed = gen_seed;
      save_dataset(gen_out, generate_synthetic(cfg));
      std::cout << "wrote " << cfg.num_users << " instances to " << gen_out << "\n";
      return 0;
    }
    if (train_cmd->parsed()) return run_train(train_flags, train_cmd);
    if (eval_cmd->parsed()) return run_eval(eval_flags);
    if (report_cmd->parsed()) return run_report(report_flags);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace rarforge
