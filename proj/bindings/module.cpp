#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rarforge/dataset.hpp"
#include "rarforge/optimizer.hpp"
#include "rarforge/policy.hpp"
#include "rarforge/protocol.hpp"
#include "rarforge/retrieval.hpp"
#include "rarforge/reward.hpp"
#include "rarforge/serialize.hpp"
#include "rarforge/trainer.hpp"

namespace py = pybind11;
using namespace rarforge;

PYBIND11_MODULE(_core, m) {
  m.doc() = "GRPO training over retrieval-augmented personalized QA rollouts";

  // ------------------------------------------------------------- dataset
  py::class_<RubricAspect>(m, "RubricAspect")
      .def(py::init<>())
      .def(py::init([](std::string id, std::string text, std::vector<std::string> keyphrases) {
             return RubricAspect{std::move(id), std::move(text), std::move(keyphrases)};
           }),
           py::arg("id"), py::arg("text"), py::arg("keyphrases"))
      .def_readwrite("id", &RubricAspect::id)
      .def_readwrite("text", &RubricAspect::text)
      .def_readwrite("keyphrases", &RubricAspect::keyphrases);

  py::class_<UserDocument>(m, "UserDocument")
      .def(py::init<>())
      .def(py::init([](std::string id, std::string text) {
             return UserDocument{std::move(id), std::move(text)};
           }),
           py::arg("id"), py::arg("text"))
      .def_readwrite("id", &UserDocument::id)
      .def_readwrite("text", &UserDocument::text);

  py::class_<UserProfile>(m, "UserProfile")
      .def(py::init<>())
      .def_readwrite("user_id", &UserProfile::user_id)
      .def_readwrite("documents", &UserProfile::documents);

  py::class_<TrainingInstance>(m, "TrainingInstance")
      .def(py::init<>())
      .def_readwrite("id", &TrainingInstance::id)
      .def_readwrite("question", &TrainingInstance::question)
      .def_readwrite("narrative", &TrainingInstance::narrative)
      .def_readwrite("aspects", &TrainingInstance::aspects)
      .def_readwrite("profile", &TrainingInstance::profile)
      .def_readwrite("category", &TrainingInstance::category);

  py::class_<AttributeSpec>(m, "AttributeSpec")
      .def(py::init([](std::string name, std::vector<std::string> values) {
             return AttributeSpec{std::move(name), std::move(values)};
           }),
           py::arg("name"), py::arg("values"))
      .def_readwrite("name", &AttributeSpec::name)
      .def_readwrite("values", &AttributeSpec::values);

  py::class_<SyntheticWorldConfig>(m, "SyntheticWorldConfig")
      .def(py::init<>())
      .def_readwrite("num_users", &SyntheticWorldConfig::num_users)
      .def_readwrite("attributes_per_user", &SyntheticWorldConfig::attributes_per_user)
      .def_readwrite("attribute_schema", &SyntheticWorldConfig::attribute_schema)
      .def_readwrite("distractor_docs_per_user", &SyntheticWorldConfig::distractor_docs_per_user)
      .def_readwrite("aspects_per_question", &SyntheticWorldConfig::aspects_per_question)
      .def_readwrite("seed", &SyntheticWorldConfig::seed);

  m.def("default_attribute_schema", &default_attribute_schema);
  m.def("load_dataset", &load_dataset, py::arg("path"));
  m.def("save_dataset", &save_dataset, py::arg("path"), py::arg("instances"));
  m.def("generate_synthetic", &generate_synthetic, py::arg("config"));
  m.def("split_dataset", &split, py::arg("instances"), py::arg("train_fraction"), py::arg("seed"));

  // ------------------------------------------------------------ protocol
  py::enum_<SegmentKind>(m, "SegmentKind")
      .value("Think", SegmentKind::Think)
      .value("Search", SegmentKind::Search)
      .value("Information", SegmentKind::Information)
      .value("Answer", SegmentKind::Answer);

  py::class_<Segment>(m, "Segment")
      .def(py::init([](SegmentKind kind, std::string text) {
             return Segment{kind, std::move(text)};
           }),
           py::arg("kind"), py::arg("text"))
      .def_readwrite("kind", &Segment::kind)
      .def_readwrite("text", &Segment::text);

  py::class_<ProtocolConfig>(m, "ProtocolConfig")
      .def(py::init<>())
      .def_readwrite("max_steps", &ProtocolConfig::max_steps)
      .def_readwrite("max_search_turns", &ProtocolConfig::max_search_turns);

  m.def("render_prompt", &render_prompt, py::arg("question"));
  m.def("parse_segments", &parse, py::arg("text"));
  m.def("render_segments", &render_segments, py::arg("segments"));

  // ----------------------------------------------------------- retrieval
  py::class_<SearchResult>(m, "SearchResult")
      .def_readonly("document", &SearchResult::document)
      .def_readonly("score", &SearchResult::score);

  py::class_<ProfileIndex>(m, "ProfileIndex")
      .def_property_readonly("user_id", &ProfileIndex::user_id)
      .def("__len__", &ProfileIndex::size);

  m.def(
      "build_index",
      [](const UserProfile& profile, int dimension) {
        return build_index(profile, std::make_shared<HashedBowEmbedder>(dimension));
      },
      py::arg("profile"), py::arg("dimension") = 256);
  m.def("search", &search, py::arg("index"), py::arg("query"), py::arg("k"));
  m.def("format_information", &format_information, py::arg("results"));
  m.def(
      "embed",
      [](const std::string& text, int dimension) {
        return HashedBowEmbedder(dimension).embed(text);
      },
      py::arg("text"), py::arg("dimension") = 256);

  // -------------------------------------------------------------- reward
  py::class_<AspectScore>(m, "AspectScore")
      .def_readonly("aspect_id", &AspectScore::aspect_id)
      .def_readonly("raw", &AspectScore::raw);

  py::class_<RewardRecord>(m, "RewardRecord")
      .def_readonly("trajectory_id", &RewardRecord::trajectory_id)
      .def_readonly("aspect_scores", &RewardRecord::aspect_scores)
      .def_readonly("normalized", &RewardRecord::normalized);

  m.def("score_synthetic", &score_synthetic, py::arg("question"), py::arg("answer_text"),
        py::arg("aspects"), py::arg("narrative") = std::string{});
  m.def("normalize_scores", &normalize, py::arg("scores"));

  // ----------------------------------------------------------- optimizer
  py::class_<GroupStats>(m, "GroupStats")
      .def_readonly("mean", &GroupStats::mean)
      .def_readonly("std", &GroupStats::std);

  py::class_<AdvantageVector>(m, "AdvantageVector")
      .def_readonly("values", &AdvantageVector::values)
      .def_readonly("degenerate", &AdvantageVector::degenerate);

  py::class_<GrpoConfig>(m, "GrpoConfig")
      .def(py::init<>())
      .def_readwrite("group_size", &GrpoConfig::group_size)
      .def_readwrite("beta", &GrpoConfig::beta)
      .def_readwrite("epsilon", &GrpoConfig::epsilon)
      .def_readwrite("learning_rate", &GrpoConfig::learning_rate)
      .def_readwrite("warmup_ratio", &GrpoConfig::warmup_ratio)
      .def_readwrite("total_steps", &GrpoConfig::total_steps)
      .def_readwrite("top_k", &GrpoConfig::top_k)
      .def_readwrite("temperature", &GrpoConfig::temperature)
      .def_readwrite("use_baseline", &GrpoConfig::use_baseline);

  m.def(
      "group_stats",
      [](const std::vector<double>& rewards) { return group_stats(rewards); },
      py::arg("rewards"));
  m.def(
      "advantages",
      [](const std::vector<double>& rewards, double baseline_reward) {
        return advantages(rewards, baseline_reward, group_stats(rewards));
      },
      py::arg("rewards"), py::arg("baseline_reward") = 0.0);
  m.def("kl_step", &kl_step, py::arg("logp_theta"), py::arg("logp_ref"));
  m.def("surrogate_step", &surrogate_step, py::arg("logp_theta"), py::arg("logp_old"),
        py::arg("advantage"), py::arg("epsilon"));
  m.def("lr_at", &lr_at, py::arg("step"), py::arg("config"));

  // -------------------------------------------------------------- policy
  py::class_<PolicyParams>(m, "PolicyParams")
      .def_readonly("num_actions", &PolicyParams::num_actions)
      .def_readonly("feature_dim", &PolicyParams::feature_dim)
      .def_readonly("theta", &PolicyParams::theta);

  // ------------------------------------------------------------- trainer
  py::class_<TrainMetrics>(m, "TrainMetrics")
      .def_readonly("step", &TrainMetrics::step)
      .def_readonly("mean_reward", &TrainMetrics::mean_reward)
      .def_readonly("baseline_reward", &TrainMetrics::baseline_reward)
      .def_readonly("mean_retrievals", &TrainMetrics::mean_retrievals)
      .def_readonly("mean_response_len", &TrainMetrics::mean_response_len)
      .def_readonly("loss", &TrainMetrics::loss)
      .def_readonly("kl", &TrainMetrics::kl)
      .def_readonly("lr", &TrainMetrics::lr)
      .def_readonly("degenerate_groups", &TrainMetrics::degenerate_groups);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("grpo", &TrainConfig::grpo)
      .def_readwrite("protocol", &TrainConfig::protocol)
      .def_readwrite("workers", &TrainConfig::workers)
      .def_readwrite("embedding_dim", &TrainConfig::embedding_dim);

  py::class_<EnvironmentSpec>(m, "EnvironmentSpec")
      .def_readonly("query_terms", &EnvironmentSpec::query_terms)
      .def_readonly("slots", &EnvironmentSpec::slots)
      .def_readonly("max_search_turns", &EnvironmentSpec::max_search_turns);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("params", &TrainResult::params)
      .def_readonly("metrics", &TrainResult::metrics)
      .def_readonly("environment", &TrainResult::environment);

  py::class_<EvalSummary>(m, "EvalSummary")
      .def_readonly("mean_reward", &EvalSummary::mean_reward)
      .def_readonly("mean_retrievals", &EvalSummary::mean_retrievals)
      .def_readonly("mean_response_len", &EvalSummary::mean_response_len)
      .def_readonly("instances", &EvalSummary::instances);

  m.def(
      "train",
      [](const std::vector<TrainingInstance>& instances, const TrainConfig& config,
         std::uint64_t seed) {
        const SyntheticJudge judge;
        py::gil_scoped_release release;
        return train(instances, config, seed, judge);
      },
      py::arg("instances"), py::arg("config") = TrainConfig{}, py::arg("seed") = 0);
  m.def(
      "evaluate",
      [](const std::vector<TrainingInstance>& instances, const TrainResult& result,
         const TrainConfig& config, std::uint64_t seed, bool greedy) {
        const SyntheticJudge judge;
        const Environment env = Environment::from_spec(result.environment);
        py::gil_scoped_release release;
        return evaluate(instances, result.params, env, config, seed, greedy, judge);
      },
      py::arg("instances"), py::arg("result"), py::arg("config") = TrainConfig{},
      py::arg("seed") = 0, py::arg("greedy") = false);
  m.def("write_metrics_csv", &write_metrics_csv, py::arg("path"), py::arg("rows"));
  m.def("read_metrics_csv", &read_metrics_csv, py::arg("path"));
  m.def(
      "save_policy",
      [](const std::filesystem::path& path, const TrainResult& result) {
        save_policy(path, {result.params, result.environment});
      },
      py::arg("path"), py::arg("result"));

  // Exceptions map onto ValueError/RuntimeError family.
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_ValueError);
  py::register_exception<TagParseError>(m, "TagParseError", PyExc_ValueError);
  py::register_exception<ScoringError>(m, "ScoringError", PyExc_RuntimeError);
  py::register_exception<OptimizerError>(m, "OptimizerError", PyExc_RuntimeError);
  py::register_exception<PolicyError>(m, "PolicyError", PyExc_RuntimeError);

#ifdef VERSION_INFO
#define STRINGIFY(x) #x
#define MACRO_STRINGIFY(x) STRINGIFY(x)
  m.attr("__version__") = MACRO_STRINGIFY(VERSION_INFO);
#else
  m.attr("__version__") = "dev";
#endif
}
