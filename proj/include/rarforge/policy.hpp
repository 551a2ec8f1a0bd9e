#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rarforge/dataset.hpp"

namespace rarforge {

// Macro-action alphabet: the toy policy emits whole segments. Search actions
// index into a small query vocabulary; Answer actions select a response
// template (0 = generic, 1 = all keyphrases observed so far).
struct MacroAction {
  enum class Kind { Think, Search, Answer };
  Kind kind = Kind::Think;
  int template_id = 0;
};

inline constexpr int kAnswerGeneric = 0;
inline constexpr int kAnswerObserved = 1;

class ActionVocabulary {
 public:
  // [Think, Search(term 0..Q-1), Answer(generic), Answer(observed)] — stable order.
  static ActionVocabulary from_terms(std::vector<std::string> query_terms);

  // Query terms mined from aspect texts: lowercase non-stopword tokens in
  // first-seen order, capped at max_query_terms.
  static ActionVocabulary build(const std::vector<TrainingInstance>& instances,
                                int max_query_terms = 16);

  int size() const { return static_cast<int>(actions_.size()); }
  const MacroAction& action(int id) const { return actions_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& query_terms() const { return query_terms_; }

  int think_action() const { return 0; }
  int search_action(int term_index) const { return 1 + term_index; }
  int generic_answer_action() const { return 1 + static_cast<int>(query_terms_.size()); }
  int observed_answer_action() const { return 2 + static_cast<int>(query_terms_.size()); }

 private:
  std::vector<MacroAction> actions_;
  std::vector<std::string> query_terms_;
};

// What the policy has seen so far in one rollout; the feature map turns this
// plus the question into phi(s).
struct RolloutObservation {
  std::vector<std::uint8_t> searched;  // one flag per query term
  int searches_so_far = 0;
  std::vector<std::string> observed_keyphrases;  // first-observation order
  bool last_was_information = false;

  explicit RolloutObservation(std::size_t num_query_terms) : searched(num_query_terms, 0) {}
};

// phi(s) layout, dimension 2*Q + 7, all entries in [0, 1]:
//   [0]            bias
//   [1 .. Q]       term i pending: mentioned by the question and not yet searched
//   [Q+1 .. 2Q]    term i already searched
//   [2Q+1]         fraction of question-mentioned terms already searched
//   [2Q+2]         every question-mentioned term searched
//   [2Q+3]         any keyphrase observed
//   [2Q+4]         observed keyphrase count, capped at 4, /4
//   [2Q+5]         searches_so_far / max_search_turns
//   [2Q+6]         previous segment was an information injection
class FeatureMap {
 public:
  FeatureMap(std::vector<std::string> query_terms, int max_search_turns);

  int dimension() const { return 2 * static_cast<int>(query_terms_.size()) + 7; }
  std::vector<std::uint8_t> question_mentions(const std::string& question) const;
  std::vector<double> features(const std::vector<std::uint8_t>& mentions,
                               const RolloutObservation& obs) const;

  const std::vector<std::string>& query_terms() const { return query_terms_; }
  int max_search_turns() const { return max_search_turns_; }

 private:
  std::vector<std::string> query_terms_;
  int max_search_turns_;
};

class PolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// theta, row-major |actions| x feature_dim, double precision.
struct PolicyParams {
  int num_actions = 0;
  int feature_dim = 0;
  std::vector<double> theta;

  static PolicyParams zeros(int num_actions, int feature_dim);

  double& at(int action, int feature) {
    return theta[static_cast<std::size_t>(action) * feature_dim + feature];
  }
  double at(int action, int feature) const {
    return theta[static_cast<std::size_t>(action) * feature_dim + feature];
  }
  bool same_shape(const PolicyParams& other) const {
    return num_actions == other.num_actions && feature_dim == other.feature_dim;
  }
};

enum class SnapshotRole { Reference, Old };

struct PolicySnapshot {
  PolicyParams params;
  int step_taken = 0;
  SnapshotRole role = SnapshotRole::Reference;
};

PolicySnapshot snapshot(const PolicyParams& params, SnapshotRole role, int step_taken);

// theta * phi. Throws PolicyError on shape mismatch or non-finite output.
std::vector<double> logits(const PolicyParams& params, std::span<const double> features);

// softmax(logits / temperature); entries for disallowed actions are 0.
// `allowed` may be null (all actions allowed).
std::vector<double> action_probabilities(const PolicyParams& params,
                                         std::span<const double> features, double temperature,
                                         const std::vector<std::uint8_t>* allowed = nullptr);

struct SampledAction {
  int action = 0;
  double logprob = 0.0;  // natural log at the sampling temperature
};

SampledAction sample_action(const PolicyParams& params, std::span<const double> features,
                            double temperature, std::mt19937_64& rng,
                            const std::vector<std::uint8_t>* allowed = nullptr);

// Deterministic argmax of the (possibly masked) distribution; ties go to the
// lowest action id.
SampledAction greedy_action(const PolicyParams& params, std::span<const double> features,
                            double temperature,
                            const std::vector<std::uint8_t>* allowed = nullptr);

double logprob(const PolicyParams& params, std::span<const double> features, int action,
               double temperature);

// d log softmax / d theta: row a' gets (1[a'==a] - p(a')) * phi / temperature.
PolicyParams grad_logprob(const PolicyParams& params, std::span<const double> features, int action,
                          double temperature);

// Uniform double in [0, 1) with 53 random bits; avoids std::uniform_real_distribution
// so streams are identical across standard libraries.
double uniform_unit(std::mt19937_64& rng);

}  // namespace rarforge
