#include "rarforge/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "rarforge/text.hpp"

namespace rarforge {
namespace {

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> words = {
      "a", "an", "and", "are", "be", "for", "from", "has", "in", "is", "it", "its",
      "of", "on", "or", "s", "that", "the", "their", "this", "to", "user", "users",
      "what", "which", "who", "with", "mentions", "mention", "covers", "addresses"};
  return words;
}

void check_shapes(const PolicyParams& params, std::span<const double> features) {
  if (params.num_actions < 1 || params.feature_dim < 1) {
    throw PolicyError("policy parameters are empty");
  }
  if (static_cast<int>(features.size()) != params.feature_dim) {
    throw PolicyError("feature dimension mismatch: got " + std::to_string(features.size()) +
                      ", expected " + std::to_string(params.feature_dim));
  }
  if (params.theta.size() !=
      static_cast<std::size_t>(params.num_actions) * static_cast<std::size_t>(params.feature_dim)) {
    throw PolicyError("theta storage does not match its declared shape");
  }
}

// log-softmax of logits/temperature, restricted to allowed actions.
std::vector<double> log_probabilities(const PolicyParams& params, std::span<const double> features,
                                      double temperature,
                                      const std::vector<std::uint8_t>* allowed) {
  if (!(temperature > 0.0)) throw PolicyError("temperature must be positive");
  if (allowed && static_cast<int>(allowed->size()) != params.num_actions) {
    throw PolicyError("action mask size mismatch");
  }
  const std::vector<double> z = logits(params, features);

  double max_z = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < params.num_actions; ++a) {
    if (allowed && !(*allowed)[static_cast<std::size_t>(a)]) continue;
    max_z = std::max(max_z, z[static_cast<std::size_t>(a)] / temperature);
  }
  if (!std::isfinite(max_z)) throw PolicyError("no allowed actions");

  double sum = 0.0;
  std::vector<double> scaled(z.size(), -std::numeric_limits<double>::infinity());
  for (int a = 0; a < params.num_actions; ++a) {
    if (allowed && !(*allowed)[static_cast<std::size_t>(a)]) continue;
    const double s = z[static_cast<std::size_t>(a)] / temperature - max_z;
    scaled[static_cast<std::size_t>(a)] = s;
    sum += std::exp(s);
  }
  const double log_sum = std::log(sum);
  for (double& s : scaled) s -= log_sum;  // -inf stays -inf for masked actions
  return scaled;
}

}  // namespace

ActionVocabulary ActionVocabulary::from_terms(std::vector<std::string> query_terms) {
  ActionVocabulary vocab;
  vocab.query_terms_ = std::move(query_terms);
  vocab.actions_.push_back({MacroAction::Kind::Think, 0});
  for (int i = 0; i < static_cast<int>(vocab.query_terms_.size()); ++i) {
    vocab.actions_.push_back({MacroAction::Kind::Search, i});
  }
  vocab.actions_.push_back({MacroAction::Kind::Answer, kAnswerGeneric});
  vocab.actions_.push_back({MacroAction::Kind::Answer, kAnswerObserved});
  return vocab;
}

ActionVocabulary ActionVocabulary::build(const std::vector<TrainingInstance>& instances,
                                         int max_query_terms) {
  std::vector<std::string> terms;
  std::unordered_set<std::string> seen;
  for (const auto& inst : instances) {
    for (const auto& aspect : inst.aspects) {
      for (const auto& token : tokenize(aspect.text)) {
        if (stopwords().count(token)) continue;
        if (static_cast<int>(terms.size()) >= max_query_terms) break;
        if (seen.insert(token).second) terms.push_back(token);
      }
    }
  }
  return from_terms(std::move(terms));
}

FeatureMap::FeatureMap(std::vector<std::string> query_terms, int max_search_turns)
    : query_terms_(std::move(query_terms)), max_search_turns_(max_search_turns) {}

std::vector<std::uint8_t> FeatureMap::question_mentions(const std::string& question) const {
  const auto tokens = tokenize(question);
  std::vector<std::uint8_t> mentions(query_terms_.size(), 0);
  for (std::size_t i = 0; i < query_terms_.size(); ++i) {
    mentions[i] = contains_phrase(tokens, query_terms_[i]) ? 1 : 0;
  }
  return mentions;
}

std::vector<double> FeatureMap::features(const std::vector<std::uint8_t>& mentions,
                                         const RolloutObservation& obs) const {
  const std::size_t q = query_terms_.size();
  if (mentions.size() != q || obs.searched.size() != q) {
    throw PolicyError("observation does not match the query vocabulary");
  }
  std::vector<double> phi(dimension(), 0.0);
  phi[0] = 1.0;
  int mentioned = 0;
  int mentioned_searched = 0;
  for (std::size_t i = 0; i < q; ++i) {
    phi[1 + i] = (mentions[i] && !obs.searched[i]) ? 1.0 : 0.0;
    phi[1 + q + i] = obs.searched[i] ? 1.0 : 0.0;
    if (mentions[i]) {
      ++mentioned;
      if (obs.searched[i]) ++mentioned_searched;
    }
  }
  phi[1 + 2 * q] = mentioned > 0 ? static_cast<double>(mentioned_searched) / mentioned : 0.0;
  phi[2 + 2 * q] = (mentioned > 0 && mentioned_searched == mentioned) ? 1.0 : 0.0;
  phi[3 + 2 * q] = obs.observed_keyphrases.empty() ? 0.0 : 1.0;
  phi[4 + 2 * q] = std::min(1.0, static_cast<double>(obs.observed_keyphrases.size()) / 4.0);
  phi[5 + 2 * q] = max_search_turns_ > 0
                       ? static_cast<double>(obs.searches_so_far) / max_search_turns_
                       : 0.0;
  phi[6 + 2 * q] = obs.last_was_information ? 1.0 : 0.0;
  return phi;
}

PolicyParams PolicyParams::zeros(int num_actions, int feature_dim) {
  if (num_actions < 1 || feature_dim < 1) throw PolicyError("policy shape must be positive");
  PolicyParams p;
  p.num_actions = num_actions;
  p.feature_dim = feature_dim;
  p.theta.assign(static_cast<std::size_t>(num_actions) * static_cast<std::size_t>(feature_dim),
                 0.0);
  return p;
}

PolicySnapshot snapshot(const PolicyParams& params, SnapshotRole role, int step_taken) {
  return PolicySnapshot{params, step_taken, role};
}

std::vector<double> logits(const PolicyParams& params, std::span<const double> features) {
  check_shapes(params, features);
  std::vector<double> out(static_cast<std::size_t>(params.num_actions), 0.0);
  for (int a = 0; a < params.num_actions; ++a) {
    double acc = 0.0;
    const double* row = params.theta.data() +
                        static_cast<std::size_t>(a) * static_cast<std::size_t>(params.feature_dim);
    for (int f = 0; f < params.feature_dim; ++f) acc += row[f] * features[static_cast<std::size_t>(f)];
    if (!std::isfinite(acc)) throw PolicyError("non-finite logit for action " + std::to_string(a));
    out[static_cast<std::size_t>(a)] = acc;
  }
  return out;
}

std::vector<double> action_probabilities(const PolicyParams& params,
                                         std::span<const double> features, double temperature,
                                         const std::vector<std::uint8_t>* allowed) {
  std::vector<double> logp = log_probabilities(params, features, temperature, allowed);
  for (double& v : logp) v = std::isfinite(v) ? std::exp(v) : 0.0;
  return logp;
}

double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

SampledAction sample_action(const PolicyParams& params, std::span<const double> features,
                            double temperature, std::mt19937_64& rng,
                            const std::vector<std::uint8_t>* allowed) {
  const std::vector<double> logp = log_probabilities(params, features, temperature, allowed);
  const double u = uniform_unit(rng);
  double cumulative = 0.0;
  int last_allowed = -1;
  for (int a = 0; a < params.num_actions; ++a) {
    const double lp = logp[static_cast<std::size_t>(a)];
    if (!std::isfinite(lp)) continue;
    last_allowed = a;
    cumulative += std::exp(lp);
    if (u < cumulative) return {a, lp};
  }
  // Rounding can leave cumulative marginally below 1; take the last allowed action.
  return {last_allowed, logp[static_cast<std::size_t>(last_allowed)]};
}

SampledAction greedy_action(const PolicyParams& params, std::span<const double> features,
                            double temperature, const std::vector<std::uint8_t>* allowed) {
  const std::vector<double> logp = log_probabilities(params, features, temperature, allowed);
  int best = -1;
  for (int a = 0; a < params.num_actions; ++a) {
    const double lp = logp[static_cast<std::size_t>(a)];
    if (!std::isfinite(lp)) continue;
    if (best < 0 || lp > logp[static_cast<std::size_t>(best)]) best = a;
  }
  if (best < 0) throw PolicyError("no allowed actions");
  return {best, logp[static_cast<std::size_t>(best)]};
}

double logprob(const PolicyParams& params, std::span<const double> features, int action,
               double temperature) {
  if (action < 0 || action >= params.num_actions) {
    throw PolicyError("action id out of range: " + std::to_string(action));
  }
  return log_probabilities(params, features, temperature, nullptr)[static_cast<std::size_t>(action)];
}

PolicyParams grad_logprob(const PolicyParams& params, std::span<const double> features, int action,
                          double temperature) {
  if (action < 0 || action >= params.num_actions) {
    throw PolicyError("action id out of range: " + std::to_string(action));
  }
  const std::vector<double> p = action_probabilities(params, features, temperature, nullptr);
  PolicyParams grad = PolicyParams::zeros(params.num_actions, params.feature_dim);
  for (int a = 0; a < params.num_actions; ++a) {
    const double coeff = ((a == action ? 1.0 : 0.0) - p[static_cast<std::size_t>(a)]) / temperature;
    for (int f = 0; f < params.feature_dim; ++f) {
      grad.at(a, f) = coeff * features[static_cast<std::size_t>(f)];
    }
  }
  return grad;
}

}  // namespace rarforge
