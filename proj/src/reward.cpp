#include "rarforge/reward.hpp"

#include "rarforge/text.hpp"

namespace rarforge {

std::vector<AspectScore> score_synthetic(const std::string& question,
                                         const std::string& answer_text,
                                         const std::vector<RubricAspect>& aspects,
                                         const std::string& narrative) {
  (void)question;
  (void)narrative;
  if (aspects.empty()) throw ScoringError("cannot score an instance with no aspects");
  const std::vector<std::string> answer_tokens = tokenize(answer_text);
  std::vector<AspectScore> scores;
  scores.reserve(aspects.size());
  for (const auto& aspect : aspects) {
    std::size_t hits = 0;
    for (const auto& phrase : aspect.keyphrases) {
      if (contains_phrase(answer_tokens, phrase)) ++hits;
    }
    int raw = 0;
    if (!aspect.keyphrases.empty()) {
      if (hits == aspect.keyphrases.size()) {
        raw = 2;
      } else if (hits > 0) {
        raw = 1;
      }
    }
    scores.push_back({aspect.id, raw});
  }
  return scores;
}

std::vector<AspectScore> SyntheticJudge::score(const std::string& question,
                                               const std::string& answer_text,
                                               const std::vector<RubricAspect>& aspects,
                                               const std::string& narrative) const {
  return score_synthetic(question, answer_text, aspects, narrative);
}

double normalize(const std::vector<AspectScore>& scores) {
  if (scores.empty()) throw ScoringError("cannot normalize an empty score list");
  double sum = 0.0;
  for (const auto& s : scores) sum += static_cast<double>(s.raw) / 2.0;
  return sum / static_cast<double>(scores.size());
}

RewardRecord reward_trajectory(const Trajectory& trajectory, const TrainingInstance& instance,
                               const Judge& judge) {
  RewardRecord record;
  record.trajectory_id = trajectory.instance_id;
  if (!trajectory.answer_text.has_value()) {
    for (const auto& aspect : instance.aspects) record.aspect_scores.push_back({aspect.id, 0});
    record.normalized = 0.0;
    return record;
  }
  try {
    record.aspect_scores = judge.score(instance.question, *trajectory.answer_text,
                                       instance.aspects, instance.narrative);
  } catch (const std::exception& e) {
    throw ScoringError("judge failed for trajectory \"" + trajectory.instance_id +
                       "\": " + e.what());
  }
  if (record.aspect_scores.size() != instance.aspects.size()) {
    throw ScoringError("judge returned " + std::to_string(record.aspect_scores.size()) +
                       " scores for " + std::to_string(instance.aspects.size()) +
                       " aspects (trajectory \"" + trajectory.instance_id + "\")");
  }
  record.normalized = normalize(record.aspect_scores);
  return record;
}

}  // namespace rarforge
