#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "rarforge/dataset.hpp"
#include "rarforge/protocol.hpp"

namespace rarforge {

struct AspectScore {
  std::string aspect_id;
  int raw = 0;  // 0, 1 or 2
};

struct RewardRecord {
  std::string trajectory_id;
  std::vector<AspectScore> aspect_scores;
  double normalized = 0.0;  // mean of raw/2, in [0, 1]
};

class ScoringError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Judge {
 public:
  virtual ~Judge() = default;
  // Exactly one score per aspect, in aspect order.
  virtual std::vector<AspectScore> score(const std::string& question,
                                         const std::string& answer_text,
                                         const std::vector<RubricAspect>& aspects,
                                         const std::string& narrative) const = 0;
};

// Per aspect: 2 if every keyphrase occurs in the answer (case-insensitive
// whole-token match, multi-word phrases must be contiguous), 1 if some but
// not all, 0 otherwise. The narrative is accepted for interface parity and
// ignored.
std::vector<AspectScore> score_synthetic(const std::string& question,
                                         const std::string& answer_text,
                                         const std::vector<RubricAspect>& aspects,
                                         const std::string& narrative);

// Stateless; safe for unrestricted concurrent use.
class SyntheticJudge final : public Judge {
 public:
  std::vector<AspectScore> score(const std::string& question, const std::string& answer_text,
                                 const std::vector<RubricAspect>& aspects,
                                 const std::string& narrative) const override;
};

// Mean of raw/2. Throws ScoringError on an empty list.
double normalize(const std::vector<AspectScore>& scores);

// A trajectory without an answer (truncated or malformed) scores 0 on every
// aspect. Judge failures propagate with the trajectory id attached.
RewardRecord reward_trajectory(const Trajectory& trajectory, const TrainingInstance& instance,
                               const Judge& judge);

}  // namespace rarforge
