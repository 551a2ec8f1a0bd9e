#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rarforge/protocol.hpp"
#include "rarforge/reward.hpp"

namespace rarforge {

struct RolloutRecord {
  Trajectory trajectory;
  RewardRecord reward;
};

struct AdvantageVector {
  std::vector<double> values;  // one per personalized trajectory
  bool degenerate = false;     // std was zero; all values forced to 0
};

// The (r_1..r_G, r_no-per) ensemble for one instance. `baseline` is absent
// when baseline sampling is disabled.
struct GroupRollout {
  std::string instance_id;
  std::vector<RolloutRecord> personalized;
  std::optional<RolloutRecord> baseline;
  AdvantageVector advantages;
};

}  // namespace rarforge
