#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rarforge {

enum class SegmentKind { Think, Search, Information, Answer };

const char* tag_name(SegmentKind kind);

struct Segment {
  SegmentKind kind = SegmentKind::Think;
  std::string text;
};

// action_id markers for non-vocabulary steps.
inline constexpr int kInjectedContent = -1;  // environment-provided information
inline constexpr int kExternalToken = -2;    // token from an external generation service

struct ActionRecord {
  int step_index = 0;
  int action_id = kInjectedContent;
  std::optional<double> logprob_old;  // present iff loss_mask
  bool loss_mask = false;
  // Policy-state features at sampling time; empty for injected or external steps.
  // Needed so the loss can re-evaluate current-policy log-probabilities.
  std::vector<double> features;
};

struct Trajectory {
  std::string instance_id;
  std::vector<Segment> segments;
  std::vector<ActionRecord> actions;
  std::optional<std::string> answer_text;
  int retrieval_count = 0;  // delivered information segments
  bool truncated = false;
  bool personalized = true;
};

struct ProtocolConfig {
  int max_steps = 2048;
  int max_search_turns = 4;

  void validate() const;  // max_steps >= 16, max_search_turns >= 1
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TagParseError : public std::runtime_error {
 public:
  TagParseError(const std::string& message, std::size_t offset);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

enum class RolloutPhase { AwaitingPolicy, AwaitingInformation, Terminal };

// Transition table:
//   AwaitingPolicy      + Think       -> AwaitingPolicy
//   AwaitingPolicy      + Search      -> AwaitingInformation (consumes one search turn)
//   AwaitingInformation + Information -> AwaitingPolicy
//   AwaitingPolicy      + Answer      -> Terminal (complete)
//   budget overflow at any point      -> Terminal with truncated=true
//
// Rejected with ProtocolError (the six illegal event classes):
//   1. Information while AwaitingPolicy
//   2. Think while AwaitingInformation
//   3. Search while AwaitingInformation
//   4. Answer while AwaitingInformation
//   5. Search once max_search_turns is exhausted ("search budget exhausted")
//   6. Search with an empty query
// Applying an event to a Terminal state is a precondition violation and also throws.
class RolloutState {
 public:
  explicit RolloutState(ProtocolConfig config);

  // Applies one event. `cost` is the number of budget steps the event carries
  // (one for macro actions, token count for token-level adapters). Returns the
  // number of steps actually consumed; fewer than `cost` means the budget cut
  // the event and the state is now Terminal with truncated=true.
  int apply(const Segment& segment, int cost = 1);

  RolloutPhase phase() const { return phase_; }
  int steps_used() const { return steps_used_; }
  int search_turns() const { return search_turns_; }
  bool truncated() const { return truncated_; }
  bool completed() const { return phase_ == RolloutPhase::Terminal && !truncated_; }
  const ProtocolConfig& config() const { return config_; }

 private:
  ProtocolConfig config_;
  RolloutPhase phase_ = RolloutPhase::AwaitingPolicy;
  int steps_used_ = 0;
  int search_turns_ = 0;
  bool truncated_ = false;
};

// The rollout prompt with {question} substituted. Byte-stable.
std::string render_prompt(const std::string& question);

// Lexical split on the four tag pairs. Whitespace between segments is
// ignored; anything else outside tags, an unknown tag, or an unclosed tag
// is a TagParseError carrying the byte offset.
std::vector<Segment> parse(const std::string& text);

// Canonical serialization: `<tag>text</tag>` segments joined by single
// newlines. Throws ProtocolError naming the first offending index if the
// sequence is illegal under the transition table (search-turn budget is a
// runtime concern and is not checked here).
std::string render_segments(const std::vector<Segment>& segments);

// Index of the first segment violating the transition table, or -1.
// Incomplete sequences (no trailing Answer) are fine; rendering is also
// used for truncated trajectories.
int first_illegal_segment(const std::vector<Segment>& segments);

}  // namespace rarforge
