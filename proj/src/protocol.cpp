#include "rarforge/protocol.hpp"

#include <array>
#include <cctype>
#include <string_view>

namespace rarforge {
namespace {

constexpr std::string_view kPromptPrefix =
    "Your task is to generate a personalized response to the user's question. To do this, you "
    "can perform a series of actions, including thinking in <think> and </think> tags, searching "
    "for information from the user past interactions with the system (i.e., previous asked "
    "questions and the detailed information need) by generating a non-empty search query in "
    "<search> and </search> tags, and finally providing the answer in <answer> and </answer> "
    "tags. The retrieved information from user history will be provided to you inside "
    "<information> and </information> tags. You need to first think about the question and how "
    "to generate a personalized answer for the user. In this thinking process, you should try to "
    "understand the user's preferences and needs based on its past interactions with the system. "
    "The thinking process should be inside <think> and </think> tags. If you need to search for "
    "information about the user from its history, you can do this by generating a non-empty "
    "search query inside <search> and </search> tags. You can use this information in thinking "
    "process and answer generation. Nothing should be outside the mentioned tags except the "
    "initial question. Now, answer the following question: ";

constexpr std::array<std::pair<std::string_view, SegmentKind>, 4> kTags = {{
    {"think", SegmentKind::Think},
    {"search", SegmentKind::Search},
    {"information", SegmentKind::Information},
    {"answer", SegmentKind::Answer},
}};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

const char* tag_name(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::Think: return "think";
    case SegmentKind::Search: return "search";
    case SegmentKind::Information: return "information";
    case SegmentKind::Answer: return "answer";
  }
  return "?";
}

void ProtocolConfig::validate() const {
  if (max_steps < 16) throw ProtocolError("max_steps must be at least 16");
  if (max_search_turns < 1) throw ProtocolError("max_search_turns must be at least 1");
}

TagParseError::TagParseError(const std::string& message, std::size_t offset)
    : std::runtime_error(message + " at offset " + std::to_string(offset)), offset_(offset) {}

RolloutState::RolloutState(ProtocolConfig config) : config_(config) { config_.validate(); }

int RolloutState::apply(const Segment& segment, int cost) {
  if (phase_ == RolloutPhase::Terminal) {
    throw ProtocolError("event applied to a terminal rollout");
  }
  if (cost < 1) throw ProtocolError("event cost must be positive");

  switch (segment.kind) {
    case SegmentKind::Think:
      if (phase_ != RolloutPhase::AwaitingPolicy) {
        throw ProtocolError("think while awaiting information");
      }
      break;
    case SegmentKind::Search:
      if (phase_ != RolloutPhase::AwaitingPolicy) {
        throw ProtocolError("search while awaiting information");
      }
      if (segment.text.empty()) throw ProtocolError("empty search query");
      if (search_turns_ >= config_.max_search_turns) {
        throw ProtocolError("search budget exhausted");
      }
      break;
    case SegmentKind::Information:
      if (phase_ != RolloutPhase::AwaitingInformation) {
        throw ProtocolError("information while awaiting policy");
      }
      break;
    case SegmentKind::Answer:
      if (phase_ != RolloutPhase::AwaitingPolicy) {
        throw ProtocolError("answer while awaiting information");
      }
      break;
  }

  const int remaining = config_.max_steps - steps_used_;
  const int consumed = cost <= remaining ? cost : remaining;
  steps_used_ += consumed;
  if (consumed < cost) {
    truncated_ = true;
    phase_ = RolloutPhase::Terminal;
    return consumed;
  }

  switch (segment.kind) {
    case SegmentKind::Think:
      break;
    case SegmentKind::Search:
      ++search_turns_;
      phase_ = RolloutPhase::AwaitingInformation;
      break;
    case SegmentKind::Information:
      phase_ = RolloutPhase::AwaitingPolicy;
      break;
    case SegmentKind::Answer:
      phase_ = RolloutPhase::Terminal;
      break;
  }
  if (phase_ != RolloutPhase::Terminal && steps_used_ >= config_.max_steps) {
    truncated_ = true;
    phase_ = RolloutPhase::Terminal;
  }
  return consumed;
}

std::string render_prompt(const std::string& question) {
  if (question.empty()) throw ProtocolError("question must be non-empty");
  std::string prompt(kPromptPrefix);
  prompt += question;
  return prompt;
}

std::vector<Segment> parse(const std::string& text) {
  std::vector<Segment> segments;
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (is_space(text[pos])) {
      ++pos;
      continue;
    }
    const std::size_t open_at = pos;
    if (text[pos] != '<') {
      throw TagParseError("non-whitespace text outside tags", open_at);
    }
    const std::size_t name_end = text.find('>', pos + 1);
    if (name_end == std::string::npos) {
      throw TagParseError("unclosed tag", open_at);
    }
    const std::string_view name{text.data() + pos + 1, name_end - pos - 1};
    if (!name.empty() && name.front() == '/') {
      throw TagParseError("unexpected closing tag", open_at);
    }
    SegmentKind kind{};
    bool known = false;
    for (const auto& [tag, k] : kTags) {
      if (name == tag) {
        kind = k;
        known = true;
        break;
      }
    }
    if (!known) {
      throw TagParseError("unknown tag <" + std::string(name) + ">", open_at);
    }
    const std::string close = "</" + std::string(name) + ">";
    const std::size_t content_start = name_end + 1;
    const std::size_t close_at = text.find(close, content_start);
    if (close_at == std::string::npos) {
      throw TagParseError("unclosed tag", open_at);
    }
    segments.push_back({kind, text.substr(content_start, close_at - content_start)});
    pos = close_at + close.size();
  }
  return segments;
}

int first_illegal_segment(const std::vector<Segment>& segments) {
  RolloutPhase phase = RolloutPhase::AwaitingPolicy;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Segment& s = segments[i];
    switch (s.kind) {
      case SegmentKind::Think:
        if (phase != RolloutPhase::AwaitingPolicy) return static_cast<int>(i);
        break;
      case SegmentKind::Search:
        if (phase != RolloutPhase::AwaitingPolicy || s.text.empty()) return static_cast<int>(i);
        phase = RolloutPhase::AwaitingInformation;
        break;
      case SegmentKind::Information:
        if (phase != RolloutPhase::AwaitingInformation) return static_cast<int>(i);
        phase = RolloutPhase::AwaitingPolicy;
        break;
      case SegmentKind::Answer:
        if (phase != RolloutPhase::AwaitingPolicy) return static_cast<int>(i);
        phase = RolloutPhase::Terminal;
        break;
    }
    if (phase == RolloutPhase::Terminal && i + 1 < segments.size()) {
      return static_cast<int>(i + 1);
    }
  }
  return -1;
}

std::string render_segments(const std::vector<Segment>& segments) {
  const int bad = first_illegal_segment(segments);
  if (bad >= 0) {
    throw ProtocolError("illegal segment sequence at index " + std::to_string(bad));
  }
  std::string out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (i > 0) out.push_back('\n');
    const char* tag = tag_name(segments[i].kind);
    out.push_back('<');
    out += tag;
    out.push_back('>');
    out += segments[i].text;
    out += "</";
    out += tag;
    out.push_back('>');
  }
  return out;
}

}  // namespace rarforge
