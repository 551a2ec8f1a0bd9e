#pragma once

#include <string>
#include <vector>

#include "rarforge/protocol.hpp"
#include "rarforge/reward.hpp"

namespace rarforge {

// HTTP judge adapter. POST {base_url}/judge with
//   {"question", "answer", "narrative", "aspects": [{"id", "text"}]}
// and expects {"scores": [{"id", "raw"}]} with one entry per aspect, in
// order. Timeouts, non-2xx responses, and malformed bodies raise
// ScoringError — a failed judge call is never silently a zero reward.
class ExternalJudge final : public Judge {
 public:
  ExternalJudge(std::string host, int port, double timeout_seconds = 5.0);

  std::vector<AspectScore> score(const std::string& question, const std::string& answer_text,
                                 const std::vector<RubricAspect>& aspects,
                                 const std::string& narrative) const override;

 private:
  std::string host_;
  int port_;
  double timeout_seconds_;
};

struct GenerationRequest {
  std::string prompt;
  std::vector<std::string> stop;
  int max_tokens = 512;
  double temperature = 1.0;
};

struct GenerationResponse {
  std::string text;
  std::vector<double> logprobs;  // one per generated token
};

struct GeneratedSteps {
  std::vector<Segment> segments;
  std::vector<ActionRecord> actions;  // one per token, loss_mask true
};

// Maps a generation response to segments plus token-level action records
// (action_id = kExternalToken). The text must parse under the tag grammar
// and may not contain information segments — those are environment-injected.
GeneratedSteps map_generation(const GenerationResponse& response, int start_step);

// POST {base_url}/generate with {"prompt", "stop", "max_tokens", "temperature"},
// expecting {"text", "logprobs"}.
class GenerationClient {
 public:
  GenerationClient(std::string host, int port, double timeout_seconds = 30.0);

  GenerationResponse generate(const GenerationRequest& request) const;

 private:
  std::string host_;
  int port_;
  double timeout_seconds_;
};

}  // namespace rarforge
