#include "rarforge/remote.hpp"

#include <cmath>

#include <httplib.h>
#include <json.hpp>

namespace rarforge {
namespace {

using nlohmann::json;

httplib::Client make_client(const std::string& host, int port, double timeout_seconds) {
  httplib::Client client(host, port);
  const auto secs = static_cast<time_t>(timeout_seconds);
  const auto usecs = static_cast<time_t>((timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  return client;
}

}  // namespace

ExternalJudge::ExternalJudge(std::string host, int port, double timeout_seconds)
    : host_(std::move(host)), port_(port), timeout_seconds_(timeout_seconds) {}

std::vector<AspectScore> ExternalJudge::score(const std::string& question,
                                              const std::string& answer_text,
                                              const std::vector<RubricAspect>& aspects,
                                              const std::string& narrative) const {
  json aspect_list = json::array();
  for (const auto& a : aspects) aspect_list.push_back({{"id", a.id}, {"text", a.text}});
  const json request = {{"question", question},
                        {"answer", answer_text},
                        {"narrative", narrative},
                        {"aspects", aspect_list}};

  auto client = make_client(host_, port_, timeout_seconds_);
  const auto result = client.Post("/judge", request.dump(), "application/json");
  if (!result) {
    throw ScoringError("judge request failed: " + httplib::to_string(result.error()));
  }
  if (result->status < 200 || result->status >= 300) {
    throw ScoringError("judge returned HTTP " + std::to_string(result->status));
  }

  json body;
  try {
    body = json::parse(result->body);
  } catch (const json::exception& e) {
    throw ScoringError(std::string("judge response is not valid JSON: ") + e.what());
  }
  if (!body.contains("scores") || !body["scores"].is_array() ||
      body["scores"].size() != aspects.size()) {
    throw ScoringError("judge response must carry one score per aspect");
  }
  std::vector<AspectScore> scores;
  scores.reserve(aspects.size());
  for (std::size_t i = 0; i < aspects.size(); ++i) {
    const json& entry = body["scores"][i];
    if (!entry.contains("id") || !entry.contains("raw")) {
      throw ScoringError("judge score entry missing id or raw");
    }
    if (entry["id"].get<std::string>() != aspects[i].id) {
      throw ScoringError("judge score order mismatch at aspect \"" + aspects[i].id + "\"");
    }
    const int raw = entry["raw"].get<int>();
    if (raw < 0 || raw > 2) {
      throw ScoringError("judge raw score out of range: " + std::to_string(raw));
    }
    scores.push_back({aspects[i].id, raw});
  }
  return scores;
}

GeneratedSteps map_generation(const GenerationResponse& response, int start_step) {
  GeneratedSteps out;
  out.segments = parse(response.text);
  for (const auto& segment : out.segments) {
    if (segment.kind == SegmentKind::Information) {
      throw ProtocolError("generation service emitted an information segment");
    }
  }
  out.actions.reserve(response.logprobs.size());
  int step = start_step;
  for (double lp : response.logprobs) {
    if (!std::isfinite(lp) || lp > 0.0) {
      throw ProtocolError("generation logprob must be finite and <= 0");
    }
    out.actions.push_back({step++, kExternalToken, lp, true, {}});
  }
  return out;
}

GenerationClient::GenerationClient(std::string host, int port, double timeout_seconds)
    : host_(std::move(host)), port_(port), timeout_seconds_(timeout_seconds) {}

GenerationResponse GenerationClient::generate(const GenerationRequest& request) const {
  const json body = {{"prompt", request.prompt},
                     {"stop", request.stop},
                     {"max_tokens", request.max_tokens},
                     {"temperature", request.temperature}};
  auto client = make_client(host_, port_, timeout_seconds_);
  const auto result = client.Post("/generate", body.dump(), "application/json");
  if (!result) {
    throw ProtocolError("generate request failed: " + httplib::to_string(result.error()));
  }
  if (result->status < 200 || result->status >= 300) {
    throw ProtocolError("generate returned HTTP " + std::to_string(result->status));
  }
  json parsed;
  try {
    parsed = json::parse(result->body);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("generate response is not valid JSON: ") + e.what());
  }
  if (!parsed.contains("text") || !parsed.contains("logprobs")) {
    throw ProtocolError("generate response missing text or logprobs");
  }
  GenerationResponse response;
  response.text = parsed["text"].get<std::string>();
  response.logprobs = parsed["logprobs"].get<std::vector<double>>();
  return response;
}

}  // namespace rarforge
