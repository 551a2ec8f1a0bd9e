#include "rarforge/serialize.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rarforge {
namespace {

using nlohmann::json;

constexpr const char* kFormatTag = "rar-forge-policy-v1";

}  // namespace

std::string policy_to_json(const SavedPolicy& saved) {
  const json doc = {
      {"format", kFormatTag},
      {"num_actions", saved.params.num_actions},
      {"feature_dim", saved.params.feature_dim},
      {"theta", saved.params.theta},
      {"environment",
       {{"query_terms", saved.environment.query_terms},
        {"slots", saved.environment.slots},
        {"max_search_turns", saved.environment.max_search_turns}}},
  };
  return doc.dump(2);
}

SavedPolicy policy_from_json(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("policy file is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != kFormatTag) {
      throw ParseError("unrecognized policy file format");
    }
    SavedPolicy saved;
    saved.params.num_actions = doc.at("num_actions").get<int>();
    saved.params.feature_dim = doc.at("feature_dim").get<int>();
    saved.params.theta = doc.at("theta").get<std::vector<double>>();
    const json& env = doc.at("environment");
    saved.environment.query_terms = env.at("query_terms").get<std::vector<std::string>>();
    saved.environment.slots = env.at("slots").get<std::vector<std::string>>();
    saved.environment.max_search_turns = env.at("max_search_turns").get<int>();
    const auto expected = static_cast<std::size_t>(saved.params.num_actions) *
                          static_cast<std::size_t>(saved.params.feature_dim);
    if (saved.params.theta.size() != expected) {
      throw ParseError("policy theta size does not match its declared shape");
    }
    return saved;
  } catch (const json::exception& e) {
    throw ParseError(std::string("policy file malformed: ") + e.what());
  }
}

void save_policy(const std::filesystem::path& path, const SavedPolicy& saved) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open policy file for writing: " + path.string());
  out << policy_to_json(saved) << '\n';
}

SavedPolicy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open policy file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return policy_from_json(buffer.str());
}

}  // namespace rarforge
