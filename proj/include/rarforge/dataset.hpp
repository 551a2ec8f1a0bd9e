#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rarforge {

struct RubricAspect {
  std::string id;
  std::string text;
  std::vector<std::string> keyphrases;  // evidence phrases the synthetic judge matches
};

struct UserDocument {
  std::string id;
  std::string text;
};

struct UserProfile {
  std::string user_id;
  std::vector<UserDocument> documents;
};

struct TrainingInstance {
  std::string id;
  std::string question;
  std::string narrative;
  std::vector<RubricAspect> aspects;
  UserProfile profile;
  std::optional<std::string> category;  // free-form passthrough
};

struct AttributeSpec {
  std::string name;
  std::vector<std::string> values;
};

struct SyntheticWorldConfig {
  int num_users = 16;
  int attributes_per_user = 2;
  std::vector<AttributeSpec> attribute_schema;  // empty selects default_attribute_schema()
  int distractor_docs_per_user = 4;
  int aspects_per_question = 2;
  std::uint64_t seed = 0;
};

std::vector<AttributeSpec> default_attribute_schema();

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws ValidationError naming the instance id on any invariant violation.
void validate_instance(const TrainingInstance& instance);

// One JSONL record per line:
//   {"id", "question", "narrative", "aspects": [{"id","text","keyphrases"}],
//    "profile": {"user_id", "documents": [{"id","text"}]}}
// Unknown fields are ignored with a warning on stderr.
std::vector<TrainingInstance> load_dataset(const std::filesystem::path& path);

void save_dataset(const std::filesystem::path& path, const std::vector<TrainingInstance>& instances);

// Deterministic per config.seed. Every aspect keyphrase appears in profile
// documents and never in the question, so full reward requires retrieval.
std::vector<TrainingInstance> generate_synthetic(const SyntheticWorldConfig& config);

// Shuffles by seed, then takes floor(n * train_fraction) for train, keeping
// at least one instance on the eval side.
std::pair<std::vector<TrainingInstance>, std::vector<TrainingInstance>> split(
    const std::vector<TrainingInstance>& instances, double train_fraction, std::uint64_t seed);

}  // namespace rarforge
