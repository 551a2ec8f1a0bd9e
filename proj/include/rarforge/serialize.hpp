#pragma once

#include <filesystem>
#include <string>

#include "rarforge/policy.hpp"
#include "rarforge/trainer.hpp"

namespace rarforge {

struct SavedPolicy {
  PolicyParams params;
  EnvironmentSpec environment;
};

std::string policy_to_json(const SavedPolicy& saved);
SavedPolicy policy_from_json(const std::string& json_text);

void save_policy(const std::filesystem::path& path, const SavedPolicy& saved);
SavedPolicy load_policy(const std::filesystem::path& path);

}  // namespace rarforge
