#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "rarforge/dataset.hpp"

namespace rarforge::testing {

// Self-deleting scratch directory.
class TempDir {
 public:
  TempDir() {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("rarforge_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline TrainingInstance make_instance(std::string id = "inst-1") {
  TrainingInstance inst;
  inst.id = std::move(id);
  inst.question = "Planning ahead for next season, what would suit someone with my occupation and hobby?";
  inst.narrative = "An answer tuned to my occupation and hobby matters to me.";
  inst.aspects = {{"a0", "occupation", {"florist"}}, {"a1", "hobby", {"chess"}}};
  inst.profile.user_id = "user-1";
  inst.profile.documents = {{"d0", "My earlier question about diet led nowhere in particular."},
                            {"d1", "My occupation: florist."},
                            {"d2", "My hobby: chess."},
                            {"d3", "My earlier question about city led nowhere in particular."}};
  return inst;
}

inline double rand_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double rand_range(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * rand_unit(rng);
}

}  // namespace rarforge::testing
