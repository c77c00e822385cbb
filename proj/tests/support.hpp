#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

#include "sctsim/persona.hpp"

namespace sctsim::testing {

inline const std::filesystem::path kDataDir = SCTSIM_DATA_DIR;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("sctsim_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary);
  out << body;
}

inline Json profile_json(const std::string& id) {
  return {{"agent_id", id},
          {"name", "Test Person"},
          {"age", 40},
          {"job_title", "analyst"},
          {"ideology", "moderate"},
          {"physical_characteristics", "average height"},
          {"personality", "calm"},
          {"background", "grew up in a small town"},
          {"job_duties", "writes reports"},
          {"hobbies", "hiking"},
          {"concerns", "cost of living"}};
}

/// Balanced synthetic dataset: `n` questions dealt round-robin over the four
/// categories, two dimensions per category.
inline Json synthetic_dataset(const std::string& id, std::size_t n) {
  Json factors = Json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const Category c = kAllCategories[i % 4];
    factors.push_back({{"question_id", "q" + std::to_string(i)},
                       {"category", std::string(to_string(c))},
                       {"dimension", std::string(to_string(c)) + "_dim" + std::to_string((i / 4) % 2)},
                       {"question", "Question number " + std::to_string(i) + " about topic " +
                                        std::to_string(i % 17)},
                       {"answer", "Answer " + std::to_string(i)}});
  }
  return {{"profile", profile_json(id)}, {"factors", factors}};
}

}  // namespace sctsim::testing
