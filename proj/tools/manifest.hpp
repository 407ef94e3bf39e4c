// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "petsynth/error.hpp"

namespace petsynth::cli {

inline std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%FT%TZ", &tm);
  return buf;
}

// Every run directory gets one of these; together with the referenced config
// snapshot it pins the run down to the byte.
class RunManifest {
 public:
  RunManifest(const std::string& command, const std::string& version)
      : started_(iso_now()) {
    j_["tool"] = "petsynth";
    j_["version"] = version;
    j_["command"] = command;
  }

  void set_seed(std::uint64_t seed) { j_["seed"] = seed; }
  void set_config_json(const std::string& snapshot) {
    j_["config"] = nlohmann::json::parse(snapshot);
  }
  void set_overrides(const nlohmann::json& overrides) { j_["overrides"] = overrides; }
  void add_artifact(const std::string& path) { artifacts_.push_back(path); }
  void set(const std::string& key, const nlohmann::json& value) { j_[key] = value; }

  void write(const std::string& path) {
    j_["artifacts"] = artifacts_;
    j_["started"] = started_;
    j_["finished"] = iso_now();
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), ErrorCode::IoError, "cannot write manifest: " + path);
    out << j_.dump(2) << "\n";
    require(out.good(), ErrorCode::IoError, "manifest write failed: " + path);
  }

 private:
  nlohmann::json j_;
  std::vector<std::string> artifacts_;
  std::string started_;
};

}  // namespace petsynth::cli
