#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "nbe/estimator.hpp"
#include "nbe/train.hpp"

namespace nbe {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parsed and validated run configuration. Unknown keys anywhere in the
// document are rejected; profile defaults ("desk" or "paper") fill fields the
// document leaves unset.
struct RunConfig {
  std::string model = "gp";    // gp | schlather
  std::string task = "point";  // point | quantiles
  std::uint64_t seed = 0;
  std::string profile = "desk";
  int workers = 0;
  bool reproducible = true;
  std::string out_dir = ".";

  PriorSpec prior;
  GPParams gp_fixed;
  NeighbourRule rule;
  ArchSpec arch;
  TrainConfig train;
  double q1 = 0.025, q2 = 0.975;

  // command-specific sections, kept as JSON
  nlohmann::json simulate_section, estimate_section, assess_section,
      coverage_section, bench_section;

  std::uint64_t config_hash = 0;

  SpatialModel model_enum() const;
  std::string hash_hex() const;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);
};

// Throws ConfigError if `j` contains keys outside `allowed`.
void reject_unknown_keys(const nlohmann::json& j, const std::string& section,
                         std::initializer_list<const char*> allowed);

}  // namespace nbe
