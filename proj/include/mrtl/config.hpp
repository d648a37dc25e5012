#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "mrtl/bench.hpp"
#include "mrtl/data.hpp"
#include "mrtl/trainer.hpp"

namespace mrtl {

// Configuration problem tied to a field path, e.g. "train.learning_rate".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct RunConfig {
  std::optional<SyntheticSpec> synthetic;
  std::string dataset_path;  // set when loading from file instead

  Grid coarse_b;
  Grid coarse_c;
  int stages = 1;
  int factorize_stage = -1;  // -1: pick automatically from the memory budget

  TrainConfig train;
  std::string output_dir;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// Fully-resolved config (defaults filled in), sufficient to reproduce a run.
nlohmann::json resolved_config_json(const RunConfig& cfg);

// Enforce that the threshold(s) the criterion kind reads were given
// explicitly; throws ConfigError naming the missing field.
void require_criterion_thresholds(const nlohmann::json& criterion_block, CriterionKind kind);

ResolutionSchedule schedule_from_config(const RunConfig& cfg, int n_tasks);
RawDataset dataset_from_config(const RunConfig& cfg);

}  // namespace mrtl
