#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <json.hpp>

#include "robosig/estimator.hpp"
#include "robosig/evaluation.hpp"
#include "robosig/replay.hpp"
#include "robosig/signature_io.hpp"

namespace robosig {

/// Parameter blocks for every pipeline stage, loaded from a JSON file:
///
///   {"seed": 7, "chain": "arm.json",
///    "synthesis": {...}, "placement": {...}, "planning": {...},
///    "training": {...}, "protocol": {...}}
///
/// Keys inside each block mirror the struct fields. Unknown keys are
/// rejected. Component seeds are derived from the root seed.
struct RunConfig {
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> chain;
  SynthesisConfig synthesis;
  WorkspacePlacement placement;
  PlanningOptions planning;
  TrainingConfig training;
  ProtocolConfig protocol;

  /// Sets the root seed and re-derives every component seed from it.
  void set_seed(std::uint64_t root);
};

RunConfig run_config_from_json(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace robosig
