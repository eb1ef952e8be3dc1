#pragma once

// Verification protocols, EER and DET computation, and multi-run averaging.
// Scores are distances: lower means more genuine.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "robosig/replay.hpp"
#include "robosig/verifier.hpp"

namespace robosig {

enum class ProtocolMode { random_forgery, skilled_forgery };

std::string_view to_string(ProtocolMode mode);
ProtocolMode protocol_mode_from_string(std::string_view text);

struct ProtocolConfig {
  int n_refs = 5;
  int repeats = 10;
  std::uint64_t seed = 1;
  ProtocolMode mode = ProtocolMode::random_forgery;
  FeatureGroup group = FeatureGroup::omega;
  FeatureSource source = FeatureSource::simulated;

  void validate() const;
};

struct RunScores {
  std::uint64_t seed = 0;
  std::vector<double> genuine;
  std::vector<double> impostor;
  std::vector<ScoreRecord> records;
};

/// Per run and user: n_refs seeded genuine references, the remaining
/// genuine signatures as genuine tests, and as impostors either one random
/// genuine signature of every other user (re-drawn each run) or all of the
/// user's skilled forgeries. Random mode scores with s_hat_1, skilled mode
/// with s_hat_2.
std::vector<RunScores> run_protocol(const FeatureCorpus& corpus,
                                    const ProtocolConfig& config);

/// FAR(t) = impostors <= t, FRR(t) = genuine > t, swept over every distinct
/// score, with linear interpolation at the crossing.
double compute_eer(std::span<const double> genuine, std::span<const double> impostor);

struct DetPoint {
  double far = 0.0;
  double frr = 0.0;
};

/// (0,1), then one point per distinct threshold in increasing order.
std::vector<DetPoint> det_curve(std::span<const double> genuine,
                                std::span<const double> impostor);

/// FRR of a DET curve at `far`: lowest FRR where the curve has a vertical
/// step at exactly `far`, otherwise linear interpolation.
double det_frr_at(std::span<const DetPoint> curve, double far);

/// 50 geometric FAR values from 1e-3 to 1.
std::vector<double> det_far_grid();

struct EvaluationReport {
  std::vector<std::uint64_t> run_seeds;
  std::vector<double> eers;
  double eer_mean = 0.0;
  double eer_std = 0.0;  // sample standard deviation; 0 for one run
  std::vector<DetPoint> det;  // averaged on det_far_grid()
};

EvaluationReport aggregate_runs(std::span<const RunScores> runs);

std::string report_json(const EvaluationReport& report, const ProtocolConfig& config);
std::string det_csv(std::span<const DetPoint> points);
std::vector<DetPoint> parse_det_csv(std::string_view text);

struct DetSeries {
  std::string name;
  std::vector<DetPoint> points;
};

/// Standalone SVG with log-scaled FAR and FRR axes (1e-3 .. 1).
std::string det_svg(std::span<const DetSeries> series);

}  // namespace robosig
