#pragma once

// DTW-based verification over one joint feature group.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "robosig/error.hpp"
#include "robosig/replay.hpp"

namespace robosig {

/// Second-order regression derivative with edge replication:
///   d_i = sum_{k=1,2} k (x_{i+k} - x_{i-k}) / 10
Eigen::VectorXd regression_derivative(const Eigen::Ref<const Eigen::VectorXd>& series);

/// Per-signature verifier input: base channels, their first and second
/// derivatives, every column z-scored. Group omega drops joint 6.
struct FeatureMatrix {
  Eigen::MatrixXd values;  // M x N
  FeatureGroup group = FeatureGroup::theta;
  /// Base channels (0-based, within the group) that were constant and
  /// therefore left as zero columns.
  std::vector<int> constant_channels;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

/// Number of base channels used for a group (5 for omega, 6 otherwise).
int base_channels(FeatureGroup group);

FeatureMatrix build_feature_matrix(const JointFeatureSeries& features, FeatureGroup group);

struct DtwResult {
  double distance = 0.0;
  long path_len = 0;
};

/// Band half-width used when none is given:
/// max(ceil(M_A/10), |M_A - M_B| + 1).
long default_band(Eigen::Index rows_a, Eigen::Index rows_b);

/// Steps (1,0), (0,1), (1,1); Euclidean row distance; band measured around
/// the diagonal scaled to the two lengths. Among equal-cost predecessors
/// the diagonal wins, then (1,0), then (0,1).
DtwResult dtw_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                       std::optional<long> band = std::nullopt);
DtwResult dtw_distance(const FeatureMatrix& a, const FeatureMatrix& b,
                       std::optional<long> band = std::nullopt);

/// All reference pairs have zero distance, so mu_R = 0.
class DegenerateReferenceError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct ReferenceStats {
  double mu_r = 0.0;
};

/// mu_R: mean over reference pairs i < j of d(r_i, r_j) / |p|.
ReferenceStats reference_stats(std::span<const FeatureMatrix> references);
/// Same, from precomputed pairwise alignments.
ReferenceStats reference_stats(std::span<const DtwResult> pairwise);

struct VerificationScore {
  double s_r = 0.0;
  long path_len = 0;
  double s_hat_1 = 0.0;
  double s_hat_2 = 0.0;
  double mu_r = 0.0;
};

VerificationScore score_questioned(const FeatureMatrix& questioned,
                                   std::span<const FeatureMatrix> references,
                                   const ReferenceStats& stats);
/// Same, from precomputed alignments of the questioned signature against
/// each reference (in reference order).
VerificationScore score_questioned(std::span<const DtwResult> to_references,
                                   const ReferenceStats& stats);

/// One scored comparison, for audit dumps.
struct ScoreRecord {
  int run = 0;
  std::string user_id;     // claimed identity
  std::string signature;   // e.g. "u004/g_7"
  Label label = Label::genuine;
  VerificationScore score;
};

/// CSV: run,user,signature,label,s_R,path_len,s_hat_1,s_hat_2
std::string write_score_csv(std::span<const ScoreRecord> records);

}  // namespace robosig
