#pragma once

// Three-headed MLP that maps an 11-point (x,y) window around each pen
// sample to the 18 joint channels (theta, omega, tau) of that sample.

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "robosig/replay.hpp"
#include "robosig/signature_io.hpp"

namespace robosig {

inline constexpr int kWindowRadius = 5;
inline constexpr int kWindowPoints = 2 * kWindowRadius + 1;
inline constexpr int kInputDim = 2 * kWindowPoints;  // 22
inline constexpr int kHiddenUnits = 12;
inline constexpr int kHeadDim = kJoints;
inline constexpr int kHeads = 3;
inline constexpr int kOutputDim = kHeads * kHeadDim;  // 18

using WindowedInput = Eigen::Matrix<double, kInputDim, 1>;
using Output = Eigen::Matrix<double, kOutputDim, 1>;

/// Min-max scaler for one dimension. A constant dimension maps to 0.5.
struct MinMax {
  double min = 0.0;
  double max = 1.0;
  bool constant = false;

  static MinMax fit(double lo, double hi);
  double transform(double v) const;
  double inverse(double v) const;
};

struct ScalerSet {
  std::array<MinMax, 2> input;  // x, y
  std::array<MinMax, kOutputDim> target;
};

/// One (signature, simulated features) training pair. Pointers keep large
/// corpora from being copied.
struct TrainingPair {
  const SignatureTrajectory* signature;
  const JointFeatureSeries* features;
};

/// Pairs every corpus signature (genuine, then forgeries, per user) with
/// its feature series. Shape mismatches raise ShapeError naming the user.
std::vector<TrainingPair> training_pairs(const Corpus& corpus, const FeatureCorpus& features);

/// Global per-dimension extremes over every training sample.
ScalerSet fit_scalers(std::span<const TrainingPair> training);

/// 22 x M: one column per sample, edge-replicated at the boundaries. Inputs
/// are clamped to [0,1] after scaling.
Eigen::MatrixXd build_windows(const SignatureTrajectory& signature,
                              const ScalerSet& scalers);

/// 18 x M scaled targets (theta, omega, tau). Not clamped.
Eigen::MatrixXd build_targets(const JointFeatureSeries& features,
                              const ScalerSet& scalers);

struct MLPModel {
  static constexpr int kVersion = 1;

  Eigen::Matrix<double, kHiddenUnits, kInputDim> w_hidden =
      Eigen::Matrix<double, kHiddenUnits, kInputDim>::Zero();
  Eigen::Matrix<double, kHiddenUnits, 1> b_hidden =
      Eigen::Matrix<double, kHiddenUnits, 1>::Zero();
  std::array<Eigen::Matrix<double, kHeadDim, kHiddenUnits>, kHeads> w_head{};
  std::array<Eigen::Matrix<double, kHeadDim, 1>, kHeads> b_head{};
  double dropout_rate = 0.3;
  ScalerSet scalers;
  int trained_epochs = 0;

  MLPModel();
  static MLPModel glorot(std::uint64_t seed);
  bool finite() const;
};

/// Inverted-dropout mask: each entry is 0 with probability `rate`,
/// otherwise 1/(1-rate).
Eigen::MatrixXd make_dropout_mask(int rows, Eigen::Index cols, double rate,
                                  std::mt19937_64& rng);

/// Forward pass for a batch (columns are samples). In training mode each
/// hidden unit is dropped with probability dropout_rate and survivors are
/// scaled by 1/(1-rate); otherwise the hidden layer passes through.
Eigen::MatrixXd mlp_forward(const MLPModel& model, const Eigen::MatrixXd& inputs,
                            bool training_mode, std::mt19937_64* rng = nullptr);
Output mlp_forward(const MLPModel& model, const WindowedInput& input,
                   bool training_mode = false, std::mt19937_64* rng = nullptr);

struct CompositeLoss {
  double total = 0.0;
  std::array<double, kHeads> head{};  // theta, omega, tau
};

/// Sum over heads of the mean (over samples and the head's 6 dims) squared
/// error.
CompositeLoss composite_loss(const Eigen::MatrixXd& predictions,
                             const Eigen::MatrixXd& targets);

struct Gradients {
  Eigen::Matrix<double, kHiddenUnits, kInputDim> w_hidden;
  Eigen::Matrix<double, kHiddenUnits, 1> b_hidden;
  std::array<Eigen::Matrix<double, kHeadDim, kHiddenUnits>, kHeads> w_head;
  std::array<Eigen::Matrix<double, kHeadDim, 1>, kHeads> b_head;
};

/// Loss and analytic gradients. `dropout_mask` (hidden x batch, entries 0
/// or 1/(1-rate)) selects a training-mode pass with a fixed mask; null means
/// inference mode.
CompositeLoss loss_and_gradients(const MLPModel& model, const Eigen::MatrixXd& inputs,
                                 const Eigen::MatrixXd& targets,
                                 const Eigen::MatrixXd* dropout_mask,
                                 Gradients* gradients);

struct TrainingConfig {
  double learning_rate = 0.01;
  double val_fraction = 0.2;
  int patience = 1;
  int max_epochs = 50;
  int batch_size = 256;
  std::uint64_t seed = 1;
  double dropout_rate = 0.3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;  // 1-based
  CompositeLoss train;
  CompositeLoss validation;
};

struct TrainingResult {
  MLPModel model;  // best-validation snapshot
  int best_epoch = 0;
  std::vector<EpochLog> history;
};

/// Adam on the composite loss with a seeded, signature-level validation
/// split and patience-based early stopping. Needs at least 2 signatures.
TrainingResult train(std::span<const TrainingPair> training,
                     const TrainingConfig& config);

/// Thrown when the loss becomes non-finite.
class TrainingError : public NumericalError {
 public:
  TrainingError(int epoch, const std::string& what)
      : NumericalError("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// Inference-mode estimate, inverse-scaled to physical units.
JointFeatureSeries estimate_features(const MLPModel& model,
                                     const SignatureTrajectory& signature);

struct GroupError {
  double mae = 0.0;
  double mse = 0.0;
};

/// Per-group errors in the model's scaled target units.
struct EstimationMetrics {
  std::array<GroupError, kHeads> group{};
};

/// Compares estimates with reference series, both mapped through `scalers`.
EstimationMetrics estimation_metrics(std::span<const JointFeatureSeries> estimated,
                                     std::span<const JointFeatureSeries> reference,
                                     const ScalerSet& scalers);

struct CrossValidationResult {
  std::vector<EstimationMetrics> folds;
  EstimationMetrics mean;
  /// Out-of-fold estimates, laid out like the input corpus.
  FeatureCorpus estimates;
  /// Users tested in each fold.
  std::vector<std::vector<std::string>> fold_users;
  std::vector<ScalerSet> fold_scalers;
};

/// k-fold by user: fold f's model is trained on the other folds and
/// estimates every signature of fold f's users.
CrossValidationResult cross_validate(const Corpus& corpus,
                                     const FeatureCorpus& simulated,
                                     const TrainingConfig& config, int folds = 4);

/// Versioned JSON container with shapes, weights, scalers and a checksum.
std::string save_model(const MLPModel& model);
MLPModel load_model(std::string_view bytes);
void save_model_file(const std::filesystem::path& path, const MLPModel& model);
MLPModel load_model_file(const std::filesystem::path& path);

}  // namespace robosig
