#include "robosig/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace robosig {

MinMax MinMax::fit(double lo, double hi) {
  MinMax s;
  s.min = lo;
  s.max = hi;
  s.constant = !(hi > lo);
  return s;
}

double MinMax::transform(double v) const {
  return constant ? 0.5 : (v - min) / (max - min);
}

double MinMax::inverse(double v) const {
  return constant ? min : min + v * (max - min);
}

ScalerSet fit_scalers(std::span<const TrainingPair> training) {
  if (training.empty()) throw ConfigError("cannot fit scalers on an empty set");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::array<double, 2> in_lo{inf, inf}, in_hi{-inf, -inf};
  std::array<double, kOutputDim> out_lo, out_hi;
  out_lo.fill(inf);
  out_hi.fill(-inf);

  for (const auto& pair : training) {
    const auto& sig = *pair.signature;
    for (std::size_t i = 0; i < sig.size(); ++i) {
      in_lo[0] = std::min(in_lo[0], sig.x[i]);
      in_hi[0] = std::max(in_hi[0], sig.x[i]);
      in_lo[1] = std::min(in_lo[1], sig.y[i]);
      in_hi[1] = std::max(in_hi[1], sig.y[i]);
    }
    const auto& f = *pair.features;
    for (int g = 0; g < kHeads; ++g) {
      const auto& m = f.channels(static_cast<FeatureGroup>(g));
      for (int j = 0; j < kHeadDim; ++j) {
        const int d = g * kHeadDim + j;
        if (m.rows() == 0) continue;
        out_lo[d] = std::min(out_lo[d], m.col(j).minCoeff());
        out_hi[d] = std::max(out_hi[d], m.col(j).maxCoeff());
      }
    }
  }
  ScalerSet s;
  for (int k = 0; k < 2; ++k) s.input[k] = MinMax::fit(in_lo[k], in_hi[k]);
  for (int d = 0; d < kOutputDim; ++d) s.target[d] = MinMax::fit(out_lo[d], out_hi[d]);
  return s;
}

Eigen::MatrixXd build_windows(const SignatureTrajectory& signature,
                              const ScalerSet& scalers) {
  const auto m = static_cast<Eigen::Index>(signature.size());
  std::vector<double> sx(signature.size()), sy(signature.size());
  for (std::size_t i = 0; i < signature.size(); ++i) {
    sx[i] = std::clamp(scalers.input[0].transform(signature.x[i]), 0.0, 1.0);
    sy[i] = std::clamp(scalers.input[1].transform(signature.y[i]), 0.0, 1.0);
  }
  Eigen::MatrixXd windows(kInputDim, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (int k = -kWindowRadius; k <= kWindowRadius; ++k) {
      const auto src = static_cast<std::size_t>(std::clamp<Eigen::Index>(i + k, 0, m - 1));
      const int row = 2 * (k + kWindowRadius);
      windows(row, i) = sx[src];
      windows(row + 1, i) = sy[src];
    }
  }
  return windows;
}

Eigen::MatrixXd build_targets(const JointFeatureSeries& features,
                              const ScalerSet& scalers) {
  const auto m = static_cast<Eigen::Index>(features.size());
  Eigen::MatrixXd targets(kOutputDim, m);
  for (int g = 0; g < kHeads; ++g) {
    const auto& ch = features.channels(static_cast<FeatureGroup>(g));
    for (int j = 0; j < kHeadDim; ++j) {
      const int d = g * kHeadDim + j;
      for (Eigen::Index i = 0; i < m; ++i) {
        targets(d, i) = scalers.target[d].transform(ch(i, j));
      }
    }
  }
  return targets;
}

MLPModel::MLPModel() {
  for (auto& w : w_head) w.setZero();
  for (auto& b : b_head) b.setZero();
  for (auto& s : scalers.input) s = MinMax::fit(0.0, 1.0);
  for (auto& s : scalers.target) s = MinMax::fit(0.0, 1.0);
}

MLPModel MLPModel::glorot(std::uint64_t seed) {
  MLPModel m;
  std::mt19937_64 rng(seed);
  auto fill = [&](auto& w, int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = dist(rng);
    }
  };
  fill(m.w_hidden, kInputDim, kHiddenUnits);
  for (auto& w : m.w_head) fill(w, kHiddenUnits, kHeadDim);
  return m;
}

bool MLPModel::finite() const {
  bool ok = w_hidden.allFinite() && b_hidden.allFinite() && std::isfinite(dropout_rate);
  for (int h = 0; h < kHeads; ++h) ok = ok && w_head[h].allFinite() && b_head[h].allFinite();
  return ok;
}

Eigen::MatrixXd make_dropout_mask(int rows, Eigen::Index cols, double rate,
                                  std::mt19937_64& rng) {
  Eigen::MatrixXd mask(rows, cols);
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) mask(r, c) = keep(rng) ? scale : 0.0;
  }
  return mask;
}

namespace {

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
  return (1.0 + (-z.array()).exp()).inverse().matrix();
}

struct ForwardPass {
  Eigen::MatrixXd pre_hidden;  // W_h x + b_h
  Eigen::MatrixXd hidden;      // after ReLU and dropout
  Eigen::MatrixXd output;      // 18 x batch
};

ForwardPass forward_pass(const MLPModel& model, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd* mask) {
  if (inputs.rows() != kInputDim) {
    throw ShapeError("MLP input has " + std::to_string(inputs.rows()) +
                     " rows, expected 22");
  }
  ForwardPass fp;
  fp.pre_hidden = (model.w_hidden * inputs).colwise() + model.b_hidden;
  fp.hidden = fp.pre_hidden.cwiseMax(0.0);
  if (mask) fp.hidden = fp.hidden.cwiseProduct(*mask);
  fp.output.resize(kOutputDim, inputs.cols());
  for (int h = 0; h < kHeads; ++h) {
    fp.output.middleRows(h * kHeadDim, kHeadDim) =
        sigmoid((model.w_head[h] * fp.hidden).colwise() + model.b_head[h]);
  }
  return fp;
}

}  // namespace

Eigen::MatrixXd mlp_forward(const MLPModel& model, const Eigen::MatrixXd& inputs,
                            bool training_mode, std::mt19937_64* rng) {
  if (training_mode && model.dropout_rate > 0.0) {
    if (!rng) throw ConfigError("training-mode forward pass needs an rng");
    const Eigen::MatrixXd mask =
        make_dropout_mask(kHiddenUnits, inputs.cols(), model.dropout_rate, *rng);
    return forward_pass(model, inputs, &mask).output;
  }
  return forward_pass(model, inputs, nullptr).output;
}

Output mlp_forward(const MLPModel& model, const WindowedInput& input,
                   bool training_mode, std::mt19937_64* rng) {
  return mlp_forward(model, Eigen::MatrixXd(input), training_mode, rng);
}

CompositeLoss composite_loss(const Eigen::MatrixXd& predictions,
                             const Eigen::MatrixXd& targets) {
  if (predictions.rows() != kOutputDim || targets.rows() != kOutputDim ||
      predictions.cols() != targets.cols() || predictions.cols() == 0) {
    throw ShapeError("composite loss needs matching non-empty 18 x n matrices");
  }
  const double denom = static_cast<double>(kHeadDim * predictions.cols());
  CompositeLoss loss;
  for (int h = 0; h < kHeads; ++h) {
    loss.head[h] = (predictions.middleRows(h * kHeadDim, kHeadDim) -
                    targets.middleRows(h * kHeadDim, kHeadDim))
                       .squaredNorm() /
                   denom;
    loss.total += loss.head[h];
  }
  return loss;
}

CompositeLoss loss_and_gradients(const MLPModel& model, const Eigen::MatrixXd& inputs,
                                 const Eigen::MatrixXd& targets,
                                 const Eigen::MatrixXd* dropout_mask,
                                 Gradients* gradients) {
  const ForwardPass fp = forward_pass(model, inputs, dropout_mask);
  const CompositeLoss loss = composite_loss(fp.output, targets);
  if (!gradients) return loss;

  const double denom = static_cast<double>(kHeadDim * inputs.cols());
  Eigen::MatrixXd d_hidden = Eigen::MatrixXd::Zero(kHiddenUnits, inputs.cols());
  for (int h = 0; h < kHeads; ++h) {
    const auto y = fp.output.middleRows(h * kHeadDim, kHeadDim);
    const auto t = targets.middleRows(h * kHeadDim, kHeadDim);
    // dL/dz through the sigmoid
    const Eigen::MatrixXd dz =
        ((2.0 / denom) * (y - t).array() * y.array() * (1.0 - y.array())).matrix();
    gradients->w_head[h] = dz * fp.hidden.transpose();
    gradients->b_head[h] = dz.rowwise().sum();
    d_hidden += model.w_head[h].transpose() * dz;
  }
  if (dropout_mask) d_hidden = d_hidden.cwiseProduct(*dropout_mask);
  const Eigen::MatrixXd dz_hidden =
      (d_hidden.array() * (fp.pre_hidden.array() > 0.0).cast<double>()).matrix();
  gradients->w_hidden = dz_hidden * inputs.transpose();
  gradients->b_hidden = dz_hidden.rowwise().sum();
  return loss;
}

JointFeatureSeries estimate_features(const MLPModel& model,
                                     const SignatureTrajectory& signature) {
  const Eigen::MatrixXd windows = build_windows(signature, model.scalers);
  const Eigen::MatrixXd out = mlp_forward(model, windows, false);
  const auto m = out.cols();

  JointFeatureSeries s;
  s.t = signature.t;
  s.source = FeatureSource::estimated;
  s.user_id = signature.user_id;
  s.label = signature.label;
  s.session = signature.session;
  std::array<Eigen::MatrixXd*, kHeads> dst{&s.theta, &s.omega, &s.tau};
  for (int h = 0; h < kHeads; ++h) {
    dst[h]->resize(m, kHeadDim);
    for (int j = 0; j < kHeadDim; ++j) {
      const auto& sc = model.scalers.target[h * kHeadDim + j];
      for (Eigen::Index i = 0; i < m; ++i) {
        (*dst[h])(i, j) = sc.inverse(out(h * kHeadDim + j, i));
      }
    }
  }
  return s;
}

EstimationMetrics estimation_metrics(std::span<const JointFeatureSeries> estimated,
                                     std::span<const JointFeatureSeries> reference,
                                     const ScalerSet& scalers) {
  if (estimated.size() != reference.size()) {
    throw ShapeError("estimate/reference count mismatch");
  }
  std::array<double, kHeads> abs_sum{}, sq_sum{};
  double count = 0.0;
  for (std::size_t k = 0; k < estimated.size(); ++k) {
    if (estimated[k].size() != reference[k].size()) {
      throw ShapeError("estimate/reference length mismatch for signature " +
                       std::to_string(k));
    }
    const Eigen::MatrixXd a = build_targets(estimated[k], scalers);
    const Eigen::MatrixXd b = build_targets(reference[k], scalers);
    for (int h = 0; h < kHeads; ++h) {
      const Eigen::ArrayXXd e = (a.middleRows(h * kHeadDim, kHeadDim) -
                                 b.middleRows(h * kHeadDim, kHeadDim))
                                    .array();
      abs_sum[h] += e.abs().sum();
      sq_sum[h] += e.square().sum();
    }
    count += static_cast<double>(kHeadDim * a.cols());
  }
  EstimationMetrics m;
  if (count == 0.0) return m;
  for (int h = 0; h < kHeads; ++h) {
    m.group[h] = {abs_sum[h] / count, sq_sum[h] / count};
  }
  return m;
}

}  // namespace robosig
