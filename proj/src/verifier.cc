#include "robosig/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "text_util.hpp"

namespace robosig {

Eigen::VectorXd regression_derivative(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::Index m = x.size();
  Eigen::VectorXd d(m);
  auto at = [&](Eigen::Index i) { return x[std::clamp<Eigen::Index>(i, 0, m - 1)]; };
  for (Eigen::Index i = 0; i < m; ++i) {
    d[i] = ((at(i + 1) - at(i - 1)) + 2.0 * (at(i + 2) - at(i - 2))) / 10.0;
  }
  return d;
}

int base_channels(FeatureGroup group) {
  return group == FeatureGroup::omega ? kJoints - 1 : kJoints;
}

FeatureMatrix build_feature_matrix(const JointFeatureSeries& features, FeatureGroup group) {
  features.validate();
  const Eigen::MatrixXd& src = features.channels(group);
  const int base = base_channels(group);
  const Eigen::Index m = src.rows();

  FeatureMatrix out;
  out.group = group;
  out.values.resize(m, 3 * base);
  for (int c = 0; c < base; ++c) {
    Eigen::VectorXd col = src.col(c);
    const double lo = col.minCoeff();
    const double hi = col.maxCoeff();
    if (hi > lo) {
      col = (col.array() - lo) / (hi - lo);
    } else {
      col.setConstant(0.5);
      out.constant_channels.push_back(c);
    }
    const Eigen::VectorXd d1 = regression_derivative(col);
    out.values.col(c) = col;
    out.values.col(base + c) = d1;
    out.values.col(2 * base + c) = regression_derivative(d1);
  }
  for (Eigen::Index c = 0; c < out.values.cols(); ++c) {
    auto col = out.values.col(c);
    const double mean = col.mean();
    col.array() -= mean;
    const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(m));
    if (sd > 1e-12) {
      col /= sd;
    } else {
      col.setZero();
    }
  }
  return out;
}

long default_band(Eigen::Index rows_a, Eigen::Index rows_b) {
  const long ceil_tenth = static_cast<long>((rows_a + 9) / 10);
  return std::max(ceil_tenth, static_cast<long>(std::abs(rows_a - rows_b)) + 1);
}

namespace {

long floor_div(long a, long b) { return a / b - ((a % b != 0) && ((a < 0) != (b < 0))); }
long ceil_div(long a, long b) { return -floor_div(-a, b); }

// Summed in index order so the result does not depend on how Eigen
// vectorises a given memory layout.
double row_distance(const Eigen::Ref<const Eigen::VectorXd>& a,
                    const Eigen::Ref<const Eigen::VectorXd>& b) {
  double sum = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    sum += d * d;
  }
  return std::sqrt(sum);
}

}  // namespace

DtwResult dtw_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                       std::optional<long> band) {
  if (a.cols() != b.cols()) {
    throw ShapeError("DTW operands have " + std::to_string(a.cols()) + " and " +
                     std::to_string(b.cols()) + " columns");
  }
  if (a.rows() < 1 || b.rows() < 1) throw ShapeError("DTW operand has no rows");
  const long ma = a.rows();
  const long mb = b.rows();
  const long w = band.value_or(default_band(ma, mb));
  if (w < 0) throw ConfigError("DTW band must be >= 0");

  // Column-major copies so each sample is contiguous.
  const Eigen::MatrixXd at = a.transpose();
  const Eigen::MatrixXd bt = b.transpose();

  // Cell (i,j) is inside the band when |j - i (mb-1)/(ma-1)| <= w, kept in
  // integers as |j (ma-1) - i (mb-1)| <= w (ma-1).
  auto window = [&](long i) -> std::pair<long, long> {
    if (ma == 1) return {0, std::min(mb - 1, w)};
    const long den = ma - 1;
    const long num = i * (mb - 1);
    return {std::max(0L, ceil_div(num - w * den, den)),
            std::min(mb - 1, floor_div(num + w * den, den))};
  };

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(static_cast<std::size_t>(mb), kInf), cur(prev.size(), kInf);
  std::vector<long> prev_len(prev.size(), 0), cur_len(prev.size(), 0);

  for (long i = 0; i < ma; ++i) {
    std::fill(cur.begin(), cur.end(), kInf);
    const auto [lo, hi] = window(i);
    for (long j = lo; j <= hi; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      const double cost = row_distance(at.col(i), bt.col(j));
      if (i == 0 && j == 0) {
        cur[0] = cost;
        cur_len[0] = 1;
        continue;
      }
      double best = kInf;
      long len = 0;
      if (i > 0 && j > 0 && prev[uj - 1] < best) {
        best = prev[uj - 1];
        len = prev_len[uj - 1];
      }
      if (i > 0 && prev[uj] < best) {
        best = prev[uj];
        len = prev_len[uj];
      }
      if (j > 0 && cur[uj - 1] < best) {
        best = cur[uj - 1];
        len = cur_len[uj - 1];
      }
      if (best < kInf) {
        cur[uj] = best + cost;
        cur_len[uj] = len + 1;
      }
    }
    std::swap(prev, cur);
    std::swap(prev_len, cur_len);
  }
  const auto last = static_cast<std::size_t>(mb - 1);
  if (!std::isfinite(prev[last])) {
    throw ConfigError("DTW band of " + std::to_string(w) + " leaves no alignment path");
  }
  return {prev[last], prev_len[last]};
}

DtwResult dtw_distance(const FeatureMatrix& a, const FeatureMatrix& b,
                       std::optional<long> band) {
  if (a.group != b.group) throw ShapeError("DTW operands come from different feature groups");
  return dtw_distance(a.values, b.values, band);
}

ReferenceStats reference_stats(std::span<const DtwResult> pairwise) {
  if (pairwise.empty()) throw ConfigError("reference statistics need at least 2 references");
  double sum = 0.0;
  for (const auto& r : pairwise) sum += r.distance / static_cast<double>(r.path_len);
  const double mu = sum / static_cast<double>(pairwise.size());
  if (!(mu > 0.0)) {
    throw DegenerateReferenceError("reference signatures are identical (mu_R = 0)");
  }
  return {mu};
}

ReferenceStats reference_stats(std::span<const FeatureMatrix> references) {
  if (references.size() < 2) {
    throw ConfigError("reference statistics need at least 2 references");
  }
  std::vector<DtwResult> pairwise;
  for (std::size_t i = 0; i < references.size(); ++i) {
    for (std::size_t j = i + 1; j < references.size(); ++j) {
      pairwise.push_back(dtw_distance(references[i], references[j]));
    }
  }
  return reference_stats(pairwise);
}

VerificationScore score_questioned(std::span<const DtwResult> to_references,
                                   const ReferenceStats& stats) {
  if (to_references.size() < 2) throw ConfigError("scoring needs at least 2 references");
  if (!(stats.mu_r > 0.0)) throw DegenerateReferenceError("mu_R must be > 0");
  VerificationScore s;
  s.s_r = std::numeric_limits<double>::infinity();
  for (const auto& r : to_references) {
    if (r.distance < s.s_r) {
      s.s_r = r.distance;
      s.path_len = r.path_len;
    }
  }
  s.mu_r = stats.mu_r;
  s.s_hat_1 = s.s_r / static_cast<double>(s.path_len);
  s.s_hat_2 = s.s_r / stats.mu_r;
  return s;
}

VerificationScore score_questioned(const FeatureMatrix& questioned,
                                   std::span<const FeatureMatrix> references,
                                   const ReferenceStats& stats) {
  std::vector<DtwResult> to_refs;
  to_refs.reserve(references.size());
  for (const auto& ref : references) to_refs.push_back(dtw_distance(questioned, ref));
  return score_questioned(to_refs, stats);
}

std::string write_score_csv(std::span<const ScoreRecord> records) {
  std::string out = "run,user,signature,label,s_R,path_len,s_hat_1,s_hat_2\n";
  for (const auto& r : records) {
    out += std::to_string(r.run);
    out += ',';
    out += r.user_id;
    out += ',';
    out += r.signature;
    out += ',';
    out += to_string(r.label);
    out += ',';
    detail::append_double(out, r.score.s_r);
    out += ',';
    out += std::to_string(r.score.path_len);
    out += ',';
    detail::append_double(out, r.score.s_hat_1);
    out += ',';
    detail::append_double(out, r.score.s_hat_2);
    out += '\n';
  }
  return out;
}

}  // namespace robosig
