#pragma once

// Reference implementations used only by tests. Each is written
// independently of the library code it checks.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "robosig/robot_model.hpp"
#include "robosig/signature_io.hpp"

namespace robosig::oracle {

// Full-matrix DTW with explicit backtracking. Ties prefer the diagonal,
// then (i-1,j), then (i,j-1).
struct Dtw {
  double distance;
  long path_len;
};

inline Dtw full_dtw(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::Index n = a.rows(), m = b.rows();
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd d = Eigen::MatrixXd::Constant(n, m, inf);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      double sq = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) sq += (a(i, k) - b(j, k)) * (a(i, k) - b(j, k));
      const double cost = std::sqrt(sq);
      if (i == 0 && j == 0) {
        d(i, j) = cost;
        continue;
      }
      double best = inf;
      if (i > 0 && j > 0) best = std::min(best, d(i - 1, j - 1));
      if (i > 0) best = std::min(best, d(i - 1, j));
      if (j > 0) best = std::min(best, d(i, j - 1));
      d(i, j) = best + cost;
    }
  }
  long len = 1;
  Eigen::Index i = n - 1, j = m - 1;
  while (i > 0 || j > 0) {
    const double diag = (i > 0 && j > 0) ? d(i - 1, j - 1) : inf;
    const double up = i > 0 ? d(i - 1, j) : inf;
    const double left = j > 0 ? d(i, j - 1) : inf;
    if (diag <= up && diag <= left) {
      --i;
      --j;
    } else if (up <= left) {
      --i;
    } else {
      --j;
    }
    ++len;
  }
  return {d(n - 1, m - 1), len};
}

// EER by brute force: FAR/FRR at every score, every midpoint between
// neighbouring scores and both infinities, then the crossing of the
// resulting polyline with FAR == FRR.
inline double enumerated_eer(std::span<const double> genuine, std::span<const double> impostor) {
  std::vector<double> all(genuine.begin(), genuine.end());
  all.insert(all.end(), impostor.begin(), impostor.end());
  std::sort(all.begin(), all.end());
  std::vector<double> thresholds{-std::numeric_limits<double>::infinity()};
  for (std::size_t k = 0; k < all.size(); ++k) {
    thresholds.push_back(all[k]);
    if (k + 1 < all.size()) thresholds.push_back(0.5 * (all[k] + all[k + 1]));
  }
  thresholds.push_back(std::numeric_limits<double>::infinity());

  std::vector<std::pair<double, double>> pts;  // (far, frr)
  for (double t : thresholds) {
    int fa = 0, fr = 0;
    for (double s : impostor) fa += s <= t;
    for (double s : genuine) fr += s > t;
    pts.emplace_back(double(fa) / double(impostor.size()), double(fr) / double(genuine.size()));
  }
  for (std::size_t k = 1; k < pts.size(); ++k) {
    const auto [x0, y0] = pts[k - 1];
    const auto [x1, y1] = pts[k];
    const double d0 = x0 - y0, d1 = x1 - y1;
    if (d1 < 0.0) continue;
    if (d1 == 0.0) return x1;
    // d0 < 0 < d1: the point on the segment where x == y
    const double s = d0 / (d0 - d1);
    return x0 + s * (x1 - x0);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

// Rot_z(theta) Transl_z(d) Transl_x(a) Rot_x(alpha), written out as the
// four elementary homogeneous matrices.
inline Eigen::Matrix4d dh_product(double a, double alpha, double d, double theta) {
  Eigen::Matrix4d rz = Eigen::Matrix4d::Identity();
  rz(0, 0) = std::cos(theta);
  rz(0, 1) = -std::sin(theta);
  rz(1, 0) = std::sin(theta);
  rz(1, 1) = std::cos(theta);
  Eigen::Matrix4d tz = Eigen::Matrix4d::Identity();
  tz(2, 3) = d;
  Eigen::Matrix4d tx = Eigen::Matrix4d::Identity();
  tx(0, 3) = a;
  Eigen::Matrix4d rx = Eigen::Matrix4d::Identity();
  rx(1, 1) = std::cos(alpha);
  rx(1, 2) = -std::sin(alpha);
  rx(2, 1) = std::sin(alpha);
  rx(2, 2) = std::cos(alpha);
  return rz * tz * tx * rx;
}

// World-frame pose of each link's centre of mass, from FK alone.
inline std::vector<Eigen::Vector3d> com_positions(const KinematicChain& chain, const Vector6& q) {
  std::vector<Eigen::Vector3d> out;
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  for (int i = 0; i < kJoints; ++i) {
    const auto& l = chain.links[i];
    t = t * dh_product(l.a, l.alpha, l.d, q[i] + l.theta_offset);
    out.push_back(t.topLeftCorner<3, 3>() * chain.inertias[i].com + t.topRightCorner<3, 1>());
  }
  return out;
}

inline std::vector<Eigen::Matrix3d> link_rotations(const KinematicChain& chain, const Vector6& q) {
  std::vector<Eigen::Matrix3d> out;
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  for (int i = 0; i < kJoints; ++i) {
    const auto& l = chain.links[i];
    t = t * dh_product(l.a, l.alpha, l.d, q[i] + l.theta_offset);
    out.push_back(t.topLeftCorner<3, 3>());
  }
  return out;
}

inline double potential_energy(const KinematicChain& chain, const Vector6& q, double g = 9.81) {
  const auto c = com_positions(chain, q);
  double v = 0.0;
  for (int i = 0; i < kJoints; ++i) v += chain.inertias[i].mass * g * c[i].z();
  return v;
}

// Kinetic energy from finite differences of COM positions and link
// rotations around q(t), with q given as a function of time.
template <typename Path>
double kinetic_energy(const KinematicChain& chain, Path&& q_of_t, double t, double h = 1e-6) {
  const auto cp = com_positions(chain, q_of_t(t + h));
  const auto cm = com_positions(chain, q_of_t(t - h));
  const auto rp = link_rotations(chain, q_of_t(t + h));
  const auto rm = link_rotations(chain, q_of_t(t - h));
  const auto r0 = link_rotations(chain, q_of_t(t));
  double ke = 0.0;
  for (int i = 0; i < kJoints; ++i) {
    const Eigen::Vector3d v = (cp[i] - cm[i]) / (2.0 * h);
    const Eigen::Matrix3d rdot = (rp[i] - rm[i]) / (2.0 * h);
    const Eigen::Matrix3d skew = rdot * r0[i].transpose();  // [w]x
    const Eigen::Vector3d w(skew(2, 1), skew(0, 2), skew(1, 0));
    const Eigen::Matrix3d inertia = r0[i] * chain.inertias[i].inertia * r0[i].transpose();
    ke += 0.5 * chain.inertias[i].mass * v.squaredNorm() + 0.5 * w.dot(inertia * w);
  }
  return ke;
}

inline Vector6 random_config(std::mt19937_64& rng, double range = std::numbers::pi) {
  std::uniform_real_distribution<double> u(-range, range);
  Vector6 q;
  for (auto& v : q) v = u(rng);
  return q;
}

inline SignatureTrajectory random_signature(std::mt19937_64& rng, int samples) {
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  SignatureTrajectory s;
  s.user_id = "u001";
  double x = u(rng), y = u(rng);
  for (int k = 0; k < samples; ++k) {
    s.t.push_back(0.01 * k);
    x += 0.1 * u(rng);
    y += 0.1 * u(rng);
    s.x.push_back(x);
    s.y.push_back(y);
  }
  return s;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("robosig_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace robosig::oracle
