#include "robosig/robot_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <optional>
#include <random>

#include "text_util.hpp"

#ifndef ROBOSIG_DATA_DIR
#define ROBOSIG_DATA_DIR "data"
#endif

namespace robosig {

namespace {

constexpr double kReachTolerance = 0.02;

template <typename T>
T read_field(const nlohmann::json& doc, const char* key) {
  if (!doc.contains(key)) {
    throw ValidationError(std::string("chain description lacks '") + key + "'");
  }
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("chain field '") + key + "': " + e.what());
  }
}

bool finite(const auto& m) { return m.array().isFinite().all(); }

}  // namespace

KinematicChain KinematicChain::from_json(const nlohmann::json& doc) {
  KinematicChain chain;
  chain.name = doc.value("name", std::string("chain"));

  const auto& dh = doc.at("dh");
  if (!dh.is_array() || dh.size() != kJoints) {
    throw ValidationError("chain needs exactly 6 D-H rows");
  }
  for (int i = 0; i < kJoints; ++i) {
    const auto& row = dh[static_cast<std::size_t>(i)];
    chain.links[i] = {row.at("a").get<double>(), row.at("alpha").get<double>(),
                      row.at("d").get<double>(),
                      row.value("theta_offset", 0.0)};
  }

  auto limits = doc.contains("joint_limits")
                    ? read_field<std::vector<std::array<double, 2>>>(doc, "joint_limits")
                    : std::vector<std::array<double, 2>>(
                          kJoints, {-2.0 * std::numbers::pi, 2.0 * std::numbers::pi});
  auto mass = read_field<std::vector<double>>(doc, "mass");
  auto com = read_field<std::vector<std::array<double, 3>>>(doc, "com");
  auto inertia =
      read_field<std::vector<std::array<std::array<double, 3>, 3>>>(doc, "inertia");
  auto ratio = read_field<std::vector<double>>(doc, "gear_ratio");
  auto kl = read_field<std::vector<double>>(doc, "torque_constant");
  for (std::size_t n : {limits.size(), mass.size(), com.size(), inertia.size(),
                        ratio.size(), kl.size()}) {
    if (n != kJoints) throw ValidationError("chain tables need 6 entries each");
  }
  for (int i = 0; i < kJoints; ++i) {
    const auto k = static_cast<std::size_t>(i);
    chain.limits[i] = {limits[k][0], limits[k][1]};
    chain.inertias[i].mass = mass[k];
    chain.inertias[i].com = {com[k][0], com[k][1], com[k][2]};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        chain.inertias[i].inertia(r, c) =
            inertia[k][static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      }
    }
    chain.gear_ratios[i] = ratio[k];
    chain.torque_constants[i] = kl[k];
  }
  chain.validate();

  if (doc.contains("expected_reach")) {
    const double expected = doc.at("expected_reach").get<double>();
    const double reach = max_horizontal_reach(chain);
    if (std::abs(reach - expected) > kReachTolerance * expected) {
      throw ValidationError("chain reach " + detail::format_double(reach) +
                            " m differs from declared " +
                            detail::format_double(expected) + " m by more than 2%");
    }
  }
  return chain;
}

KinematicChain KinematicChain::load(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
  try {
    return from_json(doc);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

nlohmann::json KinematicChain::to_json() const {
  nlohmann::json doc;
  doc["name"] = name;
  for (int i = 0; i < kJoints; ++i) {
    const auto& l = links[i];
    doc["dh"].push_back(
        {{"a", l.a}, {"alpha", l.alpha}, {"d", l.d}, {"theta_offset", l.theta_offset}});
    doc["joint_limits"].push_back({limits[i].min, limits[i].max});
    const auto& in = inertias[i];
    doc["mass"].push_back(in.mass);
    doc["com"].push_back({in.com.x(), in.com.y(), in.com.z()});
    nlohmann::json rows;
    for (int r = 0; r < 3; ++r) {
      rows.push_back({in.inertia(r, 0), in.inertia(r, 1), in.inertia(r, 2)});
    }
    doc["inertia"].push_back(rows);
    doc["gear_ratio"].push_back(gear_ratios[i]);
    doc["torque_constant"].push_back(torque_constants[i]);
  }
  return doc;
}

void KinematicChain::validate() const {
  for (int i = 0; i < kJoints; ++i) {
    const auto& l = links[i];
    const std::string where = " (link " + std::to_string(i + 1) + ")";
    if (!std::isfinite(l.a) || !std::isfinite(l.alpha) || !std::isfinite(l.d) ||
        !std::isfinite(l.theta_offset)) {
      throw ValidationError("non-finite D-H parameter" + where);
    }
    if (!(limits[i].min < limits[i].max)) {
      throw ValidationError("joint limit min must be < max" + where);
    }
    const auto& in = inertias[i];
    if (!(in.mass >= 0.0) || !finite(in.com) || !finite(in.inertia)) {
      throw ValidationError("invalid inertial data" + where);
    }
    if (!in.inertia.isApprox(in.inertia.transpose(), 1e-12)) {
      throw ValidationError("inertia tensor not symmetric" + where);
    }
    const double coeff = gear_ratios[i] * torque_constants[i];
    if (!std::isfinite(coeff) || coeff == 0.0) {
      throw ConfigError("zero or non-finite r*K_l" + where);
    }
  }
}

std::filesystem::path default_chain_path() {
  if (const char* env = std::getenv("ROBOSIG_CHAIN"); env && *env) return env;
  return std::filesystem::path(ROBOSIG_DATA_DIR) / "ur5e.json";
}

KinematicChain default_chain() { return KinematicChain::load(default_chain_path()); }

Pose dh_transform(const DHLink& link, double theta) {
  const double th = theta + link.theta_offset;
  const double ct = std::cos(th), st = std::sin(th);
  const double ca = std::cos(link.alpha), sa = std::sin(link.alpha);
  Pose T = Pose::Identity();
  auto& m = T.matrix();
  m(0, 0) = ct;  m(0, 1) = -st * ca; m(0, 2) = st * sa;  m(0, 3) = link.a * ct;
  m(1, 0) = st;  m(1, 1) = ct * ca;  m(1, 2) = -ct * sa; m(1, 3) = link.a * st;
  m(2, 0) = 0.0; m(2, 1) = sa;       m(2, 2) = ca;       m(2, 3) = link.d;
  return T;
}

std::array<Pose, kJoints + 1> link_frames(const KinematicChain& chain,
                                          const Vector6& q) {
  std::array<Pose, kJoints + 1> frames;
  frames[0] = Pose::Identity();
  for (int i = 0; i < kJoints; ++i) {
    frames[i + 1] = frames[i] * dh_transform(chain.links[i], q[i]);
  }
  return frames;
}

Pose forward_kinematics(const KinematicChain& chain, const Vector6& q) {
  return link_frames(chain, q)[kJoints];
}

namespace {

Matrix6 jacobian_from_frames(const std::array<Pose, kJoints + 1>& frames) {
  Matrix6 J;
  const Eigen::Vector3d p_end = frames[kJoints].translation();
  for (int i = 0; i < kJoints; ++i) {
    const Eigen::Vector3d z = frames[i].linear().col(2);
    const Eigen::Vector3d o = frames[i].translation();
    J.block<3, 1>(0, i) = z.cross(p_end - o);
    J.block<3, 1>(3, i) = z;
  }
  return J;
}

}  // namespace

Matrix6 geometric_jacobian(const KinematicChain& chain, const Vector6& q) {
  return jacobian_from_frames(link_frames(chain, q));
}

double max_horizontal_reach(const KinematicChain& chain) {
  auto flange_distance = [&](double q2, double q3) {
    Vector6 q = Vector6::Zero();
    q[1] = q2;
    q[2] = q3;
    const Eigen::Vector3d p = forward_kinematics(chain, q).translation();
    return std::hypot(p.x(), p.y());
  };
  double best = 0.0, best2 = 0.0, best3 = 0.0;
  constexpr int kGrid = 360;
  for (int i = 0; i < kGrid; ++i) {
    for (int j = 0; j < kGrid; ++j) {
      const double q2 = -std::numbers::pi + 2.0 * std::numbers::pi * i / kGrid;
      const double q3 = -std::numbers::pi + 2.0 * std::numbers::pi * j / kGrid;
      if (double r = flange_distance(q2, q3); r > best) {
        best = r;
        best2 = q2;
        best3 = q3;
      }
    }
  }
  // local refinement around the best grid cell
  double step = 2.0 * std::numbers::pi / kGrid;
  for (int round = 0; round < 30; ++round) {
    const double c2 = best2, c3 = best3;
    for (int i = -4; i <= 4; ++i) {
      for (int j = -4; j <= 4; ++j) {
        const double q2 = c2 + step * i / 4.0, q3 = c3 + step * j / 4.0;
        if (double r = flange_distance(q2, q3); r > best) {
          best = r;
          best2 = q2;
          best3 = q3;
        }
      }
    }
    step *= 0.5;
  }
  return best;
}

Eigen::Vector3d orientation_error(const Eigen::Matrix3d& to,
                                  const Eigen::Matrix3d& from) {
  const Eigen::AngleAxisd aa(to * from.transpose());
  return aa.angle() * aa.axis();
}

namespace {

void clamp_to_limits(const KinematicChain& chain, Vector6& q) {
  for (int i = 0; i < kJoints; ++i) {
    q[i] = std::clamp(q[i], chain.limits[i].min, chain.limits[i].max);
  }
}

// Residual of a task: stacked error vector plus its Jacobian restricted to
// the active joints.
struct TaskResidual {
  Eigen::Matrix<double, 6, 1> error;
  Eigen::Matrix<double, 6, Eigen::Dynamic> jacobian;
  double position_norm;
  double orientation_norm;
};

// Damped least squares with per-iteration step clamping. `evaluate` returns
// the residual at q; only the first `active` joints move.
template <typename Evaluate>
Vector6 damped_least_squares(const KinematicChain& chain, const Vector6& seed,
                             int active, const IkOptions& opt,
                             Evaluate&& evaluate) {
  Vector6 q = seed;
  clamp_to_limits(chain, q);
  Vector6 best_q = q;
  double best_pos = std::numeric_limits<double>::infinity();
  double best_rot = std::numeric_limits<double>::infinity();
  double best_cost = std::numeric_limits<double>::infinity();
  const double lambda2 = opt.damping * opt.damping;
  // iterate to well below the acceptance tolerance; quadratic convergence
  // makes the extra iterations cheap
  const double tight_pos = 1e-3 * opt.position_tolerance;
  const double tight_rot = 1e-3 * opt.orientation_tolerance;

  for (int it = 0; it <= opt.max_iterations; ++it) {
    TaskResidual r = evaluate(q);
    const double cost = r.error.squaredNorm();
    if (!std::isfinite(cost)) break;
    if (cost < best_cost) {
      best_cost = cost;
      best_q = q;
      best_pos = r.position_norm;
      best_rot = r.orientation_norm;
    }
    if (r.position_norm <= tight_pos && r.orientation_norm <= tight_rot) break;
    if (it == opt.max_iterations) break;

    const Eigen::MatrixXd& J = r.jacobian;
    Eigen::MatrixXd A = J.transpose() * J;
    A.diagonal().array() += lambda2;
    Eigen::VectorXd dq = A.ldlt().solve(J.transpose() * r.error);
    const double largest = dq.cwiseAbs().maxCoeff();
    if (largest > opt.max_step) dq *= opt.max_step / largest;
    q.head(active) += dq;
    clamp_to_limits(chain, q);
  }

  if (best_pos <= opt.position_tolerance && best_rot <= opt.orientation_tolerance) {
    return best_q;
  }
  throw IkError("IK did not converge (position residual " +
                    detail::format_double(best_pos) + " m, orientation residual " +
                    detail::format_double(best_rot) + " rad)",
                best_pos, best_rot);
}

}  // namespace

Vector6 solve_ik(const KinematicChain& chain, const Pose& target,
                 const Vector6& seed, const IkOptions& options) {
  if (!seed.allFinite() || !target.matrix().allFinite()) {
    throw ValidationError("IK inputs must be finite");
  }
  auto evaluate = [&](const Vector6& q) {
    const auto frames = link_frames(chain, q);
    const Pose& current = frames[kJoints];
    TaskResidual r;
    r.error.head<3>() = target.translation() - current.translation();
    r.error.tail<3>() = orientation_error(target.linear(), current.linear());
    r.jacobian = jacobian_from_frames(frames);
    r.position_norm = r.error.head<3>().norm();
    r.orientation_norm = r.error.tail<3>().norm();
    return r;
  };
  if (options.restarts < 0) throw ConfigError("IK restarts must be >= 0");
  std::optional<IkError> best;
  std::mt19937_64 rng(0x1d0c5eedULL);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  Vector6 start = seed;
  for (int attempt = 0; attempt <= options.restarts; ++attempt) {
    try {
      return damped_least_squares(chain, start, kJoints, options, evaluate);
    } catch (const IkError& e) {
      if (!best || e.position_residual() + e.orientation_residual() <
                       best->position_residual() + best->orientation_residual()) {
        best = e;
      }
    }
    for (auto& v : start) v = angle(rng);
  }
  throw *best;
}

Vector6 solve_axis_ik(const KinematicChain& chain, const Eigen::Vector3d& point,
                      const Eigen::Vector3d& axis, const Vector6& seed,
                      const IkOptions& options) {
  if (!seed.allFinite() || !point.allFinite() || !axis.allFinite() ||
      axis.norm() < 1e-12) {
    throw ValidationError("axis IK inputs must be finite with a nonzero axis");
  }
  const Eigen::Vector3d target_axis = axis.normalized();
  constexpr int kActive = kJoints - 1;
  return damped_least_squares(chain, seed, kActive, options, [&](const Vector6& q) {
    const auto frames = link_frames(chain, q);
    const Pose& current = frames[kJoints];
    const Eigen::Vector3d z = current.linear().col(2);
    TaskResidual r;
    r.error.head<3>() = point - current.translation();

    const Eigen::Vector3d cross = z.cross(target_axis);
    const double angle = std::atan2(cross.norm(), z.dot(target_axis));
    Eigen::Vector3d rot_axis;
    if (cross.norm() > 1e-15) {
      rot_axis = cross.normalized();
    } else if (angle > 1.0) {
      rot_axis = z.unitOrthogonal();  // antiparallel
    } else {
      rot_axis.setZero();
    }
    r.error.tail<3>() = angle * rot_axis;

    // Spinning about the tool axis does not change the task, so project
    // the angular rows onto the plane normal to z.
    const Matrix6 J = jacobian_from_frames(frames);
    const Eigen::Matrix3d project = Eigen::Matrix3d::Identity() - z * z.transpose();
    r.jacobian.resize(6, kActive);
    r.jacobian.topRows<3>() = J.block<3, kActive>(0, 0);
    r.jacobian.bottomRows<3>() = project * J.block<3, kActive>(3, 0);
    r.position_norm = r.error.head<3>().norm();
    r.orientation_norm = angle;
    return r;
  });
}

Vector6 inverse_dynamics(const KinematicChain& chain, const Vector6& q,
                         const Vector6& qd, const Vector6& qdd, double gravity) {
  const auto frames = link_frames(chain, q);

  std::array<Eigen::Vector3d, kJoints> force, moment, com;
  std::array<Eigen::Vector3d, kJoints + 1> origin;
  for (int i = 0; i <= kJoints; ++i) origin[i] = frames[i].translation();

  // Forward pass in base coordinates. Gravity enters as an upward
  // acceleration of the base.
  Eigen::Vector3d w = Eigen::Vector3d::Zero();
  Eigen::Vector3d wd = Eigen::Vector3d::Zero();
  Eigen::Vector3d acc(0.0, 0.0, gravity);  // at origin of frame i-1
  for (int i = 0; i < kJoints; ++i) {
    const Eigen::Vector3d z = frames[i].linear().col(2);
    const Eigen::Vector3d w_prev = w;
    w = w_prev + z * qd[i];
    wd = wd + z * qdd[i] + w_prev.cross(z * qd[i]);

    const Eigen::Matrix3d& R = frames[i + 1].linear();
    const auto& link = chain.inertias[i];
    com[i] = origin[i + 1] + R * link.com;
    const Eigen::Vector3d rc = com[i] - origin[i];
    const Eigen::Vector3d acc_com = acc + wd.cross(rc) + w.cross(w.cross(rc));
    const Eigen::Matrix3d I = R * link.inertia * R.transpose();
    force[i] = link.mass * acc_com;
    moment[i] = I * wd + w.cross(I * w);

    const Eigen::Vector3d ro = origin[i + 1] - origin[i];
    acc = acc + wd.cross(ro) + w.cross(w.cross(ro));
  }

  // Backward pass: f, n are the wrench link i-1 exerts on link i, moments
  // about origin[i].
  Vector6 tau;
  Eigen::Vector3d f = Eigen::Vector3d::Zero();
  Eigen::Vector3d n = Eigen::Vector3d::Zero();
  for (int i = kJoints - 1; i >= 0; --i) {
    const Eigen::Vector3d ro = origin[i + 1] - origin[i];
    n = n + ro.cross(f) + (com[i] - origin[i]).cross(force[i]) + moment[i];
    f = f + force[i];
    tau[i] = n.dot(frames[i].linear().col(2));
  }
  return tau;
}

Vector6 torque_from_current(const KinematicChain& chain, const Vector6& current) {
  return chain.gear_ratios.cwiseProduct(chain.torque_constants).cwiseProduct(current);
}

Vector6 current_from_torque(const KinematicChain& chain, const Vector6& torque) {
  const Vector6 coeff = chain.gear_ratios.cwiseProduct(chain.torque_constants);
  for (int i = 0; i < kJoints; ++i) {
    if (coeff[i] == 0.0 || !std::isfinite(coeff[i])) {
      throw ConfigError("zero torque coefficient on joint " + std::to_string(i + 1));
    }
  }
  return torque.cwiseQuotient(coeff);
}

}  // namespace robosig
