#pragma once

// Six-joint serial arm described by standard Denavit-Hartenberg parameters,
// with rigid-body inertial data and the motor current/torque relation.

#include <array>
#include <filesystem>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <json.hpp>

#include "robosig/error.hpp"

namespace robosig {

inline constexpr int kJoints = 6;

using Vector6 = Eigen::Matrix<double, kJoints, 1>;
using Matrix6 = Eigen::Matrix<double, kJoints, kJoints>;
using Pose = Eigen::Isometry3d;

struct DHLink {
  double a = 0.0;      // m
  double alpha = 0.0;  // rad
  double d = 0.0;      // m
  double theta_offset = 0.0;
};

struct JointLimit {
  double min;
  double max;
};

/// Mass properties of one link, expressed in that link's D-H frame.
struct LinkInertia {
  double mass = 0.0;
  Eigen::Vector3d com = Eigen::Vector3d::Zero();
  Eigen::Matrix3d inertia = Eigen::Matrix3d::Zero();  // about the COM
};

class KinematicChain {
 public:
  std::array<DHLink, kJoints> links{};
  std::array<JointLimit, kJoints> limits{};
  std::array<LinkInertia, kJoints> inertias{};
  Vector6 gear_ratios = Vector6::Constant(101.0);
  Vector6 torque_constants = Vector6::Zero();  // N·m/A
  std::string name;

  /// Parses a chain description. Throws ValidationError/ParseError on
  /// malformed or non-finite content.
  static KinematicChain from_json(const nlohmann::json& doc);
  static KinematicChain load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  /// Finite parameters, ordered limits, symmetric inertias, nonzero r·K_l.
  void validate() const;
};

/// Bundled UR5e-style chain. Honours $ROBOSIG_CHAIN when set.
KinematicChain default_chain();
std::filesystem::path default_chain_path();

/// Rot_z(theta + offset) · Transl_z(d) · Transl_x(a) · Rot_x(alpha).
Pose dh_transform(const DHLink& link, double theta);

/// Frames 0..6: base (identity) followed by each link frame.
std::array<Pose, kJoints + 1> link_frames(const KinematicChain& chain,
                                          const Vector6& q);

Pose forward_kinematics(const KinematicChain& chain, const Vector6& q);

/// Rows 0-2 map joint rates to flange linear velocity, rows 3-5 to angular
/// velocity, both in the base frame.
Matrix6 geometric_jacobian(const KinematicChain& chain, const Vector6& q);

/// Largest horizontal distance from the base axis to the flange with the
/// wrist joints at zero, searched over the shoulder and elbow angles.
double max_horizontal_reach(const KinematicChain& chain);

/// Rotation-vector error taking `from` onto `to` (base frame).
Eigen::Vector3d orientation_error(const Eigen::Matrix3d& to,
                                  const Eigen::Matrix3d& from);

struct IkOptions {
  double damping = 1e-3;
  int max_iterations = 200;
  double max_step = 0.2;  // rad per joint per iteration
  double position_tolerance = 1e-5;
  double orientation_tolerance = 1e-4;
  /// solve_ik only: extra attempts from fixed pseudo-random postures when
  /// the seeded attempt fails. Restarted solutions need not lie on the
  /// seed's branch, so trajectory planning leaves this at 0.
  int restarts = 0;
};

/// Thrown when IK fails to converge; carries the best residuals seen.
class IkError : public NumericalError {
 public:
  IkError(const std::string& what, double position_residual,
          double orientation_residual)
      : NumericalError(what),
        position_residual_(position_residual),
        orientation_residual_(orientation_residual) {}

  double position_residual() const noexcept { return position_residual_; }
  double orientation_residual() const noexcept { return orientation_residual_; }

 private:
  double position_residual_;
  double orientation_residual_;
};

/// Damped least-squares IK for a full pose, iterating from `seed`. The
/// result stays on the branch reached continuously from the seed.
Vector6 solve_ik(const KinematicChain& chain, const Pose& target,
                 const Vector6& seed, const IkOptions& options = {});

/// Position plus tool-axis IK: the flange z axis is aligned with `axis` and
/// joint 6 is held at its seed value, so the tool never spins about itself.
Vector6 solve_axis_ik(const KinematicChain& chain, const Eigen::Vector3d& point,
                      const Eigen::Vector3d& axis, const Vector6& seed,
                      const IkOptions& options = {});

inline constexpr double kGravity = 9.81;

/// Recursive Newton-Euler joint torques. Gravity acts along -z of the base.
Vector6 inverse_dynamics(const KinematicChain& chain, const Vector6& q,
                         const Vector6& qd, const Vector6& qdd,
                         double gravity = kGravity);

/// τ_i = r_i · K_l,i · I_i
Vector6 torque_from_current(const KinematicChain& chain, const Vector6& current);
Vector6 current_from_torque(const KinematicChain& chain, const Vector6& torque);

}  // namespace robosig
