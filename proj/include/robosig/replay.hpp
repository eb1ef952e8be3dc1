#pragma once

// Replays a signature on the simulated arm and records joint features
// aligned with the signature's own samples.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "robosig/robot_model.hpp"
#include "robosig/signature_io.hpp"

namespace robosig {

struct WorkspacePlacement {
  Eigen::Vector3d surface_center{0.40, 0.00, 0.10};
  double box_size = 0.10;  // side of the writing square, m
  double pen_lift = 0.005;
  /// Direction the pen points, i.e. into the writing surface.
  Eigen::Vector3d pen_axis{0.0, 0.0, -1.0};

  /// Checks pen_lift/box_size and that the four corners of the box are
  /// reachable with the pen perpendicular to the surface.
  void validate(const KinematicChain& chain) const;
};

struct Waypoint {
  double t;
  Eigen::Vector3d position;
};

struct TimedWaypoints {
  std::vector<Waypoint> points;
  Eigen::Vector3d pen_axis;
};

/// Scales the signature isotropically so its longer side spans box_size,
/// centres it on the surface, and lifts pen-up samples by pen_lift.
TimedWaypoints map_to_workspace(const SignatureTrajectory& signature,
                                const WorkspacePlacement& placement);

struct JointState {
  double t = 0.0;
  Vector6 theta = Vector6::Zero();
  Vector6 omega = Vector6::Zero();
  Vector6 accel = Vector6::Zero();
  Vector6 tau = Vector6::Zero();
  Vector6 current = Vector6::Zero();
};

/// Natural cubic spline through (t_k, y_k) with analytic derivatives.
class CubicSpline {
 public:
  CubicSpline(std::vector<double> t, std::vector<double> y);

  double value(double t) const;
  double derivative(double t) const;
  double second_derivative(double t) const;

 private:
  std::size_t segment(double t) const;

  std::vector<double> t_;
  std::vector<double> y_;
  std::vector<double> m_;  // second derivatives at the knots
};

struct PlanningOptions {
  double control_rate = 125.0;  // Hz
  /// Seed for the first waypoint: elbow up, pen down over the default
  /// surface centre.
  Vector6 home = (Vector6() << 2.80, -1.25, 2.45, -2.77, -1.5708, 0.0).finished();
  IkOptions ik;
};

/// Thrown when a waypoint cannot be solved; names the waypoint.
class PlanningError : public NumericalError {
 public:
  PlanningError(std::size_t waypoint, const std::string& what)
      : NumericalError("waypoint " + std::to_string(waypoint) + ": " + what),
        waypoint_(waypoint) {}
  std::size_t waypoint() const noexcept { return waypoint_; }

 private:
  std::size_t waypoint_;
};

/// IK at every waypoint (each seeded by the previous solution), then a
/// cubic spline per joint sampled at the control rate. Returned states
/// carry theta, omega and accel; torque fields are left zero.
std::vector<JointState> plan_joint_trajectory(const KinematicChain& chain,
                                              const TimedWaypoints& waypoints,
                                              const PlanningOptions& options = {});

/// Same as above but also exposes the per-waypoint IK solutions.
std::vector<JointState> plan_joint_trajectory(const KinematicChain& chain,
                                              const TimedWaypoints& waypoints,
                                              const PlanningOptions& options,
                                              std::vector<Vector6>* ik_solutions);

enum class FeatureSource { simulated, estimated };

std::string_view to_string(FeatureSource source);
FeatureSource feature_source_from_string(std::string_view text);

/// The three joint channel groups: positions, velocities, torques.
enum class FeatureGroup { theta = 0, omega = 1, tau = 2 };

std::string_view to_string(FeatureGroup group);
FeatureGroup feature_group_from_string(std::string_view text);

/// Per-sample joint channels, M rows aligned with the source signature.
struct JointFeatureSeries {
  std::vector<double> t;
  Eigen::MatrixXd theta;  // M x 6
  Eigen::MatrixXd omega;
  Eigen::MatrixXd tau;
  FeatureSource source = FeatureSource::simulated;
  std::string user_id;
  Label label = Label::genuine;
  int session = 0;

  std::size_t size() const noexcept { return t.size(); }
  const Eigen::MatrixXd& channels(FeatureGroup group) const;
  void validate() const;
};

/// Full simulated pipeline: workspace mapping, joint planning at the control
/// rate, inverse dynamics, the current measurement loop, and linear
/// resampling back onto the signature timestamps.
JointFeatureSeries replay(const KinematicChain& chain,
                          const SignatureTrajectory& signature,
                          const WorkspacePlacement& placement,
                          const PlanningOptions& options = {});

/// Feature file: metadata header plus M rows of t, theta1..6, omega1..6,
/// tau1..6.
std::string write_feature_file(const JointFeatureSeries& series);
JointFeatureSeries parse_feature_file(std::string_view text);

void write_features(const std::filesystem::path& path,
                    const JointFeatureSeries& series);
JointFeatureSeries read_features(const std::filesystem::path& path);

struct UserFeatures {
  std::vector<JointFeatureSeries> genuine;
  std::vector<JointFeatureSeries> forgeries;
};

/// Feature series laid out like a Corpus: user id -> genuine/forgery lists,
/// positions matching the corpus signatures.
struct FeatureCorpus {
  std::map<std::string, UserFeatures> users;
};

/// Replays every signature, in corpus order.
FeatureCorpus replay_corpus(const KinematicChain& chain, const Corpus& corpus,
                            const WorkspacePlacement& placement,
                            const PlanningOptions& options = {});

/// `<root>/<user_id>/{g|f}_<n>.feat`
void write_feature_corpus(const std::filesystem::path& root,
                          const FeatureCorpus& features);
FeatureCorpus read_feature_corpus(const std::filesystem::path& root);

}  // namespace robosig
