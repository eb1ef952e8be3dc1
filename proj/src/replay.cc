#include "robosig/replay.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "text_util.hpp"

namespace robosig {

namespace {

struct SurfaceFrame {
  Eigen::Vector3d u, v, normal;
};

SurfaceFrame surface_frame(const Eigen::Vector3d& pen_axis) {
  SurfaceFrame f;
  f.normal = -pen_axis.normalized();
  Eigen::Vector3d u = Eigen::Vector3d::UnitX() -
                      Eigen::Vector3d::UnitX().dot(f.normal) * f.normal;
  if (u.norm() < 1e-9) {
    u = Eigen::Vector3d::UnitY() - Eigen::Vector3d::UnitY().dot(f.normal) * f.normal;
  }
  f.u = u.normalized();
  f.v = f.normal.cross(f.u);
  return f;
}

}  // namespace

void WorkspacePlacement::validate(const KinematicChain& chain) const {
  if (!(pen_lift > 0.0)) throw ValidationError("pen_lift must be > 0");
  if (!(box_size > 0.0)) throw ValidationError("box_size must be > 0");
  if (!surface_center.allFinite() || !pen_axis.allFinite() ||
      pen_axis.norm() < 1e-12) {
    throw ValidationError("placement vectors must be finite, pen_axis nonzero");
  }
  const SurfaceFrame f = surface_frame(pen_axis);
  const PlanningOptions defaults;
  Vector6 seed = defaults.home;
  for (auto [su, sv] : {std::pair{-0.5, -0.5}, {0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}}) {
    const Eigen::Vector3d corner =
        surface_center + box_size * (su * f.u + sv * f.v);
    try {
      seed = solve_axis_ik(chain, corner, pen_axis, seed);
    } catch (const IkError& e) {
      throw ValidationError("writing box corner not reachable: " +
                            std::string(e.what()));
    }
  }
}

TimedWaypoints map_to_workspace(const SignatureTrajectory& signature,
                                const WorkspacePlacement& placement) {
  signature.validate();
  auto [xmin, xmax] = std::minmax_element(signature.x.begin(), signature.x.end());
  auto [ymin, ymax] = std::minmax_element(signature.y.begin(), signature.y.end());
  const double extent = std::max(*xmax - *xmin, *ymax - *ymin);
  if (!(extent > 0.0)) {
    throw ValidationError("signature has zero spatial extent");
  }
  const double scale = placement.box_size / extent;
  const double cx = 0.5 * (*xmin + *xmax);
  const double cy = 0.5 * (*ymin + *ymax);
  const SurfaceFrame f = surface_frame(placement.pen_axis);

  TimedWaypoints out;
  out.pen_axis = placement.pen_axis.normalized();
  out.points.reserve(signature.size());
  for (std::size_t i = 0; i < signature.size(); ++i) {
    Eigen::Vector3d p = placement.surface_center +
                        scale * ((signature.x[i] - cx) * f.u + (signature.y[i] - cy) * f.v);
    if (signature.has_pressure() && signature.pressure[i] <= 0.0) {
      p += placement.pen_lift * f.normal;
    }
    out.points.push_back({signature.t[i], p});
  }
  return out;
}

CubicSpline::CubicSpline(std::vector<double> t, std::vector<double> y)
    : t_(std::move(t)), y_(std::move(y)), m_(t_.size(), 0.0) {
  const std::size_t n = t_.size();
  if (n < 2 || y_.size() != n) {
    throw ValidationError("spline needs >= 2 knots with matching values");
  }
  if (n == 2) return;
  // Tridiagonal system for interior second derivatives (natural ends),
  // solved with the Thomas algorithm.
  std::vector<double> diag(n, 0.0), upper(n, 0.0), rhs(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = t_[i] - t_[i - 1];
    const double h1 = t_[i + 1] - t_[i];
    diag[i] = 2.0 * (h0 + h1);
    upper[i] = h1;
    rhs[i] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
  }
  for (std::size_t i = 2; i + 1 < n; ++i) {
    const double lower = t_[i] - t_[i - 1];
    const double w = lower / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  for (std::size_t i = n - 2; i >= 1; --i) {
    m_[i] = (rhs[i] - upper[i] * m_[i + 1]) / diag[i];
  }
}

std::size_t CubicSpline::segment(double t) const {
  auto it = std::upper_bound(t_.begin(), t_.end(), t);
  std::size_t k = it == t_.begin() ? 0 : static_cast<std::size_t>(it - t_.begin()) - 1;
  return std::min(k, t_.size() - 2);
}

double CubicSpline::value(double t) const {
  const std::size_t k = segment(t);
  const double h = t_[k + 1] - t_[k];
  const double a = (t_[k + 1] - t) / h;
  const double b = (t - t_[k]) / h;
  return a * y_[k] + b * y_[k + 1] +
         ((a * a * a - a) * m_[k] + (b * b * b - b) * m_[k + 1]) * h * h / 6.0;
}

double CubicSpline::derivative(double t) const {
  const std::size_t k = segment(t);
  const double h = t_[k + 1] - t_[k];
  const double a = (t_[k + 1] - t) / h;
  const double b = (t - t_[k]) / h;
  return (y_[k + 1] - y_[k]) / h +
         (-(3.0 * a * a - 1.0) * m_[k] + (3.0 * b * b - 1.0) * m_[k + 1]) * h / 6.0;
}

double CubicSpline::second_derivative(double t) const {
  const std::size_t k = segment(t);
  const double h = t_[k + 1] - t_[k];
  const double a = (t_[k + 1] - t) / h;
  const double b = (t - t_[k]) / h;
  return a * m_[k] + b * m_[k + 1];
}

std::vector<JointState> plan_joint_trajectory(const KinematicChain& chain,
                                              const TimedWaypoints& waypoints,
                                              const PlanningOptions& options) {
  return plan_joint_trajectory(chain, waypoints, options, nullptr);
}

std::vector<JointState> plan_joint_trajectory(const KinematicChain& chain,
                                              const TimedWaypoints& waypoints,
                                              const PlanningOptions& options,
                                              std::vector<Vector6>* ik_solutions) {
  const auto& pts = waypoints.points;
  if (pts.size() < 2) throw ValidationError("need at least 2 waypoints");
  if (!(options.control_rate > 0.0)) throw ConfigError("control_rate must be > 0");

  std::vector<Vector6> solutions;
  solutions.reserve(pts.size());
  Vector6 seed = options.home;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (k > 0 && !(pts[k].t > pts[k - 1].t)) {
      throw ValidationError("waypoint times must increase");
    }
    try {
      seed = solve_axis_ik(chain, pts[k].position, waypoints.pen_axis, seed,
                           options.ik);
    } catch (const IkError& e) {
      throw PlanningError(k, e.what());
    }
    solutions.push_back(seed);
  }

  std::vector<double> knots(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) knots[k] = pts[k].t;
  std::vector<CubicSpline> splines;
  splines.reserve(kJoints);
  for (int j = 0; j < kJoints; ++j) {
    std::vector<double> values(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) values[k] = solutions[k][j];
    splines.emplace_back(knots, std::move(values));
  }

  const double t0 = knots.front();
  const double t1 = knots.back();
  const auto n_ticks =
      static_cast<std::size_t>(std::floor((t1 - t0) * options.control_rate + 1e-9)) + 1;
  std::vector<double> ticks(n_ticks);
  for (std::size_t k = 0; k < n_ticks; ++k) {
    ticks[k] = t0 + static_cast<double>(k) / options.control_rate;
  }
  if (t1 - ticks.back() > 1e-9) ticks.push_back(t1);

  std::vector<JointState> states(ticks.size());
  for (std::size_t k = 0; k < ticks.size(); ++k) {
    auto& s = states[k];
    s.t = ticks[k];
    for (int j = 0; j < kJoints; ++j) {
      s.theta[j] = splines[j].value(s.t);
      s.omega[j] = splines[j].derivative(s.t);
      s.accel[j] = splines[j].second_derivative(s.t);
    }
  }
  if (ik_solutions) *ik_solutions = std::move(solutions);
  return states;
}

std::string_view to_string(FeatureSource source) {
  return source == FeatureSource::simulated ? "simulated" : "estimated";
}

FeatureSource feature_source_from_string(std::string_view text) {
  if (text == "simulated") return FeatureSource::simulated;
  if (text == "estimated") return FeatureSource::estimated;
  throw ConfigError("unknown feature source '" + std::string(text) +
                    "' (expected simulated or estimated)");
}

std::string_view to_string(FeatureGroup group) {
  switch (group) {
    case FeatureGroup::theta: return "theta";
    case FeatureGroup::omega: return "omega";
    case FeatureGroup::tau: return "tau";
  }
  return "?";
}

FeatureGroup feature_group_from_string(std::string_view text) {
  if (text == "theta") return FeatureGroup::theta;
  if (text == "omega") return FeatureGroup::omega;
  if (text == "tau") return FeatureGroup::tau;
  throw ConfigError("unknown feature group '" + std::string(text) +
                    "' (expected theta, omega or tau)");
}

const Eigen::MatrixXd& JointFeatureSeries::channels(FeatureGroup group) const {
  switch (group) {
    case FeatureGroup::theta: return theta;
    case FeatureGroup::omega: return omega;
    case FeatureGroup::tau: break;
  }
  return tau;
}

void JointFeatureSeries::validate() const {
  const auto m = static_cast<Eigen::Index>(t.size());
  if (m < 1) throw ValidationError("feature series is empty");
  for (const auto* mat : {&theta, &omega, &tau}) {
    if (mat->rows() != m || mat->cols() != kJoints) {
      throw ShapeError("feature channel is " + std::to_string(mat->rows()) + "x" +
                       std::to_string(mat->cols()) + ", expected " +
                       std::to_string(m) + "x6");
    }
    if (!mat->allFinite()) throw ValidationError("non-finite joint feature");
  }
}

JointFeatureSeries replay(const KinematicChain& chain,
                          const SignatureTrajectory& signature,
                          const WorkspacePlacement& placement,
                          const PlanningOptions& options) {
  const TimedWaypoints waypoints = map_to_workspace(signature, placement);
  std::vector<JointState> states = plan_joint_trajectory(chain, waypoints, options);
  for (auto& s : states) {
    const Vector6 tau = inverse_dynamics(chain, s.theta, s.omega, s.accel);
    s.current = current_from_torque(chain, tau);
    s.tau = torque_from_current(chain, s.current);
  }

  const auto m = static_cast<Eigen::Index>(signature.size());
  JointFeatureSeries out;
  out.t = signature.t;
  out.theta.resize(m, kJoints);
  out.omega.resize(m, kJoints);
  out.tau.resize(m, kJoints);
  out.source = FeatureSource::simulated;
  out.user_id = signature.user_id;
  out.label = signature.label;
  out.session = signature.session;

  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double t = signature.t[static_cast<std::size_t>(i)];
    while (k + 2 < states.size() && states[k + 1].t <= t) ++k;
    const auto& a = states[k];
    const auto& b = states[k + 1];
    const double w = std::clamp((t - a.t) / (b.t - a.t), 0.0, 1.0);
    out.theta.row(i) = ((1.0 - w) * a.theta + w * b.theta).transpose();
    out.omega.row(i) = ((1.0 - w) * a.omega + w * b.omega).transpose();
    out.tau.row(i) = ((1.0 - w) * a.tau + w * b.tau).transpose();
  }
  out.validate();
  return out;
}

std::string write_feature_file(const JointFeatureSeries& series) {
  series.validate();
  std::string out;
  out += "#source: ";
  out += to_string(series.source);
  out += "\n#user: " + series.user_id + "\n#label: ";
  out += to_string(series.label);
  out += "\n#session: " + std::to_string(series.session) + "\n#cols: t";
  for (const char* group : {"theta", "omega", "tau"}) {
    for (int j = 1; j <= kJoints; ++j) out += " " + std::string(group) + std::to_string(j);
  }
  out += '\n';
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    detail::append_double(out, series.t[i]);
    for (const auto* mat : {&series.theta, &series.omega, &series.tau}) {
      for (int j = 0; j < kJoints; ++j) {
        out += ' ';
        detail::append_double(out, (*mat)(r, j));
      }
    }
    out += '\n';
  }
  return out;
}

JointFeatureSeries parse_feature_file(std::string_view text) {
  JointFeatureSeries s;
  std::vector<std::array<double, 1 + 3 * kJoints>> rows;
  detail::for_each_line(text, [&](std::size_t line_no, std::string_view raw) {
    std::string_view line = detail::trim(raw);
    if (line.empty()) return;
    if (line.front() == '#') {
      auto colon = line.find(':');
      if (colon == std::string_view::npos) return;
      auto key = detail::trim(line.substr(1, colon - 1));
      auto value = detail::trim(line.substr(colon + 1));
      if (key == "source") {
        if (value == "simulated") {
          s.source = FeatureSource::simulated;
        } else if (value == "estimated") {
          s.source = FeatureSource::estimated;
        } else {
          throw ParseError(line_no, "unknown feature source");
        }
      } else if (key == "user") {
        s.user_id = std::string(value);
      } else if (key == "label") {
        try {
          s.label = label_from_string(value);
        } catch (const ValidationError& e) {
          throw ParseError(line_no, e.what());
        }
      } else if (key == "session") {
        auto v = detail::parse_double(value);
        if (!v) throw ParseError(line_no, "bad session");
        s.session = static_cast<int>(*v);
      }
      return;
    }
    auto fields = detail::split_fields(line);
    if (fields.size() != 1 + 3 * kJoints) {
      throw ParseError(line_no, "expected 19 columns, got " +
                                    std::to_string(fields.size()));
    }
    std::array<double, 1 + 3 * kJoints> row{};
    for (std::size_t c = 0; c < fields.size(); ++c) {
      auto v = detail::parse_double(fields[c]);
      if (!v || !std::isfinite(*v)) {
        throw ParseError(line_no, "bad number '" + std::string(fields[c]) + "'");
      }
      row[c] = *v;
    }
    rows.push_back(row);
  });
  const auto m = static_cast<Eigen::Index>(rows.size());
  s.theta.resize(m, kJoints);
  s.omega.resize(m, kJoints);
  s.tau.resize(m, kJoints);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    s.t.push_back(row[0]);
    for (int j = 0; j < kJoints; ++j) {
      s.theta(i, j) = row[static_cast<std::size_t>(1 + j)];
      s.omega(i, j) = row[static_cast<std::size_t>(1 + kJoints + j)];
      s.tau(i, j) = row[static_cast<std::size_t>(1 + 2 * kJoints + j)];
    }
  }
  s.validate();
  return s;
}

void write_features(const std::filesystem::path& path,
                    const JointFeatureSeries& series) {
  detail::write_file(path, write_feature_file(series));
}

JointFeatureSeries read_features(const std::filesystem::path& path) {
  try {
    return parse_feature_file(detail::read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

FeatureCorpus replay_corpus(const KinematicChain& chain, const Corpus& corpus,
                            const WorkspacePlacement& placement,
                            const PlanningOptions& options) {
  FeatureCorpus out;
  for (const auto& [id, u] : corpus.users) {
    auto& dst = out.users[id];
    for (const auto& s : u.genuine) dst.genuine.push_back(replay(chain, s, placement, options));
    for (const auto& s : u.forgeries) {
      dst.forgeries.push_back(replay(chain, s, placement, options));
    }
  }
  return out;
}

void write_feature_corpus(const std::filesystem::path& root,
                          const FeatureCorpus& features) {
  for (const auto& [id, u] : features.users) {
    for (std::size_t i = 0; i < u.genuine.size(); ++i) {
      write_features(root / id / ("g_" + std::to_string(i + 1) + ".feat"), u.genuine[i]);
    }
    for (std::size_t i = 0; i < u.forgeries.size(); ++i) {
      write_features(root / id / ("f_" + std::to_string(i + 1) + ".feat"),
                     u.forgeries[i]);
    }
  }
}

FeatureCorpus read_feature_corpus(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) {
    throw Error(ErrorKind::data, "feature directory not found: " + root.string());
  }
  FeatureCorpus out;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string user = entry.path().filename().string();
    std::map<int, JointFeatureSeries> genuine, forged;
    for (const auto& file : std::filesystem::directory_iterator(entry.path())) {
      const std::string name = file.path().filename().string();
      if (name.size() < 8 || (name[0] != 'g' && name[0] != 'f') || name[1] != '_' ||
          !name.ends_with(".feat")) {
        continue;
      }
      int n = 0;
      const char* first = name.data() + 2;
      const char* last = name.data() + name.size() - 5;
      auto [p, ec] = std::from_chars(first, last, n);
      if (ec != std::errc{} || p != last) continue;
      auto series = read_features(file.path());
      if (series.user_id.empty()) series.user_id = user;
      (name[0] == 'g' ? genuine : forged)[n] = std::move(series);
    }
    auto& u = out.users[user];
    for (auto& [n, s] : genuine) u.genuine.push_back(std::move(s));
    for (auto& [n, s] : forged) u.forgeries.push_back(std::move(s));
  }
  return out;
}

}  // namespace robosig
