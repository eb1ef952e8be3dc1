// Seeded synthetic signatures built from sigma-lognormal strokes: each stroke
// contributes a velocity vector whose magnitude follows a lognormal profile
// and whose direction sweeps along a circular arc.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "robosig/error.hpp"
#include "robosig/seed.hpp"
#include "robosig/signature_io.hpp"

namespace robosig {

void SynthesisConfig::validate() const {
  if (n_users < 1 || genuine_per_user < 1 || forgeries_per_user < 1) {
    throw ConfigError("synthesis counts must be >= 1");
  }
  if (strokes_min < 1 || strokes_max < strokes_min) {
    throw ConfigError("invalid stroke count range");
  }
  if (!(duration_min > 0.0) || !(duration_max >= duration_min)) {
    throw ConfigError("degenerate duration range [" +
                      std::to_string(duration_min) + ", " +
                      std::to_string(duration_max) + "]");
  }
  if (!(sample_rate > 0.0)) throw ConfigError("sample_rate must be > 0");
  if (!(genuine_jitter >= 0.0) || !(forgery_noise > genuine_jitter)) {
    throw ConfigError("forgery_noise must exceed genuine_jitter");
  }
  if (!(canvas_size > 0.0)) throw ConfigError("canvas_size must be > 0");
  if (!(pen_up_probability >= 0.0 && pen_up_probability <= 1.0)) {
    throw ConfigError("pen_up_probability must lie in [0,1]");
  }
}

namespace {

struct Stroke {
  double t0;       // onset, s
  double mu;       // log-time delay
  double sigma;    // log-response time
  double amplitude;
  double angle_start;
  double angle_sweep;
};

struct UserStyle {
  std::vector<Stroke> strokes;
  double spacing;  // nominal stroke spacing, s
  bool pen_up;
  double pen_up_at;  // fraction of duration
  double pressure_freq;
};

UserStyle draw_style(const SynthesisConfig& cfg, std::mt19937_64& rng) {
  using U = std::uniform_real_distribution<double>;
  UserStyle style;
  int n_strokes =
      std::uniform_int_distribution<int>(cfg.strokes_min, cfg.strokes_max)(rng);
  double duration = U(cfg.duration_min, cfg.duration_max)(rng);
  style.spacing = duration / (n_strokes + 1);
  for (int k = 0; k < n_strokes; ++k) {
    Stroke s;
    s.t0 = std::max(0.0, k * style.spacing * U(0.9, 1.1)(rng));
    s.mu = std::log(style.spacing * U(0.9, 1.4)(rng));
    s.sigma = U(0.2, 0.35)(rng);
    s.amplitude = U(15.0, 40.0)(rng);
    s.angle_start = U(-std::numbers::pi, std::numbers::pi)(rng);
    s.angle_sweep = U(-1.5, 1.5)(rng);
    style.strokes.push_back(s);
  }
  style.pen_up = U(0.0, 1.0)(rng) < cfg.pen_up_probability;
  style.pen_up_at = U(0.35, 0.65)(rng);
  style.pressure_freq = U(0.5, 2.0)(rng);
  return style;
}

std::vector<Stroke> jitter(const UserStyle& style, double amount,
                           std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  double time_scale = std::exp(0.5 * amount * n01(rng));
  std::vector<Stroke> out = style.strokes;
  for (auto& s : out) {
    s.t0 = std::max(0.0, (s.t0 + amount * style.spacing * n01(rng)) * time_scale);
    s.mu += std::log(time_scale) + amount * n01(rng);
    s.sigma *= std::exp(amount * n01(rng));
    s.amplitude *= std::exp(amount * n01(rng));
    s.angle_start += amount * n01(rng);
    s.angle_sweep += amount * n01(rng);
  }
  return out;
}

SignatureTrajectory render(const SynthesisConfig& cfg, const UserStyle& style,
                           const std::vector<Stroke>& strokes) {
  double end = 0.0;
  for (const auto& s : strokes) {
    end = std::max(end, s.t0 + std::exp(s.mu + 2.5 * s.sigma));
  }
  const auto n = static_cast<std::size_t>(std::floor(end * cfg.sample_rate)) + 1;

  SignatureTrajectory sig;
  sig.t.resize(n);
  sig.x.resize(n);
  sig.y.resize(n);
  sig.pressure.resize(n);

  std::vector<double> vx(n, 0.0), vy(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / cfg.sample_rate;
    sig.t[i] = t;
    for (const auto& s : strokes) {
      const double dt = t - s.t0;
      if (dt <= 0.0) continue;
      const double z = (std::log(dt) - s.mu) / s.sigma;
      const double speed = s.amplitude /
                           (s.sigma * std::sqrt(2.0 * std::numbers::pi) * dt) *
                           std::exp(-0.5 * z * z);
      const double phi =
          s.angle_start + 0.5 * s.angle_sweep * (1.0 + std::erf(z / std::sqrt(2.0)));
      vx[i] += speed * std::cos(phi);
      vy[i] += speed * std::sin(phi);
    }
  }
  // trapezoidal integration of velocity
  const double h = 1.0 / cfg.sample_rate;
  for (std::size_t i = 1; i < n; ++i) {
    sig.x[i] = sig.x[i - 1] + 0.5 * h * (vx[i] + vx[i - 1]);
    sig.y[i] = sig.y[i - 1] + 0.5 * h * (vy[i] + vy[i - 1]);
  }

  // fit the longer bounding-box side to the canvas, centred
  auto [xmin, xmax] = std::minmax_element(sig.x.begin(), sig.x.end());
  auto [ymin, ymax] = std::minmax_element(sig.y.begin(), sig.y.end());
  const double cx = 0.5 * (*xmin + *xmax);
  const double cy = 0.5 * (*ymin + *ymax);
  const double extent = std::max(*xmax - *xmin, *ymax - *ymin);
  const double scale = extent > 0.0 ? cfg.canvas_size / extent : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    sig.x[i] = 0.5 * cfg.canvas_size + (sig.x[i] - cx) * scale;
    sig.y[i] = 0.5 * cfg.canvas_size + (sig.y[i] - cy) * scale;
  }

  const double duration = sig.t.back();
  for (std::size_t i = 0; i < n; ++i) {
    const double u = sig.t[i] / duration;
    const bool lifted = style.pen_up && std::abs(u - style.pen_up_at) < 0.04;
    sig.pressure[i] =
        lifted ? 0.0
               : 0.7 + 0.2 * std::sin(2.0 * std::numbers::pi * style.pressure_freq * u);
  }
  return sig;
}

std::string user_name(int index, int n_users) {
  std::string digits = std::to_string(index + 1);
  const std::size_t width =
      std::max<std::size_t>(3, std::to_string(n_users).size());
  return "u" + std::string(width - std::min(width, digits.size()), '0') + digits;
}

}  // namespace

Corpus generate_corpus(const SynthesisConfig& config) {
  config.validate();
  Corpus corpus;
  for (int u = 0; u < config.n_users; ++u) {
    const std::uint64_t user_seed = derive_seed(config.seed, static_cast<std::uint64_t>(u));
    std::mt19937_64 style_rng(derive_seed(user_seed, "style"));
    const UserStyle style = draw_style(config, style_rng);
    const std::string id = user_name(u, config.n_users);
    auto& record = corpus.users[id];

    for (int g = 0; g < config.genuine_per_user; ++g) {
      std::mt19937_64 rng(derive_seed(derive_seed(user_seed, "genuine"),
                                      static_cast<std::uint64_t>(g)));
      auto sig = render(config, style, jitter(style, config.genuine_jitter, rng));
      sig.user_id = id;
      sig.label = Label::genuine;
      sig.session = 2 * g < config.genuine_per_user ? 1 : 2;
      record.genuine.push_back(std::move(sig));
    }
    for (int f = 0; f < config.forgeries_per_user; ++f) {
      std::mt19937_64 rng(derive_seed(derive_seed(user_seed, "forgery"),
                                      static_cast<std::uint64_t>(f)));
      auto sig = render(config, style, jitter(style, config.forgery_noise, rng));
      sig.user_id = id;
      sig.label = Label::skilled_forgery;
      sig.session = 1;
      record.forgeries.push_back(std::move(sig));
    }
  }
  corpus.validate();
  return corpus;
}

}  // namespace robosig
