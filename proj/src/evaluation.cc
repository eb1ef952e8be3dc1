#include "robosig/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <unordered_map>

#include <json.hpp>

#include "robosig/seed.hpp"
#include "text_util.hpp"

namespace robosig {

std::string_view to_string(ProtocolMode mode) {
  return mode == ProtocolMode::random_forgery ? "random" : "skilled";
}

ProtocolMode protocol_mode_from_string(std::string_view text) {
  if (text == "random" || text == "random_forgery") return ProtocolMode::random_forgery;
  if (text == "skilled" || text == "skilled_forgery") return ProtocolMode::skilled_forgery;
  throw ConfigError("unknown protocol mode '" + std::string(text) +
                    "' (expected random or skilled)");
}

void ProtocolConfig::validate() const {
  if (n_refs < 2) throw ConfigError("n_refs must be >= 2");
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
}

namespace {

// Flattened view of the corpus: one feature matrix per signature.
struct Bank {
  struct User {
    std::string id;
    std::vector<std::size_t> genuine;
    std::vector<std::size_t> forgeries;
  };
  std::vector<User> users;
  std::vector<FeatureMatrix> matrices;
  std::vector<std::string> names;
  std::vector<Label> labels;
};

Bank make_bank(const FeatureCorpus& corpus, FeatureGroup group) {
  Bank bank;
  for (const auto& [id, u] : corpus.users) {
    Bank::User user{id, {}, {}};
    auto add = [&](const JointFeatureSeries& s, std::vector<std::size_t>& dst, char tag,
                   std::size_t k) {
      dst.push_back(bank.matrices.size());
      bank.matrices.push_back(build_feature_matrix(s, group));
      bank.names.push_back(id + "/" + tag + "_" + std::to_string(k + 1));
      bank.labels.push_back(tag == 'g' ? Label::genuine : Label::skilled_forgery);
    };
    for (std::size_t k = 0; k < u.genuine.size(); ++k) add(u.genuine[k], user.genuine, 'g', k);
    for (std::size_t k = 0; k < u.forgeries.size(); ++k) {
      add(u.forgeries[k], user.forgeries, 'f', k);
    }
    bank.users.push_back(std::move(user));
  }
  return bank;
}

// DTW results keyed by (first operand, second operand). References recur
// across runs, so most alignments are reused.
class DtwCache {
 public:
  explicit DtwCache(const Bank& bank) : bank_(bank) {}

  const DtwResult& get(std::size_t a, std::size_t b) {
    const std::uint64_t key = (static_cast<std::uint64_t>(a) << 32) | b;
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      it = cache_.emplace(key, dtw_distance(bank_.matrices[a], bank_.matrices[b])).first;
    }
    return it->second;
  }

 private:
  const Bank& bank_;
  std::unordered_map<std::uint64_t, DtwResult> cache_;
};

}  // namespace

std::vector<RunScores> run_protocol(const FeatureCorpus& corpus,
                                    const ProtocolConfig& config) {
  config.validate();
  if (corpus.users.empty()) throw ValidationError("feature corpus is empty");
  for (const auto& [id, u] : corpus.users) {
    if (u.genuine.size() <= static_cast<std::size_t>(config.n_refs)) {
      throw ValidationError("user " + id + " has " + std::to_string(u.genuine.size()) +
                            " genuine signatures; the protocol needs more than " +
                            std::to_string(config.n_refs));
    }
    if (config.mode == ProtocolMode::skilled_forgery && u.forgeries.empty()) {
      throw ValidationError("user " + id + " has no skilled forgeries");
    }
  }
  if (config.mode == ProtocolMode::random_forgery && corpus.users.size() < 2) {
    throw ValidationError("random-forgery protocol needs at least 2 users");
  }

  const Bank bank = make_bank(corpus, config.group);
  DtwCache cache(bank);
  const bool skilled = config.mode == ProtocolMode::skilled_forgery;

  std::vector<RunScores> runs;
  for (int run = 0; run < config.repeats; ++run) {
    RunScores out;
    out.seed = derive_seed(config.seed, static_cast<std::uint64_t>(run));

    for (std::size_t u = 0; u < bank.users.size(); ++u) {
      const auto& user = bank.users[u];
      std::mt19937_64 rng(derive_seed(out.seed, user.id));

      std::vector<std::size_t> order = user.genuine;
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<std::size_t> refs(order.begin(), order.begin() + config.n_refs);
      std::vector<std::size_t> tests(order.begin() + config.n_refs, order.end());
      std::sort(refs.begin(), refs.end());
      std::sort(tests.begin(), tests.end());

      std::vector<std::size_t> impostors;
      if (skilled) {
        impostors = user.forgeries;
      } else {
        for (std::size_t v = 0; v < bank.users.size(); ++v) {
          if (v == u) continue;
          const auto& pool = bank.users[v].genuine;
          std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
          impostors.push_back(pool[pick(rng)]);
        }
      }

      std::vector<DtwResult> pairwise;
      for (std::size_t i = 0; i < refs.size(); ++i) {
        for (std::size_t j = i + 1; j < refs.size(); ++j) {
          pairwise.push_back(cache.get(refs[i], refs[j]));
        }
      }
      const ReferenceStats stats = reference_stats(pairwise);

      auto score = [&](std::size_t q, std::vector<double>& dst) {
        std::vector<DtwResult> to_refs;
        for (auto r : refs) to_refs.push_back(cache.get(q, r));
        const VerificationScore s = score_questioned(to_refs, stats);
        dst.push_back(skilled ? s.s_hat_2 : s.s_hat_1);
        out.records.push_back({run, user.id, bank.names[q], bank.labels[q], s});
      };
      for (auto q : tests) score(q, out.genuine);
      for (auto q : impostors) score(q, out.impostor);
    }
    runs.push_back(std::move(out));
  }
  return runs;
}

std::vector<DetPoint> det_curve(std::span<const double> genuine,
                                std::span<const double> impostor) {
  if (genuine.empty() || impostor.empty()) {
    throw ValidationError("DET curve needs genuine and impostor scores");
  }
  std::vector<double> g(genuine.begin(), genuine.end());
  std::vector<double> im(impostor.begin(), impostor.end());
  std::sort(g.begin(), g.end());
  std::sort(im.begin(), im.end());
  std::vector<double> thresholds(g);
  thresholds.insert(thresholds.end(), im.begin(), im.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const auto ng = static_cast<double>(g.size());
  const auto ni = static_cast<double>(im.size());
  std::vector<DetPoint> points{{0.0, 1.0}};
  for (double t : thresholds) {
    const auto accepted_impostors = std::upper_bound(im.begin(), im.end(), t) - im.begin();
    const auto accepted_genuine = std::upper_bound(g.begin(), g.end(), t) - g.begin();
    points.push_back({static_cast<double>(accepted_impostors) / ni,
                      (ng - static_cast<double>(accepted_genuine)) / ng});
  }
  return points;
}

double compute_eer(std::span<const double> genuine, std::span<const double> impostor) {
  if (genuine.empty() || impostor.empty()) {
    throw ValidationError("EER needs genuine and impostor scores");
  }
  const auto points = det_curve(genuine, impostor);
  for (std::size_t k = 1; k < points.size(); ++k) {
    const double db = points[k].far - points[k].frr;
    if (db < 0.0) continue;
    if (db == 0.0) return points[k].far;
    const double da = points[k - 1].far - points[k - 1].frr;
    const double s = da / (da - db);
    return points[k - 1].far + s * (points[k].far - points[k - 1].far);
  }
  return points.back().far;  // unreachable: the last point is (1, 0)
}

double det_frr_at(std::span<const DetPoint> curve, double far) {
  if (curve.empty()) throw ValidationError("empty DET curve");
  double lowest = 2.0;
  std::size_t first_at_or_above = curve.size();
  for (std::size_t k = 0; k < curve.size(); ++k) {
    if (curve[k].far == far) lowest = std::min(lowest, curve[k].frr);
    if (curve[k].far >= far && first_at_or_above == curve.size()) first_at_or_above = k;
  }
  if (lowest <= 1.0) return lowest;
  if (first_at_or_above == curve.size()) return curve.back().frr;
  if (first_at_or_above == 0) return curve.front().frr;
  const DetPoint& a = curve[first_at_or_above - 1];
  const DetPoint& b = curve[first_at_or_above];
  const double s = (far - a.far) / (b.far - a.far);
  return a.frr + s * (b.frr - a.frr);
}

std::vector<double> det_far_grid() {
  constexpr int kPoints = 50;
  std::vector<double> grid(kPoints);
  for (int k = 0; k < kPoints; ++k) {
    grid[k] = std::pow(10.0, -3.0 + 3.0 * k / (kPoints - 1));
  }
  grid.back() = 1.0;
  return grid;
}

EvaluationReport aggregate_runs(std::span<const RunScores> runs) {
  if (runs.empty()) throw ValidationError("no runs to aggregate");
  EvaluationReport report;
  const auto grid = det_far_grid();
  std::vector<double> frr_sum(grid.size(), 0.0);
  for (const auto& run : runs) {
    report.run_seeds.push_back(run.seed);
    report.eers.push_back(compute_eer(run.genuine, run.impostor));
    const auto curve = det_curve(run.genuine, run.impostor);
    for (std::size_t k = 0; k < grid.size(); ++k) frr_sum[k] += det_frr_at(curve, grid[k]);
  }
  const auto n = static_cast<double>(runs.size());
  report.eer_mean = std::accumulate(report.eers.begin(), report.eers.end(), 0.0) / n;
  if (runs.size() > 1) {
    double ss = 0.0;
    for (double e : report.eers) ss += (e - report.eer_mean) * (e - report.eer_mean);
    report.eer_std = std::sqrt(ss / (n - 1.0));
  }
  for (std::size_t k = 0; k < grid.size(); ++k) report.det.push_back({grid[k], frr_sum[k] / n});
  return report;
}

std::string report_json(const EvaluationReport& report, const ProtocolConfig& config) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(config.mode);
  j["group"] = to_string(config.group);
  j["source"] = to_string(config.source);
  j["n_refs"] = config.n_refs;
  j["repeats"] = config.repeats;
  j["seed"] = config.seed;
  j["run_seeds"] = report.run_seeds;
  j["eer"] = report.eers;
  j["eer_mean"] = report.eer_mean;
  j["eer_std"] = report.eer_std;
  return j.dump(2) + "\n";
}

std::string det_csv(std::span<const DetPoint> points) {
  std::string out = "far,frr\n";
  for (const auto& p : points) {
    detail::append_double(out, p.far);
    out += ',';
    detail::append_double(out, p.frr);
    out += '\n';
  }
  return out;
}

std::vector<DetPoint> parse_det_csv(std::string_view text) {
  std::vector<DetPoint> points;
  detail::for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') return;
    const auto fields = detail::split_fields(line);
    if (fields.size() == 2 && fields[0] == "far" && fields[1] == "frr") return;
    if (fields.size() != 2) throw ParseError(line_no, "expected 2 fields (far,frr)");
    const auto far = detail::parse_double(fields[0]);
    const auto frr = detail::parse_double(fields[1]);
    if (!far || !frr) throw ParseError(line_no, "malformed number");
    if (!(*far >= 0.0 && *far <= 1.0 && *frr >= 0.0 && *frr <= 1.0)) {
      throw ParseError(line_no, "rates must lie in [0,1]");
    }
    points.push_back({*far, *frr});
  });
  if (points.empty()) throw ParseError(0, "DET file has no points");
  return points;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string det_svg(std::span<const DetSeries> series) {
  constexpr double kSize = 360.0;
  constexpr double kLeft = 70.0, kTop = 20.0, kBottom = 50.0, kRight = 20.0;
  constexpr double kLo = -3.0;  // log10 of the smallest plotted rate
  constexpr std::array<const char*, 6> kColors{"#1f77b4", "#d62728", "#2ca02c",
                                               "#9467bd", "#ff7f0e", "#17becf"};
  auto px = [&](double rate) {
    return kLeft + (std::log10(std::max(rate, 1e-3)) - kLo) / -kLo * kSize;
  };
  auto py = [&](double rate) {
    return kTop + kSize - (std::log10(std::max(rate, 1e-3)) - kLo) / -kLo * kSize;
  };

  const double width = kLeft + kSize + kRight;
  const double height = kTop + kSize + kBottom;
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) +
                  "\" height=\"" + fmt(height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  const std::array<std::pair<double, const char*>, 4> ticks{
      {{1e-3, "0.1"}, {1e-2, "1"}, {1e-1, "10"}, {1.0, "100"}}};
  for (const auto& [rate, label] : ticks) {
    s += "<line x1=\"" + fmt(px(rate)) + "\" y1=\"" + fmt(kTop) + "\" x2=\"" + fmt(px(rate)) +
         "\" y2=\"" + fmt(kTop + kSize) + "\" stroke=\"#ddd\"/>\n";
    s += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(py(rate)) + "\" x2=\"" +
         fmt(kLeft + kSize) + "\" y2=\"" + fmt(py(rate)) + "\" stroke=\"#ddd\"/>\n";
    s += "<text x=\"" + fmt(px(rate)) + "\" y=\"" + fmt(kTop + kSize + 16) +
         "\" text-anchor=\"middle\">" + label + "</text>\n";
    s += "<text x=\"" + fmt(kLeft - 6) + "\" y=\"" + fmt(py(rate) + 4) +
         "\" text-anchor=\"end\">" + label + "</text>\n";
  }
  s += "<rect x=\"" + fmt(kLeft) + "\" y=\"" + fmt(kTop) + "\" width=\"" + fmt(kSize) +
       "\" height=\"" + fmt(kSize) + "\" fill=\"none\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt(px(1e-3)) + "\" y1=\"" + fmt(py(1e-3)) + "\" x2=\"" + fmt(px(1.0)) +
       "\" y2=\"" + fmt(py(1.0)) + "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  s += "<text x=\"" + fmt(kLeft + kSize / 2) + "\" y=\"" + fmt(height - 10) +
       "\" text-anchor=\"middle\">False Acceptance Rate (%)</text>\n";
  s += "<text transform=\"translate(18," + fmt(kTop + kSize / 2) +
       ") rotate(-90)\" text-anchor=\"middle\">False Rejection Rate (%)</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kColors[k % kColors.size()];
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
         "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (const auto& p : series[k].points) {
      if (!first) s += ' ';
      s += fmt(px(p.far)) + "," + fmt(py(p.frr));
      first = false;
    }
    s += "\"/>\n";
    const double ly = kTop + 14.0 + 14.0 * static_cast<double>(k);
    s += "<line x1=\"" + fmt(kLeft + kSize - 120) + "\" y1=\"" + fmt(ly - 4) + "\" x2=\"" +
         fmt(kLeft + kSize - 100) + "\" y2=\"" + fmt(ly - 4) + "\" stroke=\"" + color +
         "\" stroke-width=\"1.5\"/>\n";
    s += "<text x=\"" + fmt(kLeft + kSize - 95) + "\" y=\"" + fmt(ly) + "\">" + xml_escape(series[k].name) +
         "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace robosig
