#include "run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "robosig/seed.hpp"

namespace robosig {

namespace {

// Reads the keys of one config block, remembering which were consumed so
// that misspelt keys are reported instead of silently ignored.
class Block {
 public:
  Block(const nlohmann::json& doc, std::string name) : name_(std::move(name)) {
    if (!doc.contains(name_)) return;
    node_ = &doc.at(name_);
    if (!node_->is_object()) throw ConfigError("config block '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& dst) {
    if (!node_ || !node_->contains(key)) return;
    used_.insert(key);
    try {
      dst = node_->at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(name_ + "." + key + " has the wrong type");
    }
  }

  template <int N>
  void vec(const char* key, Eigen::Matrix<double, N, 1>& dst) {
    std::vector<double> v;
    get(key, v);
    if (!used_.contains(key)) return;
    if (static_cast<int>(v.size()) != N) {
      throw ConfigError(name_ + "." + key + " must have " + std::to_string(N) + " entries");
    }
    for (int k = 0; k < N; ++k) dst[k] = v[static_cast<std::size_t>(k)];
  }

  template <typename Enum, typename Parse>
  void choice(const char* key, Enum& dst, Parse parse) {
    std::string text;
    get(key, text);
    if (used_.contains(key)) dst = parse(text);
  }

  const nlohmann::json* sub(const char* key) {
    if (!node_ || !node_->contains(key)) return nullptr;
    used_.insert(key);
    return &node_->at(key);
  }

  void finish() const {
    if (!node_) return;
    for (const auto& [key, value] : node_->items()) {
      if (!used_.contains(key)) throw ConfigError("unknown config key " + name_ + "." + key);
    }
  }

 private:
  std::string name_;
  const nlohmann::json* node_ = nullptr;
  std::set<std::string, std::less<>> used_;
};

}  // namespace

void RunConfig::set_seed(std::uint64_t root) {
  seed = root;
  synthesis.seed = derive_seed(root, "synthesis");
  training.seed = derive_seed(root, "training");
  protocol.seed = derive_seed(root, "protocol");
}

RunConfig run_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    static const std::set<std::string> known{"seed",     "chain",    "synthesis", "placement",
                                             "planning", "training", "protocol"};
    if (!known.contains(key)) throw ConfigError("unknown config key " + key);
  }
  try {
    cfg.set_seed(doc.value("seed", std::uint64_t{1}));
    if (doc.contains("chain")) cfg.chain = doc.at("chain").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("seed must be a non-negative integer and chain a path");
  }

  Block syn(doc, "synthesis");
  auto& s = cfg.synthesis;
  syn.get("n_users", s.n_users);
  syn.get("genuine_per_user", s.genuine_per_user);
  syn.get("forgeries_per_user", s.forgeries_per_user);
  syn.get("strokes_min", s.strokes_min);
  syn.get("strokes_max", s.strokes_max);
  syn.get("duration_min", s.duration_min);
  syn.get("duration_max", s.duration_max);
  syn.get("sample_rate", s.sample_rate);
  syn.get("genuine_jitter", s.genuine_jitter);
  syn.get("forgery_noise", s.forgery_noise);
  syn.get("canvas_size", s.canvas_size);
  syn.get("pen_up_probability", s.pen_up_probability);
  syn.finish();
  s.validate();

  Block pl(doc, "placement");
  auto& p = cfg.placement;
  pl.vec("surface_center", p.surface_center);
  pl.get("box_size", p.box_size);
  pl.get("pen_lift", p.pen_lift);
  pl.vec("pen_axis", p.pen_axis);
  pl.finish();

  Block plan(doc, "planning");
  auto& o = cfg.planning;
  plan.get("control_rate", o.control_rate);
  plan.vec("home", o.home);
  if (const auto* ik = plan.sub("ik")) {
    nlohmann::json wrapped{{"planning.ik", *ik}};
    Block b(wrapped, "planning.ik");
    b.get("damping", o.ik.damping);
    b.get("max_iterations", o.ik.max_iterations);
    b.get("max_step", o.ik.max_step);
    b.get("position_tolerance", o.ik.position_tolerance);
    b.get("orientation_tolerance", o.ik.orientation_tolerance);
    b.finish();
  }
  plan.finish();
  if (!(o.control_rate > 0.0)) throw ConfigError("planning.control_rate must be > 0");

  Block tr(doc, "training");
  auto& t = cfg.training;
  tr.get("learning_rate", t.learning_rate);
  tr.get("val_fraction", t.val_fraction);
  tr.get("patience", t.patience);
  tr.get("max_epochs", t.max_epochs);
  tr.get("batch_size", t.batch_size);
  tr.get("dropout_rate", t.dropout_rate);
  tr.get("beta1", t.beta1);
  tr.get("beta2", t.beta2);
  tr.get("epsilon", t.epsilon);
  tr.finish();
  t.validate();

  Block pr(doc, "protocol");
  auto& q = cfg.protocol;
  pr.get("n_refs", q.n_refs);
  pr.get("repeats", q.repeats);
  pr.choice("mode", q.mode, protocol_mode_from_string);
  pr.choice("group", q.group, feature_group_from_string);
  pr.choice("source", q.source, feature_source_from_string);
  pr.finish();
  q.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(doc);
}

}  // namespace robosig
