#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "oracles.hpp"
#include "robosig/estimator.hpp"

namespace robosig {
namespace {

struct SmallSet {
  Corpus corpus;
  FeatureCorpus features;
  std::vector<TrainingPair> pairs;
};

const SmallSet& small_set() {
  static const SmallSet set = [] {
    SmallSet s;
    SynthesisConfig cfg;
    cfg.n_users = 4;
    cfg.genuine_per_user = 4;
    cfg.forgeries_per_user = 2;
    cfg.seed = 11;
    s.corpus = generate_corpus(cfg);
    s.features = replay_corpus(default_chain(), s.corpus, WorkspacePlacement{});
    s.pairs = training_pairs(s.corpus, s.features);
    return s;
  }();
  return set;
}

TEST(MinMax, MapsAndInverts) {
  const auto s = MinMax::fit(2.0, 6.0);
  EXPECT_DOUBLE_EQ(s.transform(2.0), 0.0);
  EXPECT_DOUBLE_EQ(s.transform(6.0), 1.0);
  EXPECT_DOUBLE_EQ(s.transform(3.0), 0.25);
  EXPECT_DOUBLE_EQ(s.inverse(0.25), 3.0);
  const auto c = MinMax::fit(4.0, 4.0);
  EXPECT_TRUE(c.constant);
  EXPECT_DOUBLE_EQ(c.transform(123.0), 0.5);
  EXPECT_DOUBLE_EQ(c.inverse(0.9), 4.0);
}

TEST(Windows, EdgeReplicatedLayout) {
  SignatureTrajectory s;
  s.user_id = "u";
  for (int k = 0; k < 8; ++k) {
    s.t.push_back(0.01 * k);
    s.x.push_back(k);
    s.y.push_back(10 - k);
  }
  ScalerSet sc;
  sc.input[0] = MinMax::fit(0, 7);
  sc.input[1] = MinMax::fit(3, 10);
  const Eigen::MatrixXd w = build_windows(s, sc);
  ASSERT_EQ(w.rows(), kInputDim);
  ASSERT_EQ(w.cols(), 8);
  for (int i = 0; i < 8; ++i) {
    for (int k = -kWindowRadius; k <= kWindowRadius; ++k) {
      const int src = std::clamp(i + k, 0, 7);
      EXPECT_DOUBLE_EQ(w(2 * (k + kWindowRadius), i), src / 7.0);
      EXPECT_DOUBLE_EQ(w(2 * (k + kWindowRadius) + 1, i), (7 - src) / 7.0);
    }
  }
}

TEST(Windows, ClampedOutsideTrainingRange) {
  SignatureTrajectory s;
  s.user_id = "u";
  s.t = {0, 0.01};
  s.x = {-5, 20};
  s.y = {0.5, 0.5};
  ScalerSet sc;
  sc.input[0] = MinMax::fit(0, 1);
  sc.input[1] = MinMax::fit(0, 1);
  const Eigen::MatrixXd w = build_windows(s, sc);
  EXPECT_EQ(w.minCoeff(), 0.0);
  EXPECT_EQ(w.maxCoeff(), 1.0);
}

TEST(Scalers, TrainingTargetsInUnitRange) {
  const auto& set = small_set();
  const ScalerSet sc = fit_scalers(set.pairs);
  double lo = 1e9, hi = -1e9;
  for (const auto& p : set.pairs) {
    const Eigen::MatrixXd t = build_targets(*p.features, sc);
    for (int d = 0; d < kOutputDim; ++d) {
      if (sc.target[d].constant) continue;
      lo = std::min(lo, t.row(d).minCoeff());
      hi = std::max(hi, t.row(d).maxCoeff());
    }
  }
  EXPECT_NEAR(lo, 0.0, 1e-12);
  EXPECT_NEAR(hi, 1.0, 1e-12);
  EXPECT_THROW(fit_scalers({}), ConfigError);
}

TEST(Mlp, ZeroWeightsGiveHalf) {
  MLPModel m;
  WindowedInput x = WindowedInput::Random();
  const Output y = mlp_forward(m, x);
  for (int d = 0; d < kOutputDim; ++d) EXPECT_DOUBLE_EQ(y[d], 0.5);
}

TEST(Mlp, HandComputedForward) {
  MLPModel m;
  m.w_hidden(0, 0) = 2.0;   // h0 = relu(2 x0 - 1)
  m.b_hidden(0) = -1.0;
  m.w_hidden(1, 1) = -1.0;  // h1 = relu(-x1), zero for x1 >= 0
  m.w_head[1](2, 0) = 3.0;  // omega3 = sigmoid(3 h0 + 0.5)
  m.b_head[1](2) = 0.5;
  m.w_head[2](0, 1) = 7.0;  // tau1 only sees the dead unit
  WindowedInput x = WindowedInput::Zero();
  x[0] = 0.75;
  x[1] = 0.4;
  const Output y = mlp_forward(m, x);
  const double h0 = 0.5;
  EXPECT_NEAR(y[kHeadDim + 2], 1.0 / (1.0 + std::exp(-(3.0 * h0 + 0.5))), 1e-15);
  EXPECT_DOUBLE_EQ(y[2 * kHeadDim], 0.5);
  EXPECT_DOUBLE_EQ(y[0], 0.5);
}

TEST(Mlp, WrongInputRowsIsShapeError) {
  MLPModel m;
  EXPECT_THROW(mlp_forward(m, Eigen::MatrixXd(Eigen::MatrixXd::Zero(21, 3)), false), ShapeError);
}

TEST(Loss, WorkedExamples) {
  const Eigen::MatrixXd pred = Eigen::MatrixXd::Constant(kOutputDim, 4, 0.5);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(kOutputDim, 4);
  const auto l = composite_loss(pred, zero);
  for (double h : l.head) EXPECT_DOUBLE_EQ(h, 0.25);
  EXPECT_DOUBLE_EQ(l.total, 0.75);

  Eigen::MatrixXd t = pred;
  t.middleRows(kHeadDim, kHeadDim).setConstant(1.5);
  const auto l2 = composite_loss(pred, t);
  EXPECT_DOUBLE_EQ(l2.head[0], 0.0);
  EXPECT_DOUBLE_EQ(l2.head[1], 1.0);
  EXPECT_DOUBLE_EQ(l2.total, 1.0);
  EXPECT_THROW(composite_loss(pred, Eigen::MatrixXd::Zero(kOutputDim, 3)), ShapeError);
}

double param(MLPModel& m, int block, int idx, double* set = nullptr) {
  double* p = nullptr;
  switch (block) {
    case 0: p = m.w_hidden.data() + idx; break;
    case 1: p = m.b_hidden.data() + idx; break;
    case 2: case 3: case 4: p = m.w_head[block - 2].data() + idx; break;
    default: p = m.b_head[block - 5].data() + idx; break;
  }
  if (set) *p = *set;
  return *p;
}

double grad_at(const Gradients& g, int block, int idx) {
  switch (block) {
    case 0: return g.w_hidden.data()[idx];
    case 1: return g.b_hidden.data()[idx];
    case 2: case 3: case 4: return g.w_head[block - 2].data()[idx];
    default: return g.b_head[block - 5].data()[idx];
  }
}

int block_size(int block) {
  switch (block) {
    case 0: return kHiddenUnits * kInputDim;
    case 1: return kHiddenUnits;
    case 2: case 3: case 4: return kHeadDim * kHiddenUnits;
    default: return kHeadDim;
  }
}

void check_gradients(const Eigen::MatrixXd* mask) {
  MLPModel m = MLPModel::glorot(5);
  m.b_hidden.setConstant(0.05);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd x(kInputDim, 7), t(kOutputDim, 7);
  for (auto& v : x.reshaped()) v = u(rng);
  for (auto& v : t.reshaped()) v = u(rng);

  Gradients g;
  loss_and_gradients(m, x, t, mask, &g);
  const double h = 1e-6;
  double worst = 0.0;
  for (int block = 0; block < 8; ++block) {
    for (int idx = 0; idx < block_size(block); ++idx) {
      const double orig = param(m, block, idx);
      double v = orig + h;
      param(m, block, idx, &v);
      const double lp = loss_and_gradients(m, x, t, mask, nullptr).total;
      v = orig - h;
      param(m, block, idx, &v);
      const double lm = loss_and_gradients(m, x, t, mask, nullptr).total;
      v = orig;
      param(m, block, idx, &v);
      const double fd = (lp - lm) / (2 * h);
      const double an = grad_at(g, block, idx);
      worst = std::max(worst, std::abs(fd - an) / std::max(1e-3, std::abs(fd) + std::abs(an)));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Gradients, MatchFiniteDifferences) { check_gradients(nullptr); }

TEST(Gradients, MatchFiniteDifferencesWithDropout) {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd mask = make_dropout_mask(kHiddenUnits, 7, 0.3, rng);
  check_gradients(&mask);
}

TEST(Dropout, MaskStatistics) {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd mask = make_dropout_mask(kHiddenUnits, 20000, 0.3, rng);
  const double kept = (mask.array() > 0).cast<double>().mean();
  EXPECT_NEAR(kept, 0.7, 0.01);
  EXPECT_NEAR(mask.mean(), 1.0, 0.02);
  for (double v : mask.reshaped()) EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.7) < 1e-15);
}

TEST(Dropout, InferenceIsDeterministicTrainingIsNot) {
  MLPModel m = MLPModel::glorot(3);
  m.b_hidden.setConstant(0.2);
  WindowedInput x = WindowedInput::Constant(0.5);
  EXPECT_EQ(mlp_forward(m, x), mlp_forward(m, x));
  std::mt19937_64 rng(1);
  Output mean = Output::Zero();
  bool differs = false;
  const Output ref = mlp_forward(m, x);
  constexpr int n = 4000;
  Eigen::MatrixXd xs = Eigen::MatrixXd(x).replicate(1, n);
  const Eigen::MatrixXd ys = mlp_forward(m, xs, true, &rng);
  mean = ys.rowwise().mean();
  differs = (ys.col(0) - ref).cwiseAbs().maxCoeff() > 0 || (ys.col(1) - ref).cwiseAbs().maxCoeff() > 0;
  EXPECT_TRUE(differs);
  // inverted dropout keeps the hidden mean, so the outputs stay close
  EXPECT_LT((mean - ref).cwiseAbs().maxCoeff(), 0.05);
  EXPECT_THROW(mlp_forward(m, xs, true, nullptr), ConfigError);
}

TEST(Training, LossDecreasesAndBestIsKept) {
  TrainingConfig cfg;
  cfg.max_epochs = 8;
  cfg.patience = 100;
  const auto r = train(small_set().pairs, cfg);
  ASSERT_EQ(r.history.size(), 8u);
  EXPECT_LT(r.history.back().train.total, r.history.front().train.total);
  double best = 1e9;
  int best_epoch = 0;
  for (const auto& e : r.history) {
    if (e.validation.total < best) {
      best = e.validation.total;
      best_epoch = e.epoch;
    }
  }
  EXPECT_EQ(r.best_epoch, best_epoch);
  EXPECT_EQ(r.model.trained_epochs, best_epoch);
}

TEST(Training, PatienceStopsEarly) {
  TrainingConfig cfg;
  cfg.max_epochs = 40;
  cfg.patience = 1;
  cfg.learning_rate = 0.05;
  const auto r = train(small_set().pairs, cfg);
  const int n = static_cast<int>(r.history.size());
  if (n < cfg.max_epochs) {
    // stopped: the last epoch did not improve on the best
    EXPECT_GE(r.history.back().validation.total,
              r.history[static_cast<std::size_t>(r.best_epoch - 1)].validation.total);
    EXPECT_EQ(n, r.best_epoch + cfg.patience);
  }
}

TEST(Training, DeterministicForSeed) {
  TrainingConfig cfg;
  cfg.max_epochs = 3;
  const auto a = train(small_set().pairs, cfg);
  const auto b = train(small_set().pairs, cfg);
  EXPECT_EQ(save_model(a.model), save_model(b.model));
  cfg.seed = 2;
  EXPECT_NE(save_model(a.model), save_model(train(small_set().pairs, cfg).model));
}

TEST(Training, RejectsBadInput) {
  TrainingConfig cfg;
  const auto& set = small_set();
  EXPECT_THROW(train(std::span(set.pairs).first(1), cfg), ConfigError);
  cfg.learning_rate = -1;
  EXPECT_THROW(train(set.pairs, cfg), ConfigError);
  cfg = {};
  cfg.dropout_rate = 1.0;
  EXPECT_THROW(train(set.pairs, cfg), ConfigError);
}

TEST(Training, OverfitsSingleUser) {
  SynthesisConfig sc;
  sc.n_users = 1;
  sc.genuine_per_user = 50;
  sc.forgeries_per_user = 1;
  sc.seed = 21;
  const Corpus c = generate_corpus(sc);
  const FeatureCorpus f = replay_corpus(default_chain(), c, WorkspacePlacement{});
  auto pairs = training_pairs(c, f);
  pairs.pop_back();  // genuine only
  TrainingConfig cfg;
  cfg.dropout_rate = 0.0;
  cfg.patience = 1000;
  cfg.max_epochs = 60;
  const auto r = train(pairs, cfg);
  std::vector<JointFeatureSeries> est, ref;
  for (const auto& p : pairs) {
    est.push_back(estimate_features(r.model, *p.signature));
    ref.push_back(*p.features);
  }
  const auto m = estimation_metrics(est, ref, r.model.scalers);
  for (const auto& g : m.group) EXPECT_LE(g.mae, 0.05);
}

TEST(Estimate, AlignedAndWithinScalerRange) {
  TrainingConfig cfg;
  cfg.max_epochs = 2;
  const auto& set = small_set();
  const auto r = train(set.pairs, cfg);
  const auto& sig = set.corpus.users.begin()->second.genuine[0];
  const auto e = estimate_features(r.model, sig);
  EXPECT_EQ(e.t, sig.t);
  EXPECT_EQ(e.source, FeatureSource::estimated);
  EXPECT_EQ(e.user_id, sig.user_id);
  for (int g = 0; g < kHeads; ++g) {
    const auto& ch = e.channels(static_cast<FeatureGroup>(g));
    for (int j = 0; j < kHeadDim; ++j) {
      const auto& s = r.model.scalers.target[g * kHeadDim + j];
      EXPECT_GE(ch.col(j).minCoeff(), s.min - 1e-12);
      EXPECT_LE(ch.col(j).maxCoeff(), s.max + 1e-12);
    }
  }
}

TEST(Metrics, ZeroForIdenticalSeries) {
  const auto& set = small_set();
  const ScalerSet sc = fit_scalers(set.pairs);
  std::vector<JointFeatureSeries> a{*set.pairs[0].features, *set.pairs[1].features};
  const auto m = estimation_metrics(a, a, sc);
  for (const auto& g : m.group) {
    EXPECT_EQ(g.mae, 0.0);
    EXPECT_EQ(g.mse, 0.0);
  }
  std::vector<JointFeatureSeries> b{a[0]};
  EXPECT_THROW(estimation_metrics(a, b, sc), ShapeError);
}

TEST(ModelIo, BitIdenticalRoundTrip) {
  MLPModel m = MLPModel::glorot(17);
  m.scalers = fit_scalers(small_set().pairs);
  m.trained_epochs = 4;
  m.dropout_rate = 0.25;
  const std::string bytes = save_model(m);
  const MLPModel back = load_model(bytes);
  EXPECT_EQ(back.w_hidden, m.w_hidden);
  EXPECT_EQ(back.b_head[2], m.b_head[2]);
  EXPECT_EQ(back.trained_epochs, 4);
  EXPECT_EQ(back.dropout_rate, 0.25);
  EXPECT_EQ(save_model(back), bytes);

  oracle::TempDir dir("model");
  save_model_file(dir.path() / "m.json", m);
  EXPECT_EQ(save_model(load_model_file(dir.path() / "m.json")), bytes);
}

TEST(ModelIo, CorruptionDetected) {
  const std::string bytes = save_model(MLPModel::glorot(1));
  std::string bad = bytes;
  const auto pos = bad.find("\"data\"");
  ASSERT_NE(pos, std::string::npos);
  const auto digit = bad.find_first_of("123456789", pos);
  bad[digit] = bad[digit] == '9' ? '8' : static_cast<char>(bad[digit] + 1);
  EXPECT_THROW(load_model(bad), Error);
  EXPECT_THROW(load_model("not json"), Error);
  EXPECT_THROW(load_model(bytes.substr(0, bytes.size() / 2)), Error);
}

std::string fnv_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TEST(ModelIo, ShapeMismatchNamesTensor) {
  auto doc = nlohmann::json::parse(save_model(MLPModel{}));
  auto& b = doc["payload"]["tensors"]["b_omega"];
  b["shape"] = {5};
  b["data"].erase(b["data"].size() - 1);
  doc["checksum"] = fnv_hex(doc["payload"].dump());
  try {
    load_model(doc.dump());
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("b_omega"), std::string::npos) << e.what();
  }
}

TEST(CrossValidation, PartitionsUsers) {
  const auto& set = small_set();
  TrainingConfig cfg;
  cfg.max_epochs = 2;
  const auto cv = cross_validate(set.corpus, set.features, cfg, 4);
  ASSERT_EQ(cv.folds.size(), 4u);
  std::vector<std::string> all;
  for (const auto& f : cv.fold_users) {
    EXPECT_EQ(f.size(), 1u);
    all.insert(all.end(), f.begin(), f.end());
  }
  std::sort(all.begin(), all.end());
  EXPECT_EQ(std::adjacent_find(all.begin(), all.end()), all.end());
  EXPECT_EQ(all.size(), set.corpus.users.size());
  for (const auto& [id, u] : set.corpus.users) {
    const auto& e = cv.estimates.users.at(id);
    EXPECT_EQ(e.genuine.size(), u.genuine.size());
    EXPECT_EQ(e.forgeries.size(), u.forgeries.size());
  }
  for (int h = 0; h < kHeads; ++h) {
    double sum = 0;
    for (const auto& f : cv.folds) sum += f.group[h].mae;
    EXPECT_NEAR(cv.mean.group[h].mae, sum / 4, 1e-15);
  }
  EXPECT_THROW(cross_validate(set.corpus, set.features, cfg, 5), ConfigError);
}

}  // namespace
}  // namespace robosig
