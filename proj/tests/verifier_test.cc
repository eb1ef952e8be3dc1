#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "robosig/verifier.hpp"

namespace robosig {
namespace {

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (auto& v : m.reshaped()) v = n(rng);
  return m;
}

JointFeatureSeries random_series(std::mt19937_64& rng, Eigen::Index rows) {
  JointFeatureSeries s;
  s.user_id = "u001";
  for (Eigen::Index k = 0; k < rows; ++k) s.t.push_back(0.01 * double(k));
  s.theta = random_matrix(rng, rows, 6);
  s.omega = random_matrix(rng, rows, 6);
  s.tau = random_matrix(rng, rows, 6);
  return s;
}

TEST(Derivative, LinearRampHasUnitSlopeInside) {
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(10, 0, 9);
  const Eigen::VectorXd d = regression_derivative(x);
  for (int i = 2; i < 8; ++i) EXPECT_DOUBLE_EQ(d[i], 1.0);
  // edge replication: x_{-1} = x_{-2} = 0
  EXPECT_DOUBLE_EQ(d[0], (1.0 + 2.0 * 2.0) / 10.0);
  EXPECT_DOUBLE_EQ(d[1], ((2.0 - 0.0) + 2.0 * (3.0 - 0.0)) / 10.0);
  EXPECT_DOUBLE_EQ(d[9], ((9.0 - 8.0) + 2.0 * (9.0 - 7.0)) / 10.0);
}

TEST(Derivative, ConstantAndShortInputs) {
  EXPECT_TRUE(regression_derivative(Eigen::VectorXd::Constant(7, 3.0)).isZero());
  Eigen::VectorXd one(1);
  one << 4.0;
  EXPECT_EQ(regression_derivative(one)[0], 0.0);
  Eigen::VectorXd two(2);
  two << 0.0, 1.0;
  const Eigen::VectorXd d = regression_derivative(two);
  EXPECT_DOUBLE_EQ(d[0], (1.0 + 2.0) / 10.0);
  EXPECT_DOUBLE_EQ(d[1], (1.0 + 2.0) / 10.0);
}

TEST(FeatureMatrix, ColumnCounts) {
  std::mt19937_64 rng(1);
  const auto s = random_series(rng, 40);
  EXPECT_EQ(build_feature_matrix(s, FeatureGroup::theta).cols(), 18);
  EXPECT_EQ(build_feature_matrix(s, FeatureGroup::omega).cols(), 15);
  EXPECT_EQ(build_feature_matrix(s, FeatureGroup::tau).cols(), 18);
  EXPECT_EQ(build_feature_matrix(s, FeatureGroup::tau).rows(), 40);
  EXPECT_EQ(base_channels(FeatureGroup::omega), 5);
}

TEST(FeatureMatrix, ZScoredColumns) {
  std::mt19937_64 rng(2);
  const auto f = build_feature_matrix(random_series(rng, 60), FeatureGroup::theta);
  for (Eigen::Index c = 0; c < f.cols(); ++c) {
    const auto col = f.values.col(c);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().mean();
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-12);
  }
}

TEST(FeatureMatrix, InvariantToAffineChannelChange) {
  std::mt19937_64 rng(3);
  auto s = random_series(rng, 50);
  const auto a = build_feature_matrix(s, FeatureGroup::tau);
  s.tau = (s.tau.array() * 7.5 + 3.0).matrix();
  const auto b = build_feature_matrix(s, FeatureGroup::tau);
  EXPECT_LT((a.values - b.values).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FeatureMatrix, ConstantChannelGivesZeroColumns) {
  std::mt19937_64 rng(4);
  auto s = random_series(rng, 30);
  s.theta.col(2).setConstant(1.25);
  const auto f = build_feature_matrix(s, FeatureGroup::theta);
  ASSERT_EQ(f.constant_channels, std::vector<int>{2});
  // base, first and second derivative of channel 3 all vanish
  for (int block = 0; block < 3; ++block) {
    EXPECT_TRUE(f.values.col(block * 6 + 2).isZero()) << block;
  }
  EXPECT_TRUE(f.values.allFinite());
}

TEST(FeatureMatrix, OmegaIgnoresJointSix) {
  std::mt19937_64 rng(5);
  auto s = random_series(rng, 30);
  const auto a = build_feature_matrix(s, FeatureGroup::omega);
  s.omega.col(5).setRandom();
  EXPECT_EQ(a.values, build_feature_matrix(s, FeatureGroup::omega).values);
}

TEST(Dtw, SelfAlignmentIsDiagonal) {
  std::mt19937_64 rng(6);
  const Eigen::MatrixXd a = random_matrix(rng, 37, 4);
  const auto r = dtw_distance(a, a);
  EXPECT_EQ(r.distance, 0.0);
  EXPECT_EQ(r.path_len, 37);
}

TEST(Dtw, MatchesFullMatrixOracle) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> len(1, 30), dim(1, 5);
  for (int trial = 0; trial < 600; ++trial) {
    const int d = dim(rng);
    const Eigen::MatrixXd a = random_matrix(rng, len(rng), d);
    const Eigen::MatrixXd b = random_matrix(rng, len(rng), d);
    const auto got = dtw_distance(a, b, std::max(a.rows(), b.rows()));
    const auto want = oracle::full_dtw(a, b);
    ASSERT_EQ(got.distance, want.distance) << trial;
    ASSERT_EQ(got.path_len, want.path_len) << trial;
  }
}

TEST(Dtw, BandNeverLowersCost) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::MatrixXd a = random_matrix(rng, 20 + trial % 17, 3);
    const Eigen::MatrixXd b = random_matrix(rng, 25 + trial % 11, 3);
    const double full = oracle::full_dtw(a, b).distance;
    EXPECT_GE(dtw_distance(a, b).distance, full - 1e-9);
    EXPECT_GE(dtw_distance(a, b, 2 + trial % 5).distance, full - 1e-9);
  }
}

TEST(Dtw, SymmetricInDistance) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::MatrixXd a = random_matrix(rng, 30, 2);
    const Eigen::MatrixXd b = random_matrix(rng, 30, 2);
    EXPECT_NEAR(dtw_distance(a, b).distance, dtw_distance(b, a).distance, 1e-9);
  }
}

TEST(Dtw, HandExample) {
  Eigen::MatrixXd a(3, 1), b(4, 1);
  a << 0, 1, 2;
  b << 0, 1, 1, 2;
  const auto r = dtw_distance(a, b, 4);
  EXPECT_DOUBLE_EQ(r.distance, 0.0);
  EXPECT_EQ(r.path_len, 4);
}

TEST(Dtw, DefaultBandAndErrors) {
  EXPECT_EQ(default_band(100, 100), 10);
  EXPECT_EQ(default_band(101, 100), 11);
  EXPECT_EQ(default_band(100, 130), 31);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(5, 2), b = Eigen::MatrixXd::Zero(5, 3);
  EXPECT_THROW(dtw_distance(a, b), ShapeError);
  EXPECT_THROW(dtw_distance(a, Eigen::MatrixXd::Zero(0, 2)), Error);
  EXPECT_THROW(dtw_distance(a, a, -1), ConfigError);
}

TEST(Scores, WorkedExample) {
  const std::vector<DtwResult> pairwise{{2.0, 4}, {3.0, 6}, {6.0, 4}};
  const auto stats = reference_stats(pairwise);
  EXPECT_DOUBLE_EQ(stats.mu_r, (0.5 + 0.5 + 1.5) / 3.0);
  const std::vector<DtwResult> q{{4.0, 8}, {1.5, 3}, {9.0, 10}};
  const auto s = score_questioned(q, stats);
  EXPECT_DOUBLE_EQ(s.s_r, 1.5);
  EXPECT_EQ(s.path_len, 3);
  EXPECT_DOUBLE_EQ(s.s_hat_1, 0.5);
  EXPECT_DOUBLE_EQ(s.s_hat_2, 1.5 / stats.mu_r);
}

TEST(Scores, NormalisedScoreIsScaleInvariant) {
  std::mt19937_64 rng(10);
  std::vector<FeatureMatrix> refs(4), scaled(4);
  for (int k = 0; k < 4; ++k) {
    refs[k].values = random_matrix(rng, 30 + k, 3);
    scaled[k].values = 4.0 * refs[k].values;
  }
  FeatureMatrix q, q4;
  q.values = random_matrix(rng, 33, 3);
  q4.values = 4.0 * q.values;
  const auto a = score_questioned(q, refs, reference_stats(refs));
  const auto b = score_questioned(q4, scaled, reference_stats(scaled));
  EXPECT_NEAR(a.s_hat_2, b.s_hat_2, 1e-12 * a.s_hat_2);
  EXPECT_NEAR(4.0 * a.s_hat_1, b.s_hat_1, 1e-12 * b.s_hat_1);
}

TEST(Scores, DegenerateReferences) {
  FeatureMatrix r;
  r.values = Eigen::MatrixXd::Ones(10, 3);
  const std::vector<FeatureMatrix> same{r, r, r};
  EXPECT_THROW(reference_stats(same), DegenerateReferenceError);
  EXPECT_THROW(reference_stats(std::span<const FeatureMatrix>(same).first(1)), Error);
}

TEST(Scores, CsvHeaderAndRow) {
  ScoreRecord r;
  r.run = 2;
  r.user_id = "u003";
  r.signature = "u003/f_1";
  r.label = Label::skilled_forgery;
  r.score = {1.5, 3, 0.5, 2.0, 0.75};
  const std::string csv = write_score_csv(std::span(&r, 1));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "run,user,signature,label,s_R,path_len,s_hat_1,s_hat_2");
  EXPECT_NE(csv.find("2,u003,u003/f_1,"), std::string::npos);
  EXPECT_NE(csv.find(",1.5,3,0.5,2"), std::string::npos);
}

TEST(Scores, GenuineBelowOtherUsersOnCorpus) {
  SynthesisConfig cfg;
  cfg.n_users = 4;
  cfg.genuine_per_user = 8;
  cfg.forgeries_per_user = 1;
  cfg.seed = 5;
  const Corpus c = generate_corpus(cfg);
  const FeatureCorpus f = replay_corpus(default_chain(), c, WorkspacePlacement{});
  double genuine = 0, impostor = 0;
  int ng = 0, ni = 0;
  for (const auto& [id, u] : f.users) {
    std::vector<FeatureMatrix> refs;
    for (int k = 0; k < 5; ++k) refs.push_back(build_feature_matrix(u.genuine[k], FeatureGroup::omega));
    const auto stats = reference_stats(refs);
    for (std::size_t k = 5; k < u.genuine.size(); ++k) {
      genuine += score_questioned(build_feature_matrix(u.genuine[k], FeatureGroup::omega), refs, stats).s_hat_2;
      ++ng;
    }
    for (const auto& [other, v] : f.users) {
      if (other == id) continue;
      impostor += score_questioned(build_feature_matrix(v.genuine[0], FeatureGroup::omega), refs, stats).s_hat_2;
      ++ni;
    }
  }
  EXPECT_LT(genuine / ng, impostor / ni);
}

}  // namespace
}  // namespace robosig
