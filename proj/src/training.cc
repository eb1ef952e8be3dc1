#include <algorithm>
#include <cmath>
#include <numeric>

#include "robosig/estimator.hpp"
#include "robosig/seed.hpp"

namespace robosig {

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("val_fraction must lie in (0,1)");
  }
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout_rate must lie in [0,1)");
  }
}

namespace {

constexpr Eigen::Index kParamCount =
    kHiddenUnits * kInputDim + kHiddenUnits + kHeads * (kHeadDim * kHiddenUnits + kHeadDim);

// Flattened parameter order: W_h, b_h, then (W_j, b_j) per head.
template <typename Params>
Eigen::VectorXd pack(const Params& p) {
  Eigen::VectorXd v(kParamCount);
  Eigen::Index o = 0;
  auto put = [&](const auto& m) {
    v.segment(o, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    o += m.size();
  };
  put(p.w_hidden);
  put(p.b_hidden);
  for (int h = 0; h < kHeads; ++h) {
    put(p.w_head[h]);
    put(p.b_head[h]);
  }
  return v;
}

void unpack(const Eigen::VectorXd& v, MLPModel& model) {
  Eigen::Index o = 0;
  auto get = [&](auto& m) {
    Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = v.segment(o, m.size());
    o += m.size();
  };
  get(model.w_hidden);
  get(model.b_hidden);
  for (int h = 0; h < kHeads; ++h) {
    get(model.w_head[h]);
    get(model.b_head[h]);
  }
}

struct Dataset {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
};

Dataset assemble(std::span<const TrainingPair> pairs, const std::vector<std::size_t>& which,
                 const ScalerSet& scalers) {
  Eigen::Index n = 0;
  for (auto k : which) n += static_cast<Eigen::Index>(pairs[k].signature->size());
  Dataset d;
  d.inputs.resize(kInputDim, n);
  d.targets.resize(kOutputDim, n);
  Eigen::Index col = 0;
  for (auto k : which) {
    const auto& sig = *pairs[k].signature;
    const auto& feat = *pairs[k].features;
    if (feat.size() != sig.size()) {
      throw ShapeError("features for a " + sig.user_id + " signature have " +
                       std::to_string(feat.size()) + " rows, signature has " +
                       std::to_string(sig.size()));
    }
    const auto m = static_cast<Eigen::Index>(sig.size());
    d.inputs.middleCols(col, m) = build_windows(sig, scalers);
    d.targets.middleCols(col, m) = build_targets(feat, scalers);
    col += m;
  }
  return d;
}

}  // namespace

std::vector<TrainingPair> training_pairs(const Corpus& corpus, const FeatureCorpus& features) {
  std::vector<TrainingPair> pairs;
  for (const auto& [id, u] : corpus.users) {
    const auto it = features.users.find(id);
    if (it == features.users.end() || it->second.genuine.size() != u.genuine.size() ||
        it->second.forgeries.size() != u.forgeries.size()) {
      throw ShapeError("features do not match the corpus for user " + id);
    }
    for (std::size_t i = 0; i < u.genuine.size(); ++i) {
      pairs.push_back({&u.genuine[i], &it->second.genuine[i]});
    }
    for (std::size_t i = 0; i < u.forgeries.size(); ++i) {
      pairs.push_back({&u.forgeries[i], &it->second.forgeries[i]});
    }
  }
  return pairs;
}

TrainingResult train(std::span<const TrainingPair> training, const TrainingConfig& config) {
  config.validate();
  if (training.size() < 2) {
    throw ConfigError("training needs at least 2 signatures for a validation split");
  }

  std::mt19937_64 rng(derive_seed(config.seed, "train"));
  std::vector<std::size_t> order(training.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<std::size_t>(
      std::lround(config.val_fraction * static_cast<double>(training.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, training.size() - 1);
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(n_val), order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  MLPModel model = MLPModel::glorot(derive_seed(config.seed, "init"));
  model.dropout_rate = config.dropout_rate;
  model.scalers = fit_scalers(training);

  const Dataset train_set = assemble(training, train_idx, model.scalers);
  const Dataset val_set = assemble(training, val_idx, model.scalers);
  const Eigen::Index n = train_set.inputs.cols();

  Eigen::VectorXd theta = pack(model);
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(kParamCount);
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(kParamCount);
  long step = 0;

  TrainingResult result;
  result.model = model;
  double best = loss_and_gradients(model, val_set.inputs, val_set.targets, nullptr, nullptr).total;
  result.best_epoch = 0;
  int since_best = 0;

  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Eigen::MatrixXd batch_in, batch_out;
  Gradients grad;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    double weight_sum = 0.0;

    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(config.batch_size, n - start);
      batch_in.resize(kInputDim, b);
      batch_out.resize(kOutputDim, b);
      for (Eigen::Index k = 0; k < b; ++k) {
        const Eigen::Index src = perm[static_cast<std::size_t>(start + k)];
        batch_in.col(k) = train_set.inputs.col(src);
        batch_out.col(k) = train_set.targets.col(src);
      }
      Eigen::MatrixXd mask;
      const Eigen::MatrixXd* mask_ptr = nullptr;
      if (model.dropout_rate > 0.0) {
        mask = make_dropout_mask(kHiddenUnits, b, model.dropout_rate, rng);
        mask_ptr = &mask;
      }
      const CompositeLoss loss =
          loss_and_gradients(model, batch_in, batch_out, mask_ptr, &grad);
      if (!std::isfinite(loss.total)) throw TrainingError(epoch, "non-finite training loss");

      const double w = static_cast<double>(b);
      log.train.total += w * loss.total;
      for (int h = 0; h < kHeads; ++h) log.train.head[h] += w * loss.head[h];
      weight_sum += w;

      ++step;
      const Eigen::VectorXd g = pack(grad);
      m1 = config.beta1 * m1 + (1.0 - config.beta1) * g;
      m2 = config.beta2 * m2 + (1.0 - config.beta2) * g.cwiseAbs2();
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      theta.array() -= config.learning_rate * (m1.array() / c1) /
                       ((m2.array() / c2).sqrt() + config.epsilon);
      unpack(theta, model);
    }
    log.train.total /= weight_sum;
    for (auto& v : log.train.head) v /= weight_sum;

    log.validation =
        loss_and_gradients(model, val_set.inputs, val_set.targets, nullptr, nullptr);
    if (!std::isfinite(log.validation.total)) {
      throw TrainingError(epoch, "non-finite validation loss");
    }
    result.history.push_back(log);

    if (log.validation.total < best) {
      best = log.validation.total;
      result.best_epoch = epoch;
      result.model = model;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  result.model.trained_epochs = result.best_epoch;
  return result;
}

CrossValidationResult cross_validate(const Corpus& corpus, const FeatureCorpus& simulated,
                                     const TrainingConfig& config, int folds) {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (static_cast<int>(corpus.users.size()) < folds) {
    throw ConfigError("cross-validation needs at least " + std::to_string(folds) +
                      " users, corpus has " + std::to_string(corpus.users.size()));
  }
  std::vector<std::string> users;
  for (const auto& [id, u] : corpus.users) {
    const auto it = simulated.users.find(id);
    if (it == simulated.users.end() || it->second.genuine.size() != u.genuine.size() ||
        it->second.forgeries.size() != u.forgeries.size()) {
      throw ShapeError("simulated features do not match the corpus for user " + id);
    }
    users.push_back(id);
  }
  std::mt19937_64 rng(derive_seed(config.seed, "folds"));
  std::shuffle(users.begin(), users.end(), rng);

  CrossValidationResult result;
  result.fold_users.resize(static_cast<std::size_t>(folds));
  for (std::size_t k = 0; k < users.size(); ++k) {
    result.fold_users[k % static_cast<std::size_t>(folds)].push_back(users[k]);
  }
  for (auto& f : result.fold_users) std::sort(f.begin(), f.end());

  for (int f = 0; f < folds; ++f) {
    const auto& test_users = result.fold_users[static_cast<std::size_t>(f)];
    auto is_test = [&](const std::string& id) {
      return std::binary_search(test_users.begin(), test_users.end(), id);
    };

    std::vector<TrainingPair> pairs;
    for (const auto& [id, u] : corpus.users) {
      if (is_test(id)) continue;
      const auto& sim = simulated.users.at(id);
      for (std::size_t i = 0; i < u.genuine.size(); ++i) {
        pairs.push_back({&u.genuine[i], &sim.genuine[i]});
      }
      for (std::size_t i = 0; i < u.forgeries.size(); ++i) {
        pairs.push_back({&u.forgeries[i], &sim.forgeries[i]});
      }
    }
    TrainingConfig fold_config = config;
    fold_config.seed = derive_seed(config.seed, static_cast<std::uint64_t>(f));
    const TrainingResult trained = train(pairs, fold_config);
    result.fold_scalers.push_back(trained.model.scalers);

    std::vector<JointFeatureSeries> estimated, reference;
    for (const auto& id : test_users) {
      const auto& u = corpus.users.at(id);
      const auto& sim = simulated.users.at(id);
      auto& dst = result.estimates.users[id];
      for (std::size_t i = 0; i < u.genuine.size(); ++i) {
        dst.genuine.push_back(estimate_features(trained.model, u.genuine[i]));
        estimated.push_back(dst.genuine.back());
        reference.push_back(sim.genuine[i]);
      }
      for (std::size_t i = 0; i < u.forgeries.size(); ++i) {
        dst.forgeries.push_back(estimate_features(trained.model, u.forgeries[i]));
        estimated.push_back(dst.forgeries.back());
        reference.push_back(sim.forgeries[i]);
      }
    }
    result.folds.push_back(estimation_metrics(estimated, reference, trained.model.scalers));
  }

  for (const auto& m : result.folds) {
    for (int h = 0; h < kHeads; ++h) {
      result.mean.group[h].mae += m.group[h].mae / folds;
      result.mean.group[h].mse += m.group[h].mse / folds;
    }
  }
  return result;
}

}  // namespace robosig
