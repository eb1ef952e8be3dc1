// robosig: synth -> replay -> train -> estimate -> evaluate -> plot

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "robosig/error.hpp"
#include "robosig/estimator.hpp"
#include "robosig/evaluation.hpp"
#include "robosig/replay.hpp"
#include "robosig/robot_model.hpp"
#include "robosig/signature_io.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace robosig;

namespace {

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig cfg = g.config_path.empty() ? RunConfig{} : load_run_config(g.config_path);
  if (g.config_path.empty()) cfg.set_seed(cfg.seed);
  if (g.seed_opt->count() > 0) cfg.set_seed(g.seed);
  return cfg;
}

KinematicChain resolve_chain(const RunConfig& cfg, const std::string& flag) {
  if (!flag.empty()) return KinematicChain::load(flag);
  if (cfg.chain) return KinematicChain::load(*cfg.chain);
  return default_chain();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ValidationError("cannot write " + path.string());
  const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
  if (std::fclose(f) != 0 || !ok) throw ValidationError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw ValidationError("cannot read " + path.string());
  std::string text;
  char buf[65536];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, n);
  std::fclose(f);
  return text;
}

void print_metrics_table(const EstimationMetrics& m) {
  std::printf("%-6s %10s %10s\n", "group", "MAE", "MSE");
  for (int h = 0; h < kHeads; ++h) {
    std::printf("%-6s %10.4f %10.4f\n",
                std::string(to_string(static_cast<FeatureGroup>(h))).c_str(), m.group[h].mae,
                m.group[h].mse);
  }
}

// Estimates laid out like `corpus`.
FeatureCorpus estimate_corpus(const MLPModel& model, const Corpus& corpus) {
  FeatureCorpus out;
  for (const auto& [id, u] : corpus.users) {
    auto& dst = out.users[id];
    for (const auto& s : u.genuine) dst.genuine.push_back(estimate_features(model, s));
    for (const auto& s : u.forgeries) dst.forgeries.push_back(estimate_features(model, s));
  }
  return out;
}

std::vector<JointFeatureSeries> flatten(const FeatureCorpus& fc) {
  std::vector<JointFeatureSeries> out;
  for (const auto& [id, u] : fc.users) {
    out.insert(out.end(), u.genuine.begin(), u.genuine.end());
    out.insert(out.end(), u.forgeries.begin(), u.forgeries.end());
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Robotic signature simulation, feature estimation and verification"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON run configuration")
      ->check(CLI::ExistingFile);
  g.seed_opt = app.add_option("--seed", g.seed, "Root seed (overrides the config)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic signature corpus");
  std::string synth_out;
  int users = 0, genuine = 0, forgeries = 0;
  synth->add_option("--out", synth_out, "Corpus directory")->required();
  auto* users_opt = synth->add_option("--users", users, "Number of users");
  auto* genuine_opt = synth->add_option("--genuine", genuine, "Genuine signatures per user");
  auto* forg_opt = synth->add_option("--forgeries", forgeries, "Skilled forgeries per user");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Import signature files into a corpus");
  std::string ingest_out, ingest_user, ingest_label, ingest_cols;
  double ingest_rate = 100.0;
  std::vector<std::string> ingest_files;
  ingest->add_option("--out", ingest_out, "Corpus directory (created or extended)")
      ->required();
  ingest->add_option("--user", ingest_user, "User id (overrides file headers)");
  ingest->add_option("--label", ingest_label, "genuine or forgery (overrides file headers)");
  ingest->add_option("--cols", ingest_cols, "Column names, e.g. \"x y p\" or \"t x y\"");
  ingest->add_option("--rate", ingest_rate, "Sample rate (Hz) for files without a t column")
      ->check(CLI::PositiveNumber);
  ingest->add_option("files", ingest_files, "Signature files")
      ->required()
      ->check(CLI::ExistingFile);

  // replay
  auto* replay_cmd = app.add_subcommand("replay", "Simulate the robot writing each signature");
  std::string replay_corpus_dir, replay_out, replay_chain;
  replay_cmd->add_option("--corpus", replay_corpus_dir, "Corpus directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  replay_cmd->add_option("--out", replay_out, "Feature directory")->required();
  replay_cmd->add_option("--chain", replay_chain, "Chain description (JSON)")
      ->check(CLI::ExistingFile);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the feature estimator");
  std::string train_corpus, train_features, train_model;
  int train_epochs = 0;
  train_cmd->add_option("--corpus", train_corpus, "Corpus directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  train_cmd->add_option("--features", train_features, "Simulated feature directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  train_cmd->add_option("--model", train_model, "Output model file")->required();
  auto* epochs_opt = train_cmd->add_option("--epochs", train_epochs, "Maximum epochs");

  // estimate
  auto* estimate = app.add_subcommand("estimate", "Estimate joint features from signatures");
  std::string est_corpus, est_model, est_features, est_out;
  int est_folds = 0;
  estimate->add_option("--corpus", est_corpus, "Corpus directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  auto* est_model_opt = estimate->add_option("--model", est_model, "Trained model file")
                            ->check(CLI::ExistingFile);
  estimate->add_option("--features", est_features,
                       "Simulated features: reference for the error table, training "
                       "data with --folds")
      ->check(CLI::ExistingDirectory);
  auto* folds_opt =
      estimate->add_option("--folds", est_folds, "Cross-validate by user with k folds")
          ->check(CLI::Range(2, 1000));
  estimate->add_option("--out", est_out, "Estimated feature directory")->required();
  est_model_opt->excludes(folds_opt);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Run a verification protocol");
  std::string ev_features, ev_report, ev_det, ev_scores, ev_mode, ev_group, ev_source;
  int ev_repeats = 0, ev_refs = 0;
  evaluate->add_option("--features", ev_features, "Feature directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  evaluate->add_option("--mode", ev_mode, "random or skilled");
  evaluate->add_option("--group", ev_group, "theta, omega or tau");
  evaluate->add_option("--source", ev_source,
                       "simulated or estimated (defaults to the files' header)");
  auto* repeats_opt = evaluate->add_option("--repeats", ev_repeats, "Protocol repetitions");
  auto* refs_opt = evaluate->add_option("--refs", ev_refs, "Reference signatures per user");
  evaluate->add_option("--report", ev_report, "Report JSON")->required();
  evaluate->add_option("--det", ev_det, "Averaged DET curve CSV")->required();
  evaluate->add_option("--scores", ev_scores, "Per-comparison score CSV");

  // plot
  auto* plot = app.add_subcommand("plot", "Draw DET curves as SVG");
  std::vector<std::string> plot_det, plot_names;
  std::string plot_out;
  plot->add_option("--det", plot_det, "DET CSV (repeatable)")
      ->required()
      ->check(CLI::ExistingFile);
  plot->add_option("--name", plot_names, "Legend entry per --det");
  plot->add_option("--out", plot_out, "SVG file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "robosig: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::usage);
  }

  RunConfig cfg = resolve_config(g);

  if (*synth) {
    if (users_opt->count()) cfg.synthesis.n_users = users;
    if (genuine_opt->count()) cfg.synthesis.genuine_per_user = genuine;
    if (forg_opt->count()) cfg.synthesis.forgeries_per_user = forgeries;
    const Corpus corpus = generate_corpus(cfg.synthesis);
    write_corpus(synth_out, corpus);
    std::printf("wrote %zu signatures for %zu users to %s\n", corpus.signature_count(),
                corpus.users.size(), synth_out.c_str());
  } else if (*ingest) {
    Corpus corpus = fs::exists(ingest_out) ? read_corpus(ingest_out) : Corpus{};
    std::optional<ColumnSpec> cols;
    if (!ingest_cols.empty()) cols = ColumnSpec::from_header(ingest_cols, ingest_rate);
    for (const auto& file : ingest_files) {
      SignatureTrajectory sig = read_signature(file, cols, ingest_rate);
      if (!ingest_user.empty()) sig.user_id = ingest_user;
      if (!ingest_label.empty()) sig.label = label_from_string(ingest_label);
      if (sig.user_id.empty()) {
        throw ValidationError(file + ": no user id (use --user or a '#user:' header)");
      }
      sig.validate();
      auto& u = corpus.users[sig.user_id];
      (sig.label == Label::genuine ? u.genuine : u.forgeries).push_back(std::move(sig));
    }
    write_corpus(ingest_out, corpus);
    std::printf("corpus %s now holds %zu signatures for %zu users\n", ingest_out.c_str(),
                corpus.signature_count(), corpus.users.size());
  } else if (*replay_cmd) {
    const KinematicChain chain = resolve_chain(cfg, replay_chain);
    cfg.placement.validate(chain);
    const Corpus corpus = read_corpus(replay_corpus_dir);
    const FeatureCorpus features = replay_corpus(chain, corpus, cfg.placement, cfg.planning);
    write_feature_corpus(replay_out, features);
    std::printf("replayed %zu signatures on %s\n", corpus.signature_count(),
                chain.name.c_str());
  } else if (*train_cmd) {
    if (epochs_opt->count()) cfg.training.max_epochs = train_epochs;
    cfg.training.validate();
    const Corpus corpus = read_corpus(train_corpus);
    const FeatureCorpus features = read_feature_corpus(train_features);
    const auto pairs = training_pairs(corpus, features);
    const TrainingResult result = train(pairs, cfg.training);
    std::printf("%5s %10s %10s %10s %10s %10s\n", "epoch", "train", "val", "val_theta",
                "val_omega", "val_tau");
    for (const auto& e : result.history) {
      std::printf("%5d %10.6f %10.6f %10.6f %10.6f %10.6f\n", e.epoch, e.train.total,
                  e.validation.total, e.validation.head[0], e.validation.head[1],
                  e.validation.head[2]);
    }
    std::printf("best epoch %d\n", result.best_epoch);
    save_model_file(train_model, result.model);
  } else if (*estimate) {
    const Corpus corpus = read_corpus(est_corpus);
    if (folds_opt->count()) {
      if (est_features.empty()) throw ConfigError("--folds needs --features");
      const FeatureCorpus simulated = read_feature_corpus(est_features);
      const CrossValidationResult cv = cross_validate(corpus, simulated, cfg.training, est_folds);
      write_feature_corpus(est_out, cv.estimates);
      for (std::size_t f = 0; f < cv.folds.size(); ++f) {
        std::printf("fold %zu (%zu users)\n", f + 1, cv.fold_users[f].size());
        print_metrics_table(cv.folds[f]);
      }
      std::printf("mean over %zu folds\n", cv.folds.size());
      print_metrics_table(cv.mean);
    } else {
      if (est_model.empty()) throw ConfigError("estimate needs --model or --folds");
      const MLPModel model = load_model_file(est_model);
      const FeatureCorpus estimates = estimate_corpus(model, corpus);
      write_feature_corpus(est_out, estimates);
      if (!est_features.empty()) {
        const FeatureCorpus reference = read_feature_corpus(est_features);
        training_pairs(corpus, reference);  // shape check
        print_metrics_table(
            estimation_metrics(flatten(estimates), flatten(reference), model.scalers));
      } else {
        std::printf("estimated %zu signatures\n", corpus.signature_count());
      }
    }
  } else if (*evaluate) {
    ProtocolConfig pc = cfg.protocol;
    if (!ev_mode.empty()) pc.mode = protocol_mode_from_string(ev_mode);
    if (!ev_group.empty()) pc.group = feature_group_from_string(ev_group);
    if (repeats_opt->count()) pc.repeats = ev_repeats;
    if (refs_opt->count()) pc.n_refs = ev_refs;
    const FeatureCorpus features = read_feature_corpus(ev_features);
    if (!ev_source.empty()) {
      pc.source = feature_source_from_string(ev_source);
    } else if (!features.users.empty() && !features.users.begin()->second.genuine.empty()) {
      pc.source = features.users.begin()->second.genuine.front().source;
    }
    const auto runs = run_protocol(features, pc);
    const EvaluationReport report = aggregate_runs(runs);
    write_text(ev_report, report_json(report, pc));
    write_text(ev_det, det_csv(report.det));
    if (!ev_scores.empty()) {
      std::vector<ScoreRecord> records;
      for (const auto& r : runs) records.insert(records.end(), r.records.begin(), r.records.end());
      write_text(ev_scores, write_score_csv(records));
    }
    for (std::size_t k = 0; k < report.eers.size(); ++k) {
      std::printf("run %2zu EER %.4f\n", k + 1, report.eers[k]);
    }
    std::printf("%s forgeries, %s %s: EER %.2f%% +- %.2f%%\n",
                std::string(to_string(pc.mode)).c_str(), std::string(to_string(pc.source)).c_str(),
                std::string(to_string(pc.group)).c_str(), 100.0 * report.eer_mean,
                100.0 * report.eer_std);
  } else if (*plot) {
    if (!plot_names.empty() && plot_names.size() != plot_det.size()) {
      throw ConfigError("give one --name per --det");
    }
    std::vector<DetSeries> series;
    for (std::size_t k = 0; k < plot_det.size(); ++k) {
      DetSeries s;
      s.name = plot_names.empty() ? fs::path(plot_det[k]).stem().string() : plot_names[k];
      try {
        s.points = parse_det_csv(read_text(plot_det[k]));
      } catch (const ParseError& e) {
        throw ParseError(0, plot_det[k] + ": " + e.what());
      }
      series.push_back(std::move(s));
    }
    write_text(plot_out, det_svg(series));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "robosig: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "robosig: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::data);
  } catch (const std::exception& e) {
    std::cerr << "robosig: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::data);
  }
}
