#pragma once

// Online signature trajectories: text file format, corpus directory layout,
// and a seeded sigma-lognormal corpus synthesizer.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace robosig {

enum class Label { genuine, skilled_forgery };

std::string_view to_string(Label label);
Label label_from_string(std::string_view text);

/// Timestamped pen samples. `pressure` is either empty (channel absent) or
/// has one entry per sample; a zero pressure marks pen-up.
struct SignatureTrajectory {
  std::vector<double> t;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> pressure;
  std::string user_id;
  Label label = Label::genuine;
  int session = 0;

  std::size_t size() const noexcept { return t.size(); }
  bool has_pressure() const noexcept { return !pressure.empty(); }

  /// Throws ValidationError unless: >= 2 samples, t strictly increasing,
  /// all values finite, pressure (when present) non-negative.
  void validate() const;
};

/// Column mapping for plain-text signature rows (0-based column indices).
struct ColumnSpec {
  std::optional<int> t;
  int x = 0;
  int y = 1;
  std::optional<int> pressure;
  /// Used to synthesize timestamps when there is no t column.
  double sample_rate = 100.0;

  static ColumnSpec txy() { return {0, 1, 2, std::nullopt, 100.0}; }
  static ColumnSpec txyp() { return {0, 1, 2, 3, 100.0}; }

  /// Parses a header body such as "t x y p" (the part after "#cols:").
  static ColumnSpec from_header(std::string_view names, double sample_rate);
};

/// Parses whitespace/comma separated numeric rows. Lines starting with '#'
/// are comments, except `#cols:`, `#user:`, `#label:` and `#session:` which
/// are honoured. When `columns` is not given the `#cols:` header decides, and
/// failing that the default is t x y.
SignatureTrajectory parse_signature_file(
    std::string_view text, const std::optional<ColumnSpec>& columns = {},
    double sample_rate = 100.0);

/// Writes the header (`#cols: t x y [p]` plus metadata) and one row per
/// sample in shortest round-trip decimal form.
std::string write_signature_file(const SignatureTrajectory& trajectory);

SignatureTrajectory read_signature(const std::filesystem::path& path,
                                   const std::optional<ColumnSpec>& columns = {},
                                   double sample_rate = 100.0);
void write_signature(const std::filesystem::path& path,
                     const SignatureTrajectory& trajectory);

struct UserSignatures {
  std::vector<SignatureTrajectory> genuine;
  std::vector<SignatureTrajectory> forgeries;
};

/// Signatures keyed by user id. Iteration order is the sorted user id order,
/// which every downstream stage relies on for determinism.
struct Corpus {
  std::map<std::string, UserSignatures> users;

  std::size_t signature_count() const;
  void validate() const;
};

/// Writes `<root>/<user_id>/{g|f}_<n>.sig` with n counting from 1.
void write_corpus(const std::filesystem::path& root, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& root);

struct SynthesisConfig {
  std::uint64_t seed = 1;
  int n_users = 20;
  int genuine_per_user = 10;
  int forgeries_per_user = 5;
  int strokes_min = 4;
  int strokes_max = 7;
  double duration_min = 1.5;  // seconds
  double duration_max = 2.5;
  double sample_rate = 100.0;  // Hz
  /// Relative jitter applied to a user's stroke parameters for each genuine
  /// repetition.
  double genuine_jitter = 0.08;
  /// Relative jitter for skilled forgeries; must exceed genuine_jitter.
  double forgery_noise = 0.2;
  /// Every signature is fitted (longer side) into a square of this size,
  /// centred on the canvas, in digitizer units.
  double canvas_size = 100.0;
  /// Probability that a user's signature has a pen-up gap.
  double pen_up_probability = 0.5;

  void validate() const;
};

Corpus generate_corpus(const SynthesisConfig& config);

}  // namespace robosig
