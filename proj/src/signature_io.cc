#include "robosig/signature_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "robosig/error.hpp"
#include "text_util.hpp"

namespace robosig {

namespace detail {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::data, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::data, "write failed: " + path.string());
}

}  // namespace detail

std::string_view to_string(Label label) {
  return label == Label::genuine ? "genuine" : "skilled_forgery";
}

Label label_from_string(std::string_view text) {
  if (text == "genuine" || text == "g") return Label::genuine;
  if (text == "skilled_forgery" || text == "forgery" || text == "f") {
    return Label::skilled_forgery;
  }
  throw ValidationError("unknown label '" + std::string(text) + "'");
}

void SignatureTrajectory::validate() const {
  if (x.size() != t.size() || y.size() != t.size()) {
    throw ValidationError("signature channels have different lengths");
  }
  if (!pressure.empty() && pressure.size() != t.size()) {
    throw ValidationError("pressure channel length differs from t");
  }
  if (t.size() < 2) {
    throw ValidationError("signature needs at least 2 samples, got " +
                          std::to_string(t.size()));
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i]) || !std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw ValidationError("non-finite value at sample " + std::to_string(i));
    }
    if (i > 0 && !(t[i] > t[i - 1])) {
      throw ValidationError("timestamps not strictly increasing at sample " +
                            std::to_string(i));
    }
    if (!pressure.empty() && !(pressure[i] >= 0.0 && std::isfinite(pressure[i]))) {
      throw ValidationError("invalid pressure at sample " + std::to_string(i));
    }
  }
}

ColumnSpec ColumnSpec::from_header(std::string_view names, double sample_rate) {
  ColumnSpec spec;
  spec.t.reset();
  spec.sample_rate = sample_rate;
  bool have_x = false;
  bool have_y = false;
  int index = 0;
  for (auto name : detail::split_fields(names)) {
    if (name == "t") {
      spec.t = index;
    } else if (name == "x") {
      spec.x = index;
      have_x = true;
    } else if (name == "y") {
      spec.y = index;
      have_y = true;
    } else if (name == "p" || name == "pressure") {
      spec.pressure = index;
    }
    ++index;
  }
  if (!have_x || !have_y) {
    throw ParseError(0, "column header lacks x or y: '" + std::string(names) +
                            "'");
  }
  return spec;
}

SignatureTrajectory parse_signature_file(std::string_view text,
                                         const std::optional<ColumnSpec>& columns,
                                         double sample_rate) {
  SignatureTrajectory sig;
  std::optional<ColumnSpec> spec = columns;
  std::vector<double> row;

  detail::for_each_line(text, [&](std::size_t line_no, std::string_view raw) {
    std::string_view line = detail::trim(raw);
    if (line.empty()) return;
    if (line.front() == '#') {
      auto colon = line.find(':');
      if (colon == std::string_view::npos) return;
      std::string_view key = detail::trim(line.substr(1, colon - 1));
      std::string_view value = detail::trim(line.substr(colon + 1));
      if (key == "cols") {
        if (!columns) spec = ColumnSpec::from_header(value, sample_rate);
      } else if (key == "user") {
        sig.user_id = std::string(value);
      } else if (key == "label") {
        try {
          sig.label = label_from_string(value);
        } catch (const ValidationError& e) {
          throw ParseError(line_no, e.what());
        }
      } else if (key == "session") {
        auto v = detail::parse_double(value);
        if (!v) throw ParseError(line_no, "bad session value");
        sig.session = static_cast<int>(*v);
      }
      return;
    }
    if (!spec) spec = ColumnSpec::txy();

    auto fields = detail::split_fields(line);
    row.clear();
    for (auto f : fields) {
      auto v = detail::parse_double(f);
      if (!v) {
        throw ParseError(line_no, "not a number: '" + std::string(f) + "'");
      }
      if (!std::isfinite(*v)) {
        throw ParseError(line_no, "non-finite value '" + std::string(f) + "'");
      }
      row.push_back(*v);
    }
    auto need = [&](int col) {
      if (col < 0 || static_cast<std::size_t>(col) >= row.size()) {
        throw ParseError(line_no, "expected at least " + std::to_string(col + 1) +
                                      " columns, got " +
                                      std::to_string(row.size()));
      }
      return row[static_cast<std::size_t>(col)];
    };
    if (spec->t) {
      sig.t.push_back(need(*spec->t));
    } else {
      if (!(spec->sample_rate > 0.0)) {
        throw ParseError(line_no, "sample rate must be positive");
      }
      sig.t.push_back(static_cast<double>(sig.t.size()) / spec->sample_rate);
    }
    sig.x.push_back(need(spec->x));
    sig.y.push_back(need(spec->y));
    if (spec->pressure) sig.pressure.push_back(need(*spec->pressure));
  });

  sig.validate();
  return sig;
}

std::string write_signature_file(const SignatureTrajectory& trajectory) {
  trajectory.validate();
  std::string out;
  out.reserve(trajectory.size() * 40 + 64);
  out += trajectory.has_pressure() ? "#cols: t x y p\n" : "#cols: t x y\n";
  if (!trajectory.user_id.empty()) {
    out += "#user: " + trajectory.user_id + "\n";
  }
  out += "#label: ";
  out += to_string(trajectory.label);
  out += "\n#session: " + std::to_string(trajectory.session) + "\n";
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    detail::append_double(out, trajectory.t[i]);
    out += ' ';
    detail::append_double(out, trajectory.x[i]);
    out += ' ';
    detail::append_double(out, trajectory.y[i]);
    if (trajectory.has_pressure()) {
      out += ' ';
      detail::append_double(out, trajectory.pressure[i]);
    }
    out += '\n';
  }
  return out;
}

SignatureTrajectory read_signature(const std::filesystem::path& path,
                                   const std::optional<ColumnSpec>& columns,
                                   double sample_rate) {
  try {
    return parse_signature_file(detail::read_file(path), columns, sample_rate);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_signature(const std::filesystem::path& path,
                     const SignatureTrajectory& trajectory) {
  detail::write_file(path, write_signature_file(trajectory));
}

std::size_t Corpus::signature_count() const {
  std::size_t n = 0;
  for (const auto& [id, u] : users) n += u.genuine.size() + u.forgeries.size();
  return n;
}

void Corpus::validate() const {
  for (const auto& [id, u] : users) {
    for (const auto* list : {&u.genuine, &u.forgeries}) {
      for (const auto& s : *list) {
        if (s.user_id != id) {
          throw ValidationError("signature of user '" + s.user_id +
                                "' filed under '" + id + "'");
        }
        s.validate();
      }
    }
    for (const auto& s : u.genuine) {
      if (s.label != Label::genuine) {
        throw ValidationError("forgery filed as genuine for user " + id);
      }
    }
    for (const auto& s : u.forgeries) {
      if (s.label != Label::skilled_forgery) {
        throw ValidationError("genuine filed as forgery for user " + id);
      }
    }
  }
}

void write_corpus(const std::filesystem::path& root, const Corpus& corpus) {
  corpus.validate();
  for (const auto& [id, u] : corpus.users) {
    auto dir = root / id;
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < u.genuine.size(); ++i) {
      write_signature(dir / ("g_" + std::to_string(i + 1) + ".sig"),
                      u.genuine[i]);
    }
    for (std::size_t i = 0; i < u.forgeries.size(); ++i) {
      write_signature(dir / ("f_" + std::to_string(i + 1) + ".sig"),
                      u.forgeries[i]);
    }
  }
}

namespace {

// "g_12.sig" -> ('g', 12)
std::optional<std::pair<char, int>> parse_corpus_name(const std::string& name) {
  if (name.size() < 7 || (name[0] != 'g' && name[0] != 'f') || name[1] != '_' ||
      !name.ends_with(".sig")) {
    return std::nullopt;
  }
  auto digits = std::string_view(name).substr(2, name.size() - 6);
  int n = 0;
  auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
  if (ec != std::errc{} || p != digits.data() + digits.size() || n < 1) {
    return std::nullopt;
  }
  return std::pair{name[0], n};
}

}  // namespace

Corpus read_corpus(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) {
    throw Error(ErrorKind::data, "corpus directory not found: " + root.string());
  }
  Corpus corpus;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string user = entry.path().filename().string();
    std::map<int, SignatureTrajectory> genuine;
    std::map<int, SignatureTrajectory> forged;
    for (const auto& file : std::filesystem::directory_iterator(entry.path())) {
      auto key = parse_corpus_name(file.path().filename().string());
      if (!key) continue;
      auto sig = read_signature(file.path());
      if (sig.user_id.empty()) sig.user_id = user;
      sig.label = key->first == 'g' ? Label::genuine : Label::skilled_forgery;
      (key->first == 'g' ? genuine : forged)[key->second] = std::move(sig);
    }
    auto& u = corpus.users[user];
    for (auto& [n, s] : genuine) u.genuine.push_back(std::move(s));
    for (auto& [n, s] : forged) u.forgeries.push_back(std::move(s));
  }
  corpus.validate();
  return corpus;
}

}  // namespace robosig
