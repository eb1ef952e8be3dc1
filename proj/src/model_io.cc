// Model container layout (JSON):
//
//   {
//     "format": "robosig-mlp",
//     "version": 1,
//     "checksum": "<FNV-1a 64 of payload.dump(), hex>",
//     "payload": {
//       "dropout_rate": 0.3,
//       "trained_epochs": n,
//       "tensors": {
//         "W_h": {"shape": [12, 22], "data": [row-major values]},
//         "b_h": {"shape": [12], ...},
//         "W_theta", "b_theta", "W_omega", "b_omega", "W_tau", "b_tau"
//       },
//       "scalers": {"input": [[min, max], x2], "target": [[min, max], x18]}
//     }
//   }
//
// Doubles are written in shortest round-trip form, so a loaded model
// reproduces forward outputs bit for bit.

#include <cmath>
#include <cstdio>

#include "robosig/estimator.hpp"
#include "text_util.hpp"

namespace robosig {

namespace {

constexpr const char* kFormat = "robosig-mlp";
constexpr std::array<const char*, kHeads> kHeadNames{"theta", "omega", "tau"};

std::string checksum(const nlohmann::json& payload) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : payload.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

template <typename M>
nlohmann::json tensor_to_json(const M& m, bool vector) {
  nlohmann::json t;
  t["shape"] = vector ? nlohmann::json::array({m.rows()})
                      : nlohmann::json::array({m.rows(), m.cols()});
  auto& data = t["data"] = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return t;
}

template <typename M>
void tensor_from_json(const nlohmann::json& tensors, const std::string& name, M& m,
                      bool vector) {
  if (!tensors.contains(name)) throw ShapeError("model lacks tensor " + name);
  const auto& t = tensors.at(name);
  const auto shape = t.at("shape").get<std::vector<long>>();
  const std::vector<long> expected =
      vector ? std::vector<long>{m.rows()} : std::vector<long>{m.rows(), m.cols()};
  if (shape != expected) {
    std::string got;
    for (auto s : shape) got += (got.empty() ? "" : "x") + std::to_string(s);
    std::string want;
    for (auto s : expected) want += (want.empty() ? "" : "x") + std::to_string(s);
    throw ShapeError("tensor " + name + " has shape " + got + ", expected " + want);
  }
  const auto& data = t.at("data");
  if (!data.is_array() || static_cast<long>(data.size()) != m.size()) {
    throw ShapeError("tensor " + name + " has " + std::to_string(data.size()) +
                     " values, expected " + std::to_string(m.size()));
  }
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const auto& v = data[k++];
      if (!v.is_number()) throw ValidationError("tensor " + name + " holds a non-number");
      m(r, c) = v.get<double>();
      if (!std::isfinite(m(r, c))) {
        throw ValidationError("tensor " + name + " holds a non-finite weight");
      }
    }
  }
}

nlohmann::json scaler_to_json(const MinMax& s) { return {s.min, s.max}; }

MinMax scaler_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::array<double, 2>>();
  if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || v[1] < v[0]) {
    throw ValidationError("invalid scaler range");
  }
  return MinMax::fit(v[0], v[1]);
}

}  // namespace

std::string save_model(const MLPModel& model) {
  if (!model.finite()) throw ValidationError("refusing to save a non-finite model");
  nlohmann::json payload;
  payload["dropout_rate"] = model.dropout_rate;
  payload["trained_epochs"] = model.trained_epochs;
  auto& tensors = payload["tensors"];
  tensors["W_h"] = tensor_to_json(model.w_hidden, false);
  tensors["b_h"] = tensor_to_json(model.b_hidden, true);
  for (int h = 0; h < kHeads; ++h) {
    tensors[std::string("W_") + kHeadNames[h]] = tensor_to_json(model.w_head[h], false);
    tensors[std::string("b_") + kHeadNames[h]] = tensor_to_json(model.b_head[h], true);
  }
  auto& scalers = payload["scalers"];
  for (const auto& s : model.scalers.input) scalers["input"].push_back(scaler_to_json(s));
  for (const auto& s : model.scalers.target) scalers["target"].push_back(scaler_to_json(s));

  nlohmann::json doc;
  doc["format"] = kFormat;
  doc["version"] = MLPModel::kVersion;
  doc["checksum"] = checksum(payload);
  doc["payload"] = std::move(payload);
  return doc.dump(1) + "\n";
}

MLPModel load_model(std::string_view bytes) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (!doc.is_object() || doc.value("format", std::string()) != kFormat) {
      throw ValidationError("not a robosig model file");
    }
    const int version = doc.at("version").get<int>();
    if (version != MLPModel::kVersion) {
      throw ValidationError("model version " + std::to_string(version) +
                            " not supported (expected " +
                            std::to_string(MLPModel::kVersion) + ")");
    }
    const auto& payload = doc.at("payload");
    if (doc.at("checksum").get<std::string>() != checksum(payload)) {
      throw ValidationError("model checksum mismatch (file corrupted)");
    }

    MLPModel model;
    model.dropout_rate = payload.at("dropout_rate").get<double>();
    model.trained_epochs = payload.at("trained_epochs").get<int>();
    const auto& tensors = payload.at("tensors");
    tensor_from_json(tensors, "W_h", model.w_hidden, false);
    tensor_from_json(tensors, "b_h", model.b_hidden, true);
    for (int h = 0; h < kHeads; ++h) {
      tensor_from_json(tensors, std::string("W_") + kHeadNames[h], model.w_head[h], false);
      tensor_from_json(tensors, std::string("b_") + kHeadNames[h], model.b_head[h], true);
    }
    const auto& scalers = payload.at("scalers");
    const auto& in = scalers.at("input");
    const auto& out = scalers.at("target");
    if (in.size() != 2 || out.size() != kOutputDim) {
      throw ShapeError("scaler table has wrong size");
    }
    for (std::size_t k = 0; k < 2; ++k) model.scalers.input[k] = scaler_from_json(in[k]);
    for (std::size_t k = 0; k < kOutputDim; ++k) {
      model.scalers.target[k] = scaler_from_json(out[k]);
    }
    if (!(model.dropout_rate >= 0.0 && model.dropout_rate < 1.0)) {
      throw ValidationError("dropout_rate out of range");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model file: ") + e.what());
  }
}

void save_model_file(const std::filesystem::path& path, const MLPModel& model) {
  detail::write_file(path, save_model(model));
}

MLPModel load_model_file(const std::filesystem::path& path) {
  return load_model(detail::read_file(path));
}

}  // namespace robosig
