// SPDX-License-Identifier: Apache-2.0

#include "scd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "scd/baselines.hpp"

namespace scd::checkpoint {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'S', 'C', 'D', '1'};

template <typename U>
void put(std::ostream& out, U value) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw FormatError(std::string("truncated checkpoint while reading ") + what);
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(static_cast<U>(bytes[i]) << (8 * i));
  return value;
}

std::string get_bytes(std::istream& in, std::size_t n, const char* what) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw FormatError(std::string("truncated checkpoint while reading ") + what);
  }
  return s;
}

}  // namespace

void write(const CheckpointData& data, std::ostream& out) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kFormatVersion);
  const std::string config = data.config.dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(config.size()));
  out.write(config.data(), static_cast<std::streamsize>(config.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.tensors.size()));
  for (const auto& t : data.tensors) {
    if (t.name.size() > 0xffff) throw FormatError("tensor name too long: " + t.name);
    if (t.shape.size() > 0xff) throw FormatError("tensor rank too high: " + t.name);
    if (num::numel(t.shape) != t.data.size()) throw FormatError("tensor data does not match shape: " + t.name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float f : t.data) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint");
}

CheckpointData read(std::istream& in) {
  const std::string magic = get_bytes(in, 4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint file (bad magic)");
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kFormatVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + ", expected " +
                      std::to_string(kFormatVersion));
  }
  CheckpointData data;
  const auto config_len = get<std::uint32_t>(in, "config length");
  try {
    data.config = json::parse(get_bytes(in, config_len, "config"));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  const auto count = get<std::uint32_t>(in, "tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    StoredTensor t;
    t.name = get_bytes(in, get<std::uint16_t>(in, "name length"), "tensor name");
    const auto rank = get<std::uint8_t>(in, "rank");
    for (std::uint8_t r = 0; r < rank; ++r) t.shape.push_back(get<std::uint32_t>(in, "dims"));
    t.data.resize(num::numel(t.shape));
    for (auto& f : t.data) f = std::bit_cast<float>(get<std::uint32_t>(in, "tensor data"));
    data.tensors.push_back(std::move(t));
  }
  return data;
}

void save_checkpoint(std::span<num::Parameter<float>* const> params, const json& config, const std::string& path) {
  CheckpointData data;
  data.config = config;
  for (const auto* p : params) {
    const auto v = p->value();
    data.tensors.push_back({p->name(), p->shape(), {v.begin(), v.end()}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  write(data, out);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  return read(in);
}

std::unique_ptr<model::Classifier<float>> make_classifier(const json& description, std::uint64_t seed) {
  const auto kind = description.at("kind").get<std::string>();
  if (kind == "neural") {
    return std::make_unique<model::ScdModel<float>>(model::ModelConfig::from_json(description.at("model")), seed);
  }
  if (kind == "logreg") {
    return std::make_unique<baselines::LogRegModel<float>>(
        baselines::NgramFeatureSpace::from_json(description.at("features")));
  }
  if (kind == "dnn") {
    return std::make_unique<baselines::DnnModel<float>>(
        baselines::NgramFeatureSpace::from_json(description.at("features")),
        description.at("hidden").get<std::size_t>(), description.at("dropout").get<double>(), seed);
  }
  throw FormatError("unknown model kind '" + kind + "'");
}

void assign(model::Classifier<float>& model, const CheckpointData& data) {
  std::map<std::string, const StoredTensor*> by_name;
  for (const auto& t : data.tensors) {
    if (!by_name.emplace(t.name, &t).second) throw FormatError("duplicate tensor '" + t.name + "'");
  }
  auto params = model.parameters();
  for (auto* p : params) {
    auto it = by_name.find(p->name());
    if (it == by_name.end()) throw FormatError("checkpoint lacks tensor '" + p->name() + "'");
    if (it->second->shape != p->shape()) {
      throw FormatError("tensor '" + p->name() + "' has shape " + num::to_string(it->second->shape) +
                        ", model expects " + num::to_string(p->shape()));
    }
    std::copy(it->second->data.begin(), it->second->data.end(), p->value().begin());
    p->zero_grad();
    by_name.erase(it);
  }
  if (!by_name.empty()) throw FormatError("unknown tensor name '" + by_name.begin()->first + "'");
}

void save_model(model::Classifier<float>& model, json config, const std::string& path) {
  config["model"] = model.describe();
  auto params = model.parameters();
  save_checkpoint(params, config, path);
}

LoadedModel load_model(const std::string& path) {
  auto data = load_checkpoint(path);
  if (!data.config.contains("model")) throw FormatError("checkpoint config lacks a model description");
  LoadedModel out;
  try {
    out.model = make_classifier(data.config.at("model"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid model description: ") + e.what());
  }
  assign(*out.model, data);
  out.config = std::move(data.config);
  return out;
}

}  // namespace scd::checkpoint
