// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoints:
//   "SCD1" | u32 version | u32 len + UTF-8 JSON config | u32 tensor count |
//   per tensor: u16 len + name, u8 rank, u32 dims, f32 data.
// All integers and floats are little-endian.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "scd/model.hpp"
#include "scd/numcore.hpp"

namespace scd::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StoredTensor {
  std::string name;
  num::Shape shape;
  std::vector<float> data;
};

struct CheckpointData {
  nlohmann::json config;
  std::vector<StoredTensor> tensors;
};

void write(const CheckpointData& data, std::ostream& out);
/// Throws FormatError on bad magic, unknown version or truncation.
CheckpointData read(std::istream& in);

void save_checkpoint(std::span<num::Parameter<float>* const> params, const nlohmann::json& config,
                     const std::string& path);
CheckpointData load_checkpoint(const std::string& path);

/// Fresh model from a Classifier::describe() object.
std::unique_ptr<model::Classifier<float>> make_classifier(const nlohmann::json& description, std::uint64_t seed = 0);

/// Copies stored tensors into the model. Every model parameter must be
/// present with a matching shape; unknown names are rejected.
void assign(model::Classifier<float>& model, const CheckpointData& data);

/// `config` is written with the model description under "model".
void save_model(model::Classifier<float>& model, nlohmann::json config, const std::string& path);

struct LoadedModel {
  std::unique_ptr<model::Classifier<float>> model;
  nlohmann::json config;
};

LoadedModel load_model(const std::string& path);

}  // namespace scd::checkpoint
