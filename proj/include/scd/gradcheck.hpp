// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference checks of whole models in double precision.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "scd/model.hpp"

namespace scd::gradcheck {

struct ParamError {
  std::string name;
  std::size_t size = 0;
  double max_rel_error = 0.0;
};

struct Report {
  std::vector<ParamError> params;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  double seconds = 0.0;

  nlohmann::json to_json() const;
};

inline constexpr double kStep = 1e-4;
inline constexpr double kTolerance = 1e-3;

/// Loss on a small random batch (PAD slots included) against central
/// differences for every coordinate of every parameter. The classifier
/// layer and biases are randomized first, since zero initialization would
/// mask upstream gradients.
Report check_model(const model::ModelConfig& config, std::uint64_t seed, std::size_t batch = 3);

/// Same for the n-gram baselines; `kind` is "logreg" or "dnn".
Report check_ngram(const std::string& kind, std::size_t hidden, std::uint64_t seed, std::size_t batch = 4);

/// The configuration the CLI checks by default: d = d_a = 8, t = 2, V = 20.
model::ModelConfig tiny_config(model::Variant variant);

}  // namespace scd::gradcheck
