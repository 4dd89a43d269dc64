// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: prepare, synth, train, eval, predict, gradcheck
// and sweep. Exit codes: 0 success, 1 runtime failure, 2 usage or config
// error.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "scd/experiment.hpp"
#include "scd/synthgen.hpp"
#include "scd/training.hpp"

namespace scd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a subcommand needs, resolved as flag > config file > default.
/// `seed` drives the split, the synthetic corpus and training alike.
struct RunConfig {
  std::string data;
  std::string out;
  std::string split;
  std::string checkpoint;
  std::uint64_t seed = 0;
  std::size_t max_vocab = corpus::Vocabulary::kDefaultMaxSize;
  bool grid = false;
  experiment::ModelSpec model;
  training::TrainConfig train;
  synthgen::SynthSpec synth;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j);
};

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace scd::cli
