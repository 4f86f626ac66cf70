#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dfq/dataset.hpp"
#include "dfq/trainer.hpp"

namespace dfq::bench {

/// Configuration or usage problems that should exit with code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Parses "4w4a" style bit notation into (weight_bits, act_bits).
std::pair<int64_t, int64_t> parse_bits(const std::string& notation);

/// Everything one run needs, readable from a line-oriented key=value file
/// with [section] headers. Unknown sections or keys are rejected.
struct RunConfig {
  // [run]
  uint64_t seed = 1;
  std::string out_dir = "out";
  std::string teacher_checkpoint;
  // [dataset]
  ToyDatasetSpec dataset;
  // [pretrain]
  int64_t pretrain_epochs = 30;
  int64_t pretrain_batch = 64;
  double pretrain_lr = 1e-3;
  // [quant]
  int64_t weight_bits = 4;
  int64_t act_bits = 4;
  // [latent]
  int64_t k = 2;
  double p = 0.5;
  double sigma_z = 1.0;
  int64_t dm_layers = 1;
  int64_t dm_out_dim = 64;
  bool extracted_init = true;
  bool freeze_embeddings = false;
  // [generator]
  std::vector<int64_t> gen_hidden = {128, 128};
  bool conditional_bn = true;
  // [schedule]
  train::TrainSchedule schedule = train::TrainSchedule::toy_defaults();
  // [loss]
  double alpha = 0.1;
  double delta = 1.0;

  std::string baseline = "none";  // none | noise-only | mixup

  static RunConfig parse_file(const std::string& path);
  static RunConfig parse_string(const std::string& text);

  /// Canonical serialization; parse_string(echo()) reproduces the config.
  std::string echo() const;

  train::TrainOptions train_options() const;
  void validate() const;
};

}  // namespace dfq::bench
