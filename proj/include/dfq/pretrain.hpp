#pragma once

#include "dfq/dataset.hpp"
#include "dfq/nn.hpp"
#include "dfq/trainer.hpp"

namespace dfq::bench {

struct PretrainOptions {
  int64_t epochs = 30;
  int64_t batch_size = 64;
  double lr = 1e-3;
  std::vector<int64_t> hidden = {64, 64};
  uint64_t seed = 1;
};

struct PretrainResult {
  Classifier model;
  std::vector<double> epoch_loss;
  double eval_accuracy = 0.0;
};

/// Supervised training of the full-precision reference classifier on the
/// toy training split. Throws on divergence, with the loss history in the
/// message.
PretrainResult pretrain_reference_model(const ToyDataset& data, const PretrainOptions& options);

}  // namespace dfq::bench
