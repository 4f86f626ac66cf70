#pragma once

#include <vector>

#include "dfq/autodiff.hpp"
#include "dfq/nn.hpp"

namespace dfq::loss {

/// Stored batch-normalization statistics of the full-precision model, in
/// model layer order. The alignment loss pulls synthetic-batch statistics
/// toward these.
struct BNStatsSnapshot {
  std::vector<Tensor> means;
  std::vector<Tensor> vars;

  size_t layer_count() const { return means.size(); }
};

struct LossWeights {
  double alpha = 0.1;  // statistics-alignment weight
  double delta = 1.0;  // distillation weight
};

/// Mean over rows of -sum_c y[c] * log softmax(logits)[c].
using dfq::soft_cross_entropy;

/// sum over layers of (|mu_batch - mu|^2 + |var_batch - var|^2), divided by
/// the layer count. Zero iff every statistic matches.
Var bns_loss(const std::vector<BatchStats>& batch_stats, const BNStatsSnapshot& snapshot);

/// Mean over rows of KL(softmax(teacher) || softmax(student)), temperature 1.
Var kd_loss(const Var& student_logits, const Tensor& teacher_logits);

struct GeneratorLossParts {
  Var total;
  double ce = 0;
  double bns = 0;
};

struct StudentLossParts {
  Var total;
  double ce = 0;
  double kd = 0;
};

/// CE(P(x), y) + alpha * BNS. The teacher runs with inference statistics
/// while its per-layer batch stats are captured for the alignment term;
/// gradients flow through the teacher into the synthetic samples.
GeneratorLossParts generator_loss(const Var& samples, const Tensor& soft_labels, Classifier& fp,
                                  const BNStatsSnapshot& snapshot, const LossWeights& weights);

/// CE(Q(x), y) + delta * KL(P(x) || Q(x)). Samples and teacher logits are
/// constants; gradients reach the student only.
StudentLossParts student_loss(const Tensor& samples, const Tensor& soft_labels,
                              QuantizedClassifier& q, Classifier& fp, const LossWeights& weights);

}  // namespace dfq::loss
