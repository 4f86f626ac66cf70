#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dfq/autodiff.hpp"
#include "dfq/quant.hpp"
#include "dfq/rng.hpp"
#include "dfq/tensor.hpp"

namespace dfq {

enum class Mode { Train, Eval };

/// Fully connected layer. Weight is stored [in, out], so column y of the
/// head weight is the class-y vector.
struct Linear {
  Var W;  // [in, out]
  Var b;  // [out]

  Linear() = default;
  Linear(int64_t in, int64_t out, Rng& rng);

  /// Deep copy. Var copies share storage; clone() does not.
  Linear clone() const;

  int64_t in_dim() const { return W.value().dim(0); }
  int64_t out_dim() const { return W.value().dim(1); }
  Var forward(const Var& x) const;  // [m,in] -> [m,out]
  std::vector<Var> parameters() const { return {W, b}; }
};

/// Differentiable batch mean/variance of a layer input, captured for the
/// statistics-alignment loss.
struct BatchStats {
  Var mean;  // [F]
  Var var;   // [F], population variance
};

/// 1-D batch normalization with running statistics.
/// Train: normalize by batch stats, update running stats.
/// Eval: normalize by running stats.
/// A non-null capture pointer switches normalization to running stats while
/// still emitting the differentiable batch stats of the input.
struct BatchNorm {
  Var gamma, beta;          // [F]
  Tensor running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  // Normalize by the stored running stats even in Train mode and never
  // update them. The student inherits the teacher's real-data statistics
  // and keeps them through fine-tuning; only the affine part trains.
  bool freeze_stats = false;

  BatchNorm() = default;
  explicit BatchNorm(int64_t features);

  BatchNorm clone() const;

  int64_t features() const { return gamma.value().numel(); }
  Var forward(const Var& x, Mode mode, BatchStats* capture = nullptr);
  std::vector<Var> parameters() const { return {gamma, beta}; }
};

struct ClassifierConfig {
  int64_t in_dim = 64;
  std::vector<int64_t> hidden = {64, 64};
  int64_t num_classes = 10;
};

/// Small dense classifier with a BN layer after every hidden linear.
/// features() returns the activations feeding the final fully connected
/// layer; head() applies that layer.
struct Classifier {
  ClassifierConfig cfg;
  std::vector<Linear> fc;   // hidden layers
  std::vector<BatchNorm> bn;
  Linear head;

  Classifier() = default;
  Classifier(ClassifierConfig cfg, Rng& rng);

  Classifier clone() const;

  Var features(const Var& x, Mode mode, std::vector<BatchStats>* capture = nullptr);
  Var forward(const Var& x, Mode mode, std::vector<BatchStats>* capture = nullptr);

  int64_t feature_dim() const { return head.in_dim(); }
  int64_t num_classes() const { return head.out_dim(); }
  /// [D, C]; column y is the class-y weight vector of the final layer.
  const Tensor& head_weight() const { return head.W.value(); }

  std::vector<Var> parameters();
  void set_requires_grad(bool rg);
  /// FNV-1a over all parameter and running-stat bytes.
  uint64_t state_checksum() const;
};

/// Classifier wrapper that fake-quantizes weights (per output channel) and
/// layer-input activations (per tensor, EMA-tracked ranges) on the forward
/// pass. Holds full-precision master weights; gradients flow straight
/// through the quantizers.
struct QuantizedClassifier {
  Classifier net;
  int64_t weight_bits = 4;
  int64_t act_bits = 4;
  std::vector<quant::RangeTracker> act_trackers;  // one per linear input

  QuantizedClassifier() = default;
  QuantizedClassifier(Classifier base, int64_t weight_bits, int64_t act_bits);

  Var forward(const Var& x, Mode mode);
  void freeze_ranges();
  void unfreeze_ranges();
  std::vector<Var> parameters() { return net.parameters(); }
};

// ---- optimizers -------------------------------------------------------

struct Adam {
  double lr;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  explicit Adam(std::vector<Var> params, double lr);
  void step();
  void zero_grad();

private:
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
  int64_t t_ = 0;
};

struct SgdMomentum {
  double lr;
  double momentum = 0.9;
  double weight_decay = 0.0;
  bool nesterov = true;

  SgdMomentum(std::vector<Var> params, double lr, double momentum, double weight_decay,
              bool nesterov);
  void step();
  void zero_grad();

private:
  std::vector<Var> params_;
  std::vector<Tensor> vel_;
};

}  // namespace dfq
