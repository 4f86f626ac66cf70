#pragma once

#include <cstdint>
#include <vector>

#include "dfq/autodiff.hpp"
#include "dfq/latent.hpp"
#include "dfq/nn.hpp"

namespace dfq::gen {

struct GeneratorConfig {
  int64_t latent_dim = 64;
  int64_t num_classes = 10;
  int64_t out_channels = 1;
  int64_t out_height = 8;
  int64_t out_width = 8;
  std::vector<int64_t> hidden = {128, 128};
  bool use_conditional_bn = true;

  int64_t out_dim() const { return out_channels * out_height * out_width; }
};

/// Batch normalization whose affine parameters are a label-weighted convex
/// mix of per-class tables: gamma_eff = y^T * Gamma, beta_eff = y^T * Beta.
/// A one-hot label reduces to class-c's (gamma_c, beta_c).
struct CondBatchNorm {
  Var gammas;  // [C, F], initialized to 1
  Var betas;   // [C, F], initialized to 0
  Tensor running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  CondBatchNorm() = default;
  CondBatchNorm(int64_t num_classes, int64_t features);

  int64_t features() const { return gammas.value().dim(1); }
  Var forward(const Var& x, const Tensor& soft_labels, Mode mode);
  std::vector<Var> parameters() const { return {gammas, betas}; }
};

/// Synthetic samples paired with the labels they were generated under.
/// Sample values live in [-1, 1]; rows are flattened images.
struct SyntheticBatch {
  Tensor samples;      // [batch, out_dim]
  Tensor soft_labels;  // [batch, C]
  std::vector<int64_t> sample_shape;  // (channels, height, width)
};

/// MLP generator with conditional BN after every hidden layer and a tanh
/// output stage.
struct Generator {
  GeneratorConfig cfg;
  std::vector<Linear> fc;
  std::vector<CondBatchNorm> cbn;
  std::vector<BatchNorm> bn;  // used when conditional BN is disabled
  Linear out;

  Generator() = default;
  Generator(GeneratorConfig cfg, Rng& rng);

  /// Differentiable forward; latents [batch, latent_dim] -> [batch, out_dim].
  Var forward(const Var& latents, const Tensor& soft_labels, Mode mode);

  std::vector<Var> parameters();
};

/// Value-level generation for consumers that do not differentiate
/// (metrics, visualization). Labels pass through unchanged.
SyntheticBatch generate(Generator& g, const latent::LatentBatch& latents, Mode mode = Mode::Eval);

}  // namespace dfq::gen
