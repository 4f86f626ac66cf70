#pragma once

#include <cstdint>
#include <vector>

#include "dfq/autodiff.hpp"
#include "dfq/nn.hpp"
#include "dfq/rng.hpp"
#include "dfq/tensor.hpp"

namespace dfq::latent {

/// Per-class generator embeddings, one column per class ([D, C]).
struct EmbeddingTable {
  Var E;
  bool trainable = true;
  bool frozen = false;

  int64_t dim() const { return E.value().dim(0); }
  int64_t classes() const { return E.value().dim(1); }
  /// Column y as a plain vector.
  Tensor embedding(int64_t y) const;
  std::vector<Var> parameters() const;
};

EmbeddingTable init_embeddings_random(int64_t dim, int64_t classes, Rng& rng);

/// Copies the classifier head weight ([D, C], column y = class-y weight
/// vector) into the table. With freeze set the table is excluded from
/// training and must come out of a run bit-identical.
EmbeddingTable init_embeddings_extracted(const Tensor& head_weights, bool freeze = false);

/// Learnable map applied to every class embedding before superposition.
/// layer_count 0 is the identity (requires out_dim == in_dim); layers > 1
/// are separated by tanh.
struct DisentanglementMap {
  int64_t layer_count = 1;
  int64_t in_dim = 0, out_dim = 0;
  std::vector<Linear> layers;

  Var forward(const Var& x) const;  // [m, D] -> [m, d]
  std::vector<Var> parameters() const;
};

DisentanglementMap make_disentanglement_map(int64_t layer_count, int64_t in_dim, int64_t out_dim,
                                            Rng& rng);

struct SuperpositionSpec {
  int64_t k = 2;        // classes superposed per sample
  double p = 0.5;       // fraction of batches that superpose
  double sigma_z = 1.0; // latent noise stddev
  uint64_t seed = 0;

  void validate(int64_t num_classes) const;
};

/// One generator input batch: latent vectors plus their label condition.
/// vectors/soft_labels are snapshots; the differentiable path is rebuilt
/// from (soft_labels, noise) via latent_vectors().
struct LatentBatch {
  Tensor vectors;      // [batch, d]
  Tensor soft_labels;  // [batch, C], rows on the simplex
  Tensor noise;        // [batch, d]
  bool superposed = false;
};

/// softmax of k independent standard normal draws.
std::vector<double> sample_mixing_coefficients(int64_t k, Rng& rng);

/// z + sum_k lambda_k * M(E[:, class_k]) for one sample.
Tensor superpose(const EmbeddingTable& table, const DisentanglementMap& dm,
                 const std::vector<int64_t>& classes, const std::vector<double>& lambda,
                 const Tensor& z);

/// Soft label per the mixing coefficients: y'[class_k] = lambda_k.
Tensor soft_label(const std::vector<int64_t>& classes, const std::vector<double>& lambda,
                  int64_t num_classes);

/// Differentiable latent vectors for a whole batch:
///   L = Y * M(E^T) + Z
/// where Y is the soft-label matrix. Gradients flow into E (unless frozen)
/// and the map.
Var latent_vectors(const EmbeddingTable& table, const DisentanglementMap& dm,
                   const Tensor& soft_labels, const Tensor& noise);

/// Whole-batch draw. A per-batch Bernoulli(p) decides between a superposed
/// batch (per-sample class tuples and coefficients) and a regular batch
/// (one-hot labels, uniformly random classes).
LatentBatch draw_latent_batch(const SuperpositionSpec& spec, int64_t batch_size,
                              const EmbeddingTable& table, const DisentanglementMap& dm,
                              Rng& rng);

}  // namespace dfq::latent
