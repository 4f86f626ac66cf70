#include "dfq/latent.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace dfq::latent {

Tensor EmbeddingTable::embedding(int64_t y) const {
  if (y < 0 || y >= classes()) throw std::invalid_argument("EmbeddingTable: class out of range");
  Tensor col({dim()});
  for (int64_t i = 0; i < dim(); ++i) col[i] = E.value().at(i, y);
  return col;
}

std::vector<Var> EmbeddingTable::parameters() const {
  if (!trainable || frozen) return {};
  return {E};
}

EmbeddingTable init_embeddings_random(int64_t dim, int64_t classes, Rng& rng) {
  EmbeddingTable t;
  t.E = Var(rng.randn({dim, classes}), true);
  return t;
}

EmbeddingTable init_embeddings_extracted(const Tensor& head_weights, bool freeze) {
  if (head_weights.rank() != 2)
    throw std::invalid_argument("init_embeddings_extracted: expected [D, C] weight matrix");
  for (int64_t i = 0; i < head_weights.numel(); ++i)
    if (!std::isfinite(head_weights[i]))
      throw std::invalid_argument("init_embeddings_extracted: non-finite head weight");
  EmbeddingTable t;
  t.frozen = freeze;
  t.E = Var(head_weights, /*requires_grad=*/!freeze);
  return t;
}

Var DisentanglementMap::forward(const Var& x) const {
  if (x.value().dim(1) != in_dim)
    throw std::invalid_argument("DisentanglementMap: input dim mismatch");
  if (layer_count == 0) return x;  // identity
  Var h = layers[0].forward(x);
  for (size_t i = 1; i < layers.size(); ++i) h = layers[i].forward(vtanh(h));
  return h;
}

std::vector<Var> DisentanglementMap::parameters() const {
  std::vector<Var> out;
  for (const auto& l : layers) {
    out.push_back(l.W);
    out.push_back(l.b);
  }
  return out;
}

DisentanglementMap make_disentanglement_map(int64_t layer_count, int64_t in_dim, int64_t out_dim,
                                            Rng& rng) {
  if (layer_count < 0) throw std::invalid_argument("DisentanglementMap: negative layer count");
  if (layer_count == 0 && in_dim != out_dim)
    throw std::invalid_argument("DisentanglementMap: identity map requires matching dims");
  DisentanglementMap dm;
  dm.layer_count = layer_count;
  dm.in_dim = in_dim;
  dm.out_dim = layer_count == 0 ? in_dim : out_dim;
  int64_t d = in_dim;
  for (int64_t i = 0; i < layer_count; ++i) {
    dm.layers.emplace_back(d, out_dim, rng);
    d = out_dim;
  }
  return dm;
}

void SuperpositionSpec::validate(int64_t num_classes) const {
  if (k < 1) throw std::invalid_argument("SuperpositionSpec: k must be >= 1");
  if (k > num_classes) throw std::invalid_argument("SuperpositionSpec: k exceeds class count");
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("SuperpositionSpec: p outside [0,1]");
  if (!(sigma_z > 0.0)) throw std::invalid_argument("SuperpositionSpec: sigma_z must be > 0");
}

std::vector<double> sample_mixing_coefficients(int64_t k, Rng& rng) {
  if (k < 1) throw std::invalid_argument("sample_mixing_coefficients: k must be >= 1");
  std::vector<double> p(static_cast<size_t>(k));
  for (double& v : p) v = rng.normal();
  double mx = p[0];
  for (double v : p) mx = std::max(mx, v);
  double z = 0;
  for (double v : p) z += std::exp(v - mx);
  std::vector<double> lambda(static_cast<size_t>(k));
  for (size_t i = 0; i < lambda.size(); ++i) lambda[i] = std::exp(p[i] - mx) / z;
  return lambda;
}

Tensor soft_label(const std::vector<int64_t>& classes, const std::vector<double>& lambda,
                  int64_t num_classes) {
  if (classes.size() != lambda.size())
    throw std::invalid_argument("soft_label: classes/lambda size mismatch");
  Tensor y({num_classes});
  for (size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] < 0 || classes[i] >= num_classes)
      throw std::invalid_argument("soft_label: class out of range");
    y[classes[i]] += lambda[i];
  }
  return y;
}

Tensor superpose(const EmbeddingTable& table, const DisentanglementMap& dm,
                 const std::vector<int64_t>& classes, const std::vector<double>& lambda,
                 const Tensor& z) {
  if (classes.size() != lambda.size())
    throw std::invalid_argument("superpose: classes/lambda size mismatch");
  std::set<int64_t> uniq(classes.begin(), classes.end());
  if (uniq.size() != classes.size())
    throw std::invalid_argument("superpose: duplicate class indices");
  if (z.numel() != dm.out_dim)
    throw std::invalid_argument("superpose: noise dim does not match map output dim");

  Tensor y = soft_label(classes, lambda, table.classes());
  Var lat = latent_vectors(table, dm, y.reshaped({1, table.classes()}),
                           z.reshaped({1, dm.out_dim}));
  return lat.value().reshaped({dm.out_dim});
}

Var latent_vectors(const EmbeddingTable& table, const DisentanglementMap& dm,
                   const Tensor& soft_labels, const Tensor& noise) {
  if (soft_labels.dim(1) != table.classes())
    throw std::invalid_argument("latent_vectors: label width != class count");
  if (dm.in_dim != table.dim())
    throw std::invalid_argument("latent_vectors: map input dim != embedding dim");
  // Map every class embedding, then mix: rows of M(E^T) are m_y.
  Var mapped = dm.forward(transpose(table.E));          // [C, d]
  Var mixed = matmul(Var(soft_labels, false), mapped);  // [batch, d]
  return add_const(mixed, noise);
}

LatentBatch draw_latent_batch(const SuperpositionSpec& spec, int64_t batch_size,
                              const EmbeddingTable& table, const DisentanglementMap& dm,
                              Rng& rng) {
  spec.validate(table.classes());
  if (batch_size < 1) throw std::invalid_argument("draw_latent_batch: empty batch");

  const int64_t C = table.classes();
  const int64_t d = dm.out_dim;
  LatentBatch batch;
  batch.superposed = rng.uniform() < spec.p;
  batch.soft_labels = Tensor({batch_size, C});
  batch.noise = Tensor({batch_size, d});

  for (int64_t r = 0; r < batch_size; ++r) {
    if (batch.superposed) {
      std::vector<int64_t> classes = rng.choice_without_replacement(C, spec.k);
      std::vector<double> lambda = sample_mixing_coefficients(spec.k, rng);
      for (size_t i = 0; i < classes.size(); ++i)
        batch.soft_labels.at(r, classes[i]) = lambda[i];
    } else {
      batch.soft_labels.at(r, rng.uniform_int(0, C - 1)) = 1.0;
    }
    for (int64_t c = 0; c < d; ++c) batch.noise.at(r, c) = rng.normal(0.0, spec.sigma_z);
  }

  batch.vectors = latent_vectors(table, dm, batch.soft_labels, batch.noise).value();
  return batch;
}

}  // namespace dfq::latent
