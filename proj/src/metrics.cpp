#include "dfq/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dfq::metrics {

namespace {

int64_t argmax_row(const Tensor& m, int64_t row) {
  int64_t best = 0;
  for (int64_t c = 1; c < m.dim(1); ++c)
    if (m.at(row, c) > m.at(row, best)) best = c;  // strict: ties keep lowest
  return best;
}

}  // namespace

FeatureExtraction extract_features(Classifier& fp, const Tensor& samples,
                                   const std::vector<int64_t>& labels, SourceTag tag) {
  if (samples.dim(0) != static_cast<int64_t>(labels.size()))
    throw std::invalid_argument("extract_features: samples/labels size mismatch");
  FeatureExtraction fx;
  fx.features = fp.features(Var(samples, false), Mode::Eval).value();
  fx.labels = labels;
  fx.tags.assign(labels.size(), tag);
  return fx;
}

double top1_accuracy(const Tensor& logits, const std::vector<int64_t>& labels) {
  if (logits.numel() == 0 || labels.empty())
    throw std::invalid_argument("top1_accuracy: empty dataset");
  if (logits.dim(0) != static_cast<int64_t>(labels.size()))
    throw std::invalid_argument("top1_accuracy: logits/labels size mismatch");
  int64_t correct = 0;
  for (int64_t r = 0; r < logits.dim(0); ++r)
    if (argmax_row(logits, r) == labels[static_cast<size_t>(r)]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(logits.dim(0));
}

double top1_accuracy(Classifier& model, const bench::Split& split) {
  Tensor logits = model.forward(Var(split.x, false), Mode::Eval).value();
  return top1_accuracy(logits, split.y);
}

double top1_accuracy(QuantizedClassifier& model, const bench::Split& split) {
  bool was_frozen = model.act_trackers.empty() || model.act_trackers[0].frozen();
  model.freeze_ranges();
  Tensor logits = model.forward(Var(split.x, false), Mode::Eval).value();
  if (!was_frozen) model.unfreeze_ranges();
  return top1_accuracy(logits, split.y);
}

double path_ratio(const Tensor& points) {
  if (points.rank() != 2 || points.dim(0) < 2)
    throw std::invalid_argument("path_ratio: need at least two points");
  const int64_t n = points.dim(0), f = points.dim(1);
  auto seg = [&](int64_t a, int64_t b) {
    double s = 0;
    for (int64_t c = 0; c < f; ++c) {
      double d = points.at(a, c) - points.at(b, c);
      s += d * d;
    }
    return std::sqrt(s);
  };
  double chord = seg(0, n - 1);
  if (chord < 1e-12)
    throw std::runtime_error("path_ratio: coincident endpoints, ratio undefined");
  double length = 0;
  for (int64_t i = 0; i + 1 < n; ++i) length += seg(i, i + 1);
  return length / chord;
}

double offpair_mass(const Tensor& logits, int64_t y1, int64_t y2) {
  Tensor probs = softmax_rows(logits);
  double total = 0;
  for (int64_t r = 0; r < probs.dim(0); ++r)
    for (int64_t c = 0; c < probs.dim(1); ++c)
      if (c != y1 && c != y2) total += probs.at(r, c);
  return total / static_cast<double>(probs.dim(0));
}

namespace {

void check_pair(const latent::EmbeddingTable& table, int64_t y1, int64_t y2) {
  if (y1 == y2) throw std::invalid_argument("pair diagnostics: identical classes");
  if (y1 < 0 || y2 < 0 || y1 >= table.classes() || y2 >= table.classes())
    throw std::invalid_argument("pair diagnostics: class out of range");
}

Tensor pair_soft_labels(int64_t steps, int64_t y1, int64_t y2, int64_t num_classes) {
  Tensor labels({steps, num_classes});
  for (int64_t i = 0; i < steps; ++i) {
    double lambda = static_cast<double>(i) / static_cast<double>(steps - 1);
    labels.at(i, y1) += lambda;
    labels.at(i, y2) += 1.0 - lambda;
  }
  return labels;
}

PairDiagnostics diagnostics_from_samples(const Tensor& samples, Classifier& fp, int64_t y1,
                                         int64_t y2) {
  Tensor feats = fp.features(Var(samples, false), Mode::Eval).value();
  Tensor logits = fp.head.forward(Var(feats, false)).value();
  PairDiagnostics d;
  d.y1 = y1;
  d.y2 = y2;
  d.path_features = feats;
  d.distance_ratio = path_ratio(feats);
  d.intrusion_score = offpair_mass(logits, y1, y2);
  return d;
}

}  // namespace

PairDiagnostics pair_path_diagnostics(gen::Generator& g, const latent::DisentanglementMap& dm,
                                      const latent::EmbeddingTable& table, Classifier& fp,
                                      int64_t y1, int64_t y2, int64_t steps) {
  check_pair(table, y1, y2);
  if (steps < 2) throw std::invalid_argument("pair_path_diagnostics: need >= 2 steps");

  Tensor labels = pair_soft_labels(steps, y1, y2, table.classes());
  Tensor noise = Tensor::zeros({steps, dm.out_dim});
  Var lat = latent::latent_vectors(table, dm, labels, noise);
  Tensor samples = g.forward(Var(lat.value(), false), labels, Mode::Eval).value();
  return diagnostics_from_samples(samples, fp, y1, y2);
}

PairDiagnostics mixup_path_diagnostics(gen::Generator& g, const latent::DisentanglementMap& dm,
                                       const latent::EmbeddingTable& table, Classifier& fp,
                                       int64_t y1, int64_t y2, int64_t steps) {
  check_pair(table, y1, y2);
  if (steps < 2) throw std::invalid_argument("mixup_path_diagnostics: need >= 2 steps");

  const int64_t C = table.classes();
  // Endpoint samples: regular generation of each class, no noise.
  Tensor onehot({2, C});
  onehot.at(0, y1) = 1.0;
  onehot.at(1, y2) = 1.0;
  Tensor noise = Tensor::zeros({2, dm.out_dim});
  Var lat = latent::latent_vectors(table, dm, onehot, noise);
  Tensor endpoints = g.forward(Var(lat.value(), false), onehot, Mode::Eval).value();

  Tensor labels = pair_soft_labels(steps, y1, y2, C);
  Tensor samples({steps, endpoints.dim(1)});
  for (int64_t i = 0; i < steps; ++i) {
    double lambda = labels.at(i, y1);
    for (int64_t c = 0; c < endpoints.dim(1); ++c)
      samples.at(i, c) = lambda * endpoints.at(0, c) + (1.0 - lambda) * endpoints.at(1, c);
  }
  return diagnostics_from_samples(samples, fp, y1, y2);
}

std::vector<int64_t> select_confusing_samples(Classifier& fp, const bench::Split& split,
                                              double threshold, int64_t per_class) {
  if (split.size() == 0) throw std::invalid_argument("select_confusing_samples: empty split");
  Tensor logits = fp.forward(Var(split.x, false), Mode::Eval).value();
  Tensor probs = softmax_rows(logits);
  std::vector<int64_t> per_class_count(static_cast<size_t>(logits.dim(1)), 0);
  std::vector<int64_t> selected;
  for (int64_t r = 0; r < probs.dim(0); ++r) {
    double top = 0;
    for (int64_t c = 0; c < probs.dim(1); ++c) top = std::max(top, probs.at(r, c));
    if (top >= threshold) continue;
    int64_t label = split.y[static_cast<size_t>(r)];
    if (per_class_count[static_cast<size_t>(label)] >= per_class) continue;
    ++per_class_count[static_cast<size_t>(label)];
    selected.push_back(r);
  }
  return selected;
}

PcaResult pca_project(const Tensor& features, int64_t dims) {
  if (features.rank() != 2) throw std::invalid_argument("pca_project: expected [N, F]");
  const int64_t n = features.dim(0), f = features.dim(1);
  if (n <= dims) throw std::invalid_argument("pca_project: need more samples than dims");
  if (dims < 1 || dims > f) throw std::invalid_argument("pca_project: bad dims");

  Eigen::MatrixXd x(n, f);
  for (int64_t r = 0; r < n; ++r)
    for (int64_t c = 0; c < f; ++c) x(r, c) = features.at(r, c);
  Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("pca_project: eigensolver failed");

  PcaResult out;
  out.eigenvalues.resize(static_cast<size_t>(f));
  // Eigen returns ascending eigenvalues; flip to descending.
  for (int64_t i = 0; i < f; ++i)
    out.eigenvalues[static_cast<size_t>(i)] = solver.eigenvalues()(f - 1 - i);

  double total = 0;
  for (double e : out.eigenvalues) total += std::max(e, 0.0);
  if (total <= 0 || out.eigenvalues[static_cast<size_t>(dims - 1)] <= 1e-12 * total)
    throw std::invalid_argument("pca_project: data rank below requested dims");

  out.components = Tensor({dims, f});
  for (int64_t d = 0; d < dims; ++d) {
    Eigen::VectorXd v = solver.eigenvectors().col(f - 1 - d);
    // Deterministic sign: first coordinate of meaningful magnitude positive.
    for (int64_t c = 0; c < f; ++c) {
      if (std::abs(v(c)) > 1e-12) {
        if (v(c) < 0) v = -v;
        break;
      }
    }
    for (int64_t c = 0; c < f; ++c) out.components.at(d, c) = v(c);
  }

  out.projected = Tensor({n, dims});
  for (int64_t r = 0; r < n; ++r)
    for (int64_t d = 0; d < dims; ++d) {
      double s = 0;
      for (int64_t c = 0; c < f; ++c) s += x(r, c) * out.components.at(d, c);
      out.projected.at(r, d) = s;
    }

  out.explained.resize(static_cast<size_t>(dims));
  for (int64_t d = 0; d < dims; ++d)
    out.explained[static_cast<size_t>(d)] =
        out.eigenvalues[static_cast<size_t>(d)] / total;
  return out;
}

gen::SyntheticBatch mixup_baseline(const gen::SyntheticBatch& a, const gen::SyntheticBatch& b,
                                   double lambda) {
  if (!a.samples.same_shape(b.samples) || !a.soft_labels.same_shape(b.soft_labels))
    throw std::invalid_argument("mixup_baseline: shape mismatch");
  gen::SyntheticBatch out;
  out.sample_shape = a.sample_shape;
  out.samples = Tensor(a.samples.shape());
  out.soft_labels = Tensor(a.soft_labels.shape());
  for (int64_t i = 0; i < out.samples.numel(); ++i)
    out.samples[i] = lambda * a.samples[i] + (1.0 - lambda) * b.samples[i];
  for (int64_t i = 0; i < out.soft_labels.numel(); ++i)
    out.soft_labels[i] = lambda * a.soft_labels[i] + (1.0 - lambda) * b.soft_labels[i];
  return out;
}

}  // namespace dfq::metrics
