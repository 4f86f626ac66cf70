#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dfq/dataset.hpp"
#include "dfq/generator.hpp"
#include "dfq/latent.hpp"
#include "dfq/nn.hpp"

namespace dfq::metrics {

/// Features of a sample set taken before the classifier's final fully
/// connected layer, with provenance tags for plotting.
enum class SourceTag { Real, SyntheticRegular, SyntheticSuperposed };

struct FeatureExtraction {
  Tensor features;              // [N, F]
  std::vector<int64_t> labels;  // dominant class per row
  std::vector<SourceTag> tags;
};

/// Path diagnostics for one class pair: ratio of the piecewise feature-path
/// length to the endpoint distance, and the off-pair probability mass
/// averaged along the path.
struct PairDiagnostics {
  int64_t y1 = 0, y2 = 0;
  double distance_ratio = 1.0;
  double intrusion_score = 0.0;
  Tensor path_features;  // [steps, F]
};

/// Teacher features of a sample set, tagged with provenance.
FeatureExtraction extract_features(Classifier& fp, const Tensor& samples,
                                   const std::vector<int64_t>& labels, SourceTag tag);

/// Fraction of argmax-correct predictions; argmax ties break toward the
/// lowest class index.
double top1_accuracy(const Tensor& logits, const std::vector<int64_t>& labels);
double top1_accuracy(Classifier& model, const bench::Split& split);
double top1_accuracy(QuantizedClassifier& model, const bench::Split& split);

/// Piecewise path length of consecutive rows divided by the straight-line
/// distance between the first and last row. Throws when the endpoints
/// coincide.
double path_ratio(const Tensor& points);

/// Mean over rows of the probability mass outside {y1, y2} after a
/// row-wise softmax of the given logits.
double offpair_mass(const Tensor& logits, int64_t y1, int64_t y2);

/// Sweeps the mixing coefficient from 0 to 1 across `steps` points with no
/// latent noise, generating a sample per point and reading the teacher's
/// features and logits.
PairDiagnostics pair_path_diagnostics(gen::Generator& g, const latent::DisentanglementMap& dm,
                                      const latent::EmbeddingTable& table, Classifier& fp,
                                      int64_t y1, int64_t y2, int64_t steps = 101);

/// Same sweep, but mixing the two endpoint samples in sample space
/// (the naive baseline for comparison).
PairDiagnostics mixup_path_diagnostics(gen::Generator& g, const latent::DisentanglementMap& dm,
                                       const latent::EmbeddingTable& table, Classifier& fp,
                                       int64_t y1, int64_t y2, int64_t steps = 101);

/// Indices of samples whose top softmax confidence falls below the
/// threshold, capped at per_class per class. Needs labeled real data, so it
/// sits outside the data-free training path.
std::vector<int64_t> select_confusing_samples(Classifier& fp, const bench::Split& split,
                                              double threshold = 0.25, int64_t per_class = 15);

struct PcaResult {
  Tensor projected;                 // [N, dims]
  Tensor components;                // [dims, F], rows are principal directions
  std::vector<double> eigenvalues;  // descending, all F of them
  std::vector<double> explained;    // eigenvalue shares of the kept dims
};

/// Centered projection onto the top principal directions. Components use a
/// deterministic sign (first nonzero coordinate positive). Throws when the
/// data rank is below dims.
PcaResult pca_project(const Tensor& features, int64_t dims = 2);

/// x = lambda*x1 + (1-lambda)*x2 and the same mix for labels.
gen::SyntheticBatch mixup_baseline(const gen::SyntheticBatch& a, const gen::SyntheticBatch& b,
                                   double lambda);

}  // namespace dfq::metrics
