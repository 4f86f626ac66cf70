#pragma once

#include <cstdint>
#include <vector>

#include "dfq/tensor.hpp"

namespace dfq::bench {

/// Desk-scale stand-in for a real image dataset: C clusters of
/// image-shaped samples on a common sphere, angular spread controlled by
/// `separation` (0 means indistinguishable classes). Classes come in twin
/// pairs whose mean directions differ by 2*twin_angle_deg, so the fine
/// inter-twin boundaries carry most of the classification difficulty.
struct ToyDatasetSpec {
  int64_t num_classes = 10;
  int64_t train_per_class = 200;
  int64_t eval_per_class = 100;
  int64_t channels = 1;
  int64_t height = 8;
  int64_t width = 8;
  double separation = 4.0;
  double twin_angle_deg = 90.0;  // 90 = independent directions (no pairing)
  double radius = 0.5;           // sample norm before per-pixel clipping
  // Fixed nuisance positions overwritten with large +/- values. They pin
  // the activation range the way outlier channels do in real networks; the
  // class signal stays at low amplitude.
  int64_t hot_pixels = 8;
  double hot_amplitude = 1.0;
  uint64_t seed = 7;

  int64_t sample_dim() const { return channels * height * width; }
  void validate() const;
};

/// Labeled split. Samples are flattened rows in [-1, 1].
struct Split {
  Tensor x;                    // [N, dim]
  std::vector<int64_t> y;      // [N]
  int64_t size() const { return x.numel() == 0 ? 0 : x.dim(0); }
};

/// Train/eval pair with an access counter on the training split. The
/// counter backs the data-free guard: distillation must never read
/// training samples, and the trainer fails hard if the count moves.
class ToyDataset {
public:
  ToyDataset() = default;
  ToyDataset(ToyDatasetSpec spec, Split train, Split eval, Tensor centroids)
      : spec_(spec), train_(std::move(train)), eval_(std::move(eval)),
        centroids_(std::move(centroids)) {}

  const ToyDatasetSpec& spec() const { return spec_; }

  const Split& train() const {
    ++train_reads_;
    return train_;
  }
  const Split& eval() const { return eval_; }

  /// Per-class mean directions used to synthesize the clusters ([C, dim]).
  const Tensor& centroids() const { return centroids_; }

  int64_t train_reads() const { return train_reads_; }

private:
  ToyDatasetSpec spec_;
  Split train_;
  Split eval_;
  Tensor centroids_;
  mutable int64_t train_reads_ = 0;
};

ToyDataset make_toy_dataset(const ToyDatasetSpec& spec);

}  // namespace dfq::bench
