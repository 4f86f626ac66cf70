#include "dfq/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dfq/rng.hpp"

namespace dfq::bench {

void ToyDatasetSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("ToyDatasetSpec: need at least 2 classes");
  if (train_per_class < 1 || eval_per_class < 1)
    throw std::invalid_argument("ToyDatasetSpec: empty split");
  if (sample_dim() < 2) throw std::invalid_argument("ToyDatasetSpec: degenerate sample shape");
  if (separation < 0) throw std::invalid_argument("ToyDatasetSpec: negative separation");
  if (hot_pixels < 0 || hot_pixels > sample_dim() / 2)
    throw std::invalid_argument("ToyDatasetSpec: hot_pixels out of range");
  if (hot_amplitude <= 0 || hot_amplitude > 1)
    throw std::invalid_argument("ToyDatasetSpec: hot_amplitude outside (0,1]");
}

namespace {

void fill_split(Split& split, const Tensor& dirs, const ToyDatasetSpec& spec, int64_t per_class,
                Rng& rng) {
  const int64_t dim = spec.sample_dim();
  const int64_t n = spec.num_classes * per_class;
  split.x = Tensor({n, dim});
  split.y.resize(static_cast<size_t>(n));
  int64_t row = 0;
  for (int64_t c = 0; c < spec.num_classes; ++c) {
    for (int64_t s = 0; s < per_class; ++s, ++row) {
      // Direction = separation * class_dir + standard normal; the sample is
      // that direction rescaled to the sphere radius and clipped per pixel.
      double norm_sq = 0;
      std::vector<double> v(static_cast<size_t>(dim));
      for (int64_t i = 0; i < dim; ++i) {
        v[static_cast<size_t>(i)] = spec.separation * dirs.at(c, i) + rng.normal();
        norm_sq += v[static_cast<size_t>(i)] * v[static_cast<size_t>(i)];
      }
      double scale = spec.radius / std::sqrt(std::max(norm_sq, 1e-12));
      for (int64_t i = 0; i < dim; ++i)
        split.x.at(row, i) = std::clamp(v[static_cast<size_t>(i)] * scale, -1.0, 1.0);
      // Nuisance positions: large random-sign values at fixed, evenly
      // spaced pixel indices.
      for (int64_t h = 0; h < spec.hot_pixels; ++h) {
        int64_t idx = (h * dim) / spec.hot_pixels;
        double amp = rng.uniform(0.85 * spec.hot_amplitude, spec.hot_amplitude);
        split.x.at(row, idx) = rng.uniform() < 0.5 ? -amp : amp;
      }
      split.y[static_cast<size_t>(row)] = c;
    }
  }
}

}  // namespace

ToyDataset make_toy_dataset(const ToyDatasetSpec& spec) {
  spec.validate();
  Rng master(spec.seed);
  Rng dir_rng = master.split(1);
  Rng train_rng = master.split(2);
  Rng eval_rng = master.split(3);

  const int64_t dim = spec.sample_dim();
  auto unit_vector = [&](std::vector<double>& v) {
    double norm_sq = 0;
    v.resize(static_cast<size_t>(dim));
    for (int64_t i = 0; i < dim; ++i) {
      v[static_cast<size_t>(i)] = dir_rng.normal();
      norm_sq += v[static_cast<size_t>(i)] * v[static_cast<size_t>(i)];
    }
    double inv = 1.0 / std::sqrt(std::max(norm_sq, 1e-12));
    for (double& x : v) x *= inv;
  };

  // Class mean directions in twin pairs: within the plane of a random base
  // direction and an orthogonalized partner, the two twins sit at
  // +/- twin_angle from the base. An odd trailing class gets its own base.
  Tensor dirs({spec.num_classes, dim});
  const double theta = spec.twin_angle_deg * 3.14159265358979323846 / 180.0;
  for (int64_t c = 0; c < spec.num_classes; c += 2) {
    std::vector<double> base, partner;
    unit_vector(base);
    unit_vector(partner);
    double dot = 0;
    for (int64_t i = 0; i < dim; ++i) dot += base[static_cast<size_t>(i)] * partner[static_cast<size_t>(i)];
    double norm_sq = 0;
    for (int64_t i = 0; i < dim; ++i) {
      partner[static_cast<size_t>(i)] -= dot * base[static_cast<size_t>(i)];
      norm_sq += partner[static_cast<size_t>(i)] * partner[static_cast<size_t>(i)];
    }
    double inv = 1.0 / std::sqrt(std::max(norm_sq, 1e-12));
    for (double& x : partner) x *= inv;

    for (int64_t i = 0; i < dim; ++i) {
      double a = base[static_cast<size_t>(i)], b = partner[static_cast<size_t>(i)];
      dirs.at(c, i) = std::cos(theta) * a + std::sin(theta) * b;
      if (c + 1 < spec.num_classes) dirs.at(c + 1, i) = std::cos(theta) * a - std::sin(theta) * b;
    }
  }

  Split train, eval;
  fill_split(train, dirs, spec, spec.train_per_class, train_rng);
  fill_split(eval, dirs, spec, spec.eval_per_class, eval_rng);

  // Centroids in sample space for diagnostics: the clipped, rescaled class
  // directions themselves.
  Tensor centroids({spec.num_classes, dim});
  for (int64_t c = 0; c < spec.num_classes; ++c)
    for (int64_t i = 0; i < dim; ++i)
      centroids.at(c, i) = std::clamp(dirs.at(c, i) * spec.radius, -1.0, 1.0);

  return ToyDataset(spec, std::move(train), std::move(eval), std::move(centroids));
}

}  // namespace dfq::bench
