#include "dfq/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dfq/ioutil.hpp"
#include "dfq/metrics.hpp"

namespace dfq::bench {

PretrainResult pretrain_reference_model(const ToyDataset& data, const PretrainOptions& options) {
  const Split& train = data.train();
  const int64_t n = train.size();
  const int64_t dim = data.spec().sample_dim();
  const int64_t C = data.spec().num_classes;

  Rng rng(options.seed);
  Rng init_rng = rng.split(1);
  Rng shuffle_rng = rng.split(2);

  ClassifierConfig cfg;
  cfg.in_dim = dim;
  cfg.hidden = options.hidden;
  cfg.num_classes = C;
  PretrainResult result;
  result.model = Classifier(cfg, init_rng);

  Adam opt(result.model.parameters(), options.lr);

  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int64_t e = 0; e < options.epochs; ++e) {
    // Fisher-Yates with the run's rng keeps epochs reproducible.
    for (int64_t i = n - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)],
                order[static_cast<size_t>(shuffle_rng.uniform_int(0, i))]);

    double epoch_loss = 0;
    int64_t batches = 0;
    for (int64_t start = 0; start < n; start += options.batch_size) {
      int64_t b = std::min(options.batch_size, n - start);
      Tensor x({b, dim});
      Tensor y({b, C});
      for (int64_t r = 0; r < b; ++r) {
        int64_t src = order[static_cast<size_t>(start + r)];
        for (int64_t c = 0; c < dim; ++c) x.at(r, c) = train.x.at(src, c);
        y.at(r, train.y[static_cast<size_t>(src)]) = 1.0;
      }
      Var logits = result.model.forward(Var(x, false), Mode::Train);
      Var loss = soft_cross_entropy(logits, y);
      opt.zero_grad();
      backward(loss);
      opt.step();
      epoch_loss += loss.value()[0];
      ++batches;
    }
    epoch_loss /= static_cast<double>(std::max<int64_t>(batches, 1));
    result.epoch_loss.push_back(epoch_loss);
    if (!std::isfinite(epoch_loss)) {
      std::string hist;
      for (double l : result.epoch_loss) hist += fmt_double(l) + " ";
      throw std::runtime_error("pretrain diverged at epoch " + std::to_string(e) +
                               "; loss history: " + hist);
    }
  }

  result.eval_accuracy = metrics::top1_accuracy(result.model, data.eval());
  return result;
}

}  // namespace dfq::bench
