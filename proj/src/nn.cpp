#include "dfq/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace dfq {

namespace {

// Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor init_weight(int64_t in, int64_t out, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  return rng.rand_uniform({in, out}, -bound, bound);
}

}  // namespace

Linear::Linear(int64_t in, int64_t out, Rng& rng)
    : W(init_weight(in, out, rng), true),
      b(rng.rand_uniform({out}, -1.0 / std::sqrt(static_cast<double>(in)),
                         1.0 / std::sqrt(static_cast<double>(in))),
        true) {}

Var Linear::forward(const Var& x) const { return add_rowvec(matmul(x, W), b); }

Linear Linear::clone() const {
  Linear c;
  c.W = Var(W.value(), W.requires_grad());
  c.b = Var(b.value(), b.requires_grad());
  return c;
}

BatchNorm::BatchNorm(int64_t features)
    : gamma(Tensor::full({features}, 1.0), true),
      beta(Tensor::zeros({features}), true),
      running_mean(Tensor::zeros({features})),
      running_var(Tensor::full({features}, 1.0)) {}

BatchNorm BatchNorm::clone() const {
  BatchNorm c;
  c.gamma = Var(gamma.value(), gamma.requires_grad());
  c.beta = Var(beta.value(), beta.requires_grad());
  c.running_mean = running_mean;
  c.running_var = running_var;
  c.momentum = momentum;
  c.eps = eps;
  c.freeze_stats = freeze_stats;
  return c;
}

Var BatchNorm::forward(const Var& x, Mode mode, BatchStats* capture) {
  if (x.value().dim(1) != features())
    throw std::invalid_argument("BatchNorm: feature dim mismatch");

  if (capture != nullptr) {
    capture->mean = col_mean(x);
    capture->var = col_var(x);
  }

  Var mean_v, var_v;
  if (mode == Mode::Train && capture == nullptr && !freeze_stats) {
    mean_v = col_mean(x);
    var_v = col_var(x);
    // Running stats track detached batch stats.
    for (int64_t i = 0; i < features(); ++i) {
      running_mean[i] = (1.0 - momentum) * running_mean[i] + momentum * mean_v.value()[i];
      running_var[i] = (1.0 - momentum) * running_var[i] + momentum * var_v.value()[i];
    }
  } else {
    mean_v = Var(running_mean, false);
    var_v = Var(running_var, false);
  }

  Var xhat = mul_rowvec(sub_rowvec(x, mean_v), rsqrt_eps(var_v, eps));
  return add_rowvec(mul_rowvec(xhat, gamma), beta);
}

Classifier::Classifier(ClassifierConfig cfg_in, Rng& rng) : cfg(std::move(cfg_in)) {
  int64_t d = cfg.in_dim;
  for (int64_t h : cfg.hidden) {
    fc.emplace_back(d, h, rng);
    bn.emplace_back(h);
    d = h;
  }
  head = Linear(d, cfg.num_classes, rng);
}

Classifier Classifier::clone() const {
  Classifier c;
  c.cfg = cfg;
  for (const auto& l : fc) c.fc.push_back(l.clone());
  for (const auto& n : bn) c.bn.push_back(n.clone());
  c.head = head.clone();
  return c;
}

Var Classifier::features(const Var& x, Mode mode, std::vector<BatchStats>* capture) {
  if (capture) capture->resize(bn.size());
  Var h = x;
  for (size_t i = 0; i < fc.size(); ++i) {
    h = fc[i].forward(h);
    h = bn[i].forward(h, mode, capture ? &(*capture)[i] : nullptr);
    h = relu(h);
  }
  return h;
}

Var Classifier::forward(const Var& x, Mode mode, std::vector<BatchStats>* capture) {
  return head.forward(features(x, mode, capture));
}

std::vector<Var> Classifier::parameters() {
  std::vector<Var> out;
  for (auto& l : fc) {
    out.push_back(l.W);
    out.push_back(l.b);
  }
  for (auto& n : bn) {
    out.push_back(n.gamma);
    out.push_back(n.beta);
  }
  out.push_back(head.W);
  out.push_back(head.b);
  return out;
}

void Classifier::set_requires_grad(bool rg) {
  for (Var& p : parameters()) p.node()->requires_grad = rg;
}

uint64_t Classifier::state_checksum() const {
  uint64_t h = 1469598103934665603ull;
  auto fold = [&h](const Tensor& t) {
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(t.data());
    size_t n = static_cast<size_t>(t.numel()) * sizeof(double);
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& l : fc) {
    fold(l.W.value());
    fold(l.b.value());
  }
  for (const auto& n : bn) {
    fold(n.gamma.value());
    fold(n.beta.value());
    fold(n.running_mean);
    fold(n.running_var);
  }
  fold(head.W.value());
  fold(head.b.value());
  return h;
}

QuantizedClassifier::QuantizedClassifier(Classifier base, int64_t wb, int64_t ab)
    : net(std::move(base)), weight_bits(wb), act_bits(ab) {
  act_trackers.assign(net.fc.size() + 1, quant::RangeTracker(0.9));
  for (auto& layer : net.bn) layer.freeze_stats = true;
}

Var QuantizedClassifier::forward(const Var& x, Mode mode) {
  Var h = x;
  size_t site = 0;
  // The raw input is given data, not an activation; quantization starts
  // with the first layer's weights and the internal feature maps.
  auto quantized_linear = [&](const Linear& l, const Var& input, bool quantize_input) {
    quant::RangeTracker& tracker = act_trackers[site++];
    Var xq = input;
    if (quantize_input) {
      if (mode == Mode::Train) tracker.observe(input.value());
      if (tracker.initialized()) xq = quant::fake_quant_ste(input, tracker.params(act_bits));
    }
    // Output-channel axis of a [in, out] weight is axis 1.
    Var wq = quant::fake_quant_ste(l.W, weight_bits, 1);
    return add_rowvec(matmul(xq, wq), l.b);
  };
  for (size_t i = 0; i < net.fc.size(); ++i) {
    h = quantized_linear(net.fc[i], h, i > 0);
    h = net.bn[i].forward(h, mode);
    h = relu(h);
  }
  return quantized_linear(net.head, h, true);
}

void QuantizedClassifier::freeze_ranges() {
  for (auto& t : act_trackers) t.freeze();
}

void QuantizedClassifier::unfreeze_ranges() {
  for (auto& t : act_trackers) t.unfreeze();
}

Adam::Adam(std::vector<Var> params, double lr_in) : lr(lr_in), params_(std::move(params)) {
  for (const Var& p : params_) {
    m_.push_back(Tensor::zeros(p.value().shape()));
    v_.push_back(Tensor::zeros(p.value().shape()));
  }
}

void Adam::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i];
    if (!p.has_grad()) continue;
    const Tensor& g = p.grad();
    for (int64_t j = 0; j < p.value().numel(); ++j) {
      m_[i][j] = beta1 * m_[i][j] + (1.0 - beta1) * g[j];
      v_[i][j] = beta2 * v_[i][j] + (1.0 - beta2) * g[j] * g[j];
      double mhat = m_[i][j] / bc1;
      double vhat = v_[i][j] / bc2;
      p.value()[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

void Adam::zero_grad() {
  for (Var& p : params_) p.zero_grad();
}

SgdMomentum::SgdMomentum(std::vector<Var> params, double lr_in, double momentum_in,
                         double weight_decay_in, bool nesterov_in)
    : lr(lr_in),
      momentum(momentum_in),
      weight_decay(weight_decay_in),
      nesterov(nesterov_in),
      params_(std::move(params)) {
  for (const Var& p : params_) vel_.push_back(Tensor::zeros(p.value().shape()));
}

void SgdMomentum::step() {
  for (size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i];
    if (!p.has_grad()) continue;
    const Tensor& g = p.grad();
    for (int64_t j = 0; j < p.value().numel(); ++j) {
      double gj = g[j] + weight_decay * p.value()[j];
      vel_[i][j] = momentum * vel_[i][j] + gj;
      double update = nesterov ? gj + momentum * vel_[i][j] : vel_[i][j];
      p.value()[j] -= lr * update;
    }
  }
}

void SgdMomentum::zero_grad() {
  for (Var& p : params_) p.zero_grad();
}

}  // namespace dfq
