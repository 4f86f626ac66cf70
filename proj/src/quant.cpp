#include "dfq/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dfq::quant {

namespace {

/// Stride of the channel axis and number of channels for an arbitrary-rank
/// tensor; channel of element i is (i / stride) % channels.
struct AxisInfo {
  int64_t channels;
  int64_t stride;
};

AxisInfo axis_info(const Tensor& t, int64_t channel_axis) {
  if (channel_axis == kPerTensor) return {1, t.numel()};
  if (channel_axis < 0 || channel_axis >= t.rank())
    throw std::invalid_argument("quant: channel_axis out of range for " + t.shape_str());
  int64_t stride = 1;
  for (int64_t i = channel_axis + 1; i < t.rank(); ++i) stride *= t.dim(i);
  return {t.dim(channel_axis), stride};
}

int64_t channel_of(int64_t linear_index, const AxisInfo& ax) {
  return (linear_index / ax.stride) % ax.channels;
}

}  // namespace

bool QuantParams::any_degenerate() const {
  for (uint8_t d : degenerate)
    if (d) return true;
  return false;
}

void QuantParams::validate() const {
  if (n_bits < 2 || n_bits > 16)
    throw std::invalid_argument("QuantParams: n_bits must be in [2,16]");
  if (theta_min.size() != theta_max.size() || theta_min.empty())
    throw std::invalid_argument("QuantParams: empty or mismatched range vectors");
  for (size_t i = 0; i < theta_min.size(); ++i)
    if (!(theta_min[i] <= theta_max[i]))
      throw std::invalid_argument("QuantParams: theta_min > theta_max in channel " +
                                  std::to_string(i));
}

double round_half_even(double x) {
  double fl = std::floor(x);
  double frac = x - fl;
  if (frac > 0.5) return fl + 1.0;
  if (frac < 0.5) return fl;
  // Exactly halfway: pick the even neighbor.
  return std::fmod(fl, 2.0) == 0.0 ? fl : fl + 1.0;
}

QuantParams calibrate_ranges(const Tensor& t, int64_t n_bits, int64_t channel_axis) {
  if (t.numel() == 0) throw std::invalid_argument("calibrate_ranges: empty tensor");
  AxisInfo ax = axis_info(t, channel_axis);
  QuantParams p;
  p.n_bits = n_bits;
  p.channel_axis = channel_axis;
  p.theta_min.assign(static_cast<size_t>(ax.channels), std::numeric_limits<double>::infinity());
  p.theta_max.assign(static_cast<size_t>(ax.channels), -std::numeric_limits<double>::infinity());
  for (int64_t i = 0; i < t.numel(); ++i) {
    size_t c = static_cast<size_t>(channel_of(i, ax));
    p.theta_min[c] = std::min(p.theta_min[c], t[i]);
    p.theta_max[c] = std::max(p.theta_max[c], t[i]);
  }
  p.degenerate.resize(static_cast<size_t>(ax.channels));
  for (size_t c = 0; c < p.degenerate.size(); ++c)
    p.degenerate[c] = p.theta_min[c] == p.theta_max[c] ? 1 : 0;
  p.validate();
  return p;
}

QuantizedTensor quantize(const Tensor& t, const QuantParams& params, bool allow_degenerate) {
  params.validate();
  if (params.any_degenerate() && !allow_degenerate)
    throw std::invalid_argument("quantize: degenerate channel (min == max) without fallback");
  AxisInfo ax = axis_info(t, params.channel_axis);
  if (ax.channels != params.channels())
    throw std::invalid_argument("quantize: params channel count does not match tensor");

  QuantizedTensor q;
  q.shape = t.shape();
  q.params = params;
  q.codes.resize(static_cast<size_t>(t.numel()));
  const double qmin = static_cast<double>(params.code_min());
  const double qmax = static_cast<double>(params.code_max());
  const double half_levels = std::pow(2.0, static_cast<double>(params.n_bits - 1));
  for (int64_t i = 0; i < t.numel(); ++i) {
    int64_t c = channel_of(i, ax);
    if (params.degenerate[static_cast<size_t>(c)]) {
      q.codes[static_cast<size_t>(i)] = static_cast<int32_t>(params.code_min());
      continue;
    }
    double interval = params.interval(c);
    double code = round_half_even((t[i] - params.theta_min[static_cast<size_t>(c)]) / interval -
                                  half_levels);
    code = std::clamp(code, qmin, qmax);
    q.codes[static_cast<size_t>(i)] = static_cast<int32_t>(code);
  }
  return q;
}

Tensor dequantize(const QuantizedTensor& q) {
  q.params.validate();
  Tensor out(q.shape);
  AxisInfo ax = axis_info(out, q.params.channel_axis);
  const double half_levels = std::pow(2.0, static_cast<double>(q.params.n_bits - 1));
  for (int64_t i = 0; i < out.numel(); ++i) {
    int64_t c = channel_of(i, ax);
    size_t cs = static_cast<size_t>(c);
    if (q.params.degenerate[cs]) {
      out[i] = q.params.theta_min[cs];
      continue;
    }
    out[i] = (static_cast<double>(q.codes[static_cast<size_t>(i)]) + half_levels) *
                 q.params.interval(c) +
             q.params.theta_min[cs];
  }
  return out;
}

Tensor fake_quant(const Tensor& t, int64_t n_bits, int64_t channel_axis) {
  return fake_quant(t, calibrate_ranges(t, n_bits, channel_axis));
}

Tensor fake_quant(const Tensor& t, const QuantParams& params) {
  return dequantize(quantize(t, params, /*allow_degenerate=*/true));
}

namespace {

Var fake_quant_node(const Var& x, const QuantParams& params) {
  Tensor value = fake_quant(x.value(), params);
  bool rg = x.requires_grad();
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->parents = {x.node()};
  node->requires_grad = rg;
  if (rg) {
    auto xn = x.node();
    QuantParams p = params;
    node->backward_fn = [xn, p](const Tensor& up) {
      // Straight-through: pass the gradient where the input rounds into the
      // code range without clamping, zero elsewhere.
      Tensor g(up.shape());
      AxisInfo ax = axis_info(xn->value, p.channel_axis);
      for (int64_t i = 0; i < g.numel(); ++i) {
        size_t c = static_cast<size_t>(channel_of(i, ax));
        double v = xn->value[i];
        double half = p.degenerate[c] ? 0.0 : 0.5 * p.interval(static_cast<int64_t>(c));
        bool inside = v >= p.theta_min[c] - half && v <= p.theta_max[c] + half;
        g[i] = inside ? up[i] : 0.0;
      }
      xn->accum_grad(g);
    };
  }
  return Var::from_node(node);
}

}  // namespace

Var fake_quant_ste(const Var& x, const QuantParams& params) {
  return fake_quant_node(x, params);
}

Var fake_quant_ste(const Var& x, int64_t n_bits, int64_t channel_axis) {
  return fake_quant_node(x, calibrate_ranges(x.value(), n_bits, channel_axis));
}

void RangeTracker::observe(const Tensor& t) {
  if (frozen_) return;
  if (t.numel() == 0) throw std::invalid_argument("RangeTracker: empty tensor");
  double mn = t[0], mx = t[0];
  for (int64_t i = 1; i < t.numel(); ++i) {
    mn = std::min(mn, t[i]);
    mx = std::max(mx, t[i]);
  }
  if (!initialized_) {
    min_ = mn;
    max_ = mx;
    initialized_ = true;
  } else {
    min_ = decay_ * min_ + (1.0 - decay_) * mn;
    max_ = decay_ * max_ + (1.0 - decay_) * mx;
  }
}

void RangeTracker::restore(double mn, double mx) {
  min_ = mn;
  max_ = mx;
  initialized_ = true;
}

QuantParams RangeTracker::params(int64_t n_bits) const {
  if (!initialized_) throw std::runtime_error("RangeTracker: no observations yet");
  QuantParams p;
  p.n_bits = n_bits;
  p.channel_axis = kPerTensor;
  p.theta_min = {min_};
  p.theta_max = {max_};
  p.degenerate = {min_ == max_ ? uint8_t{1} : uint8_t{0}};
  return p;
}

}  // namespace dfq::quant
