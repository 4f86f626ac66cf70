#pragma once

#include <cstdint>
#include <vector>

#include "dfq/autodiff.hpp"
#include "dfq/tensor.hpp"

namespace dfq::quant {

/// channel_axis value meaning "one range for the whole tensor".
inline constexpr int64_t kPerTensor = -1;

/// n-bit linear quantization state: per-channel [theta_min, theta_max]
/// ranges plus the bit width. interval(n) = (max - min) / (2^n - 1).
struct QuantParams {
  int64_t n_bits = 8;
  int64_t channel_axis = kPerTensor;  // kPerTensor or axis index
  std::vector<double> theta_min;      // one entry per channel (size 1 for per-tensor)
  std::vector<double> theta_max;
  std::vector<uint8_t> degenerate;    // min == max flags

  int64_t channels() const { return static_cast<int64_t>(theta_min.size()); }
  double interval(int64_t channel) const {
    return (theta_max[static_cast<size_t>(channel)] - theta_min[static_cast<size_t>(channel)]) /
           static_cast<double>((int64_t{1} << n_bits) - 1);
  }
  int64_t code_min() const { return -(int64_t{1} << (n_bits - 1)); }
  int64_t code_max() const { return (int64_t{1} << (n_bits - 1)) - 1; }
  bool any_degenerate() const;
  void validate() const;
};

struct QuantizedTensor {
  std::vector<int32_t> codes;
  std::vector<int64_t> shape;
  QuantParams params;
};

/// Round-to-nearest with ties to even, independent of the FP environment.
double round_half_even(double x);

/// Per-channel extrema of a non-empty tensor. Channels with min == max are
/// flagged degenerate (interval 0).
QuantParams calibrate_ranges(const Tensor& t, int64_t n_bits, int64_t channel_axis);

/// code = round((theta - theta_min)/interval - 2^(n-1)), clamped to the
/// signed n-bit code range. Degenerate channels are rejected unless
/// allow_degenerate is set (their codes collapse to code_min).
QuantizedTensor quantize(const Tensor& t, const QuantParams& params,
                         bool allow_degenerate = false);

/// theta_hat = (code + 2^(n-1)) * interval + theta_min; degenerate channels
/// dequantize to theta_min.
Tensor dequantize(const QuantizedTensor& q);

/// dequantize(quantize(t)) with freshly calibrated ranges.
Tensor fake_quant(const Tensor& t, int64_t n_bits, int64_t channel_axis);

/// Same, but with caller-supplied ranges (EMA-tracked activations).
Tensor fake_quant(const Tensor& t, const QuantParams& params);

/// Autodiff fake-quant with a straight-through gradient: identity inside
/// the representable range (plus half an interval of slack), zero outside.
Var fake_quant_ste(const Var& x, const QuantParams& params);

/// Self-calibrating variant (weights: ranges recomputed from the current
/// values every call).
Var fake_quant_ste(const Var& x, int64_t n_bits, int64_t channel_axis);

/// Exponential-moving-average range tracker for activation tensors
/// (per-tensor). Batch extrema are folded in with the given decay while
/// training; freeze() pins the range for evaluation.
class RangeTracker {
public:
  explicit RangeTracker(double decay = 0.9) : decay_(decay) {}

  void observe(const Tensor& t);
  void freeze() { frozen_ = true; }
  void unfreeze() { frozen_ = false; }
  bool frozen() const { return frozen_; }
  bool initialized() const { return initialized_; }
  double min() const { return min_; }
  double max() const { return max_; }
  void restore(double mn, double mx);  // checkpoint reload

  QuantParams params(int64_t n_bits) const;

private:
  double decay_;
  double min_ = 0.0, max_ = 0.0;
  bool initialized_ = false;
  bool frozen_ = false;
};

}  // namespace dfq::quant
