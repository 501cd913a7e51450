#pragma once

#include "flame/types.hpp"

namespace flame {

// Analytic size of one layer, fp32 tensors. Convolutions use "same" padding
// (output = ceil(input / stride)). Transformer layers process the whole
// context in one pass: projections + 4x MLP cost 12*e^2 MACs per token and
// attention scores plus the weighted value sum cost ctx^2*e each.
struct WorkloadShape {
  double macs = 0.0;
  double params = 0.0;
  double input_bytes = 0.0;
  double output_bytes = 0.0;
  double weight_bytes = 0.0;

  double total_bytes() const noexcept { return input_bytes + output_bytes + weight_bytes; }
  double arithmetic_intensity() const noexcept { return macs / total_bytes(); }
};

inline constexpr double kBytesPerElement = 4.0;

WorkloadShape workload_shape(const LayerConfig& config);

// Attention-score MACs (ctx^2 * e) of a transformer layer; 0 otherwise.
double attention_score_macs(const LayerConfig& config);

}  // namespace flame
