#include "flame/workload.hpp"

namespace flame {

namespace {

double ceil_div(std::int64_t a, std::int64_t b) {
  return static_cast<double>((a + b - 1) / b);
}

}  // namespace

WorkloadShape workload_shape(const LayerConfig& config) {
  WorkloadShape s;
  switch (config.layer_type) {
    case LayerType::kConvolution: {
      const double ih = static_cast<double>(config.at(param::kInputHeight));
      const double iw = static_cast<double>(config.at(param::kInputWidth));
      const double cin = static_cast<double>(config.at(param::kInputChannels));
      const double cout = static_cast<double>(config.at(param::kOutputChannels));
      const double k = static_cast<double>(config.at(param::kKernelSize));
      const std::int64_t stride = config.at(param::kStride);
      const double oh = ceil_div(config.at(param::kInputHeight), stride);
      const double ow = ceil_div(config.at(param::kInputWidth), stride);
      s.macs = k * k * cin * cout * oh * ow;
      s.params = k * k * cin * cout + cout;
      s.input_bytes = kBytesPerElement * ih * iw * cin;
      s.output_bytes = kBytesPerElement * oh * ow * cout;
      break;
    }
    case LayerType::kLinear: {
      const double in = static_cast<double>(config.at(param::kInputFeatures));
      const double out = static_cast<double>(config.at(param::kOutputFeatures));
      s.macs = in * out;
      s.params = in * out + out;
      s.input_bytes = kBytesPerElement * in;
      s.output_bytes = kBytesPerElement * out;
      break;
    }
    case LayerType::kTransformer: {
      const double e = static_cast<double>(config.at(param::kEmbedDim));
      const double ctx = static_cast<double>(config.at(param::kContextLength));
      s.macs = ctx * 12.0 * e * e + 2.0 * ctx * ctx * e;
      // 4 attention projections + 2 MLP matrices, with biases and two norms.
      s.params = 12.0 * e * e + 13.0 * e;
      s.input_bytes = kBytesPerElement * ctx * e;
      s.output_bytes = kBytesPerElement * ctx * e;
      break;
    }
  }
  s.weight_bytes = kBytesPerElement * s.params;
  return s;
}

double attention_score_macs(const LayerConfig& config) {
  if (config.layer_type != LayerType::kTransformer) return 0.0;
  const double e = static_cast<double>(config.at(param::kEmbedDim));
  const double ctx = static_cast<double>(config.at(param::kContextLength));
  return ctx * ctx * e;
}

}  // namespace flame
