#include "prema/encoder.hpp"

namespace prema {

namespace {

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

std::size_t stage_side(const CnnEncoderParams& p, std::size_t stage_index) {
  std::size_t side = p.image_size;
  for (std::size_t s = 0; s <= stage_index; ++s) {
    side = conv_out(side, p.stages[s].kernel.shape()[2], p.stages[s].stride, p.stages[s].pad);
  }
  return side;
}

}  // namespace

CnnEncoderParams CnnEncoderParams::init(std::size_t image_size, Rng& rng) {
  CnnEncoderParams p;
  p.image_size = image_size;
  const std::size_t channels[4] = {1, 8, 16, 32};
  const std::size_t k = 3;
  for (std::size_t s = 0; s < 3; ++s) {
    ConvStage stage;
    const std::size_t c_in = channels[s];
    const std::size_t c_out = channels[s + 1];
    // He-style bound with an extra gain: the silhouette inputs are sparse
    // and low-variance, and there is no normalization layer to recover the
    // scale, so plain fan-balanced init collapses the activations.
    const double bound = 3.0 * std::sqrt(6.0 / static_cast<double>(c_in * k * k));
    stage.kernel = Tensor::uniform({c_out, c_in, k, k}, bound, rng, true);
    stage.bias = Tensor::zeros({c_out}, true);
    p.stages.push_back(std::move(stage));
  }
  p.middle_tap = 1;
  const std::size_t c_last = channels[3];
  const std::size_t c_v = 32;
  p.head_w = Tensor::glorot({c_v, c_last}, c_last, c_v, rng, true);
  p.head_b = Tensor::zeros({c_v}, true);
  return p;
}

std::size_t CnnEncoderParams::middle_channels() const {
  return stages[middle_tap].kernel.shape()[0];
}

std::size_t CnnEncoderParams::middle_side() const { return stage_side(*this, middle_tap); }

std::size_t CnnEncoderParams::middle_locations() const {
  const std::size_t side = middle_side();
  return side * side;
}

std::size_t CnnEncoderParams::feature_dim() const { return head_w.shape()[0]; }

std::vector<Tensor> CnnEncoderParams::all() const {
  std::vector<Tensor> out;
  for (const ConvStage& s : stages) {
    out.push_back(s.kernel);
    out.push_back(s.bias);
  }
  if (head_w.defined()) out.push_back(head_w);
  if (head_b.defined()) out.push_back(head_b);
  return out;
}

void CnnEncoderParams::named(const std::string& prefix,
                             std::vector<std::pair<std::string, Tensor>>& out) const {
  for (std::size_t s = 0; s < stages.size(); ++s) {
    out.emplace_back(prefix + ".stage" + std::to_string(s) + ".kernel", stages[s].kernel);
    out.emplace_back(prefix + ".stage" + std::to_string(s) + ".bias", stages[s].bias);
  }
  out.emplace_back(prefix + ".head_w", head_w);
  out.emplace_back(prefix + ".head_b", head_b);
}

CnnEncoderParams CnnEncoderParams::detached() const {
  CnnEncoderParams p;
  p.middle_tap = middle_tap;
  p.image_size = image_size;
  for (const ConvStage& s : stages) {
    p.stages.push_back(ConvStage{s.kernel.detached(), s.bias.detached(), s.stride, s.pad});
  }
  if (head_w.defined()) p.head_w = head_w.detached();
  if (head_b.defined()) p.head_b = head_b.detached();
  return p;
}

ViewFeatures cnn_encode(const CnnEncoderParams& params, const Tensor& image) {
  if (image.rank() != 3 || image.shape()[0] != 1 || image.shape()[1] != params.image_size ||
      image.shape()[2] != params.image_size) {
    throw shape_error("cnn_encode: expected image of shape [1x" +
                      std::to_string(params.image_size) + "x" + std::to_string(params.image_size) +
                      "], got " + shape_str(image.shape()));
  }
  Tensor x = image;
  Tensor middle;
  for (std::size_t s = 0; s < params.stages.size(); ++s) {
    const ConvStage& stage = params.stages[s];
    x = relu(add_channel_bias(conv2d(x, stage.kernel, stage.stride, stage.pad), stage.bias));
    if (s == params.middle_tap) middle = x;
  }
  const std::size_t c_m = middle.shape()[0];
  Tensor m = reshape(middle, {c_m, middle.shape()[1] * middle.shape()[2]});
  const std::size_t c_last = x.shape()[0];
  Tensor pooled = row_mean(reshape(x, {c_last, x.shape()[1] * x.shape()[2]}));
  Tensor v = add(matmul(params.head_w, pooled), params.head_b);
  return ViewFeatures{m, v};
}

}  // namespace prema
