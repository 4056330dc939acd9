#pragma once

#include <string>
#include <utility>
#include <vector>

#include "prema/tensor.hpp"

namespace prema {

// Per-view feature pair: m is the spatial middle representation laid out as
// C_m x N (N = flattened locations of the tapped stage), v the compact
// global feature vector.
struct ViewFeatures {
  Tensor m;
  Tensor v;
};

struct ConvStage {
  Tensor kernel;  // C_out x C_in x k x k
  Tensor bias;    // C_out
  std::size_t stride = 2;
  std::size_t pad = 1;
};

// Small shared-weight view encoder: a stack of strided conv+relu stages, one
// of which is tapped as the middle representation, plus a global-average-pool
// head projecting to the view feature. Every view goes through the same
// parameter set.
struct CnnEncoderParams {
  std::vector<ConvStage> stages;
  std::size_t middle_tap = 1;  // stage whose post-relu activation is exported as m
  Tensor head_w;               // C_v x C_last
  Tensor head_b;               // C_v
  std::size_t image_size = 32;

  // Default stack: 3x3 kernels, stride 2, channels 8 -> 16 -> 32, middle tap
  // after the second stage, feature dim 32.
  static CnnEncoderParams init(std::size_t image_size, Rng& rng);

  std::size_t middle_channels() const;
  std::size_t middle_locations() const;  // N
  std::size_t middle_side() const;       // H_m == W_m
  std::size_t feature_dim() const;       // C_v

  std::vector<Tensor> all() const;
  void named(const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& out) const;
  CnnEncoderParams detached() const;
};

ViewFeatures cnn_encode(const CnnEncoderParams& params, const Tensor& image);

}  // namespace prema
