#pragma once

#include <string>
#include <utility>
#include <vector>

#include "prema/tensor.hpp"

namespace prema {

// Regional attention projections. All three are stored with the projection
// dimension d_k as the trailing axis and applied transposed. W_r maps the
// middle-representation channels, so its leading dimension is C_m.
struct RauParams {
  Tensor W_h;  // C_o x d_k
  Tensor W_r;  // C_m x d_k
  Tensor W_g;  // C_m x d_k

  static RauParams init(std::size_t c_o, std::size_t c_m, std::size_t d_k, Rng& rng);

  std::size_t key_dim() const { return W_h.shape()[1]; }      // d_k
  std::size_t query_dim() const { return W_h.shape()[0]; }    // C_o
  std::size_t channel_dim() const { return W_r.shape()[0]; }  // C_m

  std::vector<Tensor> all() const { return {W_h, W_r, W_g}; }
  void named(const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& out) const;
  RauParams detached() const;
};

// Per-location attention distribution over the N spots of one view's middle
// representation. Pre-softmax scores are kept for inspection and export.
struct ConfidenceMap {
  Tensor conf;    // N, sums to 1
  Tensor scores;  // N
};

struct AttentivePart {
  Tensor att_part;  // d_k
};

// s_i = (W_h^T o1) . (W_r^T m_i) / sqrt(d_k); conf = softmax(s);
// attPart = sum_i conf_i * (W_g^T m_i). Differentiable end to end.
std::pair<AttentivePart, ConfidenceMap> rau_forward(const RauParams& params, const Tensor& o1,
                                                    const Tensor& m);

}  // namespace prema
