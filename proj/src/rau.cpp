#include "prema/rau.hpp"

#include <cmath>

namespace prema {

RauParams RauParams::init(std::size_t c_o, std::size_t c_m, std::size_t d_k, Rng& rng) {
  RauParams p;
  p.W_h = Tensor::glorot({c_o, d_k}, c_o, d_k, rng, true);
  p.W_r = Tensor::glorot({c_m, d_k}, c_m, d_k, rng, true);
  p.W_g = Tensor::glorot({c_m, d_k}, c_m, d_k, rng, true);
  return p;
}

void RauParams::named(const std::string& prefix,
                      std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back(prefix + ".W_h", W_h);
  out.emplace_back(prefix + ".W_r", W_r);
  out.emplace_back(prefix + ".W_g", W_g);
}

RauParams RauParams::detached() const {
  RauParams p;
  p.W_h = W_h.detached();
  p.W_r = W_r.detached();
  p.W_g = W_g.detached();
  return p;
}

std::pair<AttentivePart, ConfidenceMap> rau_forward(const RauParams& params, const Tensor& o1,
                                                    const Tensor& m) {
  if (o1.rank() != 1 || o1.shape()[0] != params.query_dim()) {
    throw shape_error("rau_forward: o1 has shape " + shape_str(o1.shape()) + ", expected length " +
                      std::to_string(params.query_dim()));
  }
  if (m.rank() != 2 || m.shape()[0] != params.channel_dim()) {
    throw shape_error("rau_forward: m has shape " + shape_str(m.shape()) + ", expected " +
                      std::to_string(params.channel_dim()) + " x N");
  }
  const double d_k = static_cast<double>(params.key_dim());
  Tensor query = matmul_tn(params.W_h, o1);      // d_k
  Tensor keys = matmul_tn(params.W_r, m);        // d_k x N
  Tensor values = matmul_tn(params.W_g, m);      // d_k x N
  Tensor scores = scale(matmul_tn(keys, query), 1.0 / std::sqrt(d_k));  // N
  Tensor conf = softmax(scores);
  Tensor att = weighted_column_sum(values, conf);  // d_k
  return {AttentivePart{att}, ConfidenceMap{conf, scores}};
}

}  // namespace prema
