#pragma once

#include <string>
#include <utility>
#include <vector>

#include "prema/tensor.hpp"

namespace prema {

// Peephole LSTM parameters: four input projections, four recurrent
// projections, three peephole matrices (the candidate update has none),
// four biases. The peepholes are full d_h x d_h matrices.
struct LstmParams {
  Tensor W_i, W_f, W_c, W_o;  // d_h x d_in
  Tensor U_i, U_f, U_c, U_o;  // d_h x d_h
  Tensor H_i, H_f, H_o;       // d_h x d_h
  Tensor b_i, b_f, b_c, b_o;  // d_h

  // Glorot-uniform W/U, zero peepholes and biases (zero peepholes start the
  // cell as a plain LSTM).
  static LstmParams init(std::size_t d_in, std::size_t d_h, Rng& rng);
  static LstmParams zeros(std::size_t d_in, std::size_t d_h, bool requires_grad = false);

  std::size_t input_dim() const { return W_i.shape()[1]; }
  std::size_t hidden_dim() const { return W_i.shape()[0]; }

  std::vector<Tensor> all() const;  // the 15 parameter arrays
  void named(const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& out) const;
  LstmParams detached() const;
};

struct LstmState {
  Tensor h;
  Tensor c;
  static LstmState zeros(std::size_t d_h) {
    return {Tensor::zeros({d_h}), Tensor::zeros({d_h})};
  }
};

struct GateActivations {
  Tensor i, f, o;  // entries strictly in (0,1)
};

// One update step. The input/forget gates peek at the previous cell state;
// the output gate peeks at the freshly computed one.
std::pair<LstmState, GateActivations> lstm_cell_step(const LstmParams& params,
                                                     const Tensor& input,
                                                     const LstmState& prev);

// Left fold of lstm_cell_step; returns the state after every step.
std::vector<LstmState> lstm_run(const LstmParams& params, const std::vector<Tensor>& inputs,
                                const LstmState& init);

// Bidirectional driver: step t yields concat(h_fwd[t], h_bwd[t]) where the
// backward pass consumes the inputs reversed and is realigned to t.
std::vector<Tensor> bilstm_run(const LstmParams& fwd, const LstmParams& bwd,
                               const std::vector<Tensor>& inputs);

}  // namespace prema
