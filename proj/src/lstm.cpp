#include "prema/lstm.hpp"

namespace prema {

LstmParams LstmParams::init(std::size_t d_in, std::size_t d_h, Rng& rng) {
  LstmParams p;
  auto proj = [&](std::size_t rows, std::size_t cols) {
    return Tensor::glorot({rows, cols}, cols, rows, rng, true);
  };
  p.W_i = proj(d_h, d_in);
  p.W_f = proj(d_h, d_in);
  p.W_c = proj(d_h, d_in);
  p.W_o = proj(d_h, d_in);
  p.U_i = proj(d_h, d_h);
  p.U_f = proj(d_h, d_h);
  p.U_c = proj(d_h, d_h);
  p.U_o = proj(d_h, d_h);
  p.H_i = Tensor::zeros({d_h, d_h}, true);
  p.H_f = Tensor::zeros({d_h, d_h}, true);
  p.H_o = Tensor::zeros({d_h, d_h}, true);
  p.b_i = Tensor::zeros({d_h}, true);
  p.b_f = Tensor::zeros({d_h}, true);
  p.b_c = Tensor::zeros({d_h}, true);
  p.b_o = Tensor::zeros({d_h}, true);
  return p;
}

LstmParams LstmParams::zeros(std::size_t d_in, std::size_t d_h, bool requires_grad) {
  LstmParams p;
  p.W_i = Tensor::zeros({d_h, d_in}, requires_grad);
  p.W_f = Tensor::zeros({d_h, d_in}, requires_grad);
  p.W_c = Tensor::zeros({d_h, d_in}, requires_grad);
  p.W_o = Tensor::zeros({d_h, d_in}, requires_grad);
  p.U_i = Tensor::zeros({d_h, d_h}, requires_grad);
  p.U_f = Tensor::zeros({d_h, d_h}, requires_grad);
  p.U_c = Tensor::zeros({d_h, d_h}, requires_grad);
  p.U_o = Tensor::zeros({d_h, d_h}, requires_grad);
  p.H_i = Tensor::zeros({d_h, d_h}, requires_grad);
  p.H_f = Tensor::zeros({d_h, d_h}, requires_grad);
  p.H_o = Tensor::zeros({d_h, d_h}, requires_grad);
  p.b_i = Tensor::zeros({d_h}, requires_grad);
  p.b_f = Tensor::zeros({d_h}, requires_grad);
  p.b_c = Tensor::zeros({d_h}, requires_grad);
  p.b_o = Tensor::zeros({d_h}, requires_grad);
  return p;
}

std::vector<Tensor> LstmParams::all() const {
  return {W_i, W_f, W_c, W_o, U_i, U_f, U_c, U_o, H_i, H_f, H_o, b_i, b_f, b_c, b_o};
}

void LstmParams::named(const std::string& prefix,
                       std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back(prefix + ".W_i", W_i);
  out.emplace_back(prefix + ".W_f", W_f);
  out.emplace_back(prefix + ".W_c", W_c);
  out.emplace_back(prefix + ".W_o", W_o);
  out.emplace_back(prefix + ".U_i", U_i);
  out.emplace_back(prefix + ".U_f", U_f);
  out.emplace_back(prefix + ".U_c", U_c);
  out.emplace_back(prefix + ".U_o", U_o);
  out.emplace_back(prefix + ".H_i", H_i);
  out.emplace_back(prefix + ".H_f", H_f);
  out.emplace_back(prefix + ".H_o", H_o);
  out.emplace_back(prefix + ".b_i", b_i);
  out.emplace_back(prefix + ".b_f", b_f);
  out.emplace_back(prefix + ".b_c", b_c);
  out.emplace_back(prefix + ".b_o", b_o);
}

LstmParams LstmParams::detached() const {
  LstmParams p;
  p.W_i = W_i.detached();
  p.W_f = W_f.detached();
  p.W_c = W_c.detached();
  p.W_o = W_o.detached();
  p.U_i = U_i.detached();
  p.U_f = U_f.detached();
  p.U_c = U_c.detached();
  p.U_o = U_o.detached();
  p.H_i = H_i.detached();
  p.H_f = H_f.detached();
  p.H_o = H_o.detached();
  p.b_i = b_i.detached();
  p.b_f = b_f.detached();
  p.b_c = b_c.detached();
  p.b_o = b_o.detached();
  return p;
}

std::pair<LstmState, GateActivations> lstm_cell_step(const LstmParams& params,
                                                     const Tensor& input,
                                                     const LstmState& prev) {
  if (input.rank() != 1 || input.shape()[0] != params.input_dim()) {
    throw shape_error("lstm_cell_step: input has shape " + shape_str(input.shape()) +
                      ", expected length " + std::to_string(params.input_dim()));
  }
  if (prev.h.shape()[0] != params.hidden_dim() || prev.c.shape()[0] != params.hidden_dim()) {
    throw shape_error("lstm_cell_step: state dimension disagrees with parameters");
  }
  const Tensor& v = input;
  Tensor gate_i = sigmoid(add(add(matmul(params.W_i, v), matmul(params.U_i, prev.h)),
                              add(matmul(params.H_i, prev.c), params.b_i)));
  Tensor gate_f = sigmoid(add(add(matmul(params.W_f, v), matmul(params.U_f, prev.h)),
                              add(matmul(params.H_f, prev.c), params.b_f)));
  Tensor cand = tanh(add(add(matmul(params.W_c, v), matmul(params.U_c, prev.h)), params.b_c));
  Tensor c = add(hadamard(gate_f, prev.c), hadamard(gate_i, cand));
  // Eq. 5: the output gate's peephole reads the new cell state.
  Tensor gate_o = sigmoid(add(add(matmul(params.W_o, v), matmul(params.U_o, prev.h)),
                              add(matmul(params.H_o, c), params.b_o)));
  Tensor h = hadamard(gate_o, tanh(c));
  return {LstmState{h, c}, GateActivations{gate_i, gate_f, gate_o}};
}

std::vector<LstmState> lstm_run(const LstmParams& params, const std::vector<Tensor>& inputs,
                                const LstmState& init) {
  if (inputs.empty()) throw std::invalid_argument("lstm_run: empty input sequence");
  std::vector<LstmState> states;
  states.reserve(inputs.size());
  LstmState state = init;
  for (const Tensor& x : inputs) {
    state = lstm_cell_step(params, x, state).first;
    states.push_back(state);
  }
  return states;
}

std::vector<Tensor> bilstm_run(const LstmParams& fwd, const LstmParams& bwd,
                               const std::vector<Tensor>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("bilstm_run: empty input sequence");
  if (fwd.hidden_dim() != bwd.hidden_dim() || fwd.input_dim() != bwd.input_dim()) {
    throw shape_error("bilstm_run: directional parameter dimensions disagree");
  }
  const std::size_t n = inputs.size();
  const std::size_t d_h = fwd.hidden_dim();
  std::vector<LstmState> f = lstm_run(fwd, inputs, LstmState::zeros(d_h));
  std::vector<Tensor> reversed(inputs.rbegin(), inputs.rend());
  std::vector<LstmState> b = lstm_run(bwd, reversed, LstmState::zeros(d_h));
  std::vector<Tensor> out;
  out.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    out.push_back(concat(f[t].h, b[n - 1 - t].h, 0));
  }
  return out;
}

}  // namespace prema
