#include "prema/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace prema {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_dims(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw shape_error("tensor dimensions must be positive, got " + shape_str(shape));
  }
}

void check_finite(const char* op, const std::vector<double>& values) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw numeric_error(std::string(op) + ": non-finite value encountered");
    }
  }
}

std::shared_ptr<TensorNode> new_node(Shape shape, bool requires_grad, const char* op) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data.assign(shape_size(n->shape), 0.0);
  n->requires_grad = requires_grad;
  if (requires_grad) n->grad.assign(n->data.size(), 0.0);
  n->op = op;
  return n;
}

bool any_grad(std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Output node of an op: requires grad iff any input does; inputs become
// parents only in that case so inference graphs keep no history.
std::shared_ptr<TensorNode> op_node(const char* op, Shape shape,
                                    std::initializer_list<const Tensor*> inputs) {
  bool rg = any_grad(inputs);
  auto n = new_node(std::move(shape), rg, op);
  if (rg) {
    n->parents.reserve(inputs.size());
    for (const Tensor* t : inputs) n->parents.push_back(t->handle());
  }
  return n;
}

std::vector<double>& grad_of(const std::shared_ptr<TensorNode>& n) { return n->grad; }

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_dims(shape);
  return Tensor(new_node(std::move(shape), requires_grad, "leaf"));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_dims(shape);
  if (!std::isfinite(value)) throw numeric_error("full: non-finite fill value");
  auto n = new_node(std::move(shape), requires_grad, "leaf");
  std::fill(n->data.begin(), n->data.end(), value);
  return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_dims(shape);
  if (shape_size(shape) != values.size()) {
    throw shape_error("from: " + shape_str(shape) + " needs " +
                      std::to_string(shape_size(shape)) + " values, got " +
                      std::to_string(values.size()));
  }
  check_finite("from", values);
  auto n = new_node(std::move(shape), requires_grad, "leaf");
  n->data = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

Tensor Tensor::glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng,
                      bool requires_grad) {
  check_dims(shape);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  auto n = new_node(std::move(shape), requires_grad, "leaf");
  for (double& v : n->data) v = rng.uniform(-bound, bound);
  return Tensor(std::move(n));
}

Tensor Tensor::uniform(Shape shape, double bound, Rng& rng, bool requires_grad) {
  check_dims(shape);
  auto n = new_node(std::move(shape), requires_grad, "leaf");
  for (double& v : n->data) v = rng.uniform(-bound, bound);
  return Tensor(std::move(n));
}

std::vector<double>& Tensor::grad() {
  if (!node_->requires_grad) throw std::logic_error("grad(): tensor does not require grad");
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!node_->requires_grad) throw std::logic_error("grad(): tensor does not require grad");
  return node_->grad;
}

double Tensor::item() const {
  if (size() != 1) throw shape_error("item(): tensor has " + std::to_string(size()) + " elements");
  return node_->data[0];
}

Tensor Tensor::detached() const {
  auto n = new_node(node_->shape, false, "leaf");
  n->data = node_->data;
  return Tensor(std::move(n));
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw shape_error("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  auto n = op_node("add", a.shape(), {&a, &b});
  const std::size_t sz = n->size();
  for (std::size_t i = 0; i < sz; ++i) n->data[i] = a.at(i) + b.at(i);
  check_finite("add", n->data);
  if (n->requires_grad) {
    n->backward_fn = [](TensorNode& self) {
      for (std::size_t p = 0; p < 2; ++p) {
        auto& parent = self.parents[p];
        if (!parent->requires_grad) continue;
        auto& g = grad_of(parent);
        for (std::size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i];
      }
    };
  }
  return Tensor(std::move(n));
}

Tensor scale(const Tensor& x, double factor) {
  if (!std::isfinite(factor)) throw numeric_error("scale: non-finite factor");
  auto n = op_node("scale", x.shape(), {&x});
  for (std::size_t i = 0; i < n->size(); ++i) n->data[i] = factor * x.at(i);
  check_finite("scale", n->data);
  if (n->requires_grad) {
    n->backward_fn = [factor](TensorNode& self) {
      auto& g = grad_of(self.parents[0]);
      for (std::size_t i = 0; i < self.size(); ++i) g[i] += factor * self.grad[i];
    };
  }
  return Tensor(std::move(n));
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw shape_error("hadamard: shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  }
  auto n = op_node("hadamard", a.shape(), {&a, &b});
  for (std::size_t i = 0; i < n->size(); ++i) n->data[i] = a.at(i) * b.at(i);
  check_finite("hadamard", n->data);
  if (n->requires_grad) {
    n->backward_fn = [](TensorNode& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      if (pa->requires_grad) {
        auto& g = grad_of(pa);
        for (std::size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i] * pb->data[i];
      }
      if (pb->requires_grad) {
        auto& g = grad_of(pb);
        for (std::size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i] * pa->data[i];
      }
    };
  }
  return Tensor(std::move(n));
}

namespace {

// Open-interval clamps: the gate/state invariants promise sigmoid in (0,1)
// and tanh in (-1,1), but doubles round to the closed endpoints for |x|
// beyond ~19 (tanh) / ~37 (sigmoid).
const double kBelowOne = std::nextafter(1.0, 0.0);

double stable_sigmoid(double x) {
  double y;
  if (x >= 0.0) {
    y = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    y = e / (1.0 + e);
  }
  if (y >= 1.0) y = kBelowOne;
  if (y <= 0.0) y = std::numeric_limits<double>::min();
  return y;
}

double open_tanh(double x) {
  double y = std::tanh(x);
  if (y >= 1.0) y = kBelowOne;
  if (y <= -1.0) y = -kBelowOne;
  return y;
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
  check_finite("sigmoid", x.data());
  auto n = op_node("sigmoid", x.shape(), {&x});
  for (std::size_t i = 0; i < n->size(); ++i) n->data[i] = stable_sigmoid(x.at(i));
  if (n->requires_grad) {
    std::vector<double> y = n->data;
    n->backward_fn = [y = std::move(y)](TensorNode& self) {
      auto& g = grad_of(self.parents[0]);
      for (std::size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i] * y[i] * (1.0 - y[i]);
    };
  }
  return Tensor(std::move(n));
}

Tensor tanh(const Tensor& x) {
  check_finite("tanh", x.data());
  auto n = op_node("tanh", x.shape(), {&x});
  for (std::size_t i = 0; i < n->size(); ++i) n->data[i] = open_tanh(x.at(i));
  if (n->requires_grad) {
    std::vector<double> y = n->data;
    n->backward_fn = [y = std::move(y)](TensorNode& self) {
      auto& g = grad_of(self.parents[0]);
      for (std::size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i] * (1.0 - y[i] * y[i]);
    };
  }
  return Tensor(std::move(n));
}

Tensor relu(const Tensor& x) {
  check_finite("relu", x.data());
  auto n = op_node("relu", x.shape(), {&x});
  for (std::size_t i = 0; i < n->size(); ++i) n->data[i] = x.at(i) > 0.0 ? x.at(i) : 0.0;
  if (n->requires_grad) {
    n->backward_fn = [](TensorNode& self) {
      auto& parent = self.parents[0];
      auto& g = grad_of(parent);
      for (std::size_t i = 0; i < self.size(); ++i) {
        if (parent->data[i] > 0.0) g[i] += self.grad[i];
      }
    };
  }
  return Tensor(std::move(n));
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2) throw shape_error("matmul: left operand must be rank 2, got " + shape_str(a.shape()));
  const bool vec = b.rank() == 1;
  if (!vec && b.rank() != 2) {
    throw shape_error("matmul: right operand must be rank 1 or 2, got " + shape_str(b.shape()));
  }
  const std::size_t p = a.shape()[0];
  const std::size_t q = a.shape()[1];
  const std::size_t bq = b.shape()[0];
  const std::size_t r = vec ? 1 : b.shape()[1];
  if (q != bq) {
    throw shape_error("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                      shape_str(b.shape()));
  }
  Shape out_shape = vec ? Shape{p} : Shape{p, r};
  auto n = op_node("matmul", std::move(out_shape), {&a, &b});
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* cd = n->data.data();
  for (std::size_t i = 0; i < p; ++i) {
    double* crow = cd + i * r;
    const double* arow = ad + i * q;
    for (std::size_t k = 0; k < q; ++k) {
      const double av = arow[k];
      const double* brow = bd + k * r;
      for (std::size_t j = 0; j < r; ++j) crow[j] += av * brow[j];
    }
  }
  check_finite("matmul", n->data);
  if (n->requires_grad) {
    n->backward_fn = [p, q, r](TensorNode& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      const double* gc = self.grad.data();
      if (pa->requires_grad) {
        // dA = dC * B^T
        double* ga = grad_of(pa).data();
        const double* bd = pb->data.data();
        for (std::size_t i = 0; i < p; ++i) {
          const double* gcrow = gc + i * r;
          double* garow = ga + i * q;
          for (std::size_t k = 0; k < q; ++k) {
            const double* brow = bd + k * r;
            double acc = 0.0;
            for (std::size_t j = 0; j < r; ++j) acc += gcrow[j] * brow[j];
            garow[k] += acc;
          }
        }
      }
      if (pb->requires_grad) {
        // dB = A^T * dC
        double* gb = grad_of(pb).data();
        const double* ad = pa->data.data();
        for (std::size_t i = 0; i < p; ++i) {
          const double* arow = ad + i * q;
          const double* gcrow = gc + i * r;
          for (std::size_t k = 0; k < q; ++k) {
            const double av = arow[k];
            double* gbrow = gb + k * r;
            for (std::size_t j = 0; j < r; ++j) gbrow[j] += av * gcrow[j];
          }
        }
      }
    };
  }
  return Tensor(std::move(n));
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  const bool avec = a.rank() == 1;
  const bool bvec = b.rank() == 1;
  if (!avec && a.rank() != 2) {
    throw shape_error("matmul_tn: left operand must be rank 1 or 2, got " + shape_str(a.shape()));
  }
  if (!bvec && b.rank() != 2) {
    throw shape_error("matmul_tn: right operand must be rank 1 or 2, got " + shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0];
  const std::size_t nn = avec ? 1 : a.shape()[1];
  const std::size_t bm = b.shape()[0];
  const std::size_t k = bvec ? 1 : b.shape()[1];
  if (m != bm) {
    throw shape_error("matmul_tn: leading dimensions disagree, " + shape_str(a.shape()) + " x " +
                      shape_str(b.shape()));
  }
  Shape out_shape;
  if (!avec && !bvec) out_shape = {nn, k};
  else if (avec && !bvec) out_shape = {k};
  else if (!avec && bvec) out_shape = {nn};
  auto n = op_node("matmul_tn", std::move(out_shape), {&a, &b});
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* cd = n->data.data();
  // C[i][j] = sum_t A[t][i] * B[t][j]
  for (std::size_t t = 0; t < m; ++t) {
    const double* arow = ad + t * nn;
    const double* brow = bd + t * k;
    for (std::size_t i = 0; i < nn; ++i) {
      const double av = arow[i];
      double* crow = cd + i * k;
      for (std::size_t j = 0; j < k; ++j) crow[j] += av * brow[j];
    }
  }
  check_finite("matmul_tn", n->data);
  if (n->requires_grad) {
    n->backward_fn = [m, nn, k](TensorNode& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      const double* gc = self.grad.data();
      if (pa->requires_grad) {
        // dA[t][i] = sum_j B[t][j] * dC[i][j]
        double* ga = grad_of(pa).data();
        const double* bd = pb->data.data();
        for (std::size_t t = 0; t < m; ++t) {
          const double* brow = bd + t * k;
          double* garow = ga + t * nn;
          for (std::size_t i = 0; i < nn; ++i) {
            const double* gcrow = gc + i * k;
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) acc += brow[j] * gcrow[j];
            garow[i] += acc;
          }
        }
      }
      if (pb->requires_grad) {
        // dB[t][j] = sum_i A[t][i] * dC[i][j]
        double* gb = grad_of(pb).data();
        const double* ad = pa->data.data();
        for (std::size_t t = 0; t < m; ++t) {
          const double* arow = ad + t * nn;
          double* gbrow = gb + t * k;
          for (std::size_t i = 0; i < nn; ++i) {
            const double av = arow[i];
            const double* gcrow = gc + i * k;
            for (std::size_t j = 0; j < k; ++j) gbrow[j] += av * gcrow[j];
          }
        }
      }
    };
  }
  return Tensor(std::move(n));
}

// ---- reductions / structure ----

namespace {

// Sum in ascending value order: the result depends only on the multiset of
// addends, which makes softmax (and the attention mix built on it) exactly
// equivariant under input permutations.
double canonical_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc;
}

}  // namespace

Tensor softmax(const Tensor& scores) {
  if (scores.rank() != 1 || scores.size() == 0) {
    throw shape_error("softmax: expects a nonempty rank-1 tensor, got " + shape_str(scores.shape()));
  }
  check_finite("softmax", scores.data());
  auto n = op_node("softmax", scores.shape(), {&scores});
  const std::size_t sz = n->size();
  double mx = scores.at(0);
  for (std::size_t i = 1; i < sz; ++i) mx = std::max(mx, scores.at(i));
  for (std::size_t i = 0; i < sz; ++i) n->data[i] = std::exp(scores.at(i) - mx);
  const double total = canonical_sum(n->data);
  for (std::size_t i = 0; i < sz; ++i) n->data[i] /= total;
  check_finite("softmax", n->data);
  if (n->requires_grad) {
    std::vector<double> y = n->data;
    n->backward_fn = [y = std::move(y)](TensorNode& self) {
      auto& g = grad_of(self.parents[0]);
      double dot = 0.0;
      for (std::size_t i = 0; i < self.size(); ++i) dot += y[i] * self.grad[i];
      for (std::size_t i = 0; i < self.size(); ++i) g[i] += y[i] * (self.grad[i] - dot);
    };
  }
  return Tensor(std::move(n));
}

Tensor sum(const Tensor& x) {
  auto n = op_node("sum", {}, {&x});
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  n->data[0] = acc;
  check_finite("sum", n->data);
  if (n->requires_grad) {
    n->backward_fn = [](TensorNode& self) {
      auto& g = grad_of(self.parents[0]);
      const double gv = self.grad[0];
      for (double& gi : g) gi += gv;
    };
  }
  return Tensor(std::move(n));
}

Tensor row_mean(const Tensor& x) {
  if (x.rank() != 2) throw shape_error("row_mean: expects rank 2, got " + shape_str(x.shape()));
  const std::size_t rows = x.shape()[0];
  const std::size_t cols = x.shape()[1];
  auto n = op_node("row_mean", {rows}, {&x});
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += x.at(i * cols + j);
    n->data[i] = acc / static_cast<double>(cols);
  }
  check_finite("row_mean", n->data);
  if (n->requires_grad) {
    n->backward_fn = [rows, cols](TensorNode& self) {
      auto& g = grad_of(self.parents[0]);
      const double inv = 1.0 / static_cast<double>(cols);
      for (std::size_t i = 0; i < rows; ++i) {
        const double gv = self.grad[i] * inv;
        for (std::size_t j = 0; j < cols; ++j) g[i * cols + j] += gv;
      }
    };
  }
  return Tensor(std::move(n));
}

Tensor reshape(const Tensor& x, Shape shape) {
  check_dims(shape);
  if (shape_size(shape) != x.size()) {
    throw shape_error("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  auto n = op_node("reshape", std::move(shape), {&x});
  n->data = x.data();
  if (n->requires_grad) {
    n->backward_fn = [](TensorNode& self) {
      auto& g = grad_of(self.parents[0]);
      for (std::size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i];
    };
  }
  return Tensor(std::move(n));
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  if (a.rank() != b.rank()) {
    throw shape_error("concat: rank mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  if (axis >= a.rank()) throw shape_error("concat: axis out of range");
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != axis && a.shape()[i] != b.shape()[i]) {
      throw shape_error("concat: off-axis shape mismatch " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
    }
  }
  Shape out = a.shape();
  out[axis] += b.shape()[axis];

  // Row-major: outer = product of dims before axis, inner = product after.
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.shape()[i];
  const std::size_t a_blk = a.shape()[axis] * inner;
  const std::size_t b_blk = b.shape()[axis] * inner;

  auto n = op_node("concat", std::move(out), {&a, &b});
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a.data().data() + o * a_blk, a_blk, n->data.data() + o * (a_blk + b_blk));
    std::copy_n(b.data().data() + o * b_blk, b_blk, n->data.data() + o * (a_blk + b_blk) + a_blk);
  }
  if (n->requires_grad) {
    n->backward_fn = [outer, a_blk, b_blk](TensorNode& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      for (std::size_t o = 0; o < outer; ++o) {
        const double* g = self.grad.data() + o * (a_blk + b_blk);
        if (pa->requires_grad) {
          double* ga = grad_of(pa).data() + o * a_blk;
          for (std::size_t i = 0; i < a_blk; ++i) ga[i] += g[i];
        }
        if (pb->requires_grad) {
          double* gb = grad_of(pb).data() + o * b_blk;
          for (std::size_t i = 0; i < b_blk; ++i) gb[i] += g[i + a_blk];
        }
      }
    };
  }
  return Tensor(std::move(n));
}

Tensor max_over_set(const std::vector<Tensor>& vectors) {
  if (vectors.empty()) throw shape_error("max_over_set: empty input set");
  const Shape& s = vectors.front().shape();
  if (s.size() != 1) throw shape_error("max_over_set: expects rank-1 tensors");
  for (const Tensor& t : vectors) {
    if (t.shape() != s) throw shape_error("max_over_set: length mismatch");
  }
  const std::size_t d = s[0];
  const std::size_t k = vectors.size();

  bool rg = false;
  for (const Tensor& t : vectors) rg = rg || t.requires_grad();
  auto n = new_node(s, rg, "max_over_set");
  std::vector<std::uint32_t> winner(d, 0);
  for (std::size_t j = 0; j < d; ++j) {
    double best = vectors[0].at(j);
    std::uint32_t bi = 0;
    for (std::size_t i = 1; i < k; ++i) {
      const double v = vectors[i].at(j);
      if (v > best) {  // strict: ties keep the lowest index
        best = v;
        bi = static_cast<std::uint32_t>(i);
      }
    }
    n->data[j] = best;
    winner[j] = bi;
  }
  check_finite("max_over_set", n->data);
  if (rg) {
    n->parents.reserve(k);
    for (const Tensor& t : vectors) n->parents.push_back(t.handle());
    n->backward_fn = [winner = std::move(winner)](TensorNode& self) {
      for (std::size_t j = 0; j < self.size(); ++j) {
        auto& parent = self.parents[winner[j]];
        if (parent->requires_grad) grad_of(parent)[j] += self.grad[j];
      }
    };
  }
  return Tensor(std::move(n));
}

Tensor weighted_column_sum(const Tensor& values, const Tensor& weights) {
  if (values.rank() != 2 || weights.rank() != 1 || values.shape()[1] != weights.shape()[0]) {
    throw shape_error("weighted_column_sum: need d x N values and N weights, got " +
                      shape_str(values.shape()) + " and " + shape_str(weights.shape()));
  }
  const std::size_t d = values.shape()[0];
  const std::size_t cols = values.shape()[1];
  auto n = op_node("weighted_column_sum", {d}, {&values, &weights});
  std::vector<double> products(cols);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < cols; ++i) products[i] = values.at(j * cols + i) * weights.at(i);
    n->data[j] = canonical_sum(products);
  }
  check_finite("weighted_column_sum", n->data);
  if (n->requires_grad) {
    n->backward_fn = [d, cols](TensorNode& self) {
      auto& pv = self.parents[0];
      auto& pw = self.parents[1];
      for (std::size_t j = 0; j < d; ++j) {
        const double go = self.grad[j];
        if (pv->requires_grad) {
          auto& g = grad_of(pv);
          for (std::size_t i = 0; i < cols; ++i) g[j * cols + i] += go * pw->data[i];
        }
        if (pw->requires_grad) {
          auto& g = grad_of(pw);
          for (std::size_t i = 0; i < cols; ++i) g[i] += go * pv->data[j * cols + i];
        }
      }
    };
  }
  return Tensor(std::move(n));
}

// ---- convolution ----

Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t pad) {
  if (input.rank() != 3) throw shape_error("conv2d: input must be C_in x H x W");
  if (kernels.rank() != 4) throw shape_error("conv2d: kernels must be C_out x C_in x k x k");
  if (stride < 1) throw shape_error("conv2d: stride must be >= 1");
  const std::size_t c_in = input.shape()[0];
  const std::size_t h = input.shape()[1];
  const std::size_t w = input.shape()[2];
  const std::size_t c_out = kernels.shape()[0];
  const std::size_t kc = kernels.shape()[1];
  const std::size_t kh = kernels.shape()[2];
  const std::size_t kw = kernels.shape()[3];
  if (kc != c_in) throw shape_error("conv2d: kernel channel count disagrees with input");
  if (kh != kw) throw shape_error("conv2d: only square kernels supported");
  if (kh > h + 2 * pad || kw > w + 2 * pad) {
    throw shape_error("conv2d: kernel larger than padded input");
  }
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (w + 2 * pad - kw) / stride + 1;

  auto n = op_node("conv2d", {c_out, oh, ow}, {&input, &kernels});
  const double* in = input.data().data();
  const double* ker = kernels.data().data();
  double* out = n->data.data();
  const long hi = static_cast<long>(h), wi = static_cast<long>(w);
  for (std::size_t co = 0; co < c_out; ++co) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const long y0 = static_cast<long>(oy * stride) - static_cast<long>(pad);
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const long x0 = static_cast<long>(ox * stride) - static_cast<long>(pad);
        double acc = 0.0;
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          const double* in_ch = in + ci * h * w;
          const double* k_ch = ker + ((co * c_in + ci) * kh) * kw;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const long iy = y0 + static_cast<long>(ky);
            if (iy < 0 || iy >= hi) continue;
            const double* in_row = in_ch + iy * wi;
            const double* k_row = k_ch + ky * kw;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const long ix = x0 + static_cast<long>(kx);
              if (ix < 0 || ix >= wi) continue;
              acc += in_row[ix] * k_row[kx];
            }
          }
        }
        out[(co * oh + oy) * ow + ox] = acc;
      }
    }
  }
  check_finite("conv2d", n->data);
  if (n->requires_grad) {
    n->backward_fn = [c_in, h, w, c_out, kh, kw, oh, ow, stride, pad](TensorNode& self) {
      auto& pin = self.parents[0];
      auto& pker = self.parents[1];
      const double* gout = self.grad.data();
      const long hi = static_cast<long>(h), wi = static_cast<long>(w);
      double* gin = pin->requires_grad ? grad_of(pin).data() : nullptr;
      double* gker = pker->requires_grad ? grad_of(pker).data() : nullptr;
      const double* in = pin->data.data();
      const double* ker = pker->data.data();
      for (std::size_t co = 0; co < c_out; ++co) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long y0 = static_cast<long>(oy * stride) - static_cast<long>(pad);
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long x0 = static_cast<long>(ox * stride) - static_cast<long>(pad);
            const double go = gout[(co * oh + oy) * ow + ox];
            if (go == 0.0) continue;
            for (std::size_t ci = 0; ci < c_in; ++ci) {
              const std::size_t in_base = ci * h * w;
              const std::size_t k_base = ((co * c_in + ci) * kh) * kw;
              for (std::size_t ky = 0; ky < kh; ++ky) {
                const long iy = y0 + static_cast<long>(ky);
                if (iy < 0 || iy >= hi) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const long ix = x0 + static_cast<long>(kx);
                  if (ix < 0 || ix >= wi) continue;
                  const std::size_t ii = in_base + iy * wi + ix;
                  const std::size_t ki = k_base + ky * kw + kx;
                  if (gin) gin[ii] += go * ker[ki];
                  if (gker) gker[ki] += go * in[ii];
                }
              }
            }
          }
        }
      }
    };
  }
  return Tensor(std::move(n));
}

Tensor add_channel_bias(const Tensor& chw, const Tensor& bias) {
  if (chw.rank() != 3 || bias.rank() != 1 || chw.shape()[0] != bias.shape()[0]) {
    throw shape_error("add_channel_bias: need C x H x W plus bias of length C");
  }
  const std::size_t c = chw.shape()[0];
  const std::size_t hw = chw.shape()[1] * chw.shape()[2];
  auto n = op_node("add_channel_bias", chw.shape(), {&chw, &bias});
  for (std::size_t ci = 0; ci < c; ++ci) {
    const double b = bias.at(ci);
    for (std::size_t i = 0; i < hw; ++i) n->data[ci * hw + i] = chw.at(ci * hw + i) + b;
  }
  check_finite("add_channel_bias", n->data);
  if (n->requires_grad) {
    n->backward_fn = [c, hw](TensorNode& self) {
      auto& px = self.parents[0];
      auto& pb = self.parents[1];
      if (px->requires_grad) {
        auto& g = grad_of(px);
        for (std::size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i];
      }
      if (pb->requires_grad) {
        auto& g = grad_of(pb);
        for (std::size_t ci = 0; ci < c; ++ci) {
          double acc = 0.0;
          for (std::size_t i = 0; i < hw; ++i) acc += self.grad[ci * hw + i];
          g[ci] += acc;
        }
      }
    };
  }
  return Tensor(std::move(n));
}

// ---- loss ----

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  if (logits.rank() != 1 || logits.size() == 0) {
    throw shape_error("cross_entropy: logits must be a nonempty rank-1 tensor");
  }
  if (label >= logits.size()) {
    throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                " out of range for " + std::to_string(logits.size()) + " classes");
  }
  check_finite("cross_entropy", logits.data());
  const std::size_t c = logits.size();
  auto n = op_node("cross_entropy", {}, {&logits});
  double mx = logits.at(0);
  for (std::size_t i = 1; i < c; ++i) mx = std::max(mx, logits.at(i));
  double total = 0.0;
  std::vector<double> probs(c);
  for (std::size_t i = 0; i < c; ++i) {
    probs[i] = std::exp(logits.at(i) - mx);
    total += probs[i];
  }
  for (std::size_t i = 0; i < c; ++i) probs[i] /= total;
  // -log softmax[label], computed as logsumexp(l - m) + m - l[label]
  n->data[0] = std::log(total) + mx - logits.at(label);
  if (n->data[0] < 0.0) n->data[0] = 0.0;  // guard tiny negative rounding
  check_finite("cross_entropy", n->data);
  if (n->requires_grad) {
    n->backward_fn = [probs = std::move(probs), label](TensorNode& self) {
      auto& g = grad_of(self.parents[0]);
      const double gv = self.grad[0];
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += gv * (probs[i] - (i == label ? 1.0 : 0.0));
      }
    };
  }
  return Tensor(std::move(n));
}

// ---- tape / optimizer ----

Tape Tape::record(const Tensor& root) {
  Tape tape;
  tape.root_ = root.node();
  // Iterative post-order DFS; parents are visited in stored order, so the
  // resulting linearization is deterministic for a given graph.
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<std::shared_ptr<TensorNode>, std::size_t>> stack;
  stack.emplace_back(root.handle(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto parent = node->parents[next++];
      if (visited.insert(parent.get()).second) {
        stack.emplace_back(std::move(parent), 0);
      }
    } else {
      tape.order_.push_back(node.get());
      tape.keep_alive_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

void Tape::backward() {
  if (root_ == nullptr) throw std::logic_error("Tape::backward: empty tape");
  if (root_->size() != 1) {
    throw shape_error("backward: loss must be scalar, got " + shape_str(root_->shape));
  }
  if (!root_->requires_grad) {
    throw std::logic_error("backward: loss does not require grad");
  }
  for (TensorNode* n : order_) {
    if (n->requires_grad) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  root_->grad[0] = 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

void backward(const Tensor& loss) {
  Tape tape = Tape::record(loss);
  tape.backward();
}

void sgd_step(const std::vector<Tensor>& params, double lr) {
  if (!std::isfinite(lr)) throw numeric_error("sgd_step: non-finite learning rate");
  for (const Tensor& p : params) {
    if (!p.requires_grad()) throw std::logic_error("sgd_step: parameter does not require grad");
  }
  for (const Tensor& p : params) {
    auto& data = p.node()->data;
    auto& grad = p.node()->grad;
    for (std::size_t i = 0; i < data.size(); ++i) {
      data[i] -= lr * grad[i];
      grad[i] = 0.0;
    }
    check_finite("sgd_step", data);
  }
}

void zero_grad(const std::vector<Tensor>& params) {
  for (const Tensor& p : params) {
    if (p.requires_grad()) std::fill(p.node()->grad.begin(), p.node()->grad.end(), 0.0);
  }
}

}  // namespace prema
