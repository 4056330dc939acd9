#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "prema/common.hpp"

namespace prema {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// One vertex of a computation graph. Nodes produced by ops keep strong
// references to their inputs plus a closure that pushes adjoints backwards,
// so a graph stays alive exactly as long as some output tensor does.
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized like data iff requires_grad
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  std::size_t size() const { return data.size(); }
};

// Value-semantics handle to a graph node. Copying a Tensor aliases the node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // Glorot-uniform leaf: values in +/- sqrt(6/(fan_in+fan_out)).
  static Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng,
                       bool requires_grad = true);
  // Uniform leaf in +/- bound.
  static Tensor uniform(Shape shape, double bound, Rng& rng, bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;

  double item() const;                     // scalar tensors only
  double at(std::size_t flat_index) const { return node_->data[flat_index]; }

  // Copy of the values with no graph history and no gradient.
  Tensor detached() const;

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& handle() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);

// ---- linear algebra ----
// a: p x q, b: q x r or q (vector). Result p x r or p.
Tensor matmul(const Tensor& a, const Tensor& b);
// Transposed-left product a^T b without materializing the transpose.
// a: m x n or m, b: m x k or m. Result n x k, k, n, or scalar.
Tensor matmul_tn(const Tensor& a, const Tensor& b);

// ---- reductions / structure ----
Tensor softmax(const Tensor& scores);  // rank-1
Tensor sum(const Tensor& x);           // -> scalar
Tensor row_mean(const Tensor& x);      // r x c -> r
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
Tensor max_over_set(const std::vector<Tensor>& vectors);  // rank-1 each
// out_j = sum_i weights_i * values[j][i], accumulated in ascending value
// order so the result is exactly invariant under column permutations.
Tensor weighted_column_sum(const Tensor& values, const Tensor& weights);

// ---- convolution ----
// input: C_in x H x W, kernels: C_out x C_in x k x k, zero padding.
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t pad);
// chw: C x H x W, bias: C broadcast over spatial positions.
Tensor add_channel_bias(const Tensor& chw, const Tensor& bias);

// ---- loss ----
Tensor cross_entropy(const Tensor& logits, std::size_t label);

// Topologically ordered record of every op node reachable from a root.
// Construction order guarantees inputs precede their consumers; backward()
// walks the list once in reverse.
class Tape {
 public:
  static Tape record(const Tensor& root);
  const std::vector<TensorNode*>& nodes() const { return order_; }
  // Zeroes all gradients in the tape, seeds the root with 1, then replays
  // each node's backward closure exactly once.
  void backward();

 private:
  std::vector<std::shared_ptr<TensorNode>> keep_alive_;
  std::vector<TensorNode*> order_;
  TensorNode* root_ = nullptr;
};

// backward on a scalar loss; fills grads of every reachable tensor.
void backward(const Tensor& loss);

// theta <- theta - lr * grad(theta), then zero grads.
void sgd_step(const std::vector<Tensor>& params, double lr);
void zero_grad(const std::vector<Tensor>& params);

}  // namespace prema
