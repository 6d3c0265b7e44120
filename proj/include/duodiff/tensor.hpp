#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace duodiff {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

enum class Op {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kMatmul,
  kConv2d,
  kUpsample2x,
  kAvgPool2x,
  kGroupNorm,
  kSiLU,
  kSigmoid,
  kLog,
  kAbs,
  kSoftmax,
  kSum,
  kMean,
  kReshape,
  kConcat,
  kSlice,
  kScale,
};

const char* op_name(Op op);

// Toggle for graph recording. Ops executed while disabled produce
// constant results with no inputs attached (inference mode).
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }
  bool prev_;
};

template <typename S>
struct Node {
  Op op = Op::kLeaf;
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // allocated on demand, same length as value
  bool requires_grad = false;
  uint64_t seq = 0;  // creation order; backward runs in exact reverse
  std::vector<std::shared_ptr<Node<S>>> inputs;
  // op attributes
  int64_t i0 = 0, i1 = 0, i2 = 0;
  double f0 = 0.0;
  std::vector<S> saved;  // op-specific intermediates (e.g. norm stats)

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

// Shared handle to a graph node. Copying a Tensor copies the handle.
template <typename S>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<S>> n) : n_(std::move(n)) {}

  static Tensor constant(Shape shape, std::vector<S> data);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, S v);
  static Tensor scalar(S v) { return full({1}, v); }
  // A leaf that participates in training: receives gradients.
  static Tensor parameter(Shape shape, std::vector<S> data);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int64_t numel() const { return static_cast<int64_t>(n_->value.size()); }
  int64_t dim(int i) const { return n_->shape[i]; }
  int ndim() const { return static_cast<int>(n_->shape.size()); }

  std::span<const S> data() const { return n_->value; }
  std::span<S> mutable_data() { return n_->value; }
  std::span<const S> grad() const { return n_->grad; }
  bool has_grad() const { return !n_->grad.empty(); }
  bool requires_grad() const { return n_->requires_grad; }
  void zero_grad() { n_->grad.assign(n_->value.size(), S(0)); }

  S item() const;

  std::shared_ptr<Node<S>> node() const { return n_; }

 private:
  std::shared_ptr<Node<S>> n_;
};

struct OpAttrs {
  int64_t i0 = 0, i1 = 0, i2 = 0;
  double f0 = 0.0;
  Shape shape;
};

// --- operation set ---
template <typename S> Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b, bool trans_a = false,
                 bool trans_b = false);
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias,
                 int stride = 1, int pad = 0);
template <typename S> Tensor<S> upsample_nearest2x(const Tensor<S>& x);
template <typename S> Tensor<S> avgpool2x(const Tensor<S>& x);
template <typename S>
Tensor<S> group_norm(const Tensor<S>& x, const Tensor<S>& gamma,
                     const Tensor<S>& beta, int groups, double eps = 1e-5);
template <typename S> Tensor<S> silu(const Tensor<S>& x);
template <typename S> Tensor<S> sigmoid(const Tensor<S>& x);
template <typename S> Tensor<S> log(const Tensor<S>& x);
template <typename S> Tensor<S> abs(const Tensor<S>& x);
template <typename S> Tensor<S> softmax_lastdim(const Tensor<S>& x);
template <typename S> Tensor<S> sum(const Tensor<S>& x);
template <typename S> Tensor<S> mean(const Tensor<S>& x);
template <typename S> Tensor<S> reshape(const Tensor<S>& x, Shape shape);
template <typename S>
Tensor<S> concat(const Tensor<S>& a, const Tensor<S>& b, int axis);
template <typename S>
Tensor<S> concat_all(const std::vector<Tensor<S>>& xs, int axis);
template <typename S>
Tensor<S> slice(const Tensor<S>& x, int axis, int64_t start, int64_t len);
template <typename S> Tensor<S> scale(const Tensor<S>& x, S c);

// Name-keyed dispatcher over the same op set.
template <typename S>
Tensor<S> forward_op(const std::string& kind, const std::vector<Tensor<S>>& inputs,
                     const OpAttrs& attrs = {});

// Reverse-mode pass from a scalar loss. Gradients accumulate into the
// grad buffers of every requires_grad leaf reachable from the loss; the
// interior of the graph is released afterwards unless retain_graph.
template <typename S>
void backward(const Tensor<S>& loss, bool retain_graph = false);

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace duodiff
