#ifndef ASCNET_TENSOR_HPP
#define ASCNET_TENSOR_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ascnet/error.hpp"

namespace ascnet::ag {

template <typename Scalar>
using VecX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

/// Dense tensor extents: rank 0 (scalar), 1 (vector), 2 (batch x features)
/// or 3 (batch x channels x length). Storage is flat row-major with the
/// last axis fastest.
struct Shape {
  std::array<Eigen::Index, 3> d{1, 1, 1};
  int rank = 0;

  static Shape scalar() { return Shape{}; }
  static Shape vec(Eigen::Index n) { return Shape{{n, 1, 1}, 1}; }
  static Shape mat(Eigen::Index b, Eigen::Index f) { return Shape{{b, f, 1}, 2}; }
  static Shape bcn(Eigen::Index b, Eigen::Index c, Eigen::Index n) {
    return Shape{{b, c, n}, 3};
  }

  Eigen::Index size() const { return d[0] * d[1] * d[2]; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::string s = "[";
    for (int i = 0; i < rank; ++i)
      s += (i ? "," : "") + std::to_string(d[i]);
    return s + "]";
  }
};

template <typename Scalar>
struct Node;

/// One recorded differentiable operation. `backward` reads the output
/// node's grad and accumulates into the input nodes' grads; it is released
/// once run, so a tape can be walked only once.
template <typename Scalar>
struct OpRecord {
  const char* name = "";
  std::vector<std::shared_ptr<Node<Scalar>>> inputs;
  std::function<void(Node<Scalar>&)> backward;
  bool consumed = false;
};

template <typename Scalar>
struct Node {
  Shape shape;
  VecX<Scalar> value;
  VecX<Scalar> grad;  // allocated lazily by backward()
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::unique_ptr<OpRecord<Scalar>> op;

  VecX<Scalar>& ensure_grad() {
    if (grad.size() != value.size()) grad = VecX<Scalar>::Zero(value.size());
    return grad;
  }
};

namespace detail {
inline std::atomic<std::uint64_t> g_seq{1};
inline thread_local int g_no_grad_depth = 0;

inline bool finite_checks_enabled() {
  static const bool on = [] {
    const char* e = std::getenv("ASCNET_CHECK_FINITE");
    return e != nullptr && e[0] == '1';
  }();
  return on;
}
}  // namespace detail

/// While alive on a thread, ops are evaluated without recording; use for
/// inference passes that never need gradients.
struct NoGrad {
  NoGrad() { ++detail::g_no_grad_depth; }
  ~NoGrad() { --detail::g_no_grad_depth; }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;
};

/// Value-semantics handle onto a graph node. Copies alias the same node.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& s, bool requires_grad = false) {
    return from_data(s, VecX<Scalar>::Zero(s.size()), requires_grad);
  }
  static Tensor constant(const Shape& s, Scalar v,
                         bool requires_grad = false) {
    return from_data(s, VecX<Scalar>::Constant(s.size(), v), requires_grad);
  }
  static Tensor from_data(const Shape& s, VecX<Scalar> data,
                          bool requires_grad = false) {
    if (data.size() != s.size())
      raise(errc::shape_mismatch, "data size " + std::to_string(data.size()) +
                                      " does not fill shape " + s.str());
    auto n = std::make_shared<Node<Scalar>>();
    n->shape = s;
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    n->seq = detail::g_seq.fetch_add(1, std::memory_order_relaxed);
    return Tensor(std::move(n));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  Eigen::Index size() const { return node_->value.size(); }
  VecX<Scalar>& value() { return node_->value; }
  const VecX<Scalar>& value() const { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == size(); }
  const VecX<Scalar>& grad() const {
    if (!has_grad())
      raise(errc::invalid_argument,
            "tensor has no gradient; run backward() first");
    return node_->grad;
  }
  Scalar item() const {
    if (size() != 1) raise(errc::non_scalar_loss, "item() on " + shape().str());
    return node_->value[0];
  }

  std::shared_ptr<Node<Scalar>> node() const { return node_; }

  explicit Tensor(std::shared_ptr<Node<Scalar>> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<Node<Scalar>> node_;
};

/// Records an op node. Inputs that participate in differentiation make the
/// output participate too; under NoGrad, or when no input participates,
/// nothing is recorded and the tape stays empty.
template <typename Scalar>
Tensor<Scalar> make_op(const char* name, const Shape& shape,
                       VecX<Scalar> value,
                       std::vector<Tensor<Scalar>> inputs,
                       std::function<void(Node<Scalar>&)> backward) {
  if (detail::finite_checks_enabled() && !value.isFinite().all())
    raise(errc::invalid_argument,
          std::string("non-finite values in output of op '") + name + "'");
  bool track = detail::g_no_grad_depth == 0;
  if (track) {
    track = false;
    for (const auto& in : inputs)
      if (in.requires_grad() || in.node()->op) track = true;
  }
  Tensor<Scalar> out = Tensor<Scalar>::from_data(shape, std::move(value));
  if (track) {
    auto rec = std::make_unique<OpRecord<Scalar>>();
    rec->name = name;
    for (const auto& in : inputs) rec->inputs.push_back(in.node());
    rec->backward = std::move(backward);
    out.node()->op = std::move(rec);
  }
  return out;
}

/// The recorded operations reachable from one output, in topological
/// (creation) order. Built on demand; running it consumes the closures.
template <typename Scalar>
class GradTape {
 public:
  static GradTape trace(const Tensor<Scalar>& root) {
    GradTape tape;
    tape.root_ = root.node();
    std::vector<std::shared_ptr<Node<Scalar>>> stack{tape.root_};
    std::vector<Node<Scalar>*> seen;
    auto mark = [&seen](Node<Scalar>* n) {
      for (auto* s : seen)
        if (s == n) return false;
      seen.push_back(n);
      return true;
    };
    while (!stack.empty()) {
      auto n = stack.back();
      stack.pop_back();
      if (!mark(n.get())) continue;
      tape.nodes_.push_back(n);
      if (n->op) {
        if (n->op->consumed)
          raise(errc::tape_consumed,
                std::string("op '") + n->op->name +
                    "' was already differentiated");
        for (const auto& in : n->op->inputs) stack.push_back(in);
      }
    }
    std::sort(tape.nodes_.begin(), tape.nodes_.end(),
              [](const auto& a, const auto& b) { return a->seq < b->seq; });
    return tape;
  }

  std::size_t n_ops() const {
    std::size_t k = 0;
    for (const auto& n : nodes_)
      if (n->op) ++k;
    return k;
  }

  /// Seeds d(root)/d(root) = 1 and accumulates gradients in reverse
  /// topological order, exactly once per op.
  void run() {
    if (root_->value.size() != 1)
      raise(errc::non_scalar_loss,
            "backward needs a scalar, got " + root_->shape.str());
    for (const auto& n : nodes_) n->ensure_grad().setZero();
    root_->grad[0] = Scalar(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<Scalar>& n = **it;
      if (!n.op) continue;
      n.op->backward(n);
      n.op->consumed = true;
      n.op->backward = nullptr;  // frees saved intermediates
    }
  }

 private:
  std::shared_ptr<Node<Scalar>> root_;
  std::vector<std::shared_ptr<Node<Scalar>>> nodes_;  // ascending seq
};

/// Reverse-mode sweep from a scalar loss. Gradients of every node reachable
/// from the loss are overwritten (not accumulated across calls); leaves
/// keep their grads afterwards. A second sweep through the same ops raises
/// TapeConsumed.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  auto tape = GradTape<Scalar>::trace(loss);
  tape.run();
}

}  // namespace ascnet::ag

#endif  // ASCNET_TENSOR_HPP
