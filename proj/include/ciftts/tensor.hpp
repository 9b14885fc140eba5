#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace ciftts {

// Dense double-precision tensor with reverse-mode autodiff.
//
// Each op builds a graph node that records its parents and a closure
// propagating the output gradient back to them. backward() materializes
// the tape (reverse topological order over the recorded graph), zeroes
// every gradient reachable from the loss and then accumulates fresh
// ones, so calling backward() twice on the same loss yields identical
// gradients (idempotent by re-derivation, not by caching).

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

struct TensorNode {
    std::vector<int64_t> shape;
    std::vector<double> values;
    std::vector<double> grad;  // sized lazily, same length as values
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(TensorNode&)> backward_fn;

    int64_t size() const { return static_cast<int64_t>(values.size()); }
    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<int64_t> shape, double value, bool requires_grad = false);
    static Tensor from(std::vector<int64_t> shape, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int64_t>& shape() const { return node_->shape; }
    int64_t size() const { return node_->size(); }
    int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }

    std::vector<double>& values() { return node_->values; }
    const std::vector<double>& values() const { return node_->values; }
    std::vector<double>& grad() { node_->ensure_grad(); return node_->grad; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }

    double item() const;                 // scalar tensors only
    double at(int64_t r, int64_t c) const {
        return node_->values[static_cast<size_t>(r * node_->shape[1] + c)];
    }

    NodePtr node() const { return node_; }

private:
    NodePtr node_;
};

// The materialized reverse pass order: every node's inputs precede it,
// and the backward traversal visits each node exactly once.
struct Tape {
    std::vector<TensorNode*> order;
};

Tape build_tape(const Tensor& root);
void backward(const Tensor& loss);

// --- elementwise / arithmetic ---------------------------------------
// add/sub/mul/div broadcast the smaller operand across leading
// dimensions only: its shape must be a trailing suffix of the larger
// operand's shape (a scalar broadcasts everywhere).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

Tensor relu(const Tensor& a);
Tensor elu(const Tensor& a);     // alpha = 1
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);     // domain error on non-positive entries
Tensor tanh(const Tensor& a);
Tensor abs(const Tensor& a);     // subgradient 0 at 0
Tensor square(const Tensor& a);

// --- shape / linear algebra ------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);   // 2-D only
Tensor transpose(const Tensor& a);                 // 2-D
Tensor reshape(const Tensor& a, std::vector<int64_t> shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);  // 2-D
Tensor slice_cols(const Tensor& a, int64_t start, int64_t count);
Tensor gather_rows(const Tensor& a, const std::vector<int64_t>& idx);
Tensor scale_rows(const Tensor& a, const Tensor& s);  // a: R×C, s: length R

// --- reductions -------------------------------------------------------
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor softmax(const Tensor& a, int axis);  // 1-D (axis 0) or 2-D
// Population statistics (divide by count) reduced along `axis` of a
// 1-D or 2-D tensor; both outputs are differentiable.
std::pair<Tensor, Tensor> moments(const Tensor& a, int axis);
// Fused (x - mean) / sqrt(var + eps) along `axis`; per-slice stats.
Tensor normalize(const Tensor& a, int axis, double eps);

// --- neural-net specifics ----------------------------------------------
enum class Padding { kValid, kSame };

// x: C_in×W, kernel: C_out×C_in×K, bias: C_out (may be undefined).
// Cross-correlation; W' = floor((W + pad_total - K)/stride) + 1.
Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
              int64_t stride, int64_t pad_left, int64_t pad_right);
Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
              int64_t stride, Padding mode);

Tensor avg_pool1d(const Tensor& x, int64_t kernel, int64_t stride);  // over axis 1
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng, bool training);

// Max over coordinates of |analytic - central difference| /
// max(|analytic|, |fd|, 1e-8). If max_coords > 0, a random subset of
// coordinates of that size is checked (rng required).
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double h, int64_t max_coords = -1,
                  std::mt19937_64* rng = nullptr);

std::string shape_str(const std::vector<int64_t>& s);

}  // namespace ciftts
