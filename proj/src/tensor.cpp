#include "ciftts/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ciftts {

namespace {

int64_t numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw std::invalid_argument("non-positive dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

NodePtr make_node(std::vector<int64_t> shape, std::vector<double> values) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    return n;
}

bool any_requires(const std::vector<Tensor>& ts) {
    for (const auto& t : ts)
        if (t.defined() && t.requires_grad()) return true;
    return false;
}

// Attach parents + backward closure only when gradients can flow.
Tensor finish(NodePtr out, std::vector<Tensor> inputs,
              std::function<void(TensorNode&)> bwd) {
    if (any_requires(inputs)) {
        out->requires_grad = true;
        for (const auto& t : inputs) out->parents.push_back(t.node());
        out->backward_fn = std::move(bwd);
    }
    return Tensor(std::move(out));
}

}  // namespace

std::string shape_str(const std::vector<int64_t>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int64_t> shape, double value, bool requires_grad) {
    int64_t n = numel(shape);
    auto node = make_node(std::move(shape), std::vector<double>(static_cast<size_t>(n), value));
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<double> values, bool requires_grad) {
    if (numel(shape) != static_cast<int64_t>(values.size()))
        throw std::invalid_argument("value count does not match shape " + shape_str(shape));
    auto node = make_node(std::move(shape), std::move(values));
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from({1}, {v}, requires_grad);
}

double Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_str(shape()));
    return node_->values[0];
}

Tape build_tape(const Tensor& root) {
    // Iterative DFS producing reverse-postorder (topological order).
    Tape tape;
    std::unordered_set<TensorNode*> visited;
    struct Frame { TensorNode* n; size_t next_parent; };
    std::vector<Frame> stack;
    TensorNode* r = root.node().get();
    if (!visited.count(r)) {
        stack.push_back({r, 0});
        visited.insert(r);
    }
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.n->parents.size()) {
            TensorNode* p = f.n->parents[f.next_parent++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            tape.order.push_back(f.n);
            stack.pop_back();
        }
    }
    return tape;
}

void backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw std::invalid_argument("backward() requires a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;
    Tape tape = build_tape(loss);
    for (TensorNode* n : tape.order) {
        n->ensure_grad();
        std::fill(n->grad.begin(), n->grad.end(), 0.0);
    }
    loss.node()->grad[0] = 1.0;
    for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
}

// --- broadcasting binary ops -------------------------------------------

namespace {

// b broadcasts over a iff b's shape (sans leading 1s) is a trailing
// suffix of a's shape. Returns true if `small` broadcasts into `big`.
bool suffix_broadcast(const std::vector<int64_t>& big, const std::vector<int64_t>& small) {
    size_t skip = 0;
    while (skip < small.size() && small[skip] == 1) ++skip;
    size_t eff = small.size() - skip;
    if (eff > big.size()) return false;
    for (size_t i = 0; i < eff; ++i)
        if (small[skip + i] != big[big.size() - eff + i]) return false;
    return true;
}

template <typename Fwd, typename Bwd>
Tensor binary_op(const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd, const char* name) {
    const Tensor *big = &a, *small = &b;
    bool b_is_small = true;
    if (a.size() == b.size() && a.shape() == b.shape()) {
        // same shape; nothing to do
    } else if (suffix_broadcast(a.shape(), b.shape())) {
        // b broadcasts
    } else if (suffix_broadcast(b.shape(), a.shape())) {
        big = &b; small = &a; b_is_small = false;
    } else {
        throw std::invalid_argument(std::string(name) + ": incompatible shapes " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const int64_t n = big->size();
    const int64_t m = small->size();
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(static_cast<size_t>(n));
    if (&a == big) {
        for (int64_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i % m]);
    } else {
        for (int64_t i = 0; i < n; ++i) out[i] = fwd(av[i % m], bv[i]);
    }
    auto node = make_node(big->shape(), std::move(out));
    NodePtr an = a.node(), bn = b.node();
    return finish(node, {a, b},
        [an, bn, n, m, b_is_small, bwd](TensorNode& self) {
            for (int64_t i = 0; i < n; ++i) {
                int64_t ia = b_is_small ? i : i % m;
                int64_t ib = b_is_small ? i % m : i;
                double ga, gb;
                bwd(an->values[ia], bn->values[ib], self.values[i], self.grad[i], ga, gb);
                if (an->requires_grad) { an->ensure_grad(); an->grad[ia] += ga; }
                if (bn->requires_grad) { bn->ensure_grad(); bn->grad[ib] += gb; }
            }
        });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, [](double x, double y) { return x + y; },
        [](double, double, double, double g, double& ga, double& gb) { ga = g; gb = g; }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, [](double x, double y) { return x - y; },
        [](double, double, double, double g, double& ga, double& gb) { ga = g; gb = -g; }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double, double g, double& ga, double& gb) { ga = g * y; gb = g * x; }, "mul");
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, [](double x, double y) { return x / y; },
        [](double x, double y, double, double g, double& ga, double& gb) {
            ga = g / y;
            gb = -g * x / (y * y);
        }, "div");
}

// --- unary ops -----------------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd) {
    const int64_t n = a.size();
    const auto& av = a.values();
    std::vector<double> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) out[i] = fwd(av[i]);
    auto node = make_node(a.shape(), std::move(out));
    NodePtr an = a.node();
    return finish(node, {a}, [an, n, bwd](TensorNode& self) {
        an->ensure_grad();
        for (int64_t i = 0; i < n; ++i)
            an->grad[i] += bwd(an->values[i], self.values[i]) * self.grad[i];
    });
}

}  // namespace

Tensor neg(const Tensor& a) {
    return unary_op(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double c) {
    return unary_op(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
    return unary_op(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
    return unary_op(a, [](double x) { return x > 0 ? x : 0.0; },
                    [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor elu(const Tensor& a) {
    return unary_op(a, [](double x) { return x > 0 ? x : std::expm1(x); },
                    [](double x, double y) { return x > 0 ? 1.0 : y + 1.0; });
}

Tensor exp(const Tensor& a) {
    return unary_op(a, [](double x) { return std::exp(x); },
                    [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    for (double v : a.values())
        if (!(v > 0.0)) throw std::domain_error("log of non-positive value");
    return unary_op(a, [](double x) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}

Tensor tanh(const Tensor& a) {
    return unary_op(a, [](double x) { return std::tanh(x); },
                    [](double, double y) { return 1.0 - y * y; });
}

Tensor abs(const Tensor& a) {
    return unary_op(a, [](double x) { return std::fabs(x); },
                    [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
    return unary_op(a, [](double x) { return x * x; },
                    [](double x, double) { return 2.0 * x; });
}

// --- linear algebra / shape ------------------------------------------------

namespace {

// 4-way unrolled dot product: independent accumulators break the
// loop-carried dependency so the compiler can use SIMD without
// reassociation flags.
inline double dot_n(const double* __restrict a, const double* __restrict b, int64_t n) {
    constexpr int kU = 16;
    double s[kU] = {0.0};
    int64_t j = 0;
    for (; j + kU <= n; j += kU)
        for (int u = 0; u < kU; ++u) s[u] += a[j + u] * b[j + u];
    double r = 0.0;
    for (; j < n; ++j) r += a[j] * b[j];
    for (int u = 0; u < kU; ++u) r += s[u];
    return r;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw std::invalid_argument("matmul requires 2-D operands, got " +
                                    shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw std::invalid_argument("matmul inner dimension mismatch: " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(static_cast<size_t>(m * n), 0.0);
#pragma omp parallel for if (m * n * k > 65536) schedule(static)
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            const double* brow = &bv[p * n];
            double* orow = &out[i * n];
            for (int64_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    auto node = make_node({m, n}, std::move(out));
    NodePtr an = a.node(), bn = b.node();
    return finish(node, {a, b}, [an, bn, m, k, n](TensorNode& self) {
        const auto& g = self.grad;
        if (an->requires_grad) {
            an->ensure_grad();
#pragma omp parallel for if (m * n * k > 65536) schedule(static)
            for (int64_t i = 0; i < m; ++i)
                for (int64_t p = 0; p < k; ++p)
                    an->grad[i * k + p] += dot_n(&g[i * n], &bn->values[p * n], n);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
#pragma omp parallel for if (m * n * k > 65536) schedule(static)
            for (int64_t p = 0; p < k; ++p)
                for (int64_t i = 0; i < m; ++i) {
                    const double aip = an->values[i * k + p];
                    const double* grow = &g[i * n];
                    double* brow = &bn->grad[p * n];
                    for (int64_t j = 0; j < n; ++j) brow[j] += aip * grow[j];
                }
        }
    });
}

Tensor transpose(const Tensor& a) {
    if (a.ndim() != 2) throw std::invalid_argument("transpose requires a 2-D tensor");
    const int64_t r = a.dim(0), c = a.dim(1);
    std::vector<double> out(static_cast<size_t>(r * c));
    const auto& av = a.values();
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
    auto node = make_node({c, r}, std::move(out));
    NodePtr an = a.node();
    return finish(node, {a}, [an, r, c](TensorNode& self) {
        an->ensure_grad();
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) an->grad[i * c + j] += self.grad[j * r + i];
    });
}

Tensor reshape(const Tensor& a, std::vector<int64_t> shape) {
    if (numel(shape) != a.size())
        throw std::invalid_argument("reshape to " + shape_str(shape) + " from " + shape_str(a.shape()));
    auto node = make_node(std::move(shape), a.values());
    NodePtr an = a.node();
    return finish(node, {a}, [an](TensorNode& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
    if (axis != 0 && axis != 1) throw std::invalid_argument("concat axis must be 0 or 1");
    for (const auto& p : parts)
        if (p.ndim() != 2) throw std::invalid_argument("concat requires 2-D tensors");
    int64_t rows = parts[0].dim(0), cols = parts[0].dim(1);
    int64_t total = 0;
    for (const auto& p : parts) {
        if (axis == 0) {
            if (p.dim(1) != cols) throw std::invalid_argument("concat column mismatch");
            total += p.dim(0);
        } else {
            if (p.dim(0) != rows) throw std::invalid_argument("concat row mismatch");
            total += p.dim(1);
        }
    }
    std::vector<int64_t> oshape = axis == 0 ? std::vector<int64_t>{total, cols}
                                            : std::vector<int64_t>{rows, total};
    std::vector<double> out(static_cast<size_t>(oshape[0] * oshape[1]));
    std::vector<int64_t> offsets;
    int64_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        if (axis == 0) {
            std::copy(p.values().begin(), p.values().end(), out.begin() + off * cols);
            off += p.dim(0);
        } else {
            for (int64_t i = 0; i < rows; ++i)
                std::copy(&p.values()[i * p.dim(1)], &p.values()[(i + 1) * p.dim(1)],
                          out.begin() + i * total + off);
            off += p.dim(1);
        }
    }
    auto node = make_node(oshape, std::move(out));
    std::vector<NodePtr> pnodes;
    for (const auto& p : parts) pnodes.push_back(p.node());
    return finish(node, parts, [pnodes, offsets, axis, rows, total](TensorNode& self) {
        for (size_t pi = 0; pi < pnodes.size(); ++pi) {
            auto& pn = pnodes[pi];
            if (!pn->requires_grad) continue;
            pn->ensure_grad();
            int64_t off = offsets[pi];
            if (axis == 0) {
                int64_t cols = pn->shape[1];
                for (int64_t i = 0; i < pn->shape[0] * cols; ++i)
                    pn->grad[i] += self.grad[off * cols + i];
            } else {
                int64_t w = pn->shape[1];
                for (int64_t i = 0; i < rows; ++i)
                    for (int64_t j = 0; j < w; ++j)
                        pn->grad[i * w + j] += self.grad[i * total + off + j];
            }
        }
    });
}

Tensor slice_cols(const Tensor& a, int64_t start, int64_t count) {
    if (a.ndim() != 2) throw std::invalid_argument("slice_cols requires a 2-D tensor");
    const int64_t r = a.dim(0), c = a.dim(1);
    if (start < 0 || count <= 0 || start + count > c)
        throw std::invalid_argument("slice_cols out of range");
    std::vector<double> out(static_cast<size_t>(r * count));
    for (int64_t i = 0; i < r; ++i)
        std::copy(&a.values()[i * c + start], &a.values()[i * c + start + count], &out[i * count]);
    auto node = make_node({r, count}, std::move(out));
    NodePtr an = a.node();
    return finish(node, {a}, [an, r, c, start, count](TensorNode& self) {
        an->ensure_grad();
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < count; ++j)
                an->grad[i * c + start + j] += self.grad[i * count + j];
    });
}

Tensor gather_rows(const Tensor& a, const std::vector<int64_t>& idx) {
    if (a.ndim() != 2) throw std::invalid_argument("gather_rows requires a 2-D tensor");
    const int64_t r = a.dim(0), c = a.dim(1);
    for (int64_t i : idx)
        if (i < 0 || i >= r) throw std::invalid_argument("gather_rows index out of range");
    const int64_t n = static_cast<int64_t>(idx.size());
    std::vector<double> out(static_cast<size_t>(n * c));
    for (int64_t i = 0; i < n; ++i)
        std::copy(&a.values()[idx[i] * c], &a.values()[(idx[i] + 1) * c], &out[i * c]);
    auto node = make_node({n, c}, std::move(out));
    NodePtr an = a.node();
    auto indices = idx;
    return finish(node, {a}, [an, indices, c](TensorNode& self) {
        an->ensure_grad();
        for (size_t i = 0; i < indices.size(); ++i)
            for (int64_t j = 0; j < c; ++j)
                an->grad[indices[i] * c + j] += self.grad[static_cast<int64_t>(i) * c + j];
    });
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
    if (a.ndim() != 2) throw std::invalid_argument("scale_rows requires a 2-D tensor");
    const int64_t r = a.dim(0), c = a.dim(1);
    if (s.size() != r)
        throw std::invalid_argument("scale_rows: scale length " + std::to_string(s.size()) +
                                    " vs rows " + std::to_string(r));
    std::vector<double> out(static_cast<size_t>(r * c));
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out[i * c + j] = a.values()[i * c + j] * s.values()[i];
    auto node = make_node({r, c}, std::move(out));
    NodePtr an = a.node(), sn = s.node();
    return finish(node, {a, s}, [an, sn, r, c](TensorNode& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j)
                    an->grad[i * c + j] += self.grad[i * c + j] * sn->values[i];
        }
        if (sn->requires_grad) {
            sn->ensure_grad();
            for (int64_t i = 0; i < r; ++i) {
                double acc = 0.0;
                for (int64_t j = 0; j < c; ++j) acc += self.grad[i * c + j] * an->values[i * c + j];
                sn->grad[i] += acc;
            }
        }
    });
}

// --- reductions ----------------------------------------------------------

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    auto node = make_node({1}, {acc});
    NodePtr an = a.node();
    return finish(node, {a}, [an](TensorNode& self) {
        an->ensure_grad();
        for (auto& g : an->grad) g += self.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.size());
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    auto node = make_node({1}, {acc * inv});
    NodePtr an = a.node();
    return finish(node, {a}, [an, inv](TensorNode& self) {
        an->ensure_grad();
        for (auto& g : an->grad) g += self.grad[0] * inv;
    });
}

namespace {

// Treat a 1-D or 2-D tensor as `slices` independent runs of `len`
// contiguous-with-stride elements reduced along `axis`.
struct AxisView {
    int64_t slices, len, slice_stride, elem_stride;
};

AxisView axis_view(const Tensor& a, int axis) {
    if (a.ndim() == 1) {
        if (axis != 0) throw std::invalid_argument("axis out of range for 1-D tensor");
        return {1, a.dim(0), 0, 1};
    }
    if (a.ndim() != 2) throw std::invalid_argument("axis reductions support 1-D/2-D tensors only");
    const int64_t r = a.dim(0), c = a.dim(1);
    if (axis == 0) return {c, r, 1, c};   // reduce down columns
    if (axis == 1) return {r, c, c, 1};   // reduce across rows
    throw std::invalid_argument("axis out of range for 2-D tensor");
}

}  // namespace

std::pair<Tensor, Tensor> moments(const Tensor& a, int axis) {
    AxisView v = axis_view(a, axis);
    const auto& av = a.values();
    std::vector<double> mu(static_cast<size_t>(v.slices)), var(static_cast<size_t>(v.slices));
    for (int64_t s = 0; s < v.slices; ++s) {
        double m = 0.0;
        for (int64_t i = 0; i < v.len; ++i) m += av[s * v.slice_stride + i * v.elem_stride];
        m /= static_cast<double>(v.len);
        double q = 0.0;
        for (int64_t i = 0; i < v.len; ++i) {
            double d = av[s * v.slice_stride + i * v.elem_stride] - m;
            q += d * d;
        }
        mu[s] = m;
        var[s] = q / static_cast<double>(v.len);
    }
    NodePtr an = a.node();
    auto mu_node = make_node({v.slices}, std::move(mu));
    Tensor mean_t = finish(mu_node, {a}, [an, v](TensorNode& self) {
        an->ensure_grad();
        const double inv = 1.0 / static_cast<double>(v.len);
        for (int64_t s = 0; s < v.slices; ++s)
            for (int64_t i = 0; i < v.len; ++i)
                an->grad[s * v.slice_stride + i * v.elem_stride] += self.grad[s] * inv;
    });
    auto var_node = make_node({v.slices}, std::move(var));
    std::vector<double> mu_copy = mu_node->values;
    Tensor var_t = finish(var_node, {a}, [an, v, mu_copy](TensorNode& self) {
        an->ensure_grad();
        const double inv = 2.0 / static_cast<double>(v.len);
        for (int64_t s = 0; s < v.slices; ++s)
            for (int64_t i = 0; i < v.len; ++i) {
                double x = an->values[s * v.slice_stride + i * v.elem_stride];
                an->grad[s * v.slice_stride + i * v.elem_stride] +=
                    self.grad[s] * inv * (x - mu_copy[s]);
            }
    });
    return {mean_t, var_t};
}

Tensor normalize(const Tensor& a, int axis, double eps) {
    AxisView v = axis_view(a, axis);
    const auto& av = a.values();
    std::vector<double> out(av.size());
    std::vector<double> mu(static_cast<size_t>(v.slices)), sigma(static_cast<size_t>(v.slices));
    for (int64_t s = 0; s < v.slices; ++s) {
        double m = 0.0;
        for (int64_t i = 0; i < v.len; ++i) m += av[s * v.slice_stride + i * v.elem_stride];
        m /= static_cast<double>(v.len);
        double q = 0.0;
        for (int64_t i = 0; i < v.len; ++i) {
            double d = av[s * v.slice_stride + i * v.elem_stride] - m;
            q += d * d;
        }
        double sd = std::sqrt(q / static_cast<double>(v.len) + eps);
        mu[s] = m;
        sigma[s] = sd;
        for (int64_t i = 0; i < v.len; ++i) {
            size_t idx = static_cast<size_t>(s * v.slice_stride + i * v.elem_stride);
            out[idx] = (av[idx] - m) / sd;
        }
    }
    auto node = make_node(a.shape(), std::move(out));
    NodePtr an = a.node();
    return finish(node, {a}, [an, v, sigma](TensorNode& self) {
        an->ensure_grad();
        const double inv_len = 1.0 / static_cast<double>(v.len);
        for (int64_t s = 0; s < v.slices; ++s) {
            double gsum = 0.0, gysum = 0.0;
            for (int64_t i = 0; i < v.len; ++i) {
                size_t idx = static_cast<size_t>(s * v.slice_stride + i * v.elem_stride);
                gsum += self.grad[idx];
                gysum += self.grad[idx] * self.values[idx];
            }
            for (int64_t i = 0; i < v.len; ++i) {
                size_t idx = static_cast<size_t>(s * v.slice_stride + i * v.elem_stride);
                an->grad[idx] += (self.grad[idx] - inv_len * gsum -
                                  self.values[idx] * inv_len * gysum) / sigma[s];
            }
        }
    });
}

Tensor softmax(const Tensor& a, int axis) {
    AxisView v = axis_view(a, axis);
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (int64_t s = 0; s < v.slices; ++s) {
        double mx = -1e300;
        for (int64_t i = 0; i < v.len; ++i)
            mx = std::max(mx, av[s * v.slice_stride + i * v.elem_stride]);
        double z = 0.0;
        for (int64_t i = 0; i < v.len; ++i) {
            size_t idx = static_cast<size_t>(s * v.slice_stride + i * v.elem_stride);
            out[idx] = std::exp(av[idx] - mx);
            z += out[idx];
        }
        for (int64_t i = 0; i < v.len; ++i)
            out[static_cast<size_t>(s * v.slice_stride + i * v.elem_stride)] /= z;
    }
    auto node = make_node(a.shape(), std::move(out));
    NodePtr an = a.node();
    return finish(node, {a}, [an, v](TensorNode& self) {
        an->ensure_grad();
        for (int64_t s = 0; s < v.slices; ++s) {
            double dot = 0.0;
            for (int64_t i = 0; i < v.len; ++i) {
                size_t idx = static_cast<size_t>(s * v.slice_stride + i * v.elem_stride);
                dot += self.grad[idx] * self.values[idx];
            }
            for (int64_t i = 0; i < v.len; ++i) {
                size_t idx = static_cast<size_t>(s * v.slice_stride + i * v.elem_stride);
                an->grad[idx] += self.values[idx] * (self.grad[idx] - dot);
            }
        }
    });
}

// --- conv / pool / dropout -------------------------------------------------

Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
              int64_t stride, int64_t pad_left, int64_t pad_right) {
    if (x.ndim() != 2) throw std::invalid_argument("conv1d input must be C_in×W, got " + shape_str(x.shape()));
    if (kernel.ndim() != 3)
        throw std::invalid_argument("conv1d kernel must be C_out×C_in×K, got " + shape_str(kernel.shape()));
    const int64_t cin = x.dim(0), w = x.dim(1);
    const int64_t cout = kernel.dim(0), kcin = kernel.dim(1), k = kernel.dim(2);
    if (cin != kcin)
        throw std::invalid_argument("conv1d channel mismatch: input " + shape_str(x.shape()) +
                                    " vs kernel " + shape_str(kernel.shape()));
    if (stride < 1) throw std::invalid_argument("conv1d stride must be >= 1");
    const int64_t wp = w + pad_left + pad_right;
    if (k > wp)
        throw std::invalid_argument("conv1d kernel width " + std::to_string(k) +
                                    " exceeds padded input width " + std::to_string(wp));
    const int64_t wout = (wp - k) / stride + 1;
    const bool has_bias = bias.defined();
    if (has_bias && bias.size() != cout)
        throw std::invalid_argument("conv1d bias length mismatch");

    const auto& xv = x.values();
    const auto& kv = kernel.values();
    // im2col: patches[ow][ci*k + kk] so every output element is one long
    // contiguous dot product (short kernel loops vectorize poorly).
    const int64_t pk = cin * k;
    auto patches = std::make_shared<std::vector<double>>(static_cast<size_t>(wout * pk), 0.0);
    {
        double* pd = patches->data();
        for (int64_t ow = 0; ow < wout; ++ow) {
            const int64_t base = ow * stride - pad_left;
            const int64_t lo = std::max<int64_t>(0, -base);
            const int64_t hi = std::min<int64_t>(k, w - base);
            double* prow = pd + ow * pk;
            for (int64_t ci = 0; ci < cin; ++ci) {
                const double* xrow = &xv[ci * w + base];
                double* pr = prow + ci * k;
                for (int64_t kk = lo; kk < hi; ++kk) pr[kk] = xrow[kk];
            }
        }
    }
    std::vector<double> out(static_cast<size_t>(cout * wout));
#pragma omp parallel for if (cout * wout * pk > 32768) schedule(static)
    for (int64_t co = 0; co < cout; ++co) {
        const double* krow = &kv[co * pk];
        const double b0 = has_bias ? bias.values()[co] : 0.0;
        for (int64_t ow = 0; ow < wout; ++ow) {
            const double* prow = patches->data() + ow * pk;
            out[co * wout + ow] = dot_n(krow, prow, pk) + b0;
        }
    }
    auto node = make_node({cout, wout}, std::move(out));
    NodePtr xn = x.node(), kn = kernel.node(), bn = has_bias ? bias.node() : nullptr;
    std::vector<Tensor> inputs = {x, kernel};
    if (has_bias) inputs.push_back(bias);
    return finish(node, inputs,
        [xn, kn, bn, patches, cin, w, cout, k, pk, wout, stride, pad_left](TensorNode& self) {
            const auto& g = self.grad;
            if (kn->requires_grad) {
                kn->ensure_grad();
#pragma omp parallel for if (cout * wout * pk > 32768) schedule(static)
                for (int64_t co = 0; co < cout; ++co) {
                    double* krow = &kn->grad[co * pk];
                    for (int64_t ow = 0; ow < wout; ++ow) {
                        const double go = g[co * wout + ow];
                        if (go == 0.0) continue;
                        const double* prow = patches->data() + ow * pk;
                        for (int64_t j = 0; j < pk; ++j) krow[j] += go * prow[j];
                    }
                }
            }
            if (bn && bn->requires_grad) {
                bn->ensure_grad();
                for (int64_t co = 0; co < cout; ++co) {
                    double acc = 0.0;
                    for (int64_t ow = 0; ow < wout; ++ow) acc += g[co * wout + ow];
                    bn->grad[co] += acc;
                }
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                std::vector<double> pgrad(static_cast<size_t>(wout * pk), 0.0);
                for (int64_t co = 0; co < cout; ++co) {
                    const double* krow = &kn->values[co * pk];
                    for (int64_t ow = 0; ow < wout; ++ow) {
                        const double go = g[co * wout + ow];
                        if (go == 0.0) continue;
                        double* prow = pgrad.data() + ow * pk;
                        for (int64_t j = 0; j < pk; ++j) prow[j] += go * krow[j];
                    }
                }
                // col2im scatter-add back onto the unpadded input
                for (int64_t ow = 0; ow < wout; ++ow) {
                    const int64_t base = ow * stride - pad_left;
                    const int64_t lo = std::max<int64_t>(0, -base);
                    const int64_t hi = std::min<int64_t>(k, w - base);
                    const double* prow = pgrad.data() + ow * pk;
                    for (int64_t ci = 0; ci < cin; ++ci) {
                        double* xgrow = &xn->grad[ci * w + base];
                        const double* pr = prow + ci * k;
                        for (int64_t kk = lo; kk < hi; ++kk) xgrow[kk] += pr[kk];
                    }
                }
            }
        });
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
              int64_t stride, Padding mode) {
    int64_t k = kernel.dim(2);
    if (mode == Padding::kValid) return conv1d(x, kernel, bias, stride, 0, 0);
    // Same padding for stride 1: output width == input width.
    int64_t total = k - 1;
    return conv1d(x, kernel, bias, stride, total / 2, total - total / 2);
}

Tensor avg_pool1d(const Tensor& x, int64_t kernel, int64_t stride) {
    if (x.ndim() != 2) throw std::invalid_argument("avg_pool1d input must be 2-D");
    const int64_t c = x.dim(0), w = x.dim(1);
    if (kernel > w) throw std::invalid_argument("avg_pool1d kernel wider than input");
    const int64_t wout = (w - kernel) / stride + 1;
    std::vector<double> out(static_cast<size_t>(c * wout));
    const double inv = 1.0 / static_cast<double>(kernel);
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t ow = 0; ow < wout; ++ow) {
            double acc = 0.0;
            for (int64_t kk = 0; kk < kernel; ++kk) acc += x.values()[ci * w + ow * stride + kk];
            out[ci * wout + ow] = acc * inv;
        }
    auto node = make_node({c, wout}, std::move(out));
    NodePtr xn = x.node();
    return finish(node, {x}, [xn, c, w, wout, kernel, stride, inv](TensorNode& self) {
        xn->ensure_grad();
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t ow = 0; ow < wout; ++ow) {
                const double go = self.grad[ci * wout + ow] * inv;
                for (int64_t kk = 0; kk < kernel; ++kk) xn->grad[ci * w + ow * stride + kk] += go;
            }
    });
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng, bool training) {
    if (!training || p <= 0.0) return x;
    if (p >= 1.0) throw std::invalid_argument("dropout probability must be < 1");
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double keep = 1.0 - p;
    std::vector<double> mask(x.values().size());
    for (auto& m : mask) m = uni(rng) < p ? 0.0 : 1.0 / keep;
    std::vector<double> out(x.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * mask[i];
    auto node = make_node(x.shape(), std::move(out));
    NodePtr xn = x.node();
    return finish(node, {x}, [xn, mask](TensorNode& self) {
        xn->ensure_grad();
        for (size_t i = 0; i < mask.size(); ++i) xn->grad[i] += self.grad[i] * mask[i];
    });
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double h, int64_t max_coords, std::mt19937_64* rng) {
    if (!(h > 0.0) || h > 1e-2) throw std::invalid_argument("grad_check: h must lie in (0, 1e-2]");
    x.set_requires_grad(true);
    Tensor loss = f(x);
    backward(loss);
    std::vector<double> analytic = x.grad();

    std::vector<int64_t> coords;
    const int64_t n = x.size();
    if (max_coords > 0 && max_coords < n) {
        if (!rng) throw std::invalid_argument("grad_check: coordinate sampling requires an rng");
        std::vector<int64_t> all(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) all[i] = i;
        std::shuffle(all.begin(), all.end(), *rng);
        coords.assign(all.begin(), all.begin() + max_coords);
    } else {
        coords.resize(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) coords[i] = i;
    }

    double worst = 0.0;
    for (int64_t i : coords) {
        const double orig = x.values()[i];
        x.values()[i] = orig + h;
        const double up = f(x).item();
        x.values()[i] = orig - h;
        const double down = f(x).item();
        x.values()[i] = orig;
        const double fd = (up - down) / (2.0 * h);
        const double denom = std::max({std::fabs(analytic[i]), std::fabs(fd), 1e-8});
        worst = std::max(worst, std::fabs(analytic[i] - fd) / denom);
    }
    return worst;
}

}  // namespace ciftts
