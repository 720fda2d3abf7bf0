#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "w2vbert/rng.hpp"

namespace w2v {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

struct TensorError : std::runtime_error {
    explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void tensor_fail(const std::string& op, const std::string& msg) {
    throw TensorError(op + ": " + msg);
}

// One node of the computation graph. Nodes hold the forward value, the
// (lazily allocated) gradient, and a closure that pushes the node's
// gradient into its parents.
template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backprop;

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), T(0));
    }
};

template <typename T>
class Tensor {
  public:
    Tensor() : node_(std::make_shared<TensorNode<T>>()) {}

    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
        : node_(std::make_shared<TensorNode<T>>()) {
        if (numel(shape) != (int64_t)data.size())
            tensor_fail("Tensor", "shape " + shape_str(shape) + " does not match data length " +
                                      std::to_string(data.size()));
        node_->shape = std::move(shape);
        node_->value = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::vector<T> d((size_t)numel(shape), T(0));
        return Tensor(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor full(Shape shape, T v, bool requires_grad = false) {
        std::vector<T> d((size_t)numel(shape), v);
        return Tensor(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor scalar(T v, bool requires_grad = false) {
        return Tensor(Shape{}, std::vector<T>{v}, requires_grad);
    }

    static Tensor randn(Shape shape, Rng& rng, T stddev = T(1), bool requires_grad = false) {
        std::vector<T> d((size_t)numel(shape));
        for (auto& x : d) x = (T)(stddev * rng.normal());
        return Tensor(std::move(shape), std::move(d), requires_grad);
    }

    const Shape& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[(size_t)i]; }
    int rank() const { return (int)node_->shape.size(); }
    int64_t size() const { return (int64_t)node_->value.size(); }

    const std::vector<T>& values() const { return node_->value; }
    // In-place mutation is reserved for optimizer updates on leaf tensors.
    std::vector<T>& values_mut() { return node_->value; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool b) { node_->requires_grad = b; }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<T>& grad() const {
        if (node_->grad.empty())
            tensor_fail("grad", "no gradient present (backward not run or tensor unreachable)");
        return node_->grad;
    }
    void clear_grad() { node_->grad.clear(); }

    T item() const {
        if (size() != 1) tensor_fail("item", "tensor has " + std::to_string(size()) + " elements");
        return node_->value[0];
    }

    T at(int i) const { return node_->value[(size_t)i]; }
    T at(int i, int j) const { return node_->value[(size_t)(i * dim(1) + j)]; }

    std::shared_ptr<TensorNode<T>> node() const { return node_; }

  private:
    explicit Tensor(std::shared_ptr<TensorNode<T>> n) : node_(std::move(n)) {}
    std::shared_ptr<TensorNode<T>> node_;

    template <typename U>
    friend Tensor<U> make_op(const std::string&, Shape, std::vector<U>, std::vector<Tensor<U>>,
                             std::function<void(TensorNode<U>&)>);
};

template <typename T>
Tensor<T> make_op(const std::string& op, Shape shape, std::vector<T> value,
                  std::vector<Tensor<T>> inputs, std::function<void(TensorNode<T>&)> backprop) {
    for (const T& v : value)
        if (!std::isfinite((double)v)) tensor_fail(op, "numeric overflow: non-finite output value");
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    bool any_grad = false;
    for (const auto& in : inputs) any_grad = any_grad || in.requires_grad();
    if (any_grad) {
        node->requires_grad = true;
        for (const auto& in : inputs) node->parents.push_back(in.node());
        node->backprop = std::move(backprop);
    }
    return Tensor<T>(std::move(node));
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

template <typename T>
void backward(const Tensor<T>& loss) {
    if (loss.size() != 1) tensor_fail("backward", "loss must be scalar, got " + shape_str(loss.shape()));
    if (!loss.requires_grad())
        tensor_fail("backward", "loss is not connected to any tensor requiring grad");
    if (loss.has_grad()) tensor_fail("backward", "backward already run on this loss; reset grads first");

    // Topological order via iterative post-order DFS over parents.
    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> seen;
    std::vector<std::pair<TensorNode<T>*, size_t>> stack;
    stack.push_back({loss.node().get(), 0});
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorNode<T>* p = node->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode<T>* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// primitives
// ---------------------------------------------------------------------------

template <typename T>
inline void check_same_shape(const std::string& op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        tensor_fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape("add", a, b);
    std::vector<T> out(a.values());
    for (int64_t i = 0; i < a.size(); ++i) out[(size_t)i] += b.values()[(size_t)i];
    auto an = a.node(), bn = b.node();
    return make_op<T>("add", a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<T>& n) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i];
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape("sub", a, b);
    std::vector<T> out(a.values());
    for (int64_t i = 0; i < a.size(); ++i) out[(size_t)i] -= b.values()[(size_t)i];
    auto an = a.node(), bn = b.node();
    return make_op<T>("sub", a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<T>& n) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] -= n.grad[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape("mul", a, b);
    std::vector<T> out(a.values());
    for (int64_t i = 0; i < a.size(); ++i) out[(size_t)i] *= b.values()[(size_t)i];
    auto an = a.node(), bn = b.node();
    return make_op<T>("mul", a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<T>& n) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i] * an->value[i];
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    std::vector<T> out(a.values());
    for (auto& v : out) v *= c;
    auto an = a.node();
    return make_op<T>("scale", a.shape(), std::move(out), {a}, [an, c](TensorNode<T>& n) {
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * c;
    });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    std::vector<T> out(a.values());
    for (auto& v : out) v += c;
    auto an = a.node();
    return make_op<T>("add_scalar", a.shape(), std::move(out), {a}, [an](TensorNode<T>& n) {
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
    });
}

// (m,k) x (k,n) -> (m,n)
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        tensor_fail("matmul", "incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n2 = b.dim(1);
    std::vector<T> out((size_t)m * n2, T(0));
    const T* A = a.values().data();
    const T* B = b.values().data();
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            T av = A[i * k + p];
            if (av == T(0)) continue;
            const T* brow = B + p * n2;
            T* orow = out.data() + i * n2;
            for (int j = 0; j < n2; ++j) orow[j] += av * brow[j];
        }
    auto an = a.node(), bn = b.node();
    return make_op<T>("matmul", Shape{m, n2}, std::move(out), {a, b},
                      [an, bn, m, k, n2](TensorNode<T>& n) {
                          const T* G = n.grad.data();
                          if (an->requires_grad) {
                              an->ensure_grad();
                              // dA = G * B^T
                              for (int i = 0; i < m; ++i)
                                  for (int p = 0; p < k; ++p) {
                                      T s = 0;
                                      const T* grow = G + i * n2;
                                      const T* brow = bn->value.data() + p * n2;
                                      for (int j = 0; j < n2; ++j) s += grow[j] * brow[j];
                                      an->grad[(size_t)(i * k + p)] += s;
                                  }
                          }
                          if (bn->requires_grad) {
                              bn->ensure_grad();
                              // dB = A^T * G
                              for (int i = 0; i < m; ++i) {
                                  const T* arow = an->value.data() + i * k;
                                  const T* grow = G + i * n2;
                                  for (int p = 0; p < k; ++p) {
                                      T av = arow[p];
                                      if (av == T(0)) continue;
                                      T* brow = bn->grad.data() + p * n2;
                                      for (int j = 0; j < n2; ++j) brow[j] += av * grow[j];
                                  }
                              }
                          }
                      });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    if (a.rank() != 2) tensor_fail("transpose", "expects rank-2, got " + shape_str(a.shape()));
    const int m = a.dim(0), n2 = a.dim(1);
    std::vector<T> out((size_t)m * n2);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n2; ++j) out[(size_t)(j * m + i)] = a.values()[(size_t)(i * n2 + j)];
    auto an = a.node();
    return make_op<T>("transpose", Shape{n2, m}, std::move(out), {a}, [an, m, n2](TensorNode<T>& n) {
        an->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n2; ++j) an->grad[(size_t)(i * n2 + j)] += n.grad[(size_t)(j * m + i)];
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (numel(shape) != a.size())
        tensor_fail("reshape", "cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
    auto an = a.node();
    return make_op<T>("reshape", std::move(shape), a.values(), {a}, [an](TensorNode<T>& n) {
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
    });
}

// Concatenate rank-2 tensors along axis 0 (rows) or 1 (cols).
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) tensor_fail("concat", "empty input list");
    if (axis != 0 && axis != 1) tensor_fail("concat", "axis must be 0 or 1");
    for (const auto& p : parts)
        if (p.rank() != 2) tensor_fail("concat", "expects rank-2 inputs");
    int rows = parts[0].dim(0), cols = parts[0].dim(1);
    int total = 0;
    for (const auto& p : parts) {
        if (axis == 0) {
            if (p.dim(1) != cols) tensor_fail("concat", "column mismatch");
            total += p.dim(0);
        } else {
            if (p.dim(0) != rows) tensor_fail("concat", "row mismatch");
            total += p.dim(1);
        }
    }
    Shape oshape = axis == 0 ? Shape{total, cols} : Shape{rows, total};
    std::vector<T> out((size_t)numel(oshape));
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    if (axis == 0) {
        size_t off = 0;
        for (const auto& p : parts) {
            std::copy(p.values().begin(), p.values().end(), out.begin() + (long)off);
            off += (size_t)p.size();
        }
    } else {
        int coff = 0;
        for (const auto& p : parts) {
            int pc = p.dim(1);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < pc; ++j)
                    out[(size_t)(i * total + coff + j)] = p.values()[(size_t)(i * pc + j)];
            coff += pc;
        }
    }
    return make_op<T>("concat", oshape, std::move(out), parts,
                      [nodes, axis, rows, total](TensorNode<T>& n) {
                          if (axis == 0) {
                              size_t off = 0;
                              for (auto& p : nodes) {
                                  size_t len = p->value.size();
                                  if (p->requires_grad) {
                                      p->ensure_grad();
                                      for (size_t i = 0; i < len; ++i) p->grad[i] += n.grad[off + i];
                                  }
                                  off += len;
                              }
                          } else {
                              int coff = 0;
                              for (auto& p : nodes) {
                                  int pc = p->shape[1];
                                  if (p->requires_grad) {
                                      p->ensure_grad();
                                      for (int i = 0; i < rows; ++i)
                                          for (int j = 0; j < pc; ++j)
                                              p->grad[(size_t)(i * pc + j)] +=
                                                  n.grad[(size_t)(i * total + coff + j)];
                                  }
                                  coff += pc;
                              }
                          }
                      });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, int r0, int r1) {
    if (a.rank() != 2) tensor_fail("slice_rows", "expects rank-2");
    if (r0 < 0 || r1 > a.dim(0) || r0 >= r1) tensor_fail("slice_rows", "bad range");
    const int cols = a.dim(1);
    std::vector<T> out(a.values().begin() + (long)r0 * cols, a.values().begin() + (long)r1 * cols);
    auto an = a.node();
    return make_op<T>("slice_rows", Shape{r1 - r0, cols}, std::move(out), {a},
                      [an, r0, cols](TensorNode<T>& n) {
                          an->ensure_grad();
                          for (size_t i = 0; i < n.grad.size(); ++i)
                              an->grad[(size_t)r0 * cols + i] += n.grad[i];
                      });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, int c0, int c1) {
    if (a.rank() != 2) tensor_fail("slice_cols", "expects rank-2");
    if (c0 < 0 || c1 > a.dim(1) || c0 >= c1) tensor_fail("slice_cols", "bad range");
    const int rows = a.dim(0), cols = a.dim(1), w = c1 - c0;
    std::vector<T> out((size_t)rows * w);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < w; ++j) out[(size_t)(i * w + j)] = a.values()[(size_t)(i * cols + c0 + j)];
    auto an = a.node();
    return make_op<T>("slice_cols", Shape{rows, w}, std::move(out), {a},
                      [an, rows, cols, c0, w](TensorNode<T>& n) {
                          an->ensure_grad();
                          for (int i = 0; i < rows; ++i)
                              for (int j = 0; j < w; ++j)
                                  an->grad[(size_t)(i * cols + c0 + j)] += n.grad[(size_t)(i * w + j)];
                      });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, const std::vector<int>& idx) {
    if (a.rank() != 2) tensor_fail("gather_rows", "expects rank-2");
    const int rows = a.dim(0), cols = a.dim(1);
    for (int i : idx)
        if (i < 0 || i >= rows) tensor_fail("gather_rows", "index " + std::to_string(i) + " out of range");
    std::vector<T> out(idx.size() * (size_t)cols);
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy(a.values().begin() + (long)idx[r] * cols, a.values().begin() + ((long)idx[r] + 1) * cols,
                  out.begin() + (long)r * cols);
    auto an = a.node();
    return make_op<T>("gather_rows", Shape{(int)idx.size(), cols}, std::move(out), {a},
                      [an, idx, cols](TensorNode<T>& n) {
                          an->ensure_grad();
                          for (size_t r = 0; r < idx.size(); ++r)
                              for (int j = 0; j < cols; ++j)
                                  an->grad[(size_t)idx[r] * cols + j] += n.grad[r * (size_t)cols + j];
                      });
}

// out[i] = a[i, idx[i]]
template <typename T>
Tensor<T> pick(const Tensor<T>& a, const std::vector<int>& idx) {
    if (a.rank() != 2) tensor_fail("pick", "expects rank-2");
    if ((int)idx.size() != a.dim(0)) tensor_fail("pick", "index length mismatch");
    const int cols = a.dim(1);
    std::vector<T> out(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= cols) tensor_fail("pick", "index out of range");
        out[i] = a.values()[i * (size_t)cols + (size_t)idx[i]];
    }
    auto an = a.node();
    return make_op<T>("pick", Shape{(int)idx.size()}, std::move(out), {a},
                      [an, idx, cols](TensorNode<T>& n) {
                          an->ensure_grad();
                          for (size_t i = 0; i < idx.size(); ++i)
                              an->grad[i * (size_t)cols + (size_t)idx[i]] += n.grad[i];
                      });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
    T s = std::accumulate(a.values().begin(), a.values().end(), T(0));
    auto an = a.node();
    return make_op<T>("sum", Shape{}, std::vector<T>{s}, {a}, [an](TensorNode<T>& n) {
        an->ensure_grad();
        for (auto& g : an->grad) g += n.grad[0];
    });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
    if (a.size() == 0) tensor_fail("mean", "empty tensor");
    return scale(sum_all(a), T(1) / (T)a.size());
}

// axis-reduction over rank-2: axis 0 collapses rows (result length cols),
// axis 1 collapses cols (result length rows)
template <typename T>
Tensor<T> sum_axis(const Tensor<T>& a, int axis) {
    if (a.rank() != 2) tensor_fail("sum_axis", "expects rank-2");
    const int rows = a.dim(0), cols = a.dim(1);
    if (axis == 0) {
        std::vector<T> out((size_t)cols, T(0));
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) out[(size_t)j] += a.at(i, j);
        auto an = a.node();
        return make_op<T>("sum_axis", Shape{cols}, std::move(out), {a},
                          [an, rows, cols](TensorNode<T>& n) {
                              an->ensure_grad();
                              for (int i = 0; i < rows; ++i)
                                  for (int j = 0; j < cols; ++j)
                                      an->grad[(size_t)(i * cols + j)] += n.grad[(size_t)j];
                          });
    }
    if (axis == 1) {
        std::vector<T> out((size_t)rows, T(0));
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) out[(size_t)i] += a.at(i, j);
        auto an = a.node();
        return make_op<T>("sum_axis", Shape{rows}, std::move(out), {a},
                          [an, rows, cols](TensorNode<T>& n) {
                              an->ensure_grad();
                              for (int i = 0; i < rows; ++i)
                                  for (int j = 0; j < cols; ++j)
                                      an->grad[(size_t)(i * cols + j)] += n.grad[(size_t)i];
                          });
    }
    tensor_fail("sum_axis", "axis must be 0 or 1");
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& a, int axis) {
    T denom = axis == 0 ? (T)a.dim(0) : (T)a.dim(1);
    return scale(sum_axis(a, axis), T(1) / denom);
}

template <typename T>
Tensor<T> exp_t(const Tensor<T>& a) {
    std::vector<T> out(a.values());
    for (auto& v : out) v = std::exp(v);
    auto an = a.node();
    return make_op<T>("exp", a.shape(), std::move(out), {a}, [an](TensorNode<T>& n) {
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * n.value[i];
    });
}

template <typename T>
Tensor<T> log_t(const Tensor<T>& a) {
    std::vector<T> out(a.values());
    for (auto& v : out) v = std::log(v);
    auto an = a.node();
    return make_op<T>("log", a.shape(), std::move(out), {a}, [an](TensorNode<T>& n) {
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] / an->value[i];
    });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    std::vector<T> out(a.values());
    for (auto& v : out) v = T(1) / (T(1) + std::exp(-v));
    auto an = a.node();
    return make_op<T>("sigmoid", a.shape(), std::move(out), {a}, [an](TensorNode<T>& n) {
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            an->grad[i] += n.grad[i] * n.value[i] * (T(1) - n.value[i]);
    });
}

// x * sigmoid(x)
template <typename T>
Tensor<T> swish(const Tensor<T>& a) {
    std::vector<T> out(a.values());
    for (auto& v : out) {
        T s = T(1) / (T(1) + std::exp(-v));
        v = v * s;
    }
    auto an = a.node();
    return make_op<T>("swish", a.shape(), std::move(out), {a}, [an](TensorNode<T>& n) {
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            T x = an->value[i];
            T s = T(1) / (T(1) + std::exp(-x));
            an->grad[i] += n.grad[i] * (s + x * s * (T(1) - s));
        }
    });
}

// split last dim in half: out = a[:, :h] * sigmoid(a[:, h:])
template <typename T>
Tensor<T> glu(const Tensor<T>& a) {
    if (a.rank() != 2 || a.dim(1) % 2 != 0) tensor_fail("glu", "last dim must be even, got " + shape_str(a.shape()));
    int h = a.dim(1) / 2;
    return mul(slice_cols(a, 0, h), sigmoid(slice_cols(a, h, 2 * h)));
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
    if (a.rank() != 2) tensor_fail("softmax", "expects rank-2");
    const int rows = a.dim(0), cols = a.dim(1);
    std::vector<T> out((size_t)rows * cols);
    for (int i = 0; i < rows; ++i) {
        T mx = a.at(i, 0);
        for (int j = 1; j < cols; ++j) mx = std::max(mx, a.at(i, j));
        T z = 0;
        for (int j = 0; j < cols; ++j) {
            T e = std::exp(a.at(i, j) - mx);
            out[(size_t)(i * cols + j)] = e;
            z += e;
        }
        for (int j = 0; j < cols; ++j) out[(size_t)(i * cols + j)] /= z;
    }
    auto an = a.node();
    return make_op<T>("softmax", a.shape(), std::move(out), {a}, [an, rows, cols](TensorNode<T>& n) {
        an->ensure_grad();
        for (int i = 0; i < rows; ++i) {
            const T* y = n.value.data() + i * cols;
            const T* g = n.grad.data() + i * cols;
            T dot = 0;
            for (int j = 0; j < cols; ++j) dot += y[j] * g[j];
            for (int j = 0; j < cols; ++j)
                an->grad[(size_t)(i * cols + j)] += y[j] * (g[j] - dot);
        }
    });
}

template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& a) {
    if (a.rank() != 2) tensor_fail("log_softmax", "expects rank-2");
    const int rows = a.dim(0), cols = a.dim(1);
    std::vector<T> out((size_t)rows * cols);
    for (int i = 0; i < rows; ++i) {
        T mx = a.at(i, 0);
        for (int j = 1; j < cols; ++j) mx = std::max(mx, a.at(i, j));
        T z = 0;
        for (int j = 0; j < cols; ++j) z += std::exp(a.at(i, j) - mx);
        T lz = std::log(z) + mx;
        for (int j = 0; j < cols; ++j) out[(size_t)(i * cols + j)] = a.at(i, j) - lz;
    }
    auto an = a.node();
    return make_op<T>("log_softmax", a.shape(), std::move(out), {a},
                      [an, rows, cols](TensorNode<T>& n) {
                          an->ensure_grad();
                          for (int i = 0; i < rows; ++i) {
                              const T* ls = n.value.data() + i * cols;
                              const T* g = n.grad.data() + i * cols;
                              T gs = 0;
                              for (int j = 0; j < cols; ++j) gs += g[j];
                              for (int j = 0; j < cols; ++j)
                                  an->grad[(size_t)(i * cols + j)] += g[j] - std::exp(ls[j]) * gs;
                          }
                      });
}

// Row-wise layer norm with learned scale/shift (both length-cols vectors).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5)) {
    if (a.rank() != 2) tensor_fail("layer_norm", "expects rank-2");
    const int rows = a.dim(0), cols = a.dim(1);
    if (gain.size() != cols || bias.size() != cols)
        tensor_fail("layer_norm", "gain/bias must have length " + std::to_string(cols));
    std::vector<T> out((size_t)rows * cols);
    std::vector<T> means((size_t)rows), istds((size_t)rows);
    for (int i = 0; i < rows; ++i) {
        T mu = 0;
        for (int j = 0; j < cols; ++j) mu += a.at(i, j);
        mu /= (T)cols;
        T var = 0;
        for (int j = 0; j < cols; ++j) {
            T d = a.at(i, j) - mu;
            var += d * d;
        }
        var /= (T)cols;
        T istd = T(1) / std::sqrt(var + eps);
        means[(size_t)i] = mu;
        istds[(size_t)i] = istd;
        for (int j = 0; j < cols; ++j)
            out[(size_t)(i * cols + j)] = (a.at(i, j) - mu) * istd * gain.at(j) + bias.at(j);
    }
    auto an = a.node(), gn = gain.node(), bn = bias.node();
    return make_op<T>("layer_norm", a.shape(), std::move(out), {a, gain, bias},
                      [an, gn, bn, rows, cols, means, istds](TensorNode<T>& n) {
                          for (int i = 0; i < rows; ++i) {
                              const T* g = n.grad.data() + i * cols;
                              const T* x = an->value.data() + i * cols;
                              T mu = means[(size_t)i], istd = istds[(size_t)i];
                              if (gn->requires_grad) {
                                  gn->ensure_grad();
                                  for (int j = 0; j < cols; ++j)
                                      gn->grad[(size_t)j] += g[j] * (x[j] - mu) * istd;
                              }
                              if (bn->requires_grad) {
                                  bn->ensure_grad();
                                  for (int j = 0; j < cols; ++j) bn->grad[(size_t)j] += g[j];
                              }
                              if (an->requires_grad) {
                                  an->ensure_grad();
                                  // d/dx of (x - mu) * istd * gain
                                  T sum_gy = 0, sum_gyx = 0;
                                  for (int j = 0; j < cols; ++j) {
                                      T gy = g[j] * gn->value[(size_t)j];
                                      sum_gy += gy;
                                      sum_gyx += gy * (x[j] - mu) * istd;
                                  }
                                  for (int j = 0; j < cols; ++j) {
                                      T gy = g[j] * gn->value[(size_t)j];
                                      T xhat = (x[j] - mu) * istd;
                                      an->grad[(size_t)(i * cols + j)] +=
                                          istd * (gy - sum_gy / (T)cols - xhat * sum_gyx / (T)cols);
                                  }
                              }
                          }
                      });
}

// Strided 2-D convolution, "same" padding: out = ceil(in / stride) per axis.
// input (Cin, H, W), weight (Cout, Cin, kh, kw), bias (Cout)
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride_h, int stride_w) {
    if (input.rank() != 3 || weight.rank() != 4)
        tensor_fail("conv2d", "expects input rank-3, weight rank-4");
    const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    if (weight.dim(1) != cin) tensor_fail("conv2d", "channel mismatch");
    if (bias.size() != cout) tensor_fail("conv2d", "bias length mismatch");
    const int oh = (h + stride_h - 1) / stride_h;
    const int ow = (w + stride_w - 1) / stride_w;
    const int pad_h = std::max((oh - 1) * stride_h + kh - h, 0) / 2;
    const int pad_w = std::max((ow - 1) * stride_w + kw - w, 0) / 2;
    std::vector<T> out((size_t)cout * oh * ow, T(0));
    const T* X = input.values().data();
    const T* W = weight.values().data();
    for (int oc = 0; oc < cout; ++oc)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                T acc = bias.at(oc);
                for (int ic = 0; ic < cin; ++ic)
                    for (int ky = 0; ky < kh; ++ky) {
                        int iy = oy * stride_h + ky - pad_h;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            int ix = ox * stride_w + kx - pad_w;
                            if (ix < 0 || ix >= w) continue;
                            acc += X[(size_t)((ic * h + iy) * w + ix)] *
                                   W[(size_t)(((oc * cin + ic) * kh + ky) * kw + kx)];
                        }
                    }
                out[(size_t)((oc * oh + oy) * ow + ox)] = acc;
            }
    auto xn = input.node(), wn = weight.node(), bn = bias.node();
    return make_op<T>(
        "conv2d", Shape{cout, oh, ow}, std::move(out), {input, weight, bias},
        [xn, wn, bn, cin, h, w, cout, kh, kw, oh, ow, stride_h, stride_w, pad_h,
         pad_w](TensorNode<T>& n) {
            const T* G = n.grad.data();
            if (bn->requires_grad) bn->ensure_grad();
            if (wn->requires_grad) wn->ensure_grad();
            if (xn->requires_grad) xn->ensure_grad();
            for (int oc = 0; oc < cout; ++oc)
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox) {
                        T g = G[(size_t)((oc * oh + oy) * ow + ox)];
                        if (bn->requires_grad) bn->grad[(size_t)oc] += g;
                        for (int ic = 0; ic < cin; ++ic)
                            for (int ky = 0; ky < kh; ++ky) {
                                int iy = oy * stride_h + ky - pad_h;
                                if (iy < 0 || iy >= h) continue;
                                for (int kx = 0; kx < kw; ++kx) {
                                    int ix = ox * stride_w + kx - pad_w;
                                    if (ix < 0 || ix >= w) continue;
                                    size_t xi = (size_t)((ic * h + iy) * w + ix);
                                    size_t wi = (size_t)(((oc * cin + ic) * kh + ky) * kw + kx);
                                    if (wn->requires_grad) wn->grad[wi] += g * xn->value[xi];
                                    if (xn->requires_grad) xn->grad[xi] += g * wn->value[wi];
                                }
                            }
                    }
        });
}

// Depthwise 1-D convolution over time. input (T, d), weight (k, d), bias (d),
// stride 1, "same" padding (k odd).
template <typename T>
Tensor<T> depthwise_conv1d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (input.rank() != 2 || weight.rank() != 2)
        tensor_fail("depthwise_conv1d", "expects rank-2 input and weight");
    const int t = input.dim(0), d = input.dim(1), k = weight.dim(0);
    if (weight.dim(1) != d || bias.size() != d) tensor_fail("depthwise_conv1d", "channel mismatch");
    if (k % 2 == 0) tensor_fail("depthwise_conv1d", "kernel must be odd");
    const int pad = k / 2;
    std::vector<T> out((size_t)t * d);
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < d; ++j) {
            T acc = bias.at(j);
            for (int kk = 0; kk < k; ++kk) {
                int ii = i + kk - pad;
                if (ii < 0 || ii >= t) continue;
                acc += input.at(ii, j) * weight.at(kk, j);
            }
            out[(size_t)(i * d + j)] = acc;
        }
    auto xn = input.node(), wn = weight.node(), bn = bias.node();
    return make_op<T>("depthwise_conv1d", input.shape(), std::move(out), {input, weight, bias},
                      [xn, wn, bn, t, d, k, pad](TensorNode<T>& n) {
                          if (bn->requires_grad) bn->ensure_grad();
                          if (wn->requires_grad) wn->ensure_grad();
                          if (xn->requires_grad) xn->ensure_grad();
                          for (int i = 0; i < t; ++i)
                              for (int j = 0; j < d; ++j) {
                                  T g = n.grad[(size_t)(i * d + j)];
                                  if (bn->requires_grad) bn->grad[(size_t)j] += g;
                                  for (int kk = 0; kk < k; ++kk) {
                                      int ii = i + kk - pad;
                                      if (ii < 0 || ii >= t) continue;
                                      if (wn->requires_grad)
                                          wn->grad[(size_t)(kk * d + j)] += g * xn->value[(size_t)(ii * d + j)];
                                      if (xn->requires_grad)
                                          xn->grad[(size_t)(ii * d + j)] += g * wn->value[(size_t)(kk * d + j)];
                                  }
                              }
                      });
}

// Train-mode dropout with inverted scaling; p == 0 is the identity.
template <typename T>
Tensor<T> dropout(const Tensor<T>& a, T p, uint64_t seed) {
    if (p < T(0) || p >= T(1)) tensor_fail("dropout", "p must be in [0, 1)");
    if (p == T(0)) return a;
    Rng rng{seed, 0x4d524f50ULL};
    std::vector<T> keep((size_t)a.size());
    T inv = T(1) / (T(1) - p);
    for (auto& m : keep) m = rng.uniform() < (double)p ? T(0) : inv;
    std::vector<T> out(a.values());
    for (int64_t i = 0; i < a.size(); ++i) out[(size_t)i] *= keep[(size_t)i];
    auto an = a.node();
    return make_op<T>("dropout", a.shape(), std::move(out), {a},
                      [an, keep](TensorNode<T>& n) {
                          an->ensure_grad();
                          for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * keep[i];
                      });
}

// Row-wise cosine similarity between matching rows of a and b -> length-n vector.
template <typename T>
Tensor<T> cosine_rows(const Tensor<T>& a, const Tensor<T>& b, T eps = T(1e-8)) {
    check_same_shape("cosine_rows", a, b);
    if (a.rank() != 2) tensor_fail("cosine_rows", "expects rank-2");
    const int rows = a.dim(0), cols = a.dim(1);
    std::vector<T> out((size_t)rows);
    std::vector<T> na((size_t)rows), nb((size_t)rows);
    for (int i = 0; i < rows; ++i) {
        T dot = 0, aa = 0, bb = 0;
        for (int j = 0; j < cols; ++j) {
            dot += a.at(i, j) * b.at(i, j);
            aa += a.at(i, j) * a.at(i, j);
            bb += b.at(i, j) * b.at(i, j);
        }
        na[(size_t)i] = std::sqrt(aa) + eps;
        nb[(size_t)i] = std::sqrt(bb) + eps;
        out[(size_t)i] = dot / (na[(size_t)i] * nb[(size_t)i]);
    }
    auto an = a.node(), bn = b.node();
    return make_op<T>("cosine_rows", Shape{rows}, std::move(out), {a, b},
                      [an, bn, rows, cols, na, nb](TensorNode<T>& n) {
                          if (an->requires_grad) an->ensure_grad();
                          if (bn->requires_grad) bn->ensure_grad();
                          for (int i = 0; i < rows; ++i) {
                              T g = n.grad[(size_t)i];
                              if (g == T(0)) continue;
                              T c = n.value[(size_t)i];
                              const T* x = an->value.data() + i * cols;
                              const T* y = bn->value.data() + i * cols;
                              T inb = T(1) / (na[(size_t)i] * nb[(size_t)i]);
                              for (int j = 0; j < cols; ++j) {
                                  if (an->requires_grad)
                                      an->grad[(size_t)(i * cols + j)] +=
                                          g * (y[j] * inb - c * x[j] / (na[(size_t)i] * na[(size_t)i]));
                                  if (bn->requires_grad)
                                      bn->grad[(size_t)(i * cols + j)] +=
                                          g * (x[j] * inb - c * y[j] / (nb[(size_t)i] * nb[(size_t)i]));
                              }
                          }
                      });
}

// Stop-gradient: forwards the value, blocks the backward pass.
template <typename T>
Tensor<T> detach(const Tensor<T>& a) {
    return Tensor<T>(a.shape(), a.values(), false);
}

// matrix (n, d) + row vector (d), broadcast over rows
template <typename T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias) {
    if (a.rank() != 2 || bias.size() != a.dim(1))
        tensor_fail("add_bias", "bias length must equal columns of " + shape_str(a.shape()));
    const int rows = a.dim(0), cols = a.dim(1);
    std::vector<T> out(a.values());
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out[(size_t)(i * cols + j)] += bias.at(j);
    auto an = a.node(), bn = bias.node();
    return make_op<T>("add_bias", a.shape(), std::move(out), {a, bias},
                      [an, bn, rows, cols](TensorNode<T>& n) {
                          if (an->requires_grad) {
                              an->ensure_grad();
                              for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
                          }
                          if (bn->requires_grad) {
                              bn->ensure_grad();
                              for (int i = 0; i < rows; ++i)
                                  for (int j = 0; j < cols; ++j)
                                      bn->grad[(size_t)j] += n.grad[(size_t)(i * cols + j)];
                          }
                      });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    return add_bias(matmul(x, w), b);
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    return scale(a, T(-1));
}

} // namespace w2v
