#pragma once

// Reverse-mode automatic differentiation over dense row-major tensors.
// Templated on the scalar type: training runs on float, the gradient
// finite-difference suite instantiates double.
//
// A Tape records one training step's operations and is discarded after
// backward. Tensors own their gradient but share their value storage, so a
// cheap shadow of a parameter (same data, private gradient) lets batched
// episodes run backward in parallel and reduce gradients in a fixed order.

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ruledist/errors.hpp"
#include "ruledist/kernels.hpp"
#include "ruledist/rng.hpp"

namespace ruledist::ad {

inline constexpr double kLayerNormEps = 1e-5;
// Large negative sentinel standing in for -inf in masked logits.
inline constexpr double kMaskValue = -1e9;

using Mask = std::vector<std::uint8_t>;

inline Mask to_mask(const std::vector<bool>& m) {
    Mask out(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? 1 : 0;
    return out;
}

template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::shared_ptr<std::vector<T>> values = std::make_shared<std::vector<T>>();
    bool requires_grad = false;
    std::vector<T> grad;  // empty until first accumulation

    std::ptrdiff_t numel() const {
        std::ptrdiff_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    int rows() const { return shape.size() == 2 ? shape[0] : 1; }
    int cols() const { return shape.empty() ? 1 : shape.back(); }

    T* data() { return values->data(); }
    const T* data() const { return values->data(); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(static_cast<std::size_t>(numel()), T(0));
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
    }
    bool has_grad() const { return !grad.empty(); }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << ']';
        return os.str();
    }
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <typename T>
TensorPtr<T> make_tensor(std::vector<int> shape, bool requires_grad = false) {
    auto t = std::make_shared<Tensor<T>>();
    t->shape = std::move(shape);
    t->values->assign(static_cast<std::size_t>(t->numel()), T(0));
    t->requires_grad = requires_grad;
    return t;
}

template <typename T>
TensorPtr<T> make_tensor(std::vector<int> shape, std::vector<T> data, bool requires_grad = false) {
    auto t = std::make_shared<Tensor<T>>();
    t->shape = std::move(shape);
    if (static_cast<std::ptrdiff_t>(data.size()) != t->numel()) {
        throw ShapeError("make_tensor: data size " + std::to_string(data.size()) +
                         " does not match shape " + t->shape_str());
    }
    *t->values = std::move(data);
    t->requires_grad = requires_grad;
    return t;
}

template <typename T>
TensorPtr<T> scalar_tensor(T value, bool requires_grad = false) {
    return make_tensor<T>({1}, {value}, requires_grad);
}

// Shares the parameter's value storage, keeps a private gradient.
template <typename T>
TensorPtr<T> shadow_of(const TensorPtr<T>& param) {
    auto t = std::make_shared<Tensor<T>>();
    t->shape = param->shape;
    t->values = param->values;
    t->requires_grad = param->requires_grad;
    return t;
}

// Entries i.i.d. uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
TensorPtr<T> xavier_uniform_init(std::vector<int> shape, int fan_in, int fan_out,
                                 std::uint64_t seed) {
    if (fan_in <= 0 || fan_out <= 0) {
        throw ContractError("xavier_uniform_init: fans must be positive");
    }
    auto t = make_tensor<T>(std::move(shape), true);
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    Rng rng(seed);
    for (auto& v : *t->values) v = static_cast<T>(rng.uniform(-a, a));
    return t;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

template <typename T>
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }
    std::size_t size() const { return nodes_.size(); }

    // --- primitives ---------------------------------------------------------

    // [MxK] * [KxN]
    TensorPtr<T> matmul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
        require_2d(a, "matmul lhs");
        require_2d(b, "matmul rhs");
        if (a->shape[1] != b->shape[0]) {
            throw ShapeError("matmul: inner dims differ: " + a->shape_str() + " vs " +
                             b->shape_str());
        }
        const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
        auto out = make_out({m, n}, {a, b});
        kernels::gemm_nn(m, n, k, a->data(), k, b->data(), n, out->data(), n, false);
        if (should_record(out)) {
            record(out, [a, b, out, m, n, k] {
                if (!out->has_grad()) return;
                if (a->requires_grad) {
                    a->ensure_grad();
                    kernels::gemm_nt(m, k, n, out->grad.data(), n, b->data(), n,
                                     a->grad.data(), k, true);
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    kernels::gemm_tn(k, n, m, a->data(), k, out->grad.data(), n,
                                     b->grad.data(), n, true);
                }
            });
        }
        return out;
    }

    // [MxK] * [NxK]^T
    TensorPtr<T> matmul_nt(const TensorPtr<T>& a, const TensorPtr<T>& b) {
        require_2d(a, "matmul_nt lhs");
        require_2d(b, "matmul_nt rhs");
        if (a->shape[1] != b->shape[1]) {
            throw ShapeError("matmul_nt: inner dims differ: " + a->shape_str() + " vs " +
                             b->shape_str());
        }
        const int m = a->shape[0], k = a->shape[1], n = b->shape[0];
        auto out = make_out({m, n}, {a, b});
        kernels::gemm_nt(m, n, k, a->data(), k, b->data(), k, out->data(), n, false);
        if (should_record(out)) {
            record(out, [a, b, out, m, n, k] {
                if (!out->has_grad()) return;
                if (a->requires_grad) {
                    a->ensure_grad();
                    kernels::gemm_nn(m, k, n, out->grad.data(), n, b->data(), k,
                                     a->grad.data(), k, true);
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    kernels::gemm_tn(n, k, m, out->grad.data(), n, a->data(), k,
                                     b->grad.data(), k, true);
                }
            });
        }
        return out;
    }

    // Elementwise sum; b may also be a single row broadcast over a's rows.
    TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
        if (a->shape == b->shape) {
            auto out = make_out(a->shape, {a, b});
            kernels::map_binary(a->data(), b->data(), out->data(), a->numel(),
                                [](T x, T y) { return x + y; });
            if (should_record(out)) {
                record(out, [a, b, out] {
                    if (!out->has_grad()) return;
                    if (a->requires_grad) {
                        a->ensure_grad();
                        kernels::accumulate(a->grad.data(), out->grad.data(), a->numel());
                    }
                    if (b->requires_grad) {
                        b->ensure_grad();
                        kernels::accumulate(b->grad.data(), out->grad.data(), b->numel());
                    }
                });
            }
            return out;
        }
        // Row broadcast: [RxC] + [C] or [RxC] + [1xC].
        if (a->shape.size() == 2 && b->numel() == a->shape[1]) {
            const int r = a->shape[0], c = a->shape[1];
            auto out = make_out(a->shape, {a, b});
            const T* ad = a->data();
            const T* bd = b->data();
            T* od = out->data();
            for (int i = 0; i < r; ++i) {
                for (int j = 0; j < c; ++j) {
                    od[static_cast<std::ptrdiff_t>(i) * c + j] =
                        ad[static_cast<std::ptrdiff_t>(i) * c + j] + bd[j];
                }
            }
            if (should_record(out)) {
                record(out, [a, b, out, r, c] {
                    if (!out->has_grad()) return;
                    if (a->requires_grad) {
                        a->ensure_grad();
                        kernels::accumulate(a->grad.data(), out->grad.data(), a->numel());
                    }
                    if (b->requires_grad) {
                        b->ensure_grad();
                        for (int i = 0; i < r; ++i) {
                            for (int j = 0; j < c; ++j) {
                                b->grad[static_cast<std::size_t>(j)] +=
                                    out->grad[static_cast<std::size_t>(i) * c + j];
                            }
                        }
                    }
                });
            }
            return out;
        }
        throw ShapeError("add: incompatible shapes " + a->shape_str() + " and " +
                         b->shape_str());
    }

    TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
        if (a->shape != b->shape) {
            throw ShapeError("mul: shapes differ: " + a->shape_str() + " vs " + b->shape_str());
        }
        auto out = make_out(a->shape, {a, b});
        kernels::map_binary(a->data(), b->data(), out->data(), a->numel(),
                            [](T x, T y) { return x * y; });
        if (should_record(out)) {
            record(out, [a, b, out] {
                if (!out->has_grad()) return;
                const std::ptrdiff_t n = out->numel();
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (std::ptrdiff_t i = 0; i < n; ++i) {
                        a->grad[static_cast<std::size_t>(i)] +=
                            out->grad[static_cast<std::size_t>(i)] * (*b->values)[static_cast<std::size_t>(i)];
                    }
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (std::ptrdiff_t i = 0; i < n; ++i) {
                        b->grad[static_cast<std::size_t>(i)] +=
                            out->grad[static_cast<std::size_t>(i)] * (*a->values)[static_cast<std::size_t>(i)];
                    }
                }
            });
        }
        return out;
    }

    TensorPtr<T> scale(const TensorPtr<T>& a, T factor) {
        auto out = make_out(a->shape, {a});
        kernels::map_unary(a->data(), out->data(), a->numel(),
                           [factor](T x) { return x * factor; });
        if (should_record(out)) {
            record(out, [a, out, factor] {
                if (!out->has_grad() || !a->requires_grad) return;
                a->ensure_grad();
                const std::ptrdiff_t n = out->numel();
                for (std::ptrdiff_t i = 0; i < n; ++i) {
                    a->grad[static_cast<std::size_t>(i)] +=
                        out->grad[static_cast<std::size_t>(i)] * factor;
                }
            });
        }
        return out;
    }

    TensorPtr<T> tanh(const TensorPtr<T>& a) {
        auto out = make_out(a->shape, {a});
        kernels::map_unary(a->data(), out->data(), a->numel(), [](T x) { return std::tanh(x); });
        if (should_record(out)) {
            record(out, [a, out] {
                if (!out->has_grad() || !a->requires_grad) return;
                a->ensure_grad();
                const std::ptrdiff_t n = out->numel();
                for (std::ptrdiff_t i = 0; i < n; ++i) {
                    const T y = (*out->values)[static_cast<std::size_t>(i)];
                    a->grad[static_cast<std::size_t>(i)] +=
                        out->grad[static_cast<std::size_t>(i)] * (T(1) - y * y);
                }
            });
        }
        return out;
    }

    TensorPtr<T> relu(const TensorPtr<T>& a) {
        auto out = make_out(a->shape, {a});
        kernels::map_unary(a->data(), out->data(), a->numel(),
                           [](T x) { return x > T(0) ? x : T(0); });
        if (should_record(out)) {
            record(out, [a, out] {
                if (!out->has_grad() || !a->requires_grad) return;
                a->ensure_grad();
                const std::ptrdiff_t n = out->numel();
                for (std::ptrdiff_t i = 0; i < n; ++i) {
                    if ((*a->values)[static_cast<std::size_t>(i)] > T(0)) {
                        a->grad[static_cast<std::size_t>(i)] +=
                            out->grad[static_cast<std::size_t>(i)];
                    }
                }
            });
        }
        return out;
    }

    TensorPtr<T> log(const TensorPtr<T>& a) {
        auto out = make_out(a->shape, {a});
        kernels::map_unary(a->data(), out->data(), a->numel(), [](T x) { return std::log(x); });
        if (should_record(out)) {
            record(out, [a, out] {
                if (!out->has_grad() || !a->requires_grad) return;
                a->ensure_grad();
                const std::ptrdiff_t n = out->numel();
                for (std::ptrdiff_t i = 0; i < n; ++i) {
                    a->grad[static_cast<std::size_t>(i)] +=
                        out->grad[static_cast<std::size_t>(i)] /
                        (*a->values)[static_cast<std::size_t>(i)];
                }
            });
        }
        return out;
    }

    TensorPtr<T> sum(const TensorPtr<T>& a) {
        auto out = make_out({1}, {a});
        (*out->values)[0] = static_cast<T>(kernels::sum_all(a->data(), a->numel()));
        if (should_record(out)) {
            record(out, [a, out] {
                if (!out->has_grad() || !a->requires_grad) return;
                a->ensure_grad();
                const T g = out->grad[0];
                for (auto& v : a->grad) v += g;
            });
        }
        return out;
    }

    TensorPtr<T> mean(const TensorPtr<T>& a) {
        const auto n = a->numel();
        auto out = make_out({1}, {a});
        (*out->values)[0] = static_cast<T>(kernels::sum_all(a->data(), n) / n);
        if (should_record(out)) {
            record(out, [a, out, n] {
                if (!out->has_grad() || !a->requires_grad) return;
                a->ensure_grad();
                const T g = out->grad[0] / static_cast<T>(n);
                for (auto& v : a->grad) v += g;
            });
        }
        return out;
    }

    // Concatenation of 2-D blocks along rows (axis 0) or columns (axis 1);
    // 1-D tensors concatenate along axis 0.
    TensorPtr<T> concat(std::span<const TensorPtr<T>> parts, int axis) {
        if (parts.empty()) throw ShapeError("concat: no inputs");
        if (parts.front()->shape.size() == 1) {
            if (axis != 0) throw ShapeError("concat: 1-D tensors concatenate on axis 0");
            int total = 0;
            for (const auto& p : parts) {
                if (p->shape.size() != 1) throw ShapeError("concat: mixed ranks");
                total += p->shape[0];
            }
            auto out = make_out({total}, parts);
            int offset = 0;
            for (const auto& p : parts) {
                std::copy(p->values->begin(), p->values->end(), out->values->begin() + offset);
                offset += p->shape[0];
            }
            if (should_record(out)) {
                std::vector<TensorPtr<T>> held(parts.begin(), parts.end());
                record(out, [held, out] {
                    if (!out->has_grad()) return;
                    int off = 0;
                    for (const auto& p : held) {
                        if (p->requires_grad) {
                            p->ensure_grad();
                            for (int i = 0; i < p->shape[0]; ++i) {
                                p->grad[static_cast<std::size_t>(i)] +=
                                    out->grad[static_cast<std::size_t>(off + i)];
                            }
                        }
                        off += p->shape[0];
                    }
                });
            }
            return out;
        }

        if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
        const int fixed = parts.front()->shape[1 - axis];
        int total = 0;
        for (const auto& p : parts) {
            require_2d(p, "concat input");
            if (p->shape[1 - axis] != fixed) {
                throw ShapeError("concat: mismatched shapes " + p->shape_str());
            }
            total += p->shape[axis];
        }
        const int rows = axis == 0 ? total : fixed;
        const int cols = axis == 0 ? fixed : total;
        auto out = make_out({rows, cols}, parts);
        int offset = 0;
        for (const auto& p : parts) {
            const int pr = p->shape[0], pc = p->shape[1];
            for (int i = 0; i < pr; ++i) {
                T* dst = out->data() + (axis == 0
                                            ? static_cast<std::ptrdiff_t>(offset + i) * cols
                                            : static_cast<std::ptrdiff_t>(i) * cols + offset);
                std::copy(p->data() + static_cast<std::ptrdiff_t>(i) * pc,
                          p->data() + static_cast<std::ptrdiff_t>(i + 1) * pc, dst);
            }
            offset += p->shape[axis];
        }
        if (should_record(out)) {
            std::vector<TensorPtr<T>> held(parts.begin(), parts.end());
            record(out, [held, out, axis, cols] {
                if (!out->has_grad()) return;
                int off = 0;
                for (const auto& p : held) {
                    const int pr = p->shape[0], pc = p->shape[1];
                    if (p->requires_grad) {
                        p->ensure_grad();
                        for (int i = 0; i < pr; ++i) {
                            const T* src =
                                out->grad.data() +
                                (axis == 0 ? static_cast<std::ptrdiff_t>(off + i) * cols
                                           : static_cast<std::ptrdiff_t>(i) * cols + off);
                            for (int j = 0; j < pc; ++j) {
                                p->grad[static_cast<std::size_t>(i) * pc + j] += src[j];
                            }
                        }
                    }
                    off += p->shape[axis];
                }
            });
        }
        return out;
    }

    // Row gather; indices may repeat (backward scatter-adds).
    TensorPtr<T> gather(const TensorPtr<T>& a, std::vector<int> rows) {
        require_2d(a, "gather input");
        const int c = a->shape[1];
        for (int r : rows) {
            if (r < 0 || r >= a->shape[0]) {
                throw ShapeError("gather: row " + std::to_string(r) + " outside " +
                                 a->shape_str());
            }
        }
        auto out = make_out({static_cast<int>(rows.size()), c}, {a});
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::copy(a->data() + static_cast<std::ptrdiff_t>(rows[i]) * c,
                      a->data() + static_cast<std::ptrdiff_t>(rows[i] + 1) * c,
                      out->data() + static_cast<std::ptrdiff_t>(i) * c);
        }
        if (should_record(out)) {
            record(out, [a, out, rows = std::move(rows), c] {
                if (!out->has_grad() || !a->requires_grad) return;
                a->ensure_grad();
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    for (int j = 0; j < c; ++j) {
                        a->grad[static_cast<std::size_t>(rows[i]) * c + j] +=
                            out->grad[i * static_cast<std::size_t>(c) + j];
                    }
                }
            });
        }
        return out;
    }

    // Single element by flat index, as a scalar.
    TensorPtr<T> select(const TensorPtr<T>& a, int flat_index) {
        if (flat_index < 0 || flat_index >= a->numel()) {
            throw ShapeError("select: index " + std::to_string(flat_index) + " outside " +
                             a->shape_str());
        }
        auto out = make_out({1}, {a});
        (*out->values)[0] = (*a->values)[static_cast<std::size_t>(flat_index)];
        if (should_record(out)) {
            record(out, [a, out, flat_index] {
                if (!out->has_grad() || !a->requires_grad) return;
                a->ensure_grad();
                a->grad[static_cast<std::size_t>(flat_index)] += out->grad[0];
            });
        }
        return out;
    }

    // Layer normalization over the last axis with learnable gain and bias.
    TensorPtr<T> layer_norm(const TensorPtr<T>& x, const TensorPtr<T>& gain,
                            const TensorPtr<T>& bias) {
        require_2d(x, "layer_norm input");
        const int r = x->shape[0], c = x->shape[1];
        if (gain->numel() != c || bias->numel() != c) {
            throw ShapeError("layer_norm: gain/bias must have " + std::to_string(c) +
                             " entries");
        }
        auto out = make_out(x->shape, {x, gain, bias});
        auto mean = std::make_shared<std::vector<T>>(static_cast<std::size_t>(r));
        auto rstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(r));
        kernels::layer_norm_rows(x->data(), gain->data(), bias->data(), out->data(), r, c, c, c,
                                 static_cast<T>(kLayerNormEps), mean->data(), rstd->data());
        if (should_record(out)) {
            record(out, [x, gain, bias, out, mean, rstd, r, c] {
                if (!out->has_grad()) return;
                x->ensure_grad();
                gain->ensure_grad();
                bias->ensure_grad();
                kernels::layer_norm_backward_rows(x->data(), gain->data(), out->grad.data(),
                                                  mean->data(), rstd->data(), x->grad.data(),
                                                  gain->grad.data(), bias->grad.data(), r, c, c,
                                                  c, c);
            });
        }
        return out;
    }

    // Row-wise softmax over columns with a shared column mask. Masked
    // positions get probability exactly zero.
    TensorPtr<T> masked_softmax(const TensorPtr<T>& x, const Mask& mask) {
        require_2d(x, "masked_softmax input");
        const int r = x->shape[0], c = x->shape[1];
        check_mask(mask, c, "masked_softmax");
        auto out = make_out(x->shape, {x});
        auto mask_copy = std::make_shared<Mask>(mask);
        kernels::masked_softmax_rows(x->data(), out->data(), r, c, c, c, mask_copy->data());
        if (should_record(out)) {
            record(out, [x, out, mask_copy, r, c] {
                if (!out->has_grad() || !x->requires_grad) return;
                x->ensure_grad();
                kernels::masked_softmax_backward_rows(out->data(), out->grad.data(),
                                                      x->grad.data(), r, c, c, c, c,
                                                      mask_copy->data(), true);
            });
        }
        return out;
    }

    // Replaces masked columns by `value`; gradient flows only where unmasked.
    TensorPtr<T> mask_fill(const TensorPtr<T>& x, const Mask& mask, T value) {
        require_2d(x, "mask_fill input");
        const int r = x->shape[0], c = x->shape[1];
        if (static_cast<int>(mask.size()) != c) {
            throw ShapeError("mask_fill: mask length " + std::to_string(mask.size()) +
                             " != cols " + std::to_string(c));
        }
        auto out = make_out(x->shape, {x});
        auto mask_copy = std::make_shared<Mask>(mask);
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) {
                (*out->values)[static_cast<std::size_t>(i) * c + j] =
                    (*mask_copy)[static_cast<std::size_t>(j)]
                        ? (*x->values)[static_cast<std::size_t>(i) * c + j]
                        : value;
            }
        }
        if (should_record(out)) {
            record(out, [x, out, mask_copy, r, c] {
                if (!out->has_grad() || !x->requires_grad) return;
                x->ensure_grad();
                for (int i = 0; i < r; ++i) {
                    for (int j = 0; j < c; ++j) {
                        if ((*mask_copy)[static_cast<std::size_t>(j)]) {
                            x->grad[static_cast<std::size_t>(i) * c + j] +=
                                out->grad[static_cast<std::size_t>(i) * c + j];
                        }
                    }
                }
            });
        }
        return out;
    }

    // Shannon entropy -sum p ln p over unmasked columns of a probability
    // row matrix; zero-probability entries contribute zero.
    TensorPtr<T> masked_entropy(const TensorPtr<T>& p, const Mask& mask) {
        require_2d(p, "masked_entropy input");
        const int r = p->shape[0], c = p->shape[1];
        check_mask(mask, c, "masked_entropy");
        auto out = make_out({1}, {p});
        auto mask_copy = std::make_shared<Mask>(mask);
        double acc = 0.0;
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) {
                if (!(*mask_copy)[static_cast<std::size_t>(j)]) continue;
                const double v = (*p->values)[static_cast<std::size_t>(i) * c + j];
                if (v > 0.0) acc -= v * std::log(v);
            }
        }
        (*out->values)[0] = static_cast<T>(acc);
        if (should_record(out)) {
            record(out, [p, out, mask_copy, r, c] {
                if (!out->has_grad() || !p->requires_grad) return;
                p->ensure_grad();
                const T g = out->grad[0];
                for (int i = 0; i < r; ++i) {
                    for (int j = 0; j < c; ++j) {
                        if (!(*mask_copy)[static_cast<std::size_t>(j)]) continue;
                        const T v = (*p->values)[static_cast<std::size_t>(i) * c + j];
                        if (v > T(0)) {
                            p->grad[static_cast<std::size_t>(i) * c + j] -=
                                g * (std::log(v) + T(1));
                        }
                    }
                }
            });
        }
        return out;
    }

    // Fused multi-head scaled dot-product attention over already-projected
    // q [PqxD], k/v [PkxD]. Heads are contiguous column blocks of width D/H.
    // The key mask applies to every head; attention to masked keys is exactly
    // zero. Output is the concatenation of the per-head results, [PqxD].
    TensorPtr<T> multi_head_attention(const TensorPtr<T>& q, const TensorPtr<T>& k,
                                      const TensorPtr<T>& v, const Mask& key_mask, int heads) {
        require_2d(q, "attention queries");
        require_2d(k, "attention keys");
        require_2d(v, "attention values");
        const int pq = q->shape[0], d = q->shape[1];
        const int pk = k->shape[0];
        if (k->shape[1] != d || v->shape[0] != pk || v->shape[1] != d) {
            throw ShapeError("attention: inconsistent shapes q=" + q->shape_str() +
                             " k=" + k->shape_str() + " v=" + v->shape_str());
        }
        if (heads <= 0 || d % heads != 0) {
            throw ShapeError("attention: dim " + std::to_string(d) + " not divisible by " +
                             std::to_string(heads) + " heads");
        }
        check_mask(key_mask, pk, "attention");
        const int dh = d / heads;
        const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

        auto out = make_out({pq, d}, {q, k, v});
        auto mask_copy = std::make_shared<Mask>(key_mask);
        // Attention probabilities per head, kept for backward.
        auto probs = std::make_shared<std::vector<T>>(
            static_cast<std::size_t>(heads) * pq * pk);
        std::vector<T> scores(static_cast<std::size_t>(pq) * pk);

        for (int h = 0; h < heads; ++h) {
            const int off = h * dh;
            kernels::gemm_nt(pq, pk, dh, q->data() + off, d, k->data() + off, d, scores.data(),
                             pk, false);
            for (auto& s : scores) s *= inv_sqrt;
            T* ph = probs->data() + static_cast<std::ptrdiff_t>(h) * pq * pk;
            kernels::masked_softmax_rows(scores.data(), ph, pq, pk, pk, pk, mask_copy->data());
            kernels::gemm_nn(pq, dh, pk, ph, pk, v->data() + off, d, out->data() + off, d,
                             false);
        }

        if (should_record(out)) {
            record(out, [q, k, v, out, probs, mask_copy, heads, pq, pk, d, dh, inv_sqrt] {
                if (!out->has_grad()) return;
                if (q->requires_grad) q->ensure_grad();
                if (k->requires_grad) k->ensure_grad();
                if (v->requires_grad) v->ensure_grad();
                std::vector<T> dp(static_cast<std::size_t>(pq) * pk);
                std::vector<T> ds(static_cast<std::size_t>(pq) * pk);
                for (int h = 0; h < heads; ++h) {
                    const int off = h * dh;
                    const T* ph = probs->data() + static_cast<std::ptrdiff_t>(h) * pq * pk;
                    const T* dout = out->grad.data() + off;
                    if (v->requires_grad) {
                        kernels::gemm_tn(pk, dh, pq, ph, pk, dout, d, v->grad.data() + off, d,
                                         true);
                    }
                    if (!q->requires_grad && !k->requires_grad) continue;
                    kernels::gemm_nt(pq, pk, dh, dout, d, v->data() + off, d, dp.data(), pk,
                                     false);
                    kernels::masked_softmax_backward_rows(ph, dp.data(), ds.data(), pq, pk, pk,
                                                          pk, pk, mask_copy->data(), false);
                    for (auto& s : ds) s *= inv_sqrt;
                    if (q->requires_grad) {
                        kernels::gemm_nn(pq, dh, pk, ds.data(), pk, k->data() + off, d,
                                         q->grad.data() + off, d, true);
                    }
                    if (k->requires_grad) {
                        kernels::gemm_tn(pk, dh, pq, ds.data(), pk, q->data() + off, d,
                                         k->grad.data() + off, d, true);
                    }
                }
            });
        }
        return out;
    }

    // Reverse topological sweep from a scalar loss. Gradients of recorded
    // outputs (the intermediates) are rebuilt from scratch each sweep; leaf
    // gradients accumulate, so repeated backward without zeroing doubles them.
    void backward(const TensorPtr<T>& loss) {
        if (loss->numel() != 1) {
            throw ContractError("backward: loss must be scalar, got " + loss->shape_str());
        }
        for (auto& node : nodes_) {
            if (node.out->has_grad()) node.out->grad.clear();
        }
        loss->ensure_grad();
        loss->grad[0] += T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();
    }

    void clear() { nodes_.clear(); }

private:
    struct Node {
        TensorPtr<T> out;
        std::function<void()> fn;
    };
    std::vector<Node> nodes_;
    bool recording_;

    template <typename Range>
    TensorPtr<T> make_out(std::vector<int> shape, const Range& inputs) {
        auto out = make_tensor<T>(std::move(shape));
        for (const auto& in : inputs) out->requires_grad |= in->requires_grad;
        return out;
    }
    TensorPtr<T> make_out(std::vector<int> shape, std::initializer_list<TensorPtr<T>> inputs) {
        auto out = make_tensor<T>(std::move(shape));
        for (const auto& in : inputs) out->requires_grad |= in->requires_grad;
        return out;
    }

    bool should_record(const TensorPtr<T>& out) const { return recording_ && out->requires_grad; }

    void record(TensorPtr<T> out, std::function<void()> fn) {
        nodes_.push_back(Node{std::move(out), std::move(fn)});
    }

    static void require_2d(const TensorPtr<T>& t, const char* what) {
        if (t->shape.size() != 2) {
            throw ShapeError(std::string(what) + ": expected 2-D, got " + t->shape_str());
        }
    }

    static void check_mask(const Mask& mask, int cols, const char* what) {
        if (static_cast<int>(mask.size()) != cols) {
            throw ShapeError(std::string(what) + ": mask length " +
                             std::to_string(mask.size()) + " != cols " + std::to_string(cols));
        }
        bool any = false;
        for (auto m : mask) any |= (m != 0);
        if (!any) throw ContractError(std::string(what) + ": all positions masked");
    }
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

// Adam with bias correction; moments live alongside each parameter.
template <typename T>
struct AdamState {
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
    std::int64_t step = 0;

    void init(std::span<const TensorPtr<T>> params) {
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.emplace_back(static_cast<std::size_t>(p->numel()), T(0));
            v.emplace_back(static_cast<std::size_t>(p->numel()), T(0));
        }
        step = 0;
    }
};

template <typename T>
void adam_step(std::span<const TensorPtr<T>> params, AdamState<T>& state, double lr) {
    if (state.m.size() != params.size()) {
        throw ShapeError("adam_step: state tracks " + std::to_string(state.m.size()) +
                         " params, got " + std::to_string(params.size()));
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(AdamState<T>::kBeta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(AdamState<T>::kBeta2, static_cast<double>(state.step));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = *params[pi];
        if (!p.has_grad()) continue;
        if (state.m[pi].size() != p.grad.size()) {
            throw ShapeError("adam_step: moment/param size mismatch at index " +
                             std::to_string(pi));
        }
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        T* data = p.data();
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double g = p.grad[i];
            m[i] = static_cast<T>(AdamState<T>::kBeta1 * m[i] + (1.0 - AdamState<T>::kBeta1) * g);
            v[i] = static_cast<T>(AdamState<T>::kBeta2 * v[i] +
                                  (1.0 - AdamState<T>::kBeta2) * g * g);
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            data[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + AdamState<T>::kEps));
        }
    }
}

// Scales all gradients by max_norm/norm when the global L2 norm exceeds
// max_norm. Returns the pre-clip norm.
template <typename T>
double clip_global_norm(std::span<const TensorPtr<T>> params, double max_norm = 1.0) {
    double sq = 0.0;
    for (const auto& p : params) {
        if (!p->has_grad()) continue;
        sq += kernels::dot(p->grad.data(), p->grad.data(),
                           static_cast<std::ptrdiff_t>(p->grad.size()));
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const T factor = static_cast<T>(max_norm / norm);
        for (const auto& p : params) {
            if (!p->has_grad()) continue;
            for (auto& g : p->grad) g *= factor;
        }
    }
    return norm;
}

}  // namespace ruledist::ad
