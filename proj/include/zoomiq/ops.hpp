#pragma once

// Differentiable operations for the tensor engine: exactly the primitives the
// backbone, heads, and loss need. Every op validates its shape contract, runs
// the forward pass, and registers a backward rule on the tape.

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "zoomiq/tensor.hpp"

namespace zoomiq::nd {

namespace detail {

inline std::string shape_str(const std::vector<int>& s) {
    std::string r = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) r += ",";
        r += std::to_string(s[i]);
    }
    return r + "]";
}

template <typename T>
inline void require_rank(const TensorPtr<T>& t, int rank, const char* op) {
    if (t->rank() != rank)
        throw ContractViolation(std::string(op) + ": expected rank " + std::to_string(rank) +
                                ", got shape " + shape_str(t->shape));
}

// Elementwise binary ops accept equal shapes or a scalar on either side.
enum class Broadcast { Equal, LeftScalar, RightScalar };

template <typename T>
inline Broadcast classify(const TensorPtr<T>& a, const TensorPtr<T>& b, const char* op) {
    if (a->shape == b->shape) return Broadcast::Equal;
    if (a->is_scalar()) return Broadcast::LeftScalar;
    if (b->is_scalar()) return Broadcast::RightScalar;
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(a->shape) + " vs " +
                            shape_str(b->shape));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> add(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    const auto bc = detail::classify(a, b, "add");
    const std::size_t n = std::max(a->values.size(), b->values.size());
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const T va = bc == detail::Broadcast::LeftScalar ? a->values[0] : a->values[i];
        const T vb = bc == detail::Broadcast::RightScalar ? b->values[0] : b->values[i];
        out[i] = va + vb;
    }
    auto res = TensorT<T>::from(bc == detail::Broadcast::LeftScalar ? b->shape : a->shape, std::move(out));
    record<T>(tape, {a, b}, res, [a, b, res, bc] {
        if (res->grad.empty()) return;
        if (a->requires_grad) {
            a->ensure_grad();
            if (bc == detail::Broadcast::LeftScalar)
                for (T g : res->grad) a->grad[0] += g;
            else
                for (std::size_t i = 0; i < res->grad.size(); ++i) a->grad[i] += res->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            if (bc == detail::Broadcast::RightScalar)
                for (T g : res->grad) b->grad[0] += g;
            else
                for (std::size_t i = 0; i < res->grad.size(); ++i) b->grad[i] += res->grad[i];
        }
    });
    return res;
}

template <typename T>
TensorPtr<T> subtract(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    const auto bc = detail::classify(a, b, "subtract");
    const std::size_t n = std::max(a->values.size(), b->values.size());
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const T va = bc == detail::Broadcast::LeftScalar ? a->values[0] : a->values[i];
        const T vb = bc == detail::Broadcast::RightScalar ? b->values[0] : b->values[i];
        out[i] = va - vb;
    }
    auto res = TensorT<T>::from(bc == detail::Broadcast::LeftScalar ? b->shape : a->shape, std::move(out));
    record<T>(tape, {a, b}, res, [a, b, res, bc] {
        if (res->grad.empty()) return;
        if (a->requires_grad) {
            a->ensure_grad();
            if (bc == detail::Broadcast::LeftScalar)
                for (T g : res->grad) a->grad[0] += g;
            else
                for (std::size_t i = 0; i < res->grad.size(); ++i) a->grad[i] += res->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            if (bc == detail::Broadcast::RightScalar)
                for (T g : res->grad) b->grad[0] -= g;
            else
                for (std::size_t i = 0; i < res->grad.size(); ++i) b->grad[i] -= res->grad[i];
        }
    });
    return res;
}

template <typename T>
TensorPtr<T> multiply(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    const auto bc = detail::classify(a, b, "multiply");
    const std::size_t n = std::max(a->values.size(), b->values.size());
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const T va = bc == detail::Broadcast::LeftScalar ? a->values[0] : a->values[i];
        const T vb = bc == detail::Broadcast::RightScalar ? b->values[0] : b->values[i];
        out[i] = va * vb;
    }
    auto res = TensorT<T>::from(bc == detail::Broadcast::LeftScalar ? b->shape : a->shape, std::move(out));
    record<T>(tape, {a, b}, res, [a, b, res, bc] {
        if (res->grad.empty()) return;
        const std::size_t n = res->grad.size();
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const T vb = bc == detail::Broadcast::RightScalar ? b->values[0] : b->values[i];
                const std::size_t ia = bc == detail::Broadcast::LeftScalar ? 0 : i;
                a->grad[ia] += vb * res->grad[i];
            }
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const T va = bc == detail::Broadcast::LeftScalar ? a->values[0] : a->values[i];
                const std::size_t ib = bc == detail::Broadcast::RightScalar ? 0 : i;
                b->grad[ib] += va * res->grad[i];
            }
        }
    });
    return res;
}

template <typename T>
TensorPtr<T> divide(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    const auto bc = detail::classify(a, b, "divide");
    for (T v : b->values)
        if (v == T(0)) throw NumericFailure("divide: division by zero");
    const std::size_t n = std::max(a->values.size(), b->values.size());
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const T va = bc == detail::Broadcast::LeftScalar ? a->values[0] : a->values[i];
        const T vb = bc == detail::Broadcast::RightScalar ? b->values[0] : b->values[i];
        out[i] = va / vb;
    }
    auto res = TensorT<T>::from(bc == detail::Broadcast::LeftScalar ? b->shape : a->shape, std::move(out));
    record<T>(tape, {a, b}, res, [a, b, res, bc] {
        if (res->grad.empty()) return;
        const std::size_t n = res->grad.size();
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const T vb = bc == detail::Broadcast::RightScalar ? b->values[0] : b->values[i];
                const std::size_t ia = bc == detail::Broadcast::LeftScalar ? 0 : i;
                a->grad[ia] += res->grad[i] / vb;
            }
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const T va = bc == detail::Broadcast::LeftScalar ? a->values[0] : a->values[i];
                const T vb = bc == detail::Broadcast::RightScalar ? b->values[0] : b->values[i];
                const std::size_t ib = bc == detail::Broadcast::RightScalar ? 0 : i;
                b->grad[ib] -= va / (vb * vb) * res->grad[i];
            }
        }
    });
    return res;
}

template <typename T>
TensorPtr<T> square(Tape<T>* tape, const TensorPtr<T>& a) {
    std::vector<T> out(a->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] * a->values[i];
    auto res = TensorT<T>::from(a->shape, std::move(out));
    record<T>(tape, {a}, res, [a, res] {
        if (res->grad.empty() || !a->requires_grad) return;
        a->ensure_grad();
        for (std::size_t i = 0; i < res->grad.size(); ++i)
            a->grad[i] += T(2) * a->values[i] * res->grad[i];
    });
    return res;
}

template <typename T>
TensorPtr<T> sqrt_op(Tape<T>* tape, const TensorPtr<T>& a) {
    for (T v : a->values)
        if (v < T(0)) throw NumericFailure("sqrt: negative operand");
    std::vector<T> out(a->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(a->values[i]);
    auto res = TensorT<T>::from(a->shape, std::move(out));
    record<T>(tape, {a}, res, [a, res] {
        if (res->grad.empty() || !a->requires_grad) return;
        a->ensure_grad();
        for (std::size_t i = 0; i < res->grad.size(); ++i)
            a->grad[i] += res->grad[i] / (T(2) * res->values[i]);
    });
    return res;
}

template <typename T>
TensorPtr<T> relu(Tape<T>* tape, const TensorPtr<T>& a) {
    std::vector<T> out(a->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] > T(0) ? a->values[i] : T(0);
    auto res = TensorT<T>::from(a->shape, std::move(out));
    record<T>(tape, {a}, res, [a, res] {
        if (res->grad.empty() || !a->requires_grad) return;
        a->ensure_grad();
        // derivative at exactly 0 is defined as 0
        for (std::size_t i = 0; i < res->grad.size(); ++i)
            if (a->values[i] > T(0)) a->grad[i] += res->grad[i];
    });
    return res;
}

// Affine by constants: c1 * x + c0. Covers the broadcast-by-scalar cases the
// loss needs without materializing constant tensors.
template <typename T>
TensorPtr<T> scalar_affine(Tape<T>* tape, const TensorPtr<T>& a, T mul, T add_c) {
    std::vector<T> out(a->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = mul * a->values[i] + add_c;
    auto res = TensorT<T>::from(a->shape, std::move(out));
    record<T>(tape, {a}, res, [a, res, mul] {
        if (res->grad.empty() || !a->requires_grad) return;
        a->ensure_grad();
        for (std::size_t i = 0; i < res->grad.size(); ++i) a->grad[i] += mul * res->grad[i];
    });
    return res;
}

template <typename T>
TensorPtr<T> scalar_mul(Tape<T>* tape, const TensorPtr<T>& a, T c) {
    return scalar_affine(tape, a, c, T(0));
}

template <typename T>
TensorPtr<T> scalar_add(Tape<T>* tape, const TensorPtr<T>& a, T c) {
    return scalar_affine(tape, a, T(1), c);
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> reduce_sum(Tape<T>* tape, const TensorPtr<T>& a) {
    double acc = 0;
    for (T v : a->values) acc += double(v);
    auto res = TensorT<T>::scalar(T(acc));
    record<T>(tape, {a}, res, [a, res] {
        if (res->grad.empty() || !a->requires_grad) return;
        a->ensure_grad();
        const T g = res->grad[0];
        for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
    });
    return res;
}

template <typename T>
TensorPtr<T> reduce_mean(Tape<T>* tape, const TensorPtr<T>& a) {
    double acc = 0;
    for (T v : a->values) acc += double(v);
    const T inv_n = T(1) / T(a->numel());
    auto res = TensorT<T>::scalar(T(acc / double(a->numel())));
    record<T>(tape, {a}, res, [a, res, inv_n] {
        if (res->grad.empty() || !a->requires_grad) return;
        a->ensure_grad();
        const T g = res->grad[0] * inv_n;
        for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
    });
    return res;
}

// ---------------------------------------------------------------------------
// Shape plumbing
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> reshape(Tape<T>* tape, const TensorPtr<T>& a, std::vector<int> new_shape) {
    std::int64_t n = 1;
    for (int d : new_shape) n *= d;
    if (n != a->numel()) throw ContractViolation("reshape: element count mismatch");
    auto res = TensorT<T>::from(std::move(new_shape), a->values);
    record<T>(tape, {a}, res, [a, res] {
        if (res->grad.empty() || !a->requires_grad) return;
        a->ensure_grad();
        for (std::size_t i = 0; i < res->grad.size(); ++i) a->grad[i] += res->grad[i];
    });
    return res;
}

// Concatenation of rank-1 tensors, used to stitch per-group predictions back
// into one batch vector.
template <typename T>
TensorPtr<T> concat1d(Tape<T>* tape, const std::vector<TensorPtr<T>>& parts) {
    if (parts.empty()) throw ContractViolation("concat1d: no inputs");
    std::vector<T> out;
    for (const auto& p : parts) {
        detail::require_rank(p, 1, "concat1d");
        out.insert(out.end(), p->values.begin(), p->values.end());
    }
    const int total = int(out.size());
    auto res = TensorT<T>::from({total}, std::move(out));
    record<T>(tape, parts, res, [parts, res] {
        if (res->grad.empty()) return;
        std::size_t off = 0;
        for (const auto& p : parts) {
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::size_t i = 0; i < p->values.size(); ++i) p->grad[i] += res->grad[off + i];
            }
            off += p->values.size();
        }
    });
    return res;
}

// out[i] = x[idx[i]] over rank-1 tensors; pairs with concat1d to reorder
// stitched batch predictions.
template <typename T>
TensorPtr<T> gather1d(Tape<T>* tape, const TensorPtr<T>& x, std::vector<int> idx) {
    detail::require_rank(x, 1, "gather1d");
    std::vector<T> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= x->numel()) throw ContractViolation("gather1d: index out of range");
        out[i] = x->values[std::size_t(idx[i])];
    }
    const int total = int(out.size());
    auto res = TensorT<T>::from({total}, std::move(out));
    record<T>(tape, {x}, res, [x, res, idx = std::move(idx)] {
        if (res->grad.empty() || !x->requires_grad) return;
        x->ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i) x->grad[std::size_t(idx[i])] += res->grad[i];
    });
    return res;
}

// ---------------------------------------------------------------------------
// Neural network primitives
// ---------------------------------------------------------------------------

// out[b,o] = sum_i x[b,i] * w[o,i] + bias[o]
template <typename T>
TensorPtr<T> linear(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& bias) {
    detail::require_rank(x, 2, "linear");
    detail::require_rank(w, 2, "linear");
    detail::require_rank(bias, 1, "linear");
    const int B = x->dim(0), I = x->dim(1);
    const int O = w->dim(0);
    if (w->dim(1) != I || bias->dim(0) != O)
        throw ContractViolation("linear: shape mismatch x" + detail::shape_str(x->shape) + " w" +
                                detail::shape_str(w->shape) + " b" + detail::shape_str(bias->shape));
    std::vector<T> out(std::size_t(B) * O);
    for (int b = 0; b < B; ++b) {
        const T* xr = x->values.data() + std::size_t(b) * I;
        for (int o = 0; o < O; ++o) {
            const T* wr = w->values.data() + std::size_t(o) * I;
            T acc = bias->values[std::size_t(o)];
            for (int i = 0; i < I; ++i) acc += xr[i] * wr[i];
            out[std::size_t(b) * O + o] = acc;
        }
    }
    auto res = TensorT<T>::from({B, O}, std::move(out));
    record<T>(tape, {x, w, bias}, res, [x, w, bias, res, B, I, O] {
        if (res->grad.empty()) return;
        const T* g = res->grad.data();
        if (x->requires_grad) {
            x->ensure_grad();
            for (int b = 0; b < B; ++b)
                for (int o = 0; o < O; ++o) {
                    const T gv = g[std::size_t(b) * O + o];
                    const T* wr = w->values.data() + std::size_t(o) * I;
                    T* xr = x->grad.data() + std::size_t(b) * I;
                    for (int i = 0; i < I; ++i) xr[i] += gv * wr[i];
                }
        }
        if (w->requires_grad) {
            w->ensure_grad();
            for (int b = 0; b < B; ++b) {
                const T* xr = x->values.data() + std::size_t(b) * I;
                for (int o = 0; o < O; ++o) {
                    const T gv = g[std::size_t(b) * O + o];
                    T* wr = w->grad.data() + std::size_t(o) * I;
                    for (int i = 0; i < I; ++i) wr[i] += gv * xr[i];
                }
            }
        }
        if (bias->requires_grad) {
            bias->ensure_grad();
            for (int b = 0; b < B; ++b)
                for (int o = 0; o < O; ++o) bias->grad[std::size_t(o)] += g[std::size_t(b) * O + o];
        }
    });
    return res;
}

namespace detail {

// Validated shape bundle shared by the conv forward and backward loops.
struct ConvDims {
    int N, Cin, H, W, Cout, kH, kW, OH, OW, stride, padding, groups, cin_per_g, cout_per_g;
};

template <typename T>
ConvDims conv_dims(const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& bias, int stride,
                   int padding, int groups) {
    require_rank(x, 4, "conv2d");
    require_rank(w, 4, "conv2d");
    require_rank(bias, 1, "conv2d");
    if (stride < 1 || padding < 0 || groups < 1) throw ContractViolation("conv2d: bad stride/padding/groups");
    ConvDims d{};
    d.N = x->dim(0); d.Cin = x->dim(1); d.H = x->dim(2); d.W = x->dim(3);
    d.Cout = w->dim(0); d.kH = w->dim(2); d.kW = w->dim(3);
    d.stride = stride; d.padding = padding; d.groups = groups;
    if (d.Cin % groups != 0 || d.Cout % groups != 0)
        throw ContractViolation("conv2d: channels not divisible by groups");
    d.cin_per_g = d.Cin / groups;
    d.cout_per_g = d.Cout / groups;
    if (w->dim(1) != d.cin_per_g)
        throw ContractViolation("conv2d: weight shape " + shape_str(w->shape) + " does not match input " +
                                shape_str(x->shape) + " with groups " + std::to_string(groups));
    if (bias->dim(0) != d.Cout) throw ContractViolation("conv2d: bias size mismatch");
    if (d.H + 2 * padding < d.kH || d.W + 2 * padding < d.kW)
        throw ContractViolation("conv2d: kernel larger than padded input");
    d.OH = (d.H + 2 * padding - d.kH) / stride + 1;
    d.OW = (d.W + 2 * padding - d.kW) / stride + 1;
    return d;
}

} // namespace detail

namespace detail {

// Patch matrix for one (sample, group): P[icl*kH*kW + kh*kW + kw][oh*OW + ow]
// = x[ic, oh*s-p+kh, ow*s-p+kw], zero outside the frame. Long contiguous rows
// turn the convolution into a small matmul that vectorizes cleanly.
template <typename T>
void im2col(const T* x_sample, int group, const ConvDims& d, T* P) {
    const std::size_t ohw = std::size_t(d.OH) * d.OW;
    for (int icl = 0; icl < d.cin_per_g; ++icl) {
        const int ic = group * d.cin_per_g + icl;
        const T* plane = x_sample + std::size_t(ic) * d.H * d.W;
        for (int kh = 0; kh < d.kH; ++kh)
            for (int kw = 0; kw < d.kW; ++kw) {
                T* row = P + (std::size_t(icl) * d.kH * d.kW + std::size_t(kh) * d.kW + kw) * ohw;
                const int base = kw - d.padding;
                int lo = 0;
                if (base < 0) lo = (-base + d.stride - 1) / d.stride;
                const int top = d.W - 1 - base;
                const int hi = top < 0 ? -1 : std::min(d.OW - 1, top / d.stride);
                for (int oh = 0; oh < d.OH; ++oh) {
                    const int ih = oh * d.stride - d.padding + kh;
                    T* dst = row + std::size_t(oh) * d.OW;
                    if (ih < 0 || ih >= d.H || hi < lo) {
                        for (int ow = 0; ow < d.OW; ++ow) dst[ow] = T(0);
                        continue;
                    }
                    const T* src = plane + std::size_t(ih) * d.W;
                    for (int ow = 0; ow < lo; ++ow) dst[ow] = T(0);
                    if (d.stride == 1)
                        for (int ow = lo; ow <= hi; ++ow) dst[ow] = src[ow + base];
                    else
                        for (int ow = lo; ow <= hi; ++ow) dst[ow] = src[ow * d.stride + base];
                    for (int ow = hi + 1; ow < d.OW; ++ow) dst[ow] = T(0);
                }
            }
    }
}

// Scatter-add the patch-matrix gradient back onto the input sample.
template <typename T>
void col2im_add(const T* P, int group, const ConvDims& d, T* dx_sample) {
    const std::size_t ohw = std::size_t(d.OH) * d.OW;
    for (int icl = 0; icl < d.cin_per_g; ++icl) {
        const int ic = group * d.cin_per_g + icl;
        T* plane = dx_sample + std::size_t(ic) * d.H * d.W;
        for (int kh = 0; kh < d.kH; ++kh)
            for (int kw = 0; kw < d.kW; ++kw) {
                const T* row = P + (std::size_t(icl) * d.kH * d.kW + std::size_t(kh) * d.kW + kw) * ohw;
                const int base = kw - d.padding;
                int lo = 0;
                if (base < 0) lo = (-base + d.stride - 1) / d.stride;
                const int top = d.W - 1 - base;
                const int hi = top < 0 ? -1 : std::min(d.OW - 1, top / d.stride);
                if (hi < lo) continue;
                for (int oh = 0; oh < d.OH; ++oh) {
                    const int ih = oh * d.stride - d.padding + kh;
                    if (ih < 0 || ih >= d.H) continue;
                    const T* src = row + std::size_t(oh) * d.OW;
                    T* dst = plane + std::size_t(ih) * d.W;
                    if (d.stride == 1)
                        for (int ow = lo; ow <= hi; ++ow) dst[ow + base] += src[ow];
                    else
                        for (int ow = lo; ow <= hi; ++ow) dst[ow * d.stride + base] += src[ow];
                }
            }
    }
}

// out[r][:] (+)= sum_k A[r][k] * P[k][:]. Two output rows share each pass
// over four P rows, which roughly doubles the flops per byte moved.
template <typename T>
void rows_times_patches(const T* A, int rows, int K, const T* P, std::size_t len, T* out,
                        bool accumulate) {
    if (!accumulate)
        for (std::size_t i = 0; i < std::size_t(rows) * len; ++i) out[i] = T(0);
    int r = 0;
    for (; r + 2 <= rows; r += 2) {
        T* o0 = out + std::size_t(r) * len;
        T* o1 = o0 + len;
        const T* a0row = A + std::size_t(r) * K;
        const T* a1row = a0row + K;
        int k = 0;
        for (; k + 4 <= K; k += 4) {
            const T a00 = a0row[k], a01 = a0row[k + 1], a02 = a0row[k + 2], a03 = a0row[k + 3];
            const T a10 = a1row[k], a11 = a1row[k + 1], a12 = a1row[k + 2], a13 = a1row[k + 3];
            const T* p0 = P + std::size_t(k) * len;
            const T* p1 = p0 + len;
            const T* p2 = p1 + len;
            const T* p3 = p2 + len;
            for (std::size_t i = 0; i < len; ++i) {
                const T v0 = p0[i], v1 = p1[i], v2 = p2[i], v3 = p3[i];
                o0[i] += a00 * v0 + a01 * v1 + a02 * v2 + a03 * v3;
                o1[i] += a10 * v0 + a11 * v1 + a12 * v2 + a13 * v3;
            }
        }
        for (; k < K; ++k) {
            const T a0 = a0row[k], a1 = a1row[k];
            const T* p = P + std::size_t(k) * len;
            for (std::size_t i = 0; i < len; ++i) {
                o0[i] += a0 * p[i];
                o1[i] += a1 * p[i];
            }
        }
    }
    for (; r < rows; ++r) {
        T* orow = out + std::size_t(r) * len;
        const T* arow = A + std::size_t(r) * K;
        int k = 0;
        for (; k + 4 <= K; k += 4) {
            const T a0 = arow[k], a1 = arow[k + 1], a2 = arow[k + 2], a3 = arow[k + 3];
            const T* p0 = P + std::size_t(k) * len;
            const T* p1 = p0 + len;
            const T* p2 = p1 + len;
            const T* p3 = p2 + len;
            for (std::size_t i = 0; i < len; ++i)
                orow[i] += a0 * p0[i] + a1 * p1[i] + a2 * p2[i] + a3 * p3[i];
        }
        for (; k < K; ++k) {
            const T a = arow[k];
            const T* p = P + std::size_t(k) * len;
            for (std::size_t i = 0; i < len; ++i) orow[i] += a * p[i];
        }
    }
}

// dw[r][k] += dot(G[r][:], P[k][:]); two G rows share each pass over P.
template <typename T>
void patch_dots(const T* G, int rows, int K, const T* P, std::size_t len, T* dw) {
    int r = 0;
    for (; r + 2 <= rows; r += 2) {
        const T* g0 = G + std::size_t(r) * len;
        const T* g1 = g0 + len;
        int k = 0;
        for (; k + 2 <= K; k += 2) {
            const T* p0 = P + std::size_t(k) * len;
            const T* p1 = p0 + len;
            T s00 = T(0), s01 = T(0), s10 = T(0), s11 = T(0);
            for (std::size_t i = 0; i < len; ++i) {
                const T v0 = p0[i], v1 = p1[i];
                s00 += g0[i] * v0;
                s01 += g0[i] * v1;
                s10 += g1[i] * v0;
                s11 += g1[i] * v1;
            }
            dw[std::size_t(r) * K + k] += s00;
            dw[std::size_t(r) * K + k + 1] += s01;
            dw[std::size_t(r + 1) * K + k] += s10;
            dw[std::size_t(r + 1) * K + k + 1] += s11;
        }
        for (; k < K; ++k) {
            const T* p = P + std::size_t(k) * len;
            T s0 = T(0), s1 = T(0);
            for (std::size_t i = 0; i < len; ++i) {
                s0 += g0[i] * p[i];
                s1 += g1[i] * p[i];
            }
            dw[std::size_t(r) * K + k] += s0;
            dw[std::size_t(r + 1) * K + k] += s1;
        }
    }
    for (; r < rows; ++r) {
        const T* grow = G + std::size_t(r) * len;
        int k = 0;
        for (; k + 4 <= K; k += 4) {
            const T* p0 = P + std::size_t(k) * len;
            const T* p1 = p0 + len;
            const T* p2 = p1 + len;
            const T* p3 = p2 + len;
            T s0 = T(0), s1 = T(0), s2 = T(0), s3 = T(0);
            for (std::size_t i = 0; i < len; ++i) {
                s0 += grow[i] * p0[i];
                s1 += grow[i] * p1[i];
                s2 += grow[i] * p2[i];
                s3 += grow[i] * p3[i];
            }
            dw[std::size_t(r) * K + k] += s0;
            dw[std::size_t(r) * K + k + 1] += s1;
            dw[std::size_t(r) * K + k + 2] += s2;
            dw[std::size_t(r) * K + k + 3] += s3;
        }
        for (; k < K; ++k) {
            const T* p = P + std::size_t(k) * len;
            T s = T(0);
            for (std::size_t i = 0; i < len; ++i) s += grow[i] * p[i];
            dw[std::size_t(r) * K + k] += s;
        }
    }
}

template <typename T>
bool is_pointwise(const ConvDims& d) {
    return d.kH == 1 && d.kW == 1 && d.stride == 1 && d.padding == 0;
}

// Per-thread scratch reused across conv calls; im2col overwrites every
// element it needs, so stale contents never leak.
template <typename T>
std::vector<T>& conv_scratch(int which, std::size_t n) {
    static thread_local std::vector<T> bufs[3];
    auto& b = bufs[which];
    if (b.size() < n) b.resize(n);
    return b;
}

} // namespace detail

// Direct cross-correlation with zero padding (no kernel flip).
// out[n,oc,oh,ow] = bias[oc] + sum w[oc,ic',kh,kw] * x[n,ic,oh*s-p+kh,ow*s-p+kw]
template <typename T>
TensorPtr<T> conv2d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& bias,
                    int stride, int padding, int groups = 1) {
    const auto d = detail::conv_dims(x, w, bias, stride, padding, groups);
    const std::size_t ohw = std::size_t(d.OH) * d.OW;
    const int K = d.cin_per_g * d.kH * d.kW;
    const bool pointwise = detail::is_pointwise<T>(d);

    std::vector<T> out(std::size_t(d.N) * d.Cout * ohw);
    auto& patches = detail::conv_scratch<T>(0, pointwise ? 0 : std::size_t(K) * ohw);
    for (int n = 0; n < d.N; ++n) {
        const T* xs = x->values.data() + std::size_t(n) * d.Cin * d.H * d.W;
        for (int g = 0; g < d.groups; ++g) {
            const T* P = xs + std::size_t(g) * d.cin_per_g * d.H * d.W; // pointwise: planes are the patches
            if (!pointwise) {
                detail::im2col(xs, g, d, patches.data());
                P = patches.data();
            }
            T* og = out.data() + (std::size_t(n) * d.Cout + std::size_t(g) * d.cout_per_g) * ohw;
            detail::rows_times_patches(w->values.data() + std::size_t(g) * d.cout_per_g * K, d.cout_per_g,
                                       K, P, ohw, og, false);
            for (int ocl = 0; ocl < d.cout_per_g; ++ocl) {
                const T bv = bias->values[std::size_t(g) * d.cout_per_g + ocl];
                T* orow = og + std::size_t(ocl) * ohw;
                for (std::size_t i = 0; i < ohw; ++i) orow[i] += bv;
            }
        }
    }
    auto res = TensorT<T>::from({d.N, d.Cout, d.OH, d.OW}, std::move(out));
    check_finite(res, "conv2d output");
    record<T>(tape, {x, w, bias}, res, [x, w, bias, res, d] {
        if (res->grad.empty()) return;
        const std::size_t ohw = std::size_t(d.OH) * d.OW;
        const int K = d.cin_per_g * d.kH * d.kW;
        const bool pointwise = detail::is_pointwise<T>(d);
        const bool need_dx = x->requires_grad;
        const bool need_dw = w->requires_grad;
        if (need_dx) x->ensure_grad();
        if (need_dw) w->ensure_grad();
        auto& patches = detail::conv_scratch<T>(0, (need_dw && !pointwise) ? std::size_t(K) * ohw : 0);
        auto& wtg = detail::conv_scratch<T>(1, need_dx ? std::size_t(K) * ohw : 0);
        auto& wT = detail::conv_scratch<T>(2, need_dx ? std::size_t(K) * d.cout_per_g : 0);
        for (int g = 0; g < d.groups; ++g) {
            const T* wg = w->values.data() + std::size_t(g) * d.cout_per_g * K;
            if (need_dx)
                for (int ocl = 0; ocl < d.cout_per_g; ++ocl)
                    for (int k = 0; k < K; ++k)
                        wT[std::size_t(k) * d.cout_per_g + ocl] = wg[std::size_t(ocl) * K + k];
            for (int n = 0; n < d.N; ++n) {
                const T* xs = x->values.data() + std::size_t(n) * d.Cin * d.H * d.W;
                const T* G = res->grad.data() +
                             (std::size_t(n) * d.Cout + std::size_t(g) * d.cout_per_g) * ohw;
                if (need_dw) {
                    const T* P = xs + std::size_t(g) * d.cin_per_g * d.H * d.W;
                    if (!pointwise) {
                        detail::im2col(xs, g, d, patches.data());
                        P = patches.data();
                    }
                    detail::patch_dots(G, d.cout_per_g, K, P, ohw,
                                       w->grad.data() + std::size_t(g) * d.cout_per_g * K);
                }
                if (need_dx) {
                    // wtg[k][:] = sum_oc w[oc][k] * G[oc][:], then scatter back
                    detail::rows_times_patches(wT.data(), K, d.cout_per_g, G, ohw, wtg.data(), false);
                    T* dxs = x->grad.data() + std::size_t(n) * d.Cin * d.H * d.W;
                    if (pointwise) {
                        T* dplane = dxs + std::size_t(g) * d.cin_per_g * d.H * d.W;
                        for (std::size_t i = 0; i < std::size_t(K) * ohw; ++i) dplane[i] += wtg[i];
                    } else {
                        detail::col2im_add(wtg.data(), g, d, dxs);
                    }
                }
            }
        }
        if (bias->requires_grad) {
            bias->ensure_grad();
            for (int n = 0; n < d.N; ++n)
                for (int oc = 0; oc < d.Cout; ++oc) {
                    const T* grow = res->grad.data() + (std::size_t(n) * d.Cout + oc) * ohw;
                    T acc = T(0);
                    for (std::size_t i = 0; i < ohw; ++i) acc += grow[i];
                    bias->grad[std::size_t(oc)] += acc;
                }
        }
    });
    return res;
}

// out[n,c] = mean over spatial positions of x[n,c,:,:]
template <typename T>
TensorPtr<T> global_avg_pool(Tape<T>* tape, const TensorPtr<T>& x) {
    detail::require_rank(x, 4, "global_avg_pool");
    const int N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
    const std::size_t hw = std::size_t(H) * W;
    std::vector<T> out(std::size_t(N) * C);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* p = x->values.data() + (std::size_t(n) * C + c) * hw;
            double acc = 0;
            for (std::size_t i = 0; i < hw; ++i) acc += double(p[i]);
            out[std::size_t(n) * C + c] = T(acc / double(hw));
        }
    auto res = TensorT<T>::from({N, C}, std::move(out));
    record<T>(tape, {x}, res, [x, res, N, C, hw] {
        if (res->grad.empty() || !x->requires_grad) return;
        x->ensure_grad();
        const T inv = T(1) / T(hw);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const T g = res->grad[std::size_t(n) * C + c] * inv;
                T* p = x->grad.data() + (std::size_t(n) * C + c) * hw;
                for (std::size_t i = 0; i < hw; ++i) p[i] += g;
            }
    });
    return res;
}

} // namespace zoomiq::nd
