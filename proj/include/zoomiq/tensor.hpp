#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "zoomiq/errors.hpp"

namespace zoomiq::nd {

template <typename T>
struct TensorT;

template <typename T>
using TensorPtr = std::shared_ptr<TensorT<T>>;

// Dense row-major n-d array with an optional gradient buffer. Training runs
// on float tensors; the gradient-check harness instantiates the same code
// with double.
template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> values;
    bool requires_grad = false;
    std::vector<T> grad; // empty until first accumulation, then same size as values

    TensorT(std::vector<int> s, std::vector<T> v, bool rg = false)
        : shape(std::move(s)), values(std::move(v)), requires_grad(rg) {
        std::int64_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw ContractViolation("tensor dimensions must be positive");
            n *= d;
        }
        if (n != std::int64_t(values.size()))
            throw ContractViolation("tensor value count does not match shape");
    }

    std::int64_t numel() const { return std::int64_t(values.size()); }
    bool is_scalar() const { return values.size() == 1; }

    T item() const {
        if (!is_scalar()) throw ContractViolation("item() requires a scalar tensor");
        return values[0];
    }

    int dim(int i) const { return shape[std::size_t(i)]; }
    int rank() const { return int(shape.size()); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), T(0));
    }

    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
    }

    static TensorPtr<T> from(std::vector<int> shape, std::vector<T> values, bool rg = false) {
        return std::make_shared<TensorT<T>>(std::move(shape), std::move(values), rg);
    }

    static TensorPtr<T> zeros(std::vector<int> shape, bool rg = false) {
        std::int64_t n = 1;
        for (int d : shape) n *= d;
        return from(std::move(shape), std::vector<T>(std::size_t(n > 0 ? n : 0), T(0)), rg);
    }

    static TensorPtr<T> full(std::vector<int> shape, T v, bool rg = false) {
        std::int64_t n = 1;
        for (int d : shape) n *= d;
        return from(std::move(shape), std::vector<T>(std::size_t(n > 0 ? n : 0), v), rg);
    }

    static TensorPtr<T> scalar(T v, bool rg = false) { return from({1}, {v}, rg); }
};

template <typename T>
inline bool all_finite(const std::vector<T>& v) {
    for (T x : v)
        if (!std::isfinite(double(x))) return false;
    return true;
}

template <typename T>
inline void check_finite(const TensorPtr<T>& t, const char* what) {
    if (!all_finite(t->values)) throw NumericFailure(std::string("non-finite values in ") + what);
}

// Tape of recorded operations. Recording order is execution order, so the
// list is topologically sorted by construction; backward replays it once in
// reverse. Input/output handles are kept alive for the tape's lifetime.
template <typename T>
class Tape {
public:
    struct Record {
        std::vector<TensorPtr<T>> inputs;
        TensorPtr<T> output;
        std::function<void()> backward;
    };

    void push(std::vector<TensorPtr<T>> inputs, TensorPtr<T> output, std::function<void()> backward) {
        steps_.push_back(Record{std::move(inputs), std::move(output), std::move(backward)});
    }

    // Seeds d(loss)/d(loss) = 1 and runs every recorded rule exactly once,
    // newest first. Gradients accumulate into existing buffers.
    void backward(const TensorPtr<T>& loss) {
        if (!loss->is_scalar()) throw ContractViolation("backward requires a scalar loss");
        loss->ensure_grad();
        loss->grad[0] += T(1);
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it)
            it->backward();
    }

    const std::vector<Record>& records() const { return steps_; }
    std::size_t size() const { return steps_.size(); }
    void clear() { steps_.clear(); }

private:
    std::vector<Record> steps_;
};

// Marks the output differentiable and registers the rule when any input
// tracks gradients. tape == nullptr runs forward-only.
template <typename T>
inline void record(Tape<T>* tape, std::vector<TensorPtr<T>> inputs, const TensorPtr<T>& out,
                   std::function<void()> backward) {
    if (!tape) return;
    bool any = false;
    for (const auto& in : inputs)
        if (in->requires_grad) { any = true; break; }
    if (!any) return;
    out->requires_grad = true;
    tape->push(std::move(inputs), out, std::move(backward));
}

using Tensor = TensorT<float>;
using TensorF = TensorPtr<float>;
using TensorD = TensorPtr<double>;

} // namespace zoomiq::nd
