#pragma once

#include <cmath>
#include <vector>

#include "zoomiq/tensor.hpp"

namespace zoomiq::nd {

// Adam with bias correction. Moment buffers are laid out parallel to the
// parameter list passed at init; the step count is shared.
template <typename T>
struct AdamState {
    T lr = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T epsilon = T(1e-8);
    long long t = 0;
    std::vector<std::vector<T>> m, v;

    void init(const std::vector<TensorPtr<T>>& params) {
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.emplace_back(p->values.size(), T(0));
            v.emplace_back(p->values.size(), T(0));
        }
        t = 0;
    }
};

template <typename T>
void adam_step(const std::vector<TensorPtr<T>>& params, AdamState<T>& st) {
    if (st.m.size() != params.size())
        throw ContractViolation("adam_step: state not initialized for this parameter list");
    st.t += 1;
    const T bc1 = T(1) - T(std::pow(double(st.beta1), double(st.t)));
    const T bc2 = T(1) - T(std::pow(double(st.beta2), double(st.t)));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        if (p->grad.empty()) continue; // no accumulated gradient means zero update
        if (p->grad.size() != p->values.size())
            throw ContractViolation("adam_step: gradient shape mismatch");
        if (!all_finite(p->grad)) throw NumericFailure("adam_step: non-finite gradient");
        auto& m = st.m[pi];
        auto& v = st.v[pi];
        for (std::size_t i = 0; i < p->values.size(); ++i) {
            const T g = p->grad[i];
            m[i] = st.beta1 * m[i] + (T(1) - st.beta1) * g;
            v[i] = st.beta2 * v[i] + (T(1) - st.beta2) * g * g;
            const T mhat = m[i] / bc1;
            const T vhat = v[i] / bc2;
            p->values[i] -= st.lr * mhat / (std::sqrt(vhat) + st.epsilon);
        }
    }
}

} // namespace zoomiq::nd
