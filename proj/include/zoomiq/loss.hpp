#pragma once

#include <cmath>

#include "zoomiq/ops.hpp"

namespace zoomiq::training {

struct LossConfig {
    double lambda = 0.5;       // weight on the MSE term, in [0, 1]
    double epsilon_var = 1e-8; // std threshold below which PLCC falls back to 0.5
};

template <typename T>
nd::TensorPtr<T> mse_loss(nd::Tape<T>* tape, const nd::TensorPtr<T>& pred, const nd::TensorPtr<T>& target) {
    if (pred->shape != target->shape) throw ContractViolation("mse_loss: shape mismatch");
    return nd::reduce_mean(tape, nd::square(tape, nd::subtract(tape, pred, target)));
}

// (1 - r) / 2 where r is the Pearson correlation across the batch. When
// either side's standard deviation falls below epsilon_var the loss is the
// constant 0.5 and carries no gradient.
template <typename T>
nd::TensorPtr<T> plcc_loss(nd::Tape<T>* tape, const nd::TensorPtr<T>& pred, const nd::TensorPtr<T>& target,
                           double epsilon_var = 1e-8) {
    if (pred->shape != target->shape) throw ContractViolation("plcc_loss: shape mismatch");
    const std::int64_t n = pred->numel();
    if (n < 2) throw ContractViolation("plcc_loss: need at least 2 samples");

    auto stdev_of = [n](const std::vector<T>& v) {
        double mean = 0;
        for (T x : v) mean += double(x);
        mean /= double(n);
        double var = 0;
        for (T x : v) var += (double(x) - mean) * (double(x) - mean);
        return std::sqrt(var / double(n));
    };
    if (stdev_of(pred->values) < epsilon_var || stdev_of(target->values) < epsilon_var)
        return nd::TensorT<T>::scalar(T(0.5));

    auto dp = nd::subtract(tape, pred, nd::reduce_mean(tape, pred));
    auto dt = nd::subtract(tape, target, nd::reduce_mean(tape, target));
    auto cov = nd::reduce_mean(tape, nd::multiply(tape, dp, dt));
    auto var_p = nd::reduce_mean(tape, nd::square(tape, dp));
    auto var_t = nd::reduce_mean(tape, nd::square(tape, dt));
    auto r = nd::divide(tape, cov, nd::sqrt_op(tape, nd::multiply(tape, var_p, var_t)));
    return nd::scalar_affine(tape, r, T(-0.5), T(0.5)); // (1 - r) / 2
}

// lambda * MSE + (1 - lambda) * PLCC loss. The endpoints return the single
// term untouched so lambda = 1 is bit-equal to plain MSE.
template <typename T>
nd::TensorPtr<T> total_loss(nd::Tape<T>* tape, const nd::TensorPtr<T>& pred, const nd::TensorPtr<T>& target,
                            const LossConfig& cfg) {
    if (cfg.lambda < 0.0 || cfg.lambda > 1.0) throw ContractViolation("total_loss: lambda must be in [0, 1]");
    if (pred->shape != target->shape) throw ContractViolation("total_loss: shape mismatch");
    if (pred->numel() < 2) throw ContractViolation("total_loss: need at least 2 samples");
    if (cfg.lambda == 1.0) return mse_loss(tape, pred, target);
    if (cfg.lambda == 0.0) return plcc_loss(tape, pred, target, cfg.epsilon_var);
    auto weighted_mse = nd::scalar_mul(tape, mse_loss(tape, pred, target), T(cfg.lambda));
    auto weighted_plcc =
        nd::scalar_mul(tape, plcc_loss(tape, pred, target, cfg.epsilon_var), T(1.0 - cfg.lambda));
    return nd::add(tape, weighted_mse, weighted_plcc);
}

} // namespace zoomiq::training
