#include "zoomiq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "zoomiq/errors.hpp"

namespace zoomiq::metrics {

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double mean_rank = 0.5 * (double(i) + double(j)) + 1.0; // 1-based
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

namespace {

double pearson(std::span<const double> x, std::span<const double> y, const char* degenerate_msg) {
    const std::size_t n = x.size();
    if (n != y.size()) throw ContractViolation("correlation: length mismatch");
    if (n < 2) throw DataError("correlation: need at least 2 samples");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= double(n);
    my /= double(n);
    double cxy = 0, cxx = 0, cyy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        cxy += dx * dy;
        cxx += dx * dx;
        cyy += dy * dy;
    }
    if (cxx == 0.0 || cyy == 0.0) throw DataError(degenerate_msg);
    return cxy / std::sqrt(cxx * cyy);
}

} // namespace

double plcc(std::span<const double> x, std::span<const double> y) {
    return pearson(x, y, "plcc: zero variance input");
}

double srcc(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ContractViolation("srcc: length mismatch");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry, "srcc: degenerate ranking");
}

} // namespace zoomiq::metrics
