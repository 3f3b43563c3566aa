#pragma once

#include <span>
#include <vector>

namespace zoomiq::metrics {

// Average ranks, 1-based; ties get the mean of their rank range.
std::vector<double> average_ranks(std::span<const double> values);

// Pearson product-moment correlation. Throws DataError on n < 2 or zero
// variance on either side.
double plcc(std::span<const double> x, std::span<const double> y);

// Spearman rank correlation: Pearson over average ranks. Throws DataError
// with "degenerate ranking" when either rank vector has zero variance.
double srcc(std::span<const double> x, std::span<const double> y);

} // namespace zoomiq::metrics
