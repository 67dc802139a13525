#pragma once

#include <vector>

#include "usflab/error.hpp"

namespace usflab {

/// Average ranks (1-based, ties get the mean of their positions).
std::vector<double> average_ranks(const std::vector<double>& v);

/// Spearman's rho: Pearson correlation of average ranks.
/// Throws Error for constant inputs where the correlation is undefined.
double spearman_rho(const std::vector<double>& a, const std::vector<double>& b);

/// Kendall's tau-b with tie correction, computed with Knight's
/// O(n log n) merge-sort inversion count.
double kendall_tau(const std::vector<double>& a, const std::vector<double>& b);

} // namespace usflab
