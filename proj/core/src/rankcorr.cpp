#include "usflab/rankcorr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

namespace usflab {

namespace {

void check_inputs(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ContractError("rank correlation: length mismatch");
    if (a.size() < 2) throw ContractError("rank correlation: need at least 2 values");
    auto constant = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
    };
    if (constant(a) || constant(b)) {
        throw Error("rank correlation: undefined for constant input");
    }
}

// Merge sort that counts inversions (swaps of adjacent-in-order pairs).
std::uint64_t sort_counting_inversions(std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<double> buf(n);
    std::uint64_t swaps = 0;
    for (std::size_t width = 1; width < n; width *= 2) {
        for (std::size_t lo = 0; lo < n; lo += 2 * width) {
            const std::size_t mid = std::min(lo + width, n);
            const std::size_t hi = std::min(lo + 2 * width, n);
            std::size_t i = lo, j = mid, k = lo;
            while (i < mid && j < hi) {
                if (v[j] < v[i]) {
                    swaps += mid - i;
                    buf[k++] = v[j++];
                } else {
                    buf[k++] = v[i++];
                }
            }
            while (i < mid) buf[k++] = v[i++];
            while (j < hi) buf[k++] = v[j++];
            std::copy(buf.begin() + lo, buf.begin() + hi, v.begin() + lo);
        }
    }
    return swaps;
}

std::uint64_t tie_pairs(const std::vector<double>& sorted) {
    std::uint64_t total = 0;
    std::size_t run = 1;
    for (std::size_t i = 1; i <= sorted.size(); ++i) {
        if (i < sorted.size() && sorted[i] == sorted[i - 1]) {
            ++run;
        } else {
            total += static_cast<std::uint64_t>(run) * (run - 1) / 2;
            run = 1;
        }
    }
    return total;
}

} // namespace

std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
    check_inputs(a, b);
    const std::vector<double> ra = average_ranks(a);
    const std::vector<double> rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = ra[i] - ma;
        const double db = rb[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    return sab / std::sqrt(saa * sbb);
}

double kendall_tau(const std::vector<double>& a, const std::vector<double>& b) {
    check_inputs(a, b);
    const std::size_t n = a.size();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        if (a[i] != a[j]) return a[i] < a[j];
        return b[i] < b[j];
    });

    // Pairs tied in a, and tied in both, from the (a, b)-sorted sequence.
    std::uint64_t n1 = 0, n3 = 0;
    {
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && a[order[j + 1]] == a[order[i]]) ++j;
            const std::uint64_t t = j - i + 1;
            n1 += t * (t - 1) / 2;
            std::size_t k = i;
            while (k <= j) {
                std::size_t l = k;
                while (l + 1 <= j && b[order[l + 1]] == b[order[k]]) ++l;
                const std::uint64_t u = l - k + 1;
                n3 += u * (u - 1) / 2;
                k = l + 1;
            }
            i = j + 1;
        }
    }

    std::vector<double> bs(n);
    for (std::size_t i = 0; i < n; ++i) bs[i] = b[order[i]];
    const std::uint64_t swaps = sort_counting_inversions(bs);
    const std::uint64_t n2 = tie_pairs(bs);

    const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
    const double num = static_cast<double>(n0) - static_cast<double>(n1) -
                       static_cast<double>(n2) + static_cast<double>(n3) -
                       2.0 * static_cast<double>(swaps);
    const double den = std::sqrt((static_cast<double>(n0) - static_cast<double>(n1)) *
                                 (static_cast<double>(n0) - static_cast<double>(n2)));
    return num / den;
}

} // namespace usflab
