#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "usflab/tensor.hpp"

namespace usflab {

/// Seeded random stream. The generator (mt19937_64) and all value
/// transformations (53-bit uniform, Box-Muller normal) are fully specified,
/// so identical seeds reproduce identical sequences on any platform.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }
    const std::string& algorithm() const;

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01();

    /// Uniform integer in [0, n).
    std::size_t uniform_index(std::size_t n);

    /// One standard normal draw (Box-Muller).
    double normal();

    Tensor normal_tensor(std::vector<std::size_t> shape);

    /// Independent child stream; deterministic in (seed, salt).
    RngStream derive(std::uint64_t salt) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace usflab
