#pragma once

#include "htp/tensor.hpp"

#include <cstdint>

namespace htp {

/// Counter-based generator: draw i is a pure function of (seed, i), so the same
/// seed reproduces the same sequence on every platform. Single owner; derive
/// child streams for parallel work instead of sharing one.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64();

    /// Uniform in the open interval (0, 1), 53 bits of resolution.
    double next_uniform();

    /// Standard normal draw (Box-Muller; the second variate of a pair is cached).
    double next_gaussian();

    /// Uniform in [lo, hi).
    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_uniform(); }

    /// Seed of the child stream `index`, e.g. hypothesis h.
    static std::uint64_t derive(std::uint64_t parent, std::uint64_t index);

    RngStream child(std::uint64_t index) const { return RngStream(derive(seed_, index)); }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Tensor of independent N(0, 1) draws.
template <typename Scalar = double>
Ten3<Scalar> gaussian(RngStream& rng, Index d0, Index d1, Index d2) {
    if (d0 <= 0 || d1 <= 0 || d2 <= 0) {
        throw DimensionError("gaussian: shape must be positive, got (" + std::to_string(d0) + "x" +
                             std::to_string(d1) + "x" + std::to_string(d2) + ")");
    }
    Ten3<Scalar> out(d0, d1, d2);
    for (Index i = 0; i < out.size(); ++i) {
        out.data()[i] = static_cast<Scalar>(rng.next_gaussian());
    }
    return out;
}

/// Matrix of uniform draws in [-bound, bound).
template <typename Scalar = double>
Mat<Scalar> uniform_mat(RngStream& rng, Index rows, Index cols, Scalar bound) {
    Mat<Scalar> out(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) {
            out(r, c) = static_cast<Scalar>(rng.next_uniform(-bound, bound));
        }
    }
    return out;
}

}  // namespace htp
