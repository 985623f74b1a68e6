#include "htp/rng.hpp"

#include <cmath>
#include <numbers>

namespace htp {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t v = splitmix64(seed_ ^ splitmix64(counter_));
    ++counter_;
    return v;
}

double RngStream::next_uniform() {
    // (k + 0.5) / 2^53 never hits 0 or 1.
    const std::uint64_t k = next_u64() >> 11;
    return (static_cast<double>(k) + 0.5) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::uint64_t RngStream::derive(std::uint64_t parent, std::uint64_t index) {
    return splitmix64(splitmix64(parent) ^ (index * kGolden + 0x632BE59BD9B4E019ULL));
}

}  // namespace htp
