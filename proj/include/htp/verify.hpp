#pragma once

// Property and oracle suites run by `htp verify` and the acceptance binary.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace htp::verify {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Numbered acceptance criteria.
CheckResult mask_construction(std::uint64_t seed, int trials = 200);
CheckResult masked_attention(std::uint64_t seed, int trials = 50);
CheckResult mgptp_oracle(std::uint64_t seed, int trials = 500);
CheckResult sampler_consistency(std::uint64_t seed);
CheckResult forward_statistics(std::uint64_t seed, int draws = 100000);
CheckResult dense_degenerate(std::uint64_t seed);
CheckResult macs_reproduction();

/// The criteria above in order.
std::vector<std::function<CheckResult()>> criteria(std::uint64_t seed);

/// Remaining module invariants and worked examples.
std::vector<std::function<CheckResult()>> invariants(std::uint64_t seed);

/// Runs criteria and invariants, printing one line per check. Returns true when
/// every check passed.
bool run_all(std::ostream& os, std::uint64_t seed);

std::string format_line(const CheckResult& r);

}  // namespace htp::verify
