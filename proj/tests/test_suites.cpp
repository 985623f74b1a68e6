#include "htp/log.hpp"
#include "htp/verify.hpp"

#include <doctest.h>

TEST_CASE("module invariant suites") {
    htp::log::set_quiet(true);
    for (const auto& suite : htp::verify::invariants(20240521)) {
        const auto r = suite();
        INFO(htp::verify::format_line(r));
        CHECK(r.passed);
    }
}

TEST_CASE("suites agree across seeds") {
    htp::log::set_quiet(true);
    for (std::uint64_t seed : {1ULL, 2ULL, 99ULL}) {
        const auto r1 = htp::verify::mask_construction(seed, 50);
        const auto r3 = htp::verify::mgptp_oracle(seed, 100);
        INFO(r1.detail, " / ", r3.detail);
        CHECK(r1.passed);
        CHECK(r3.passed);
    }
}
