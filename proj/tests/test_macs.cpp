#include "htp/macs.hpp"

#include <doctest.h>

#include <json.hpp>

using namespace htp;

TEST_CASE("linear layer count") {
    CHECK(macs::macs_linear(17 * 243, 512, 512) == 1082916864ULL);
}

TEST_CASE("expected row support of the mask") {
    CHECK(macs::expected_row_support(243, 242) == 243);
    CHECK(macs::expected_row_support(5, 1) == 5 - (3 * 3) / 4);
}

TEST_CASE("default profile against the published totals") {
    const model::DenoiserConfig cfg;
    const auto r = macs::profile_model(cfg, 20, 10, 1);
    const double dense = macs::published_g(r.baseline.total());
    const double htp = macs::published_g(r.htp.total());
    CHECK(dense == doctest::Approx(278.1).epsilon(0.15));
    CHECK(htp == doctest::Approx(175.3).epsilon(0.15));
    CHECK(r.inference_total() == r.inference.total() * 200);
}

TEST_CASE("json report lists every stage") {
    const model::DenoiserConfig cfg;
    const auto r = macs::profile_model(cfg, 2, 3);
    const auto doc = nlohmann::json::parse(macs::report_json(r));
    CHECK(doc.contains("convention"));
    CHECK(!macs::report_table(r).empty());
}
