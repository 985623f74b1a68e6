#include "htp/mgptp.hpp"
#include "htp/rng.hpp"
#include "htp/tcep.hpp"

#include <doctest.h>

#include <cmath>

using namespace htp;

TEST_CASE("distances and sentinel for a one-dimensional example") {
    mgptp::FrameTokens<double> ft{Matd(3, 1), Matd::Ones(3, 3), Matd::Ones(3, 3)};
    ft.z << 0, 3, 4;
    ft.mask(0, 2) = ft.mask(2, 0) = 0;
    const auto [d, lambda] = mgptp::masked_distance(ft);
    CHECK(d(0, 1) == 3.0);
    CHECK(d(1, 2) == 1.0);
    CHECK(lambda == 4.0 + 1e-6);
    CHECK(d(0, 2) == lambda);
}

TEST_CASE("kNN density with k = 1") {
    Matd d(3, 3);
    d << 0, 3, 4, 3, 0, 1, 4, 1, 0;
    const auto phi = mgptp::knn_density(d, 1);
    CHECK(phi[0] == std::exp(-9.0));
    CHECK(phi[1] == std::exp(-1.0));
    CHECK(phi[2] == std::exp(-1.0));
}

TEST_CASE("separation of the densest frame is its farthest distance") {
    Matd d(3, 3);
    d << 0, 3, 4, 3, 0, 1, 4, 1, 0;
    const auto sep = mgptp::separation_distance(d, std::vector<double>{3, 2, 1});
    CHECK(sep == std::vector<double>{4, 3, 1});
}

TEST_CASE("pruning keeps temporal order and the requested count") {
    RngStream rng(9);
    const Ten3d y = gaussian<double>(rng, 3, 20, 4);
    const auto mask = tcep::build_mask(y, 5);
    const auto res = mgptp::prune(y, mask, 0.5, 3, 7);
    REQUIRE(res.index.frames.size() == 7);
    for (std::size_t i = 1; i < res.index.frames.size(); ++i) CHECK(res.index.frames[i - 1] < res.index.frames[i]);
    CHECK(res.condensed.d1() == 7);
    CHECK(res.condensed(2, 0, 1) == y(2, res.index.frames[0], 1));
}

TEST_CASE("keeping every frame is the identity") {
    RngStream rng(10);
    const Ten3d y = gaussian<double>(rng, 2, 8, 3);
    const auto res = mgptp::prune(y, tcep::build_mask(y, 2), 0.5, 2, 8);
    CHECK(max_abs_diff(res.condensed, y) == 0.0);
}

TEST_CASE("keeping more frames than exist is rejected") {
    const Ten3d y(1, 4, 2, 1.0);
    CHECK_THROWS(mgptp::prune(y, tcep::build_mask(y, 1), 0.5, 2, 5));
}
