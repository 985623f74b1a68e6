#include "htp/rng.hpp"
#include "htp/tensor.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace htp;

TEST_CASE("softmax maps -inf to exact zeros") {
    RowVecd v(3);
    v << 0.0, -std::numeric_limits<double>::infinity(), std::log(3.0);
    const RowVecd p = softmax_row(v);
    CHECK(p(1) == 0.0);
    CHECK(p(0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(p(2) == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("softmax rejects a row with no finite entry") {
    RowVecd v = RowVecd::Constant(4, -std::numeric_limits<double>::infinity());
    CHECK_THROWS_WITH_AS(softmax_row(v), doctest::Contains("empty support"), NumericError);
}

TEST_CASE("softmax works in single precision") {
    RowVec<float> v(2);
    v << 0.0f, 0.0f;
    const RowVec<float> p = softmax_row(v);
    CHECK(p(0) == 0.5f);
}

TEST_CASE("layer norm gives zero mean and unit variance") {
    RngStream rng(3);
    const Matd x = uniform_mat<double>(rng, 5, 16, 4.0);
    const Matd y = layer_norm(x);
    for (Index r = 0; r < y.rows(); ++r) {
        CHECK(std::abs(y.row(r).mean()) < 1e-12);
        const double var = (y.row(r).array() - y.row(r).mean()).square().mean();
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("gelu matches known values") {
    CHECK(gelu(0.0) == 0.0);
    CHECK(gelu(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-14));
    CHECK(gelu(-1.0) == doctest::Approx(-0.15865525393145707).epsilon(1e-14));
}

TEST_CASE("linear validates shapes") {
    CHECK_THROWS_AS(linear(Matd::Ones(2, 3), Matd::Ones(2, 2)), DimensionError);
    const Matd y = linear(Matd::Ones(2, 3), Matd::Ones(3, 4), Matd::Constant(1, 4, 0.5));
    CHECK(y == Matd::Constant(2, 4, 3.5));
}

TEST_CASE("ten3 slicing and gathering") {
    Ten3d t(2, 3, 4);
    for (Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<double>(i);
    CHECK(t(1, 2, 3) == 23.0);
    CHECK(t.slice(1)(0, 0) == 12.0);
    const Ten3d g = gather_axis1(t, {2, 0});
    CHECK(g(0, 0, 0) == 8.0);
    CHECK(g(1, 1, 3) == 15.0);
    const Ten3d s = swap_leading(t);
    CHECK(s(2, 1, 3) == t(1, 2, 3));
}

TEST_CASE("rng streams are reproducible and independent") {
    RngStream a(11), b(11);
    CHECK(a.next_u64() == b.next_u64());
    RngStream c = RngStream(11).child(1);
    RngStream d = RngStream(11).child(2);
    CHECK(c.next_u64() != d.next_u64());
    RngStream u(5);
    for (int i = 0; i < 1000; ++i) {
        const double x = u.next_uniform();
        REQUIRE(x >= 0.0);
        REQUIRE(x < 1.0);
    }
}
