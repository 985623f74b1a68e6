#include "htp/denoiser.hpp"
#include "htp/rng.hpp"

#include <doctest.h>

using namespace htp;

namespace {

model::DenoiserConfig tiny() {
    model::DenoiserConfig cfg;
    cfg.joints = 5;
    cfg.frames = 12;
    cfg.width = 8;
    cfg.heads = 2;
    cfg.blocks = 3;
    cfg.sft_blocks = 1;
    cfg.keep = 4;
    cfg.eta = 3;
    cfg.knn = 2;
    return cfg;
}

}  // namespace

TEST_CASE("skeleton adjacency") {
    const Matd h = model::h36m_skeleton();
    CHECK(h.rows() == 17);
    CHECK(h == h.transpose());
    CHECK(h.diagonal() == Eigen::VectorXd::Ones(17));
    CHECK(h.sum() == 17 + 2 * 16);
    const Matd n = model::normalized_adjacency(model::chain_skeleton(3));
    CHECK(n(0, 0) == doctest::Approx(0.5));
    CHECK(n(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)));
}

TEST_CASE("forward pass shape and retained frames") {
    const auto cfg = tiny();
    const auto params = model::init_params(cfg, 1);
    RngStream rng(2);
    model::ForwardTrace trace;
    const Ten3d out = model::denoise_forward(gaussian<double>(rng, 5, 12, 3), gaussian<double>(rng, 5, 12, 2), 10.0,
                                             cfg, params, &trace);
    CHECK(out.d0() == 5);
    CHECK(out.d1() == 12);
    CHECK(out.d2() == 3);
    CHECK(trace.retained.size() == 4);
    CHECK(all_finite(out));
}

TEST_CASE("full mask and no pruning reproduce the dense pipeline") {
    auto cfg = tiny();
    cfg.eta = cfg.frames - 1;
    cfg.keep = cfg.frames;
    const auto params = model::init_params(cfg, 3);
    RngStream rng(4);
    const Ten3d y = gaussian<double>(rng, 5, 12, 3);
    const Ten3d x = gaussian<double>(rng, 5, 12, 2);
    CHECK(max_abs_diff(model::denoise_forward(y, x, 400.0, cfg, params),
                       model::dense_reference_forward(y, x, 400.0, cfg, params)) <= 1e-10);
}

TEST_CASE("configuration errors are named") {
    auto cfg = tiny();
    cfg.keep = 13;
    CHECK_THROWS_WITH(cfg.validate(), doctest::Contains("f = 13"));
    cfg = tiny();
    cfg.sft_blocks = 4;
    CHECK_THROWS_WITH(cfg.validate(), doctest::Contains("n1 = 4"));
}

TEST_CASE("parameters with the wrong shape are rejected") {
    const auto cfg = tiny();
    auto params = model::init_params(cfg, 1);
    params.head_w = Matd::Zero(8, 2);
    CHECK_THROWS_WITH(model::validate_params(cfg, params), doctest::Contains("head.w"));
}
