#include "htp/attention.hpp"
#include "htp/rng.hpp"
#include "htp/tcep.hpp"

#include <doctest.h>

#include <cmath>

using namespace htp;

TEST_CASE("top-1 mask of the three-frame example") {
    Matd s = Matd::Zero(3, 3);
    s(0, 1) = s(1, 0) = 5;
    s(0, 2) = s(2, 0) = 1;
    s(1, 2) = s(2, 1) = 2;
    Matd want(3, 3);
    want << 1, 1, 0, 1, 1, 1, 0, 1, 1;
    CHECK(tcep::select_topk_mask(s, 1) == want);
}

TEST_CASE("eta larger than F-1 is clamped") {
    RngStream rng(1);
    const Matd s = uniform_mat<double>(rng, 6, 6, 1.0);
    CHECK(tcep::select_topk_mask(s, 40) == Matd::Ones(6, 6));
}

TEST_CASE("chain adjacency is banded with self-loops") {
    const Matd a = tcep::chain_adjacency<double>(4);
    Matd want(4, 4);
    want << 1, 1, 0, 0, 1, 1, 1, 0, 0, 1, 1, 1, 0, 0, 1, 1;
    CHECK(a == want);
}

TEST_CASE("fused adjacency is exactly symmetric") {
    RngStream rng(2);
    const Matd g = uniform_mat<double>(rng, 9, 9, 3.0);
    const Matd f = tcep::fuse_adjacency(tcep::chain_adjacency<double>(9), g);
    CHECK(f == f.transpose());
}

TEST_CASE("mask construction in single precision") {
    Mat<float> s = Mat<float>::Zero(3, 3);
    s(0, 1) = s(1, 0) = 5;
    s(1, 2) = s(2, 1) = 2;
    const Mat<float> m = tcep::select_topk_mask(s, 1);
    CHECK(m(0, 2) == 0.0f);
    CHECK(m == m.transpose());
}

TEST_CASE("refinement with zero weight returns its input") {
    RngStream rng(3);
    const Ten3d y = gaussian<double>(rng, 2, 5, 4);
    const auto res = tcep::tcep_refine(y, tcep::chain_adjacency<double>(5), tcep::TcepParams<double>{Matd::Zero(4, 4), 2});
    CHECK(max_abs_diff(res.refined, y) == 0.0);
    CHECK(res.mask.masks.d0() == 2);
}

TEST_CASE("additive mask rejects non-binary input") {
    Ten3d m(1, 2, 2, 1.0);
    m(0, 1, 0) = 0.25;
    CHECK_THROWS_WITH(attn::to_additive_mask(m), doctest::Contains("mask not binary"));
}

TEST_CASE("masked attention ignores masked frames entirely") {
    RngStream rng(4);
    const Index d = 4;
    attn::AttnWeights<double> w;
    w.wq = uniform_mat<double>(rng, d, d, 0.5);
    w.wk = uniform_mat<double>(rng, d, d, 0.5);
    w.wv = uniform_mat<double>(rng, d, d, 0.5);
    w.wo = uniform_mat<double>(rng, d, d, 0.5);
    w.ln_gamma = Matd::Ones(1, d);
    w.ln_beta = Matd::Zero(1, d);
    w.heads = 2;
    Ten3d y = gaussian<double>(rng, 1, 4, d);
    Ten3d mask(1, 4, 4);
    mask.slice(0) = Matd::Identity(4, 4);
    mask(0, 0, 1) = mask(0, 1, 0) = 1.0;
    const auto additive = attn::to_additive_mask(mask);
    const Ten3d before = attn::sft_mhsa(y, additive, w);
    // frame 3 is visible only to itself, so changing it cannot move frame 0
    for (Index c = 0; c < d; ++c) y(0, 3, c) += 10.0;
    const Ten3d after = attn::sft_mhsa(y, additive, w);
    for (Index c = 0; c < d; ++c) CHECK(after(0, 0, c) == before(0, 0, c));
}
