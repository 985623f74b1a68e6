#include "htp/diffusion.hpp"
#include "htp/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace htp;

TEST_CASE("linear schedule endpoints") {
    const auto s = diffusion::build_schedule(1000);
    CHECK(s.beta[1] == 1e-4);
    CHECK(s.beta[1000] == doctest::Approx(0.02).epsilon(1e-14));
    CHECK(s.alpha_bar[0] == 1.0);
    CHECK(s.alpha_bar[1000] < 5e-5);
}

TEST_CASE("timesteps visited by the sampler") {
    CHECK(diffusion::timestep_for_iteration(0, 10, 1000) == 1000);
    CHECK(diffusion::timestep_for_iteration(1, 10, 1000) == 900);
    CHECK(diffusion::timestep_for_iteration(10, 10, 1000) == 0);
    CHECK(diffusion::timestep_for_iteration(1, 3, 1000) == 667);
}

TEST_CASE("sigma at the reference pair") {
    CHECK(std::abs(diffusion::ddim_sigma(0.5, 0.75) - std::sqrt(1.0 / 6.0)) < 1e-12);
}

TEST_CASE("one deterministic step to t = 0 returns the estimate") {
    const auto sched = diffusion::build_schedule(1000);
    RngStream rng(2);
    const Ten3d yt = gaussian<double>(rng, 2, 3, 3);
    const Ten3d y0 = gaussian<double>(rng, 2, 3, 3);
    const Ten3d out = diffusion::ddim_step(yt, y0, 1000, 0, 0.0, rng, sched);
    CHECK(max_abs_diff(out, y0) < 1e-12);
}

TEST_CASE("projection and aggregation close the camera loop") {
    const diffusion::CameraModel cam;
    Ten3d p(1, 1, 3);
    p(0, 0, 0) = 100.0;
    p(0, 0, 1) = -50.0;
    p(0, 0, 2) = 4000.0;
    const Ten3d uv = diffusion::project(p, cam);
    CHECK(uv(0, 0, 0) == doctest::Approx(cam.fx * 0.025 + cam.cx));
    Ten3d off = p;
    off(0, 0, 0) += 30.0;
    std::vector<int> chosen;
    const Ten3d agg = diffusion::jpma_aggregate({off, p}, uv, cam, &chosen);
    CHECK(chosen[0] == 1);
    CHECK(max_abs_diff(agg, p) == 0.0);
}

TEST_CASE("MPJPE of a 3-4-5 offset") {
    Ten3d a(1, 2, 3), b(1, 2, 3);
    b(0, 0, 0) = 3;
    b(0, 0, 1) = 4;
    b(0, 1, 2) = 5;
    CHECK(diffusion::mpjpe(a, b) == 5.0);
}
