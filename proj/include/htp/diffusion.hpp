#pragma once

#include "htp/rng.hpp"
#include "htp/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace htp::diffusion {

enum class ScheduleKind { linear, cosine };

ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

/// Variance schedule over steps 1..T. Arrays are indexed by timestep with slot 0
/// holding the clean-data convention (beta_0 = 0, alpha_bar_0 = 1).
struct DiffusionSchedule {
    int steps = 0;
    ScheduleKind kind = ScheduleKind::linear;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    double alpha_bar_at(int t) const;
};

DiffusionSchedule build_schedule(int steps, ScheduleKind kind = ScheduleKind::linear);

/// DDIM noise scale for the step t -> t_prev:
/// sqrt((1 - a_prev) / (1 - a_t)) * sqrt(1 - a_t / a_prev).
double ddim_sigma(double alpha_bar_t, double alpha_bar_prev);

/// round(T * (1 - k / K)); 0 at k = K. k = 0 gives T (the chain start).
int timestep_for_iteration(int k, int iterations, int steps);

/// y_t = sqrt(a_t) y0 + sqrt(1 - a_t) eps
template <typename Scalar>
Ten3<Scalar> forward_diffuse(const Ten3<Scalar>& y0, int t, const Ten3<Scalar>& eps, const DiffusionSchedule& sched) {
    require_same_shape(y0, eps, "forward_diffuse");
    const double a = sched.alpha_bar_at(t);
    const auto c0 = static_cast<Scalar>(std::sqrt(a));
    const auto c1 = static_cast<Scalar>(std::sqrt(1.0 - a));
    Ten3<Scalar> out(y0.d0(), y0.d1(), y0.d2());
    out.rows_view() = c0 * y0.rows_view() + c1 * eps.rows_view();
    return out;
}

template <typename Scalar>
Ten3<Scalar> predict_eps_from_alpha(const Ten3<Scalar>& yt, const Ten3<Scalar>& y0_hat, double alpha_bar) {
    require_same_shape(yt, y0_hat, "predict_eps");
    if (!(alpha_bar < 1.0)) {
        throw NumericError("predict_eps: alpha_bar_t = 1 leaves no noise to recover (division guard)");
    }
    const auto c0 = static_cast<Scalar>(std::sqrt(alpha_bar));
    const auto inv = static_cast<Scalar>(1.0 / std::sqrt(1.0 - alpha_bar));
    Ten3<Scalar> out(yt.d0(), yt.d1(), yt.d2());
    out.rows_view() = (yt.rows_view() - c0 * y0_hat.rows_view()) * inv;
    return out;
}

/// eps-hat = (y_t - sqrt(a_t) y0_hat) / sqrt(1 - a_t)
template <typename Scalar>
Ten3<Scalar> predict_eps(const Ten3<Scalar>& yt, const Ten3<Scalar>& y0_hat, int t, const DiffusionSchedule& sched) {
    return predict_eps_from_alpha(yt, y0_hat, sched.alpha_bar_at(t));
}

struct StepCoefficients {
    double signal;  // sqrt(a_prev)
    double eps;     // sqrt(max(0, 1 - a_prev - sigma^2))
    double noise;   // sigma
};

/// `eta_ddim` scales sigma: 1 reproduces the stochastic form, 0 is deterministic.
StepCoefficients ddim_coefficients(double alpha_bar_t, double alpha_bar_prev, double eta_ddim);

/// One reverse step t -> t_prev with fresh noise drawn from `rng`. The noise is
/// drawn even when sigma is 0 so the stream position depends only on the step.
template <typename Scalar>
Ten3<Scalar> ddim_step(const Ten3<Scalar>& yt, const Ten3<Scalar>& y0_hat, int t, int t_prev, double eta_ddim,
                       RngStream& rng, const DiffusionSchedule& sched) {
    if (!(t_prev < t)) {
        throw std::invalid_argument("ddim_step: t_prev " + std::to_string(t_prev) + " must be below t " +
                                    std::to_string(t));
    }
    if (eta_ddim < 0.0 || eta_ddim > 1.0) {
        throw std::invalid_argument("ddim_step: eta_ddim must lie in [0, 1]");
    }
    const double a_t = sched.alpha_bar_at(t);
    const double a_prev = sched.alpha_bar_at(t_prev);
    const auto eps_hat = predict_eps_from_alpha(yt, y0_hat, a_t);
    const auto noise = gaussian<Scalar>(rng, yt.d0(), yt.d1(), yt.d2());
    const auto c = ddim_coefficients(a_t, a_prev, eta_ddim);
    Ten3<Scalar> out(yt.d0(), yt.d1(), yt.d2());
    out.rows_view() = static_cast<Scalar>(c.signal) * y0_hat.rows_view() +
                      static_cast<Scalar>(c.eps) * eps_hat.rows_view() +
                      static_cast<Scalar>(c.noise) * noise.rows_view();
    return out;
}

/// Pinhole intrinsics in pixels.
struct CameraModel {
    double fx = 1145.0;
    double fy = 1144.0;
    double cx = 512.0;
    double cy = 515.0;

    void validate() const;
};

/// Projects J x F x 3 camera-frame points to J x F x 2 pixels. Points with
/// Z <= 0 project to NaN.
Ten3d project(const Ten3d& points, const CameraModel& cam);

/// Per joint and frame, keeps the hypothesis whose reprojection is closest to
/// the 2D observation. Hypotheses with Z <= 0 at that joint are skipped; if all
/// are skipped, hypothesis 0 is used.
Ten3d jpma_aggregate(const std::vector<Ten3d>& hypotheses, const Ten3d& keypoints, const CameraModel& cam,
                     std::vector<int>* chosen = nullptr);

/// Mean per-joint Euclidean error over all joints and frames (units of the input).
double mpjpe(const Ten3d& pred, const Ten3d& gt);

}  // namespace htp::diffusion
