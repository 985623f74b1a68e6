#include "htp/diffusion.hpp"

#include "htp/log.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace htp::diffusion {

ScheduleKind parse_schedule_kind(const std::string& name) {
    if (name == "linear") return ScheduleKind::linear;
    if (name == "cosine") return ScheduleKind::cosine;
    throw std::invalid_argument("unknown schedule kind '" + name + "' (expected linear or cosine)");
}

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::linear ? "linear" : "cosine"; }

double DiffusionSchedule::alpha_bar_at(int t) const {
    if (t < 0 || t > steps) {
        throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps) + "]");
    }
    return alpha_bar[static_cast<std::size_t>(t)];
}

DiffusionSchedule build_schedule(int steps, ScheduleKind kind) {
    if (steps < 1) throw std::invalid_argument("build_schedule: T must be >= 1");
    DiffusionSchedule s;
    s.steps = steps;
    s.kind = kind;
    s.beta.assign(static_cast<std::size_t>(steps) + 1, 0.0);
    if (kind == ScheduleKind::linear) {
        constexpr double lo = 1e-4;
        constexpr double hi = 2e-2;
        for (int t = 1; t <= steps; ++t) {
            s.beta[t] = steps == 1 ? lo : lo + (hi - lo) * static_cast<double>(t - 1) / (steps - 1);
        }
    } else {
        constexpr double offset = 0.008;
        auto f = [&](int t) {
            const double x = (static_cast<double>(t) / steps + offset) / (1.0 + offset) * std::numbers::pi / 2.0;
            return std::cos(x) * std::cos(x);
        };
        for (int t = 1; t <= steps; ++t) {
            s.beta[t] = std::min(1.0 - f(t) / f(t - 1), 0.999);
        }
    }
    s.alpha.assign(s.beta.size(), 1.0);
    s.alpha_bar.assign(s.beta.size(), 1.0);
    for (int t = 1; t <= steps; ++t) {
        s.alpha[t] = 1.0 - s.beta[t];
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
        if (!(s.beta[t] > 0.0 && s.beta[t] < 1.0) || !(s.alpha_bar[t] < s.alpha_bar[t - 1])) {
            throw std::logic_error("build_schedule: schedule not strictly decreasing at t = " + std::to_string(t));
        }
    }
    return s;
}

double ddim_sigma(double alpha_bar_t, double alpha_bar_prev) {
    return std::sqrt((1.0 - alpha_bar_prev) / (1.0 - alpha_bar_t)) * std::sqrt(1.0 - alpha_bar_t / alpha_bar_prev);
}

int timestep_for_iteration(int k, int iterations, int steps) {
    if (iterations < 1 || k < 0 || k > iterations) {
        throw std::invalid_argument("timestep_for_iteration: k = " + std::to_string(k) + " outside [0, " +
                                    std::to_string(iterations) + "]");
    }
    return static_cast<int>(std::lround(static_cast<double>(steps) * (1.0 - static_cast<double>(k) / iterations)));
}

StepCoefficients ddim_coefficients(double alpha_bar_t, double alpha_bar_prev, double eta_ddim) {
    const double sigma = eta_ddim * ddim_sigma(alpha_bar_t, alpha_bar_prev);
    double remaining = 1.0 - alpha_bar_prev - sigma * sigma;
    if (remaining < 0.0) {
        log::warn_once("ddim.clamp", "ddim_step: 1 - alpha_bar_prev - sigma^2 < 0, clamped to 0");
        remaining = 0.0;
    }
    return {std::sqrt(alpha_bar_prev), std::sqrt(remaining), sigma};
}

void CameraModel::validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw std::invalid_argument("camera focal lengths must be positive");
}

Ten3d project(const Ten3d& points, const CameraModel& cam) {
    if (points.d2() != 3) throw DimensionError("project: expected J x F x 3 points, got " + points.shape());
    Ten3d out(points.d0(), points.d1(), 2);
    for (Index j = 0; j < points.d0(); ++j) {
        for (Index p = 0; p < points.d1(); ++p) {
            const double z = points(j, p, 2);
            if (z <= 0.0) {
                out(j, p, 0) = out(j, p, 1) = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            out(j, p, 0) = cam.fx * points(j, p, 0) / z + cam.cx;
            out(j, p, 1) = cam.fy * points(j, p, 1) / z + cam.cy;
        }
    }
    return out;
}

Ten3d jpma_aggregate(const std::vector<Ten3d>& hypotheses, const Ten3d& keypoints, const CameraModel& cam,
                     std::vector<int>* chosen) {
    if (hypotheses.empty()) throw std::invalid_argument("jpma_aggregate: need at least one hypothesis");
    const Ten3d& first = hypotheses.front();
    if (first.d2() != 3 || keypoints.d2() != 2 || keypoints.d0() != first.d0() || keypoints.d1() != first.d1()) {
        throw DimensionError("jpma_aggregate: hypotheses " + first.shape() + " vs keypoints " + keypoints.shape());
    }
    for (const auto& h : hypotheses) require_same_shape(h, first, "jpma_aggregate");
    cam.validate();
    Ten3d out(first.d0(), first.d1(), 3);
    if (chosen != nullptr) chosen->assign(static_cast<std::size_t>(first.d0() * first.d1()), 0);
    for (Index j = 0; j < first.d0(); ++j) {
        for (Index p = 0; p < first.d1(); ++p) {
            std::size_t best = 0;
            double best_err = std::numeric_limits<double>::infinity();
            for (std::size_t h = 0; h < hypotheses.size(); ++h) {
                const double z = hypotheses[h](j, p, 2);
                if (!(z > 0.0)) continue;
                const double du = cam.fx * hypotheses[h](j, p, 0) / z + cam.cx - keypoints(j, p, 0);
                const double dv = cam.fy * hypotheses[h](j, p, 1) / z + cam.cy - keypoints(j, p, 1);
                const double err = std::hypot(du, dv);
                if (err < best_err) {
                    best_err = err;
                    best = h;
                }
            }
            for (Index c = 0; c < 3; ++c) out(j, p, c) = hypotheses[best](j, p, c);
            if (chosen != nullptr) (*chosen)[static_cast<std::size_t>(j * first.d1() + p)] = static_cast<int>(best);
        }
    }
    return out;
}

double mpjpe(const Ten3d& pred, const Ten3d& gt) {
    require_same_shape(pred, gt, "mpjpe");
    if (pred.d2() != 3) throw DimensionError("mpjpe: expected J x F x 3 poses, got " + pred.shape());
    double total = 0.0;
    for (Index j = 0; j < pred.d0(); ++j) {
        for (Index p = 0; p < pred.d1(); ++p) {
            const double dx = pred(j, p, 0) - gt(j, p, 0);
            const double dy = pred(j, p, 1) - gt(j, p, 1);
            const double dz = pred(j, p, 2) - gt(j, p, 2);
            total += std::sqrt(dx * dx + dy * dy + dz * dz);
        }
    }
    return total / static_cast<double>(pred.d0() * pred.d1());
}

}  // namespace htp::diffusion
