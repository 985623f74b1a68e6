#pragma once

// Mask-guided pose token pruning: density-peaks clustering with kNN densities
// over joint-pooled frame tokens, restricted by the pooled temporal mask.

#include "htp/tcep.hpp"
#include "htp/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

namespace htp::mgptp {

inline constexpr double kMaskEpsilon = 1e-6;

template <typename Scalar>
struct FrameTokens {
    Mat<Scalar> z;         // F x D, mean over joints
    Mat<Scalar> mask;      // F x F, binarised pooled mask
    Mat<Scalar> raw_pool;  // F x F, mean over joints before thresholding
};

template <typename Scalar>
struct ClusterState {
    Mat<Scalar> distance;  // masked distances d_m
    Scalar sentinel = 0;   // Lambda
    std::vector<Scalar> density;           // phi
    std::vector<Index> support;            // s_p
    std::vector<Scalar> response_density;  // phi-hat
    std::vector<Scalar> separation;        // omega
    Index k = 0;

    std::vector<Scalar> saliency() const {
        std::vector<Scalar> out(density.size());
        for (std::size_t p = 0; p < out.size(); ++p) out[p] = separation[p] * response_density[p];
        return out;
    }
};

struct SelectionIndex {
    std::vector<Index> frames;  // strictly increasing
};

template <typename Scalar>
struct PruneResult {
    Ten3<Scalar> condensed;  // J x f x D
    SelectionIndex index;
};

template <typename Scalar>
FrameTokens<Scalar> pool_tokens_and_mask(const Ten3<Scalar>& tokens, const tcep::TemporalMask<Scalar>& mask,
                                         Scalar threshold) {
    if (!(threshold > 0 && threshold <= 1)) {
        throw std::invalid_argument("pool_tokens_and_mask: threshold must lie in (0, 1], got " +
                                    std::to_string(threshold));
    }
    const auto& m = mask.masks;
    if (m.d0() != tokens.d0() || m.d1() != tokens.d1() || m.d2() != tokens.d1()) {
        throw DimensionError("pool_tokens_and_mask: mask " + m.shape() + " vs tokens " + tokens.shape());
    }
    const Index joints = tokens.d0();
    const Index frames = tokens.d1();
    FrameTokens<Scalar> out{Mat<Scalar>::Zero(frames, tokens.d2()), Mat<Scalar>::Zero(frames, frames),
                            Mat<Scalar>::Zero(frames, frames)};
    for (Index j = 0; j < joints; ++j) {
        out.z += tokens.slice(j);
        out.raw_pool += m.slice(j);
    }
    out.z /= static_cast<Scalar>(joints);
    out.raw_pool /= static_cast<Scalar>(joints);
    out.mask = (out.raw_pool.array() >= threshold).template cast<Scalar>();
    return out;
}

/// d_m(p,q) = ||z_p - z_q|| / sqrt(D) on mask support, Lambda elsewhere, where
/// Lambda exceeds the largest pairwise distance by kMaskEpsilon.
template <typename Scalar>
std::pair<Mat<Scalar>, Scalar> masked_distance(const FrameTokens<Scalar>& ft) {
    const Index frames = ft.z.rows();
    if (ft.z.cols() < 1) throw DimensionError("masked_distance: feature width must be >= 1");
    require_same_shape(ft.mask, Mat<Scalar>(frames, frames), "masked_distance");
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(ft.z.cols()));
    Mat<Scalar> raw = Mat<Scalar>::Zero(frames, frames);
    Scalar largest = 0;
    for (Index p = 0; p < frames; ++p) {
        for (Index q = p + 1; q < frames; ++q) {
            const Scalar d = (ft.z.row(p) - ft.z.row(q)).norm() * scale;
            raw(p, q) = d;
            raw(q, p) = d;
            largest = std::max(largest, d);
        }
    }
    const Scalar sentinel = largest + static_cast<Scalar>(kMaskEpsilon);
    for (Index p = 0; p < frames; ++p) {
        for (Index q = 0; q < frames; ++q) {
            if (p != q && ft.mask(p, q) != Scalar(1)) raw(p, q) = sentinel;
        }
    }
    return {raw, sentinel};
}

/// Gaussian-kernel kNN density; p itself is excluded and distance ties at the
/// k-th neighbour are all admitted. k above F-1 is clamped.
template <typename Scalar>
std::vector<Scalar> knn_density(const Mat<Scalar>& distance, Index k) {
    const Index frames = distance.rows();
    if (k < 1) throw std::invalid_argument("knn_density: k must be >= 1, got " + std::to_string(k));
    if (frames < 2) return std::vector<Scalar>(static_cast<std::size_t>(frames), Scalar(1));
    const Index kk = std::min(k, frames - 1);
    std::vector<Scalar> phi(static_cast<std::size_t>(frames));
    std::vector<Scalar> row;
    for (Index p = 0; p < frames; ++p) {
        row.clear();
        for (Index q = 0; q < frames; ++q) {
            if (q != p) row.push_back(distance(p, q));
        }
        std::nth_element(row.begin(), row.begin() + (kk - 1), row.end());
        const Scalar radius = row[static_cast<std::size_t>(kk - 1)];
        Scalar acc = 0;
        for (Index q = 0; q < frames; ++q) {
            if (q != p && distance(p, q) <= radius) acc += distance(p, q) * distance(p, q);
        }
        phi[static_cast<std::size_t>(p)] = std::exp(-acc / static_cast<Scalar>(kk));
    }
    return phi;
}

/// phi-hat_p = phi_p * softmax(s~)_p with s_p the pooled-mask row support.
template <typename Scalar>
std::vector<Scalar> response_density(const std::vector<Scalar>& phi, const Mat<Scalar>& pooled_mask,
                                     std::vector<Index>* support_out = nullptr) {
    const Index frames = pooled_mask.rows();
    if (static_cast<Index>(phi.size()) != frames) {
        throw DimensionError("response_density: " + std::to_string(phi.size()) + " densities vs mask " +
                             shape_str(pooled_mask));
    }
    RowVec<Scalar> stable(frames);
    std::vector<Index> support(static_cast<std::size_t>(frames));
    for (Index p = 0; p < frames; ++p) {
        const Index s = static_cast<Index>(pooled_mask.row(p).sum());
        support[static_cast<std::size_t>(p)] = s;
        stable(p) = s > 0 ? static_cast<Scalar>(s) : neg_inf<Scalar>();
    }
    const RowVec<Scalar> weights = softmax_row(stable);
    std::vector<Scalar> out(phi.size());
    for (Index p = 0; p < frames; ++p) out[static_cast<std::size_t>(p)] = phi[static_cast<std::size_t>(p)] * weights(p);
    if (support_out != nullptr) *support_out = std::move(support);
    return out;
}

/// True when frame q ranks above frame p in density (ties go to the lower index).
template <typename Scalar>
bool ranks_above(const std::vector<Scalar>& density, Index q, Index p) {
    const auto dq = density[static_cast<std::size_t>(q)];
    const auto dp = density[static_cast<std::size_t>(p)];
    return dq > dp || (dq == dp && q < p);
}

/// omega_p: distance to the nearest higher-ranked frame; the top-ranked frame
/// gets its largest distance instead.
template <typename Scalar>
std::vector<Scalar> separation_distance(const Mat<Scalar>& distance, const std::vector<Scalar>& density) {
    const Index frames = distance.rows();
    if (static_cast<Index>(density.size()) != frames) {
        throw DimensionError("separation_distance: " + std::to_string(density.size()) + " densities vs " +
                             shape_str(distance));
    }
    std::vector<Scalar> omega(static_cast<std::size_t>(frames), Scalar(0));
    for (Index p = 0; p < frames; ++p) {
        bool found = false;
        Scalar nearest = 0;
        Scalar farthest = 0;
        for (Index q = 0; q < frames; ++q) {
            farthest = std::max(farthest, distance(p, q));
            if (q != p && ranks_above(density, q, p)) {
                nearest = found ? std::min(nearest, distance(p, q)) : distance(p, q);
                found = true;
            }
        }
        omega[static_cast<std::size_t>(p)] = found ? nearest : farthest;
    }
    return omega;
}

/// Runs the clustering stages on pooled frame tokens.
template <typename Scalar>
ClusterState<Scalar> cluster(const FrameTokens<Scalar>& ft, Index k) {
    ClusterState<Scalar> state;
    std::tie(state.distance, state.sentinel) = masked_distance(ft);
    state.k = std::min<Index>(k, std::max<Index>(ft.z.rows() - 1, 1));
    state.density = knn_density(state.distance, k);
    state.response_density = response_density(state.density, ft.mask, &state.support);
    state.separation = separation_distance(state.distance, state.response_density);
    return state;
}

/// Indices of the f largest saliency scores (ties to the lower index), sorted
/// ascending.
template <typename Scalar>
SelectionIndex top_f_frames(const std::vector<Scalar>& saliency, Index keep) {
    const Index frames = static_cast<Index>(saliency.size());
    if (keep < 1 || keep > frames) {
        throw std::invalid_argument("select_and_prune: f = " + std::to_string(keep) + " outside [1, " +
                                    std::to_string(frames) + "]");
    }
    std::vector<Index> order(static_cast<std::size_t>(frames));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return saliency[static_cast<std::size_t>(a)] > saliency[static_cast<std::size_t>(b)];
    });
    order.resize(static_cast<std::size_t>(keep));
    std::sort(order.begin(), order.end());
    return SelectionIndex{std::move(order)};
}

template <typename Scalar>
PruneResult<Scalar> select_and_prune(const Ten3<Scalar>& tokens, const ClusterState<Scalar>& state, Index keep) {
    if (static_cast<Index>(state.density.size()) != tokens.d1()) {
        throw DimensionError("select_and_prune: cluster state over " + std::to_string(state.density.size()) +
                             " frames vs tokens " + tokens.shape());
    }
    auto index = top_f_frames(state.saliency(), keep);
    auto condensed = gather_axis1(tokens, index.frames);
    return PruneResult<Scalar>{std::move(condensed), std::move(index)};
}

/// Pool, cluster and prune in one call.
template <typename Scalar>
PruneResult<Scalar> prune(const Ten3<Scalar>& tokens, const tcep::TemporalMask<Scalar>& mask, Scalar threshold,
                          Index k, Index keep, ClusterState<Scalar>* state_out = nullptr) {
    const auto ft = pool_tokens_and_mask(tokens, mask, threshold);
    auto state = cluster(ft, k);
    auto result = select_and_prune(tokens, state, keep);
    if (state_out != nullptr) *state_out = std::move(state);
    return result;
}

}  // namespace htp::mgptp
