#pragma once

// Temporal correlation-enhanced pruning: per-joint top-eta frame selection
// over a scaled similarity, fused with a global temporal adjacency.

#include "htp/log.hpp"
#include "htp/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

namespace htp::tcep {

/// Binary per-joint frame masks, J x F x F, values exactly 0 or 1.
template <typename Scalar>
struct TemporalMask {
    Ten3<Scalar> masks;
    Index eta = 0;

    Index joints() const { return masks.d0(); }
    Index frames() const { return masks.d1(); }
};

template <typename Scalar>
struct TcepParams {
    Mat<Scalar> weight;  // D x D, shared across joints
    Index eta = 1;
};

template <typename Scalar>
struct TcepResult {
    Ten3<Scalar> refined;
    TemporalMask<Scalar> mask;
};

/// Temporal chain graph: ones on the diagonal and the first off-diagonals.
template <typename Scalar>
Mat<Scalar> chain_adjacency(Index frames) {
    Mat<Scalar> a = Mat<Scalar>::Zero(frames, frames);
    for (Index p = 0; p < frames; ++p) {
        a(p, p) = 1;
        if (p + 1 < frames) {
            a(p, p + 1) = 1;
            a(p + 1, p) = 1;
        }
    }
    return a;
}

/// ((A + G) + (A + G)^T) / 2 for base adjacency A and global topology G.
template <typename DA, typename DG>
Mat<typename DA::Scalar> fuse_adjacency(const Eigen::MatrixBase<DA>& base, const Eigen::MatrixBase<DG>& global) {
    if (base.rows() != base.cols()) {
        throw DimensionError("fuse_adjacency: base adjacency not square " + shape_str(base));
    }
    require_same_shape(base, global, "fuse_adjacency");
    const Mat<typename DA::Scalar> sum = base + global;
    Mat<typename DA::Scalar> fused(sum.rows(), sum.cols());
    // Elementwise so that (p,q) and (q,p) add the same two operands in the same
    // order and the result is bitwise symmetric.
    for (Index p = 0; p < sum.rows(); ++p) {
        for (Index q = 0; q < sum.cols(); ++q) {
            const auto lo = std::min(p, q);
            const auto hi = std::max(p, q);
            fused(p, q) = (sum(lo, hi) + sum(hi, lo)) / 2;
        }
    }
    return fused;
}

/// S = Y Y^T / sqrt(D) for one joint's F x D token sequence.
template <typename Derived>
Mat<typename Derived::Scalar> frame_similarity(const Eigen::MatrixBase<Derived>& tokens) {
    using Scalar = typename Derived::Scalar;
    if (tokens.cols() < 1) {
        throw DimensionError("frame_similarity: feature width must be >= 1, got " + shape_str(tokens));
    }
    const Index frames = tokens.rows();
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(tokens.cols()));
    Mat<Scalar> s(frames, frames);
    for (Index p = 0; p < frames; ++p) {
        for (Index q = p; q < frames; ++q) {
            const Scalar v = tokens.row(p).dot(tokens.row(q)) * scale;
            s(p, q) = v;
            s(q, p) = v;
        }
    }
    return s;
}

/// Number of neighbours actually selected per row for a requested eta.
inline Index effective_eta(Index eta, Index frames) {
    if (eta < 1) {
        throw std::invalid_argument("eta must be >= 1, got " + std::to_string(eta));
    }
    if (frames >= 1 && eta > frames - 1) {
        log::warn_once("tcep.eta_clamp", "eta " + std::to_string(eta) + " exceeds F-1 = " +
                                             std::to_string(frames - 1) + "; clamping");
        return std::max<Index>(frames - 1, 0);
    }
    return eta;
}

/// Off-diagonal frames of row p ordered by descending score; equal scores keep
/// ascending frame order.
template <typename Derived>
std::vector<Index> ranked_neighbours(const Eigen::MatrixBase<Derived>& s, Index p) {
    std::vector<Index> order;
    order.reserve(static_cast<std::size_t>(s.cols() - 1));
    for (Index q = 0; q < s.cols(); ++q) {
        if (q != p) order.push_back(q);
    }
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return s(p, a) > s(p, b); });
    return order;
}

/// Row-wise top-eta selection with the diagonal suppressed, then self-loops
/// restored and OR-symmetrised.
template <typename Derived>
Mat<typename Derived::Scalar> select_topk_mask(const Eigen::MatrixBase<Derived>& s, Index eta) {
    using Scalar = typename Derived::Scalar;
    if (s.rows() != s.cols()) {
        throw DimensionError("select_topk_mask: similarity not square " + shape_str(s));
    }
    const Index frames = s.rows();
    if (frames < 2) {
        return Mat<Scalar>::Ones(frames, frames);
    }
    const Index keep = effective_eta(eta, frames);
    Mat<Scalar> m = Mat<Scalar>::Identity(frames, frames);
    for (Index p = 0; p < frames; ++p) {
        const auto order = ranked_neighbours(s, p);
        for (Index r = 0; r < keep; ++r) {
            const Index q = order[static_cast<std::size_t>(r)];
            m(p, q) = 1;
            m(q, p) = 1;
        }
    }
    return m;
}

/// Keeps S where the mask is 1 and writes -inf elsewhere.
template <typename DS, typename DM>
Mat<typename DS::Scalar> mask_similarity(const Eigen::MatrixBase<DS>& s, const Eigen::MatrixBase<DM>& mask) {
    using Scalar = typename DS::Scalar;
    require_same_shape(s, mask, "mask_similarity");
    Mat<Scalar> out(s.rows(), s.cols());
    for (Index p = 0; p < s.rows(); ++p) {
        for (Index q = 0; q < s.cols(); ++q) {
            out(p, q) = mask(p, q) == Scalar(1) ? s(p, q) : neg_inf<Scalar>();
        }
    }
    return out;
}

namespace detail {

template <typename Scalar>
void check_refine_shapes(const Ten3<Scalar>& tokens, const Mat<Scalar>& fused, const Mat<Scalar>& weight) {
    if (fused.rows() != tokens.d1() || fused.cols() != tokens.d1()) {
        throw DimensionError("tcep_refine: adjacency " + shape_str(fused) + " does not match frame count of " +
                             tokens.shape());
    }
    if (weight.rows() != tokens.d2() || weight.cols() != tokens.d2()) {
        throw DimensionError("tcep_refine: projection " + shape_str(weight) + " does not match feature width of " +
                             tokens.shape());
    }
}

template <typename Scalar, typename DA>
void residual_update(const ConstMatMap<Scalar>& y, const Eigen::MatrixBase<DA>& attn, const Mat<Scalar>& weight,
                     MatMap<Scalar> out) {
    const Mat<Scalar> mixed = attn * y;
    out = y + gelu(Mat<Scalar>(mixed * weight));
}

}  // namespace detail

/// Builds the per-joint mask and refines the tokens:
///   A_j = A_T . softmax(S_j masked), Y'_j = Y_j + GELU((A_j Y_j) W).
template <typename Scalar>
TcepResult<Scalar> tcep_refine(const Ten3<Scalar>& tokens, const Mat<Scalar>& fused_adjacency,
                               const TcepParams<Scalar>& params) {
    detail::check_refine_shapes(tokens, fused_adjacency, params.weight);
    const Index joints = tokens.d0();
    const Index frames = tokens.d1();
    TcepResult<Scalar> result{Ten3<Scalar>(joints, frames, tokens.d2()),
                              TemporalMask<Scalar>{Ten3<Scalar>(joints, frames, frames), params.eta}};
    for (Index j = 0; j < joints; ++j) {
        const auto y = tokens.slice(j);
        const Mat<Scalar> s = frame_similarity(y);
        const Mat<Scalar> m = select_topk_mask(s, params.eta);
        const Mat<Scalar> probs = softmax_rows(mask_similarity(s, m));
        const Mat<Scalar> attn = fused_adjacency.cwiseProduct(probs);
        detail::residual_update<Scalar>(y, attn, params.weight, result.refined.slice(j));
        result.mask.masks.slice(j) = m;
    }
    return result;
}

/// Unmasked variant: every frame pair participates in the softmax. Used by the
/// dense reference pipeline.
template <typename Scalar>
Ten3<Scalar> tcep_refine_dense(const Ten3<Scalar>& tokens, const Mat<Scalar>& fused_adjacency,
                               const Mat<Scalar>& weight) {
    detail::check_refine_shapes(tokens, fused_adjacency, weight);
    Ten3<Scalar> out(tokens.d0(), tokens.d1(), tokens.d2());
    for (Index j = 0; j < tokens.d0(); ++j) {
        const auto y = tokens.slice(j);
        const Mat<Scalar> attn = fused_adjacency.cwiseProduct(softmax_rows(frame_similarity(y)));
        detail::residual_update<Scalar>(y, attn, weight, out.slice(j));
    }
    return out;
}

/// Masks only, without refining tokens.
template <typename Scalar>
TemporalMask<Scalar> build_mask(const Ten3<Scalar>& tokens, Index eta) {
    TemporalMask<Scalar> mask{Ten3<Scalar>(tokens.d0(), tokens.d1(), tokens.d1()), eta};
    for (Index j = 0; j < tokens.d0(); ++j) {
        mask.masks.slice(j) = select_topk_mask(frame_similarity(tokens.slice(j)), eta);
    }
    return mask;
}

/// Row support s_p = sum_q M_pq for every joint and frame.
template <typename Scalar>
std::vector<Index> row_support(const TemporalMask<Scalar>& mask) {
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(mask.joints() * mask.frames()));
    for (Index j = 0; j < mask.joints(); ++j) {
        const auto m = mask.masks.slice(j);
        for (Index p = 0; p < m.rows(); ++p) {
            out.push_back(static_cast<Index>(m.row(p).sum()));
        }
    }
    return out;
}

}  // namespace htp::tcep
