#pragma once

// Straight-loop reference implementations used by the verification suites.
// They only use element access, never the library's vectorised helpers, so a
// mistake in one place does not hide in both.

#include "htp/attention.hpp"
#include "htp/tensor.hpp"

#include <vector>

namespace htp::oracle {

Matd similarity(const Matd& y);

/// Row-wise top-eta by std::stable_sort over (score desc, index asc), diagonal
/// excluded, eta clamped to F-1, then self-loops and OR-symmetrisation.
Matd topk_mask(const Matd& s, Index eta);

std::vector<double> softmax(const std::vector<double>& v);

/// Pre-LN multi-head attention with residual; `bias` entries are 0 or -inf.
/// `probs_out` (optional) receives the per-head probabilities.
Matd attention(const Matd& queries, const Matd& context, const attn::AttnWeights<double>& w, const Matd* bias,
               std::vector<Matd>* probs_out = nullptr);

Matd ffn(const Matd& x, const attn::FfnWeights<double>& w);

/// One joint of the TCEP refinement.
Matd tcep_refine_joint(const Matd& y, const Matd& fused, const Matd& w, Index eta);

struct MgptpTrace {
    std::vector<double> density;
    std::vector<double> response;
    std::vector<double> separation;
    std::vector<Index> selected;
};

/// Pooling, masked distances, kNN density, response density, separation,
/// saliency and order-preserving top-f selection, all as nested loops.
MgptpTrace mgptp_select(const Ten3d& tokens, const Ten3d& masks, double threshold, Index k, Index keep);

/// Brute-force kNN density on a distance matrix.
std::vector<double> knn_density(const Matd& distance, Index k);

}  // namespace htp::oracle
