#pragma once

// Analytic multiply-accumulate counts for the denoiser. One MAC is one
// multiply-accumulate; biases, softmax, GELU and LayerNorm count as zero.

#include "htp/denoiser.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace htp::macs {

using Count = std::uint64_t;

/// Published GMAC figures in this line of work count 2 per multiply-accumulate.
inline constexpr double kPublishedScale = 2.0;

Count macs_linear(Count tokens, Count d_in, Count d_out);

/// Score (QK^T) plus context (PV) term: 2 * support_total * D.
Count macs_attention_scores(Count support_total, Count width);

/// Q, K, V and output projections over seq * batch_rows tokens plus the
/// score/context term. Without `support_total` the attention is dense
/// (seq^2 * batch_rows). `heads` only has to divide `width`.
Count macs_attention(Count seq, Count batch_rows, Count width, Count heads,
                     std::optional<Count> support_total = std::nullopt);

/// Expected row support of an OR-symmetrised top-eta mask over `frames`
/// frames: F - floor((F-1-eta)^2 / (F-1)).
Count expected_row_support(Count frames, Count eta);

struct StageEntry {
    std::string name;
    Count macs = 0;
};

struct PassProfile {
    std::string label;
    std::vector<StageEntry> stages;

    Count total() const;
    /// Sum over stages whose name ends with `suffix`.
    Count total_matching(const std::string& suffix) const;
    const StageEntry& stage(const std::string& name) const;
};

/// Walks the stage sequence of denoise_forward with `sft_blocks` masked blocks.
/// `sft_support_total` overrides the expected summed mask support of one SFT
/// layer (J * sum of row supports).
PassProfile profile_htp_pass(const model::DenoiserConfig& cfg, Index sft_blocks,
                             std::optional<Count> sft_support_total = std::nullopt);

/// Unpruned reference: embedding, GCN, n dense dual blocks, head.
PassProfile profile_baseline_pass(const model::DenoiserConfig& cfg);

struct MacsReport {
    Index frames = 0;
    Index hypotheses = 1;   // H
    Index iterations = 1;   // K
    Index sft_blocks_infer = 0;
    PassProfile htp;        // training pass, n1 masked blocks
    PassProfile inference;  // one denoiser call at inference
    PassProfile dense;      // HTP stages at f = F, eta = F - 1
    PassProfile baseline;

    Count inference_total() const;           // inference pass * H * K
    Count baseline_inference_total() const;  // baseline pass * H * K

    double train_per_frame_g() const;        // published G per frame
    double reduction_vs_dense() const;       // 1 - htp / dense
    double reduction_vs_baseline() const;    // 1 - htp / baseline
    double inference_reduction() const;      // 1 - inference / baseline
};

double published_g(Count macs);

MacsReport profile_model(const model::DenoiserConfig& cfg, Index hypotheses, Index iterations,
                         std::optional<Index> sft_blocks_infer = std::nullopt,
                         std::optional<Count> sft_support_total = std::nullopt);

/// JSON document (as text, 2-space indent).
std::string report_json(const MacsReport& report);

/// Aligned plain-text table.
std::string report_table(const MacsReport& report);

}  // namespace htp::macs
