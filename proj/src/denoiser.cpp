#include "htp/denoiser.hpp"

#include "htp/rng.hpp"

#include <cmath>
#include <utility>

namespace htp::model {

namespace {

void require(bool ok, const std::string& message) {
    if (!ok) throw std::invalid_argument(message);
}

template <typename Fn>
auto run_stage(const char* name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

// Adds row r of `table` to every token of leading slice r (axis0 = true) or
// to frame r of every slice (axis0 = false).
void add_rows(Ten3d& x, const Matd& table, bool axis0) {
    for (Index j = 0; j < x.d0(); ++j) {
        auto s = x.slice(j);
        if (axis0) {
            s.rowwise() += table.row(j);
        } else {
            s += table;
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void DenoiserConfig::validate() const {
    require(joints >= 1, "J must be >= 1");
    require(frames >= 1, "F must be >= 1");
    require(width >= 1, "D must be >= 1");
    require(heads >= 1 && width % heads == 0,
            "D = " + std::to_string(width) + " must be divisible by h = " + std::to_string(heads));
    require(keep >= 1 && keep <= frames, "f = " + std::to_string(keep) + " must lie in [1, F = " +
                                             std::to_string(frames) + "]");
    require(eta >= 1, "eta must be >= 1");
    require(blocks >= 1, "n must be >= 1");
    require(sft_blocks >= 0 && sft_blocks <= blocks,
            "n1 = " + std::to_string(sft_blocks) + " must lie in [0, n = " + std::to_string(blocks) + "]");
    require(mlp_ratio >= 1, "mlp_ratio must be >= 1");
    require(pool_threshold > 0.0 && pool_threshold <= 1.0, "tau must lie in (0, 1]");
    require(knn >= 1, "k must be >= 1");
    if (skeleton.size() != 0) {
        require(skeleton.rows() == joints && skeleton.cols() == joints,
                "skeleton adjacency " + shape_str(skeleton) + " does not match J = " + std::to_string(joints));
        normalized_adjacency(skeleton);
    }
}

Matd DenoiserConfig::skeleton_adjacency() const {
    if (skeleton.size() != 0) return skeleton;
    return joints == 17 ? h36m_skeleton() : chain_skeleton(joints);
}

Matd h36m_skeleton() {
    static constexpr int kEdges[16][2] = {{0, 1}, {1, 2},  {2, 3},  {0, 4},  {4, 5},   {5, 6},   {0, 7},   {7, 8},
                                          {8, 9}, {9, 10}, {8, 11}, {11, 12}, {12, 13}, {8, 14}, {14, 15}, {15, 16}};
    Matd a = Matd::Identity(17, 17);
    for (const auto& e : kEdges) {
        a(e[0], e[1]) = 1;
        a(e[1], e[0]) = 1;
    }
    return a;
}

Matd chain_skeleton(Index joints) { return tcep::chain_adjacency<double>(joints); }

Matd normalized_adjacency(const Matd& adjacency) {
    if (adjacency.rows() != adjacency.cols()) {
        throw DimensionError("skeleton adjacency not square " + shape_str(adjacency));
    }
    if (adjacency != adjacency.transpose()) {
        throw std::invalid_argument("skeleton adjacency is not symmetric");
    }
    for (Index i = 0; i < adjacency.rows(); ++i) {
        if (adjacency(i, i) == 0.0) throw std::invalid_argument("skeleton adjacency lacks a self-loop at joint " +
                                                                 std::to_string(i));
    }
    const Eigen::VectorXd degree = adjacency.rowwise().sum();
    if ((degree.array() <= 0.0).any()) throw std::invalid_argument("skeleton adjacency has a non-positive degree");
    const Eigen::VectorXd inv_sqrt = degree.array().rsqrt();
    return inv_sqrt.asDiagonal() * adjacency * inv_sqrt.asDiagonal();
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

namespace {

template <typename Params, typename Fn>
void visit_block(Params& b, const std::string& prefix, Fn&& fn) {
    fn(prefix + ".attn.ln_gamma", b.attn.ln_gamma);
    fn(prefix + ".attn.ln_beta", b.attn.ln_beta);
    fn(prefix + ".attn.wq", b.attn.wq);
    fn(prefix + ".attn.wk", b.attn.wk);
    fn(prefix + ".attn.wv", b.attn.wv);
    fn(prefix + ".attn.wo", b.attn.wo);
    fn(prefix + ".ffn.ln_gamma", b.ffn.ln_gamma);
    fn(prefix + ".ffn.ln_beta", b.ffn.ln_beta);
    fn(prefix + ".ffn.w1", b.ffn.w1);
    fn(prefix + ".ffn.b1", b.ffn.b1);
    fn(prefix + ".ffn.w2", b.ffn.w2);
    fn(prefix + ".ffn.b2", b.ffn.b2);
}

template <typename Params, typename Fn>
void visit_all(Params& p, Fn&& fn) {
    fn("embed.w", p.embed_w);
    fn("embed.b", p.embed_b);
    fn("gcn.w", p.gcn_w);
    fn("spatial_pos", p.spatial_pos);
    fn("temporal_pos", p.temporal_pos);
    visit_block(p.pre_spatial, "pre_spatial", fn);
    fn("tcep.w", p.tcep_w);
    fn("tcep.global_topology", p.global_topology);
    fn("time.w1", p.time_w1);
    fn("time.b1", p.time_b1);
    fn("time.w2", p.time_w2);
    fn("time.b2", p.time_b2);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        visit_block(p.blocks[i].spatial, "blocks." + std::to_string(i) + ".spatial", fn);
        visit_block(p.blocks[i].temporal, "blocks." + std::to_string(i) + ".temporal", fn);
    }
    fn("cross.ln_gamma", p.cross.ln_gamma);
    fn("cross.ln_beta", p.cross.ln_beta);
    fn("cross.wq", p.cross.wq);
    fn("cross.wk", p.cross.wk);
    fn("cross.wv", p.cross.wv);
    fn("cross.wo", p.cross.wo);
    fn("head.ln_gamma", p.head_ln_gamma);
    fn("head.ln_beta", p.head_ln_beta);
    fn("head.w", p.head_w);
    fn("head.b", p.head_b);
}

BlockParams zero_block(Index d, Index hidden, Index heads) {
    BlockParams b;
    b.attn.wq = b.attn.wk = b.attn.wv = b.attn.wo = Matd::Zero(d, d);
    b.attn.ln_gamma = Matd::Ones(1, d);
    b.attn.ln_beta = Matd::Zero(1, d);
    b.attn.heads = heads;
    b.ffn.ln_gamma = Matd::Ones(1, d);
    b.ffn.ln_beta = Matd::Zero(1, d);
    b.ffn.w1 = Matd::Zero(d, hidden);
    b.ffn.b1 = Matd::Zero(1, hidden);
    b.ffn.w2 = Matd::Zero(hidden, d);
    b.ffn.b2 = Matd::Zero(1, d);
    return b;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void DenoiserParams::visit(const std::function<void(const std::string&, Matd&)>& fn) { visit_all(*this, fn); }

void DenoiserParams::visit(const std::function<void(const std::string&, const Matd&)>& fn) const {
    visit_all(*this, fn);
}

DenoiserParams zero_params(const DenoiserConfig& cfg) {
    cfg.validate();
    const Index d = cfg.width;
    const Index hidden = cfg.mlp_ratio * d;
    DenoiserParams p;
    p.embed_w = Matd::Zero(5, d);
    p.embed_b = Matd::Zero(1, d);
    p.gcn_w = Matd::Zero(d, d);
    p.spatial_pos = Matd::Zero(cfg.joints, d);
    p.temporal_pos = Matd::Zero(cfg.frames, d);
    p.pre_spatial = zero_block(d, hidden, cfg.heads);
    p.tcep_w = Matd::Zero(d, d);
    p.global_topology = Matd::Zero(cfg.frames, cfg.frames);
    p.time_w1 = Matd::Zero(d, d);
    p.time_b1 = Matd::Zero(1, d);
    p.time_w2 = Matd::Zero(d, d);
    p.time_b2 = Matd::Zero(1, d);
    p.blocks.assign(static_cast<std::size_t>(cfg.blocks),
                    DualBlockParams{zero_block(d, hidden, cfg.heads), zero_block(d, hidden, cfg.heads)});
    p.cross = zero_block(d, hidden, cfg.heads).attn;
    p.head_ln_gamma = Matd::Ones(1, d);
    p.head_ln_beta = Matd::Zero(1, d);
    p.head_w = Matd::Zero(d, 3);
    p.head_b = Matd::Zero(1, 3);
    return p;
}

DenoiserParams init_params(const DenoiserConfig& cfg, std::uint64_t seed) {
    DenoiserParams p = zero_params(cfg);
    RngStream rng(seed);
    const double width_bound = 1.0 / std::sqrt(static_cast<double>(cfg.width));
    p.visit([&](const std::string& name, Matd& m) {
        if (ends_with(name, "ln_gamma") || ends_with(name, "ln_beta") || name == "tcep.global_topology") {
            return;
        }
        double bound = 0.0;
        if (name == "spatial_pos" || name == "temporal_pos") {
            bound = 0.1;
        } else if (m.rows() == 1) {
            bound = width_bound;  // biases
        } else {
            bound = 1.0 / std::sqrt(static_cast<double>(m.rows()));
        }
        m = uniform_mat<double>(rng, m.rows(), m.cols(), bound);
    });
    return p;
}

void validate_params(const DenoiserConfig& cfg, const DenoiserParams& params) {
    if (static_cast<Index>(params.blocks.size()) != cfg.blocks) {
        throw std::invalid_argument("params carry " + std::to_string(params.blocks.size()) + " blocks, config n = " +
                                    std::to_string(cfg.blocks));
    }
    const DenoiserParams expected = zero_params(cfg);
    std::vector<std::pair<Index, Index>> shapes;
    expected.visit([&](const std::string&, const Matd& m) { shapes.emplace_back(m.rows(), m.cols()); });
    std::size_t i = 0;
    params.visit([&](const std::string& name, const Matd& m) {
        const auto [r, c] = shapes[i++];
        if (m.rows() != r || m.cols() != c) {
            throw std::invalid_argument("parameter " + name + " has shape " + shape_str(m) + ", expected " +
                                        shape_str(r, c));
        }
        if (!m.allFinite()) throw std::invalid_argument("parameter " + name + " is not finite");
    });
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

Ten3d pose_embed(const Ten3d& noisy, const Ten3d& keypoints, const Matd& w, const Matd& b) {
    if (noisy.d2() != 3 || keypoints.d2() != 2 || noisy.d0() != keypoints.d0() || noisy.d1() != keypoints.d1()) {
        throw DimensionError("pose_embed: noisy pose " + noisy.shape() + " vs keypoints " + keypoints.shape());
    }
    const Ten3d joined = concat_features(noisy, keypoints);
    Ten3d out(noisy.d0(), noisy.d1(), w.cols());
    out.rows_view() = linear(joined.rows_view(), w, b);
    return out;
}

Ten3d spatial_gcn(const Ten3d& tokens, const Matd& adjacency, const Matd& w) {
    const Matd a = normalized_adjacency(adjacency);
    if (a.rows() != tokens.d0()) {
        throw DimensionError("spatial_gcn: adjacency " + shape_str(a) + " vs tokens " + tokens.shape());
    }
    const Ten3d by_frame = swap_leading(tokens);
    Ten3d out(by_frame.d0(), by_frame.d1(), by_frame.d2());
    for (Index p = 0; p < by_frame.d0(); ++p) {
        const auto y = by_frame.slice(p);
        out.slice(p) = y + gelu(Matd(a * linear(y, w)));
    }
    return swap_leading(out);
}

Ten3d spatial_mhsa(const Ten3d& tokens, const BlockParams& p) {
    const Ten3d by_frame = swap_leading(tokens);
    return swap_leading(attn::ffn_block(attn::dense_mhsa(by_frame, p.attn), p.ffn));
}

Ten3d sft_block(const Ten3d& tokens, const attn::AdditiveMask<double>& mask, const BlockParams& p) {
    return attn::ffn_block(attn::sft_mhsa(tokens, mask, p.attn), p.ffn);
}

Ten3d dense_temporal_block(const Ten3d& tokens, const BlockParams& p) {
    return attn::ffn_block(attn::dense_mhsa(tokens, p.attn), p.ffn);
}

RowVecd sinusoidal_embedding(double t, Index width) {
    RowVecd out = RowVecd::Zero(width);
    const Index half = width / 2;
    for (Index i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        out(i) = std::sin(t * freq);
        out(half + i) = std::cos(t * freq);
    }
    return out;
}

RowVecd timestep_embedding(double t, const DenoiserParams& params) {
    if (t < 0.0) throw std::invalid_argument("timestep_embedding: t must be >= 0");
    const RowVecd code = sinusoidal_embedding(t, params.time_w1.rows());
    const Matd hidden = gelu(linear(code, params.time_w1, params.time_b1));
    return linear(hidden, params.time_w2, params.time_b2);
}

namespace {

struct Prologue {
    Ten3d tokens;
    Matd fused_adjacency;
};

// pose embedding, spatial GCN + spatial embeddings, first spatial MHSA
Prologue spatial_prologue(const Ten3d& noisy, const Ten3d& keypoints, const DenoiserConfig& cfg,
                          const DenoiserParams& params) {
    Prologue pro;
    pro.tokens = run_stage("pose_embed", [&] { return pose_embed(noisy, keypoints, params.embed_w, params.embed_b); });
    pro.tokens = run_stage("spatial_gcn", [&] {
        Ten3d y = spatial_gcn(pro.tokens, cfg.skeleton_adjacency(), params.gcn_w);
        add_rows(y, params.spatial_pos, true);
        return y;
    });
    pro.tokens = run_stage("spatial_mhsa", [&] { return spatial_mhsa(pro.tokens, params.pre_spatial); });
    pro.fused_adjacency = run_stage("tcep", [&] {
        return tcep::fuse_adjacency(tcep::chain_adjacency<double>(cfg.frames), params.global_topology);
    });
    return pro;
}

void add_time_and_position(Ten3d& tokens, double t, const DenoiserParams& params) {
    add_rows(tokens, params.temporal_pos, false);
    const RowVecd time = run_stage("timestep_embedding", [&] { return timestep_embedding(t, params); });
    tokens.rows_view().rowwise() += time;
}

Ten3d epilogue(const Ten3d& full, const Ten3d& condensed, const DenoiserParams& params) {
    const Ten3d restored = run_stage("cross_mhsa", [&] { return attn::cross_mhsa(full, condensed, params.cross); });
    return run_stage("head", [&] {
        Ten3d out(restored.d0(), restored.d1(), 3);
        out.rows_view() =
            linear(layer_norm(restored.rows_view(), params.head_ln_gamma, params.head_ln_beta), params.head_w,
                   params.head_b);
        return out;
    });
}

void check_inputs(const Ten3d& noisy, const Ten3d& keypoints, const DenoiserConfig& cfg) {
    if (noisy.d0() != cfg.joints || noisy.d1() != cfg.frames || noisy.d2() != 3) {
        throw StageError("input", "noisy pose " + noisy.shape() + " does not match J x F x 3 = (" +
                                      std::to_string(cfg.joints) + "x" + std::to_string(cfg.frames) + "x3)");
    }
    if (keypoints.d0() != cfg.joints || keypoints.d1() != cfg.frames || keypoints.d2() != 2) {
        throw StageError("input", "keypoints " + keypoints.shape() + " do not match J x F x 2");
    }
}

}  // namespace

Ten3d denoise_forward(const Ten3d& noisy, const Ten3d& keypoints, double t, const DenoiserConfig& cfg,
                      const DenoiserParams& params, ForwardTrace* trace) {
    check_inputs(noisy, keypoints, cfg);
    Prologue pro = spatial_prologue(noisy, keypoints, cfg, params);

    auto refined = run_stage("tcep", [&] {
        return tcep::tcep_refine(pro.tokens, pro.fused_adjacency, tcep::TcepParams<double>{params.tcep_w, cfg.eta});
    });
    Ten3d y = std::move(refined.refined);
    tcep::TemporalMask<double> mask = std::move(refined.mask);
    add_time_and_position(y, t, params);

    for (Index b = 0; b < cfg.sft_blocks; ++b) {
        const auto& block = params.blocks[static_cast<std::size_t>(b)];
        y = run_stage("spatial_mhsa", [&] { return spatial_mhsa(y, block.spatial); });
        y = run_stage("sft_mhsa", [&] {
            if (cfg.recompute_mask_per_block && b > 0) mask = tcep::build_mask(y, cfg.eta);
            return sft_block(y, attn::to_additive_mask(mask), block.temporal);
        });
    }

    auto pruned = run_stage("mgptp", [&] { return mgptp::prune(y, mask, cfg.pool_threshold, cfg.knn, cfg.keep); });
    Ten3d condensed = std::move(pruned.condensed);
    for (Index b = cfg.sft_blocks; b < cfg.blocks; ++b) {
        const auto& block = params.blocks[static_cast<std::size_t>(b)];
        condensed = run_stage("spatial_mhsa", [&] { return spatial_mhsa(condensed, block.spatial); });
        condensed = run_stage("temporal_mhsa", [&] { return dense_temporal_block(condensed, block.temporal); });
    }
    if (trace != nullptr) {
        trace->mask = std::move(mask);
        trace->retained = pruned.index.frames;
    }
    return epilogue(y, condensed, params);
}

Ten3d dense_reference_forward(const Ten3d& noisy, const Ten3d& keypoints, double t, const DenoiserConfig& cfg,
                              const DenoiserParams& params) {
    check_inputs(noisy, keypoints, cfg);
    Prologue pro = spatial_prologue(noisy, keypoints, cfg, params);
    Ten3d y = run_stage("tcep", [&] { return tcep::tcep_refine_dense(pro.tokens, pro.fused_adjacency, params.tcep_w); });
    add_time_and_position(y, t, params);
    for (Index b = 0; b < cfg.sft_blocks; ++b) {
        const auto& block = params.blocks[static_cast<std::size_t>(b)];
        y = run_stage("spatial_mhsa", [&] { return spatial_mhsa(y, block.spatial); });
        y = run_stage("temporal_mhsa", [&] { return dense_temporal_block(y, block.temporal); });
    }
    Ten3d tail = y;
    for (Index b = cfg.sft_blocks; b < cfg.blocks; ++b) {
        const auto& block = params.blocks[static_cast<std::size_t>(b)];
        tail = run_stage("spatial_mhsa", [&] { return spatial_mhsa(tail, block.spatial); });
        tail = run_stage("temporal_mhsa", [&] { return dense_temporal_block(tail, block.temporal); });
    }
    return epilogue(y, tail, params);
}

}  // namespace htp::model
