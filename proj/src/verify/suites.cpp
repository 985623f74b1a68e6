#include "htp/verify.hpp"

#include "htp/app.hpp"
#include "htp/attention.hpp"
#include "htp/checkpoint.hpp"
#include "htp/denoiser.hpp"
#include "htp/diffusion.hpp"
#include "htp/htp1.hpp"
#include "htp/log.hpp"
#include "htp/macs.hpp"
#include "htp/mgptp.hpp"
#include "htp/oracle.hpp"
#include "htp/rng.hpp"
#include "htp/tcep.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace htp::verify {

namespace {

using attn::AttnWeights;
using attn::FfnWeights;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Collects failures; keeps the first message for the report line.
class Tally {
public:
    void fail(const std::string& message) {
        if (failures_ == 0) first_ = message;
        ++failures_;
    }
    void expect(bool ok, const std::string& message) {
        if (!ok) fail(message);
    }
    CheckResult finish(const std::string& name, const std::string& summary) const {
        if (failures_ == 0) return {name, true, summary};
        return {name, false, std::to_string(failures_) + " failure(s); first: " + first_};
    }

private:
    int failures_ = 0;
    std::string first_;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

Index rand_int(RngStream& rng, Index lo, Index hi) {
    const auto span = static_cast<double>(hi - lo + 1);
    return std::min(hi, lo + static_cast<Index>(rng.next_uniform() * span));
}

Matd int_mat(RngStream& rng, Index rows, Index cols, Index lo, Index hi) {
    Matd m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(rand_int(rng, lo, hi));
    return m;
}

Matd gauss_mat(RngStream& rng, Index rows, Index cols, double scale) {
    Matd m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.next_gaussian();
    return m;
}

Ten3d gauss_ten(RngStream& rng, Index a, Index b, Index c, double scale = 1.0) {
    Ten3d t = gaussian<double>(rng, a, b, c);
    t.rows_view() *= scale;
    return t;
}

AttnWeights<double> random_attn(RngStream& rng, Index width, Index heads) {
    AttnWeights<double> w;
    const double s = 1.0 / std::sqrt(static_cast<double>(width));
    w.wq = gauss_mat(rng, width, width, s);
    w.wk = gauss_mat(rng, width, width, s);
    w.wv = gauss_mat(rng, width, width, s);
    w.wo = gauss_mat(rng, width, width, s);
    w.ln_gamma = Matd::Ones(1, width) + gauss_mat(rng, 1, width, 0.1);
    w.ln_beta = gauss_mat(rng, 1, width, 0.1);
    w.heads = heads;
    return w;
}

FfnWeights<double> random_ffn(RngStream& rng, Index width, Index hidden) {
    FfnWeights<double> w;
    w.ln_gamma = Matd::Ones(1, width) + gauss_mat(rng, 1, width, 0.1);
    w.ln_beta = gauss_mat(rng, 1, width, 0.1);
    w.w1 = gauss_mat(rng, width, hidden, 1.0 / std::sqrt(static_cast<double>(width)));
    w.b1 = gauss_mat(rng, 1, hidden, 0.1);
    w.w2 = gauss_mat(rng, hidden, width, 1.0 / std::sqrt(static_cast<double>(hidden)));
    w.b2 = gauss_mat(rng, 1, width, 0.1);
    return w;
}

// Random symmetric binary mask with unit diagonal.
Matd random_mask(RngStream& rng, Index frames, double density) {
    Matd m = Matd::Identity(frames, frames);
    for (Index p = 0; p < frames; ++p) {
        for (Index q = p + 1; q < frames; ++q) {
            if (rng.next_uniform() < density) m(p, q) = m(q, p) = 1.0;
        }
    }
    return m;
}

double max_diff(const Matd& a, const Matd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return kInf;
    return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

bool bitwise_equal(const Ten3d& a, const Ten3d& b) {
    if (!a.same_shape(b)) return false;
    for (Index i = 0; i < a.size(); ++i) {
        if (std::bit_cast<std::uint64_t>(a.data()[i]) != std::bit_cast<std::uint64_t>(b.data()[i])) return false;
    }
    return true;
}

template <typename Fn>
bool throws_with(Fn&& fn, const std::string& needle) {
    try {
        fn();
    } catch (const std::exception& e) {
        return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
}

// True when q is among the e best off-diagonal scores of row p, counting
// strictly better entries and equal entries at lower index.
bool directed_pick(const Matd& s, Index p, Index q, Index e) {
    Index ahead = 0;
    for (Index r = 0; r < s.cols(); ++r) {
        if (r == p || r == q) continue;
        if (s(p, r) > s(p, q) || (s(p, r) == s(p, q) && r < q)) ++ahead;
    }
    return ahead < e;
}

model::DenoiserConfig small_config(Index joints, Index frames, Index width, Index blocks, Index sft, Index keep,
                                   Index eta) {
    model::DenoiserConfig cfg;
    cfg.joints = joints;
    cfg.frames = frames;
    cfg.width = width;
    cfg.blocks = blocks;
    cfg.sft_blocks = sft;
    cfg.keep = keep;
    cfg.eta = eta;
    cfg.heads = width >= 16 ? 4 : 2;
    cfg.knn = 3;
    return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

CheckResult mask_construction(std::uint64_t seed, int trials) {
    RngStream rng(RngStream::derive(seed, 1));
    Tally tally;
    int clamped = 0;
    int tied_rows = 0;
    int over_bound = 0;
    int rows_checked = 0;
    for (int trial = 0; trial < trials; ++trial) {
        const Index frames = rand_int(rng, 1, 64);
        const Index width = rand_int(rng, 1, 4);
        const Index eta = rand_int(rng, 1, frames + 2);
        const Matd y = int_mat(rng, frames, width, -2, 2);
        const Matd s = tcep::frame_similarity(y);
        tally.expect(max_diff(s, oracle::similarity(y)) < 1e-12, "similarity differs from loop oracle");
        const Matd m = tcep::select_topk_mask(s, eta);
        const Matd expect = oracle::topk_mask(s, eta);
        const std::string where = " (trial " + std::to_string(trial) + ", F=" + std::to_string(frames) +
                                  ", eta=" + std::to_string(eta) + ")";
        tally.expect(m == expect, "mask differs from stable-sort oracle" + where);
        tally.expect(m == m.transpose(), "mask not symmetric" + where);
        const Index e = std::min(eta, std::max<Index>(frames - 1, 0));
        if (eta > frames - 1) ++clamped;
        // how many other rows picked each frame, read off the directed oracle
        std::vector<Index> in_degree(static_cast<std::size_t>(frames), 0);
        for (Index p = 0; p < frames; ++p) {
            for (Index q = 0; q < frames; ++q) {
                if (q != p && directed_pick(s, p, q, e)) {
                    ++in_degree[static_cast<std::size_t>(q)];
                }
            }
        }
        for (Index p = 0; p < frames; ++p) {
            tally.expect(m(p, p) == 1.0, "diagonal entry not 1" + where);
            const auto support = static_cast<Index>(m.row(p).sum());
            tally.expect(support >= e + 1, "row support " + std::to_string(support) + " below eta+1" + where);
            tally.expect(support <= std::min(frames, e + 1 + in_degree[static_cast<std::size_t>(p)]),
                         "row support " + std::to_string(support) + " above eta+1+in-degree" + where);
            if (support > 2 * e + 1) ++over_bound;
            ++rows_checked;
            for (Index q = 0; q < frames; ++q) {
                tally.expect(m(p, q) == 0.0 || m(p, q) == 1.0, "mask not binary" + where);
            }
            std::vector<double> row;
            for (Index q = 0; q < frames; ++q) {
                if (q != p) row.push_back(s(p, q));
            }
            std::sort(row.begin(), row.end());
            if (std::adjacent_find(row.begin(), row.end()) != row.end()) ++tied_rows;
        }
    }
    // A frame picked by many rows collects all of those edges, so 2*eta+1 is
    // not an upper bound under OR completion. Report how often it is exceeded.
    return tally.finish("mask construction",
                        std::to_string(trials) + " instances, " + std::to_string(clamped) + " with eta clamped, " +
                            std::to_string(tied_rows) + " rows with tied scores; all match the oracle; support in "
                            "[eta+1, eta+1+in-degree] for every row; " + std::to_string(over_bound) + " of " +
                            std::to_string(rows_checked) + " rows exceed 2*eta+1 (hub frames)");
}

CheckResult masked_attention(std::uint64_t seed, int trials) {
    RngStream rng(RngStream::derive(seed, 2));
    Tally tally;
    double worst_equiv = 0.0;
    double worst_sum = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        const Index joints = rand_int(rng, 1, 3);
        const Index frames = rand_int(rng, 2, 16);
        const Index heads = Index{1} << rand_int(rng, 0, 2);
        const Index width = heads * rand_int(rng, 1, 4);
        const Ten3d y = gauss_ten(rng, joints, frames, width);
        const auto w = random_attn(rng, width, heads);

        const auto full = attn::to_additive_mask(Ten3d(joints, frames, frames, 1.0));
        const Ten3d sparse_out = attn::sft_mhsa(y, full, w);
        const Ten3d dense_out = attn::dense_mhsa(y, w);
        const double diff = max_abs_diff(sparse_out, dense_out);
        worst_equiv = std::max(worst_equiv, diff);
        tally.expect(diff < 1e-12, "full-mask sft_mhsa differs from dense MHSA by " + fmt(diff));

        Ten3d binary(joints, frames, frames);
        for (Index j = 0; j < joints; ++j) {
            binary.slice(j) = tcep::select_topk_mask(gauss_mat(rng, frames, frames, 1.0), rand_int(rng, 1, frames - 1));
        }
        const auto additive = attn::to_additive_mask(binary);
        for (Index j = 0; j < joints; ++j) {
            const Matd bias = additive.values.slice(j);
            const auto probs = attn::head_probs<double>(y.slice(j), w, &bias);
            for (const auto& p : probs) {
                for (Index r = 0; r < frames; ++r) {
                    const double sum = p.row(r).sum();
                    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
                    tally.expect(std::abs(sum - 1.0) <= 1e-12, "row sum off by " + fmt(sum - 1.0));
                    for (Index c = 0; c < frames; ++c) {
                        if (binary(j, r, c) == 0.0) tally.expect(p(r, c) == 0.0, "masked weight not exactly 0");
                    }
                }
            }
        }
    }
    return tally.finish("masked attention", std::to_string(trials) + " instances; full-mask max diff " +
                                                fmt(worst_equiv) + ", worst row-sum error " + fmt(worst_sum) +
                                                ", masked weights exactly 0");
}

CheckResult mgptp_oracle(std::uint64_t seed, int trials) {
    RngStream rng(RngStream::derive(seed, 3));
    Tally tally;
    constexpr double kThresholds[] = {0.25, 1.0 / 3.0, 0.5, 2.0 / 3.0, 1.0};
    int tied = 0;
    for (int trial = 0; trial < trials; ++trial) {
        const Index frames = rand_int(rng, 1, 12);
        const Index joints = rand_int(rng, 1, 3);
        const Index width = rand_int(rng, 1, 4);
        const Index k = rand_int(rng, 1, 6);
        const Index keep = rand_int(rng, 1, frames);
        const double tau = kThresholds[rand_int(rng, 0, 4)];

        // integer frame centres plus joint offsets summing to zero keep the
        // pooled tokens exact, so equal scores really are equal
        const Matd centre = int_mat(rng, frames, width, -2, 2);
        Ten3d tokens(joints, frames, width);
        Matd offset_sum = Matd::Zero(frames, width);
        for (Index j = 0; j + 1 < joints; ++j) {
            const Matd off = int_mat(rng, frames, width, -2, 2);
            tokens.slice(j) = centre + off;
            offset_sum += off;
        }
        tokens.slice(joints - 1) = centre - offset_sum;

        tcep::TemporalMask<double> mask{Ten3d(joints, frames, frames), 1};
        const bool from_topk = rng.next_uniform() < 0.5;
        for (Index j = 0; j < joints; ++j) {
            if (from_topk && frames > 1) {
                mask.masks.slice(j) =
                    tcep::select_topk_mask(tcep::frame_similarity(tokens.slice(j)), rand_int(rng, 1, frames - 1));
            } else {
                mask.masks.slice(j) = random_mask(rng, frames, rng.next_uniform());
            }
        }

        mgptp::ClusterState<double> state;
        const auto got = mgptp::prune(tokens, mask, tau, k, keep, &state);
        const auto want = oracle::mgptp_select(tokens, mask.masks, tau, k, keep);
        const auto sal = state.saliency();
        std::vector<double> sorted = sal;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) ++tied;
        if (got.index.frames != want.selected) {
            tally.fail("trial " + std::to_string(trial) + " (F=" + std::to_string(frames) + ", J=" +
                       std::to_string(joints) + ", D=" + std::to_string(width) + ", k=" + std::to_string(k) +
                       ", f=" + std::to_string(keep) + ") selected set differs");
        }
        tally.expect(state.response_density == want.response, "response density differs in trial " +
                                                                   std::to_string(trial));
        tally.expect(state.separation == want.separation, "separation differs in trial " + std::to_string(trial));
    }
    return tally.finish("MGPTP oracle", std::to_string(trials) + " instances (F<=12, J<=3, D<=4), " +
                                            std::to_string(tied) + " with tied saliency; all index sets equal");
}

CheckResult sampler_consistency(std::uint64_t seed) {
    RngStream rng(RngStream::derive(seed, 4));
    Tally tally;
    const auto sched = diffusion::build_schedule(1000);
    const Ten3d y0 = gauss_ten(rng, 3, 7, 3, 0.5);
    double worst = 0.0;
    for (int iterations : {1, 5, 10}) {
        RngStream chain = rng.child(static_cast<std::uint64_t>(iterations));
        Ten3d y = gaussian<double>(chain, 3, 7, 3);
        for (int k = 0; k < iterations; ++k) {
            const int t = diffusion::timestep_for_iteration(k, iterations, 1000);
            const int t_prev = diffusion::timestep_for_iteration(k + 1, iterations, 1000);
            y = diffusion::ddim_step(y, y0, t, t_prev, 0.0, chain, sched);
        }
        const double rel = (y.rows_view() - y0.rows_view()).norm() / y0.rows_view().norm();
        worst = std::max(worst, rel);
        tally.expect(rel <= 1e-8, "K=" + std::to_string(iterations) + " relative error " + fmt(rel));
    }
    const double sigma = diffusion::ddim_sigma(0.5, 0.75);
    tally.expect(std::abs(sigma - std::sqrt(1.0 / 6.0)) <= 1e-12, "sigma(0.5, 0.75) = " + fmt(sigma));
    return tally.finish("sampler consistency", "K in {1,5,10}: worst relative error " + fmt(worst) +
                                                   "; sigma(0.5, 0.75) = " + fmt(sigma));
}

CheckResult forward_statistics(std::uint64_t seed, int draws) {
    RngStream rng(RngStream::derive(seed, 5));
    Tally tally;
    const auto sched = diffusion::build_schedule(1000);
    const Ten3d y0 = gauss_ten(rng, 2, 2, 3);
    double worst_ratio = 0.0;
    for (int t : {100, 500, 900}) {
        const double a = sched.alpha_bar_at(t);
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(y0.size());
        for (int n = 0; n < draws; ++n) {
            const Ten3d eps = gaussian<double>(rng, 2, 2, 3);
            const Ten3d yt = diffusion::forward_diffuse(y0, t, eps, sched);
            for (Index i = 0; i < yt.size(); ++i) mean(i) += yt.data()[i];
        }
        mean /= static_cast<double>(draws);
        const double bound = 4.0 * std::sqrt((1.0 - a) / static_cast<double>(draws));
        for (Index i = 0; i < y0.size(); ++i) {
            const double err = std::abs(mean(i) - std::sqrt(a) * y0.data()[i]);
            worst_ratio = std::max(worst_ratio, err / bound);
            tally.expect(err <= bound, "t=" + std::to_string(t) + " coordinate " + std::to_string(i) + " error " +
                                           fmt(err) + " > " + fmt(bound));
        }
    }
    return tally.finish("forward statistics", std::to_string(draws) + " draws per t in {100,500,900}; worst error " +
                                                  fmt(worst_ratio) + " of the 4-sigma bound");
}

CheckResult dense_degenerate(std::uint64_t seed) {
    Tally tally;
    auto cfg = small_config(17, 27, 64, 8, 3, 27, 26);
    cfg.heads = 8;
    auto params = model::init_params(cfg, RngStream::derive(seed, 6));
    RngStream rng(RngStream::derive(seed, 7));
    params.global_topology = gauss_mat(rng, 27, 27, 0.5);
    const Ten3d noisy = gaussian<double>(rng, 17, 27, 3);
    const Ten3d keypoints = gauss_ten(rng, 17, 27, 2, 0.2);
    double worst = 0.0;
    for (double t : {1.0, 500.0, 1000.0}) {
        const Ten3d htp_out = model::denoise_forward(noisy, keypoints, t, cfg, params);
        const Ten3d dense_out = model::dense_reference_forward(noisy, keypoints, t, cfg, params);
        const double diff = max_abs_diff(htp_out, dense_out);
        worst = std::max(worst, diff);
        tally.expect(diff <= 1e-10, "t=" + fmt(t) + " max diff " + fmt(diff));
    }
    return tally.finish("dense-degenerate equivalence",
                        "J=17, F=27, D=64, eta=F-1, f=F: max abs diff " + fmt(worst));
}

CheckResult macs_reproduction() {
    Tally tally;
    const model::DenoiserConfig cfg;  // D=512, n=8, n1=3, J=17, F=243, f=54
    const auto report = macs::profile_model(cfg, 20, 10, 1);

    // (a) post-prune temporal score/context term against a dense block
    const macs::Count pruned = report.htp.stage("block3.temporal.scores").macs;
    const macs::Count dense = report.baseline.stage("block3.temporal.scores").macs;
    const double ratio = static_cast<double>(pruned) / static_cast<double>(dense);
    tally.expect(pruned * 243 * 243 == dense * 54 * 54, "score ratio is not exactly (54/243)^2");
    tally.expect(std::abs(ratio - 0.049383) < 5e-7, "score ratio " + fmt(ratio));

    // (b) totals against the published figures (2 x MACs convention)
    const double base_g = macs::published_g(report.baseline.total());
    const double htp_g = macs::published_g(report.htp.total());
    tally.expect(std::abs(base_g / 278.1 - 1.0) <= 0.15, "dense total " + fmt(base_g) + "G outside 278.1G +-15%");
    tally.expect(std::abs(htp_g / 175.3 - 1.0) <= 0.15, "HTP total " + fmt(htp_g) + "G outside 175.3G +-15%");

    // (c) inference totals scale by H x K exactly
    for (Index k : {1, 5, 10}) {
        const auto r = macs::profile_model(cfg, 20, k, 1);
        tally.expect(r.inference_total() == r.inference.total() * 20 * static_cast<macs::Count>(k),
                     "inference total does not scale by H x K at K=" + std::to_string(k));
        tally.expect(r.baseline_inference_total() == r.baseline.total() * 20 * static_cast<macs::Count>(k),
                     "dense inference total does not scale at K=" + std::to_string(k));
    }
    const double reduction = report.inference_reduction();
    tally.expect(std::abs(reduction - 0.56) <= 0.05, "inference reduction " + fmt(100 * reduction) + "%");

    char summary[256];
    std::snprintf(summary, sizeof summary,
                  "score ratio %.6f; dense %.1fG (278.1), HTP %.1fG (175.3); inference per frame at H=20,K=10 "
                  "%.1fG vs %.1fG dense, reduction %.1f%%",
                  ratio, base_g, htp_g, macs::published_g(report.inference_total()) / 243.0,
                  macs::published_g(report.baseline_inference_total()) / 243.0, 100.0 * reduction);
    return tally.finish("MACs reproduction", summary);
}

std::vector<std::function<CheckResult()>> criteria(std::uint64_t seed) {
    return {
        [seed] { return mask_construction(seed); },
        [seed] { return masked_attention(seed); },
        [seed] { return mgptp_oracle(seed); },
        [seed] { return sampler_consistency(seed); },
        [seed] { return forward_statistics(seed); },
        [seed] { return dense_degenerate(seed); },
        [] { return macs_reproduction(); },
    };
}

// ---------------------------------------------------------------------------
// Invariants and worked examples
// ---------------------------------------------------------------------------

namespace {

CheckResult tensor_examples(std::uint64_t seed) {
    Tally t;
    RowVecd v(2);
    v << std::log(1.0), std::log(3.0);
    const RowVecd s = softmax_row(v);
    t.expect(std::abs(s(0) - 0.25) < 1e-15 && std::abs(s(1) - 0.75) < 1e-15, "softmax([ln1, ln3])");
    RowVecd masked(2);
    masked << 0.0, -kInf;
    const RowVecd sm = softmax_row(masked);
    t.expect(sm(0) == 1.0 && sm(1) == 0.0, "softmax([0, -inf])");
    RowVecd empty(2);
    empty << -kInf, -kInf;
    t.expect(throws_with([&] { softmax_row(empty); }, "empty support"), "all -inf row must raise empty support");
    t.expect(gelu(0.0) == 0.0, "gelu(0)");
    const Matd ln = layer_norm(Matd::Ones(1, 3));
    t.expect(ln.cwiseAbs().maxCoeff() == 0.0, "layer_norm of a constant row");
    Matd w(2, 2);
    w << 2, 0, 0, 3;
    t.expect(linear(Matd::Identity(2, 2), w, Matd::Zero(1, 2)) == w, "linear(I, W, 0)");
    t.expect(throws_with([&] { linear(Matd::Ones(2, 3), w); }, "(2x3)"), "shape error names both shapes");

    RngStream a(7), b(7);
    t.expect(bitwise_equal(gaussian<double>(a, 4, 5, 6), gaussian<double>(b, 4, 5, 6)), "seeded draws repeat");
    RngStream big(RngStream::derive(seed, 8));
    double sum = 0.0, sq = 0.0;
    constexpr int n = 1000000;
    for (int i = 0; i < n; ++i) {
        const double x = big.next_gaussian();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    t.expect(std::abs(mean) < 0.01 && std::abs(var - 1.0) < 0.01, "gaussian moments mean " + fmt(mean) + " var " + fmt(var));
    return t.finish("tensor-core examples", "softmax, gelu, layer_norm, linear, seeded gaussian moments");
}

CheckResult tcep_examples(std::uint64_t seed) {
    Tally t;
    Matd g(2, 2);
    g << 0, 2, 0, 0;
    Matd expect(2, 2);
    expect << 0, 1, 1, 0;
    t.expect(tcep::fuse_adjacency(Matd::Zero(2, 2), g) == expect, "fuse example");
    t.expect(tcep::fuse_adjacency(Matd::Identity(3, 3), Matd::Zero(3, 3)) == Matd::Identity(3, 3), "fuse fixed point");
    RngStream rng(RngStream::derive(seed, 9));
    for (int i = 0; i < 50; ++i) {
        const Index f = rand_int(rng, 1, 20);
        const Matd fused = tcep::fuse_adjacency(gauss_mat(rng, f, f, 1.0), gauss_mat(rng, f, f, 1.0));
        t.expect(fused == fused.transpose(), "fused adjacency not bitwise symmetric");
    }

    Matd e1 = Matd::Zero(2, 4);
    e1(0, 0) = e1(1, 0) = 1.0;
    t.expect(tcep::frame_similarity(e1) == Matd::Constant(2, 2, 0.5), "similarity of e1, e1 with D=4");

    Matd s = Matd::Zero(3, 3);
    s(0, 1) = s(1, 0) = 5;
    s(0, 2) = s(2, 0) = 1;
    s(1, 2) = s(2, 1) = 2;
    Matd want(3, 3);
    want << 1, 1, 0, 1, 1, 1, 0, 1, 1;
    t.expect(tcep::select_topk_mask(s, 1) == want, "top-1 example");
    t.expect(tcep::select_topk_mask(s, 2) == Matd::Ones(3, 3), "eta = F-1 gives all ones");
    Matd tie = Matd::Zero(3, 3);
    tie(0, 1) = tie(0, 2) = 4;
    tie(1, 2) = tie(2, 1) = 9;  // keeps rows 1 and 2 from choosing frame 0
    t.expect(tcep::select_topk_mask(tie, 1)(0, 1) == 1.0 && tcep::select_topk_mask(tie, 1)(0, 2) == 0.0,
             "tie goes to the lower index");
    t.expect(tcep::select_topk_mask(Matd::Zero(1, 1), 3) == Matd::Ones(1, 1), "F = 1 mask");
    Matd hub = Matd::Zero(4, 4);
    for (Index p = 1; p < 4; ++p) hub(p, 0) = hub(0, p) = 10.0 - static_cast<double>(p);
    t.expect(tcep::select_topk_mask(hub, 1).row(0).sum() == 4.0, "hub frame collects every incoming edge");
    t.expect(throws_with([&] { tcep::select_topk_mask(s, 0); }, "eta"), "eta < 1 rejected");

    // raising one score above the row's eta-th forces selection
    for (int i = 0; i < 50; ++i) {
        const Index f = rand_int(rng, 3, 20);
        const Index eta = rand_int(rng, 1, f - 2);
        Matd sim = gauss_mat(rng, f, f, 1.0);
        const Matd m = tcep::select_topk_mask(sim, eta);
        for (Index p = 0; p < f; ++p) {
            for (Index q = 0; q < f; ++q) {
                if (m(p, q) != 0.0) continue;
                Matd raised = sim;
                raised(p, q) = sim.row(p).maxCoeff() + 1.0;
                t.expect(tcep::select_topk_mask(raised, eta)(p, q) == 1.0, "monotonicity of selection");
                p = f;
                break;
            }
        }
    }

    // softmax of the masked similarity lives on the mask support and sums to 1
    for (int i = 0; i < 20; ++i) {
        const Index f = rand_int(rng, 2, 20);
        const Matd sim = tcep::frame_similarity(gauss_mat(rng, f, 3, 1.0));
        const Matd m = tcep::select_topk_mask(sim, rand_int(rng, 1, f - 1));
        const Matd probs = softmax_rows(tcep::mask_similarity(sim, m));
        for (Index p = 0; p < f; ++p) {
            t.expect(std::abs(probs.row(p).sum() - 1.0) < 1e-12, "masked softmax row sum");
            for (Index q = 0; q < f; ++q) t.expect((probs(p, q) > 0.0) == (m(p, q) == 1.0), "masked softmax support");
        }
    }
    return t.finish("TCEP examples", "fuse, similarity, top-eta examples and ties, monotonicity, masked softmax");
}

CheckResult tcep_refine_oracle(std::uint64_t seed) {
    Tally t;
    RngStream rng(RngStream::derive(seed, 10));
    double worst = 0.0;
    for (int i = 0; i < 30; ++i) {
        const Index joints = i == 0 ? 1 : rand_int(rng, 1, 4);
        const Index frames = i == 0 ? 3 : rand_int(rng, 1, 12);
        const Index width = i == 0 ? 2 : rand_int(rng, 1, 6);
        const Index eta = rand_int(rng, 1, frames + 1);
        const Ten3d y = gauss_ten(rng, joints, frames, width);
        const Matd fused = tcep::fuse_adjacency(tcep::chain_adjacency<double>(frames), gauss_mat(rng, frames, frames, 0.3));
        const Matd w = gauss_mat(rng, width, width, 0.5);
        const auto res = tcep::tcep_refine(y, fused, tcep::TcepParams<double>{w, eta});
        for (Index j = 0; j < joints; ++j) {
            const double d = max_diff(res.refined.slice(j), oracle::tcep_refine_joint(y.slice(j), fused, w, eta));
            worst = std::max(worst, d);
            t.expect(d <= 1e-12, "refined tokens differ from the loop oracle by " + fmt(d));
        }
        const auto zero_w = tcep::tcep_refine(y, fused, tcep::TcepParams<double>{Matd::Zero(width, width), eta});
        t.expect(bitwise_equal(zero_w.refined, y), "W = 0 must return the input");
        const auto zero_a = tcep::tcep_refine(y, Matd(Matd::Zero(frames, frames)), tcep::TcepParams<double>{w, eta});
        t.expect(bitwise_equal(zero_a.refined, y), "A_T = 0 must return the input");

        std::vector<Index> perm(static_cast<std::size_t>(joints));
        std::iota(perm.begin(), perm.end(), Index{0});
        std::reverse(perm.begin(), perm.end());
        Ten3d yp(joints, frames, width);
        for (Index j = 0; j < joints; ++j) yp.slice(j) = y.slice(perm[static_cast<std::size_t>(j)]);
        const auto rp = tcep::tcep_refine(yp, fused, tcep::TcepParams<double>{w, eta});
        for (Index j = 0; j < joints; ++j) {
            const auto src = perm[static_cast<std::size_t>(j)];
            t.expect(Matd(rp.refined.slice(j)) == Matd(res.refined.slice(src)) &&
                         Matd(rp.mask.masks.slice(j)) == Matd(res.mask.masks.slice(src)),
                     "joint permutation equivariance");
        }
    }
    return t.finish("TCEP refinement oracle", "30 instances, max diff " + fmt(worst) +
                                                  "; zero branches and joint permutation exact");
}

CheckResult attention_oracle(std::uint64_t seed) {
    Tally t;
    RngStream rng(RngStream::derive(seed, 11));
    const auto ones = attn::to_additive_mask(Ten3d(2, 3, 3, 1.0));
    t.expect(ones.values.rows_view().cwiseAbs().maxCoeff() == 0.0, "all-ones mask maps to zeros");
    Ten3d eye(1, 3, 3);
    eye.slice(0) = Matd::Identity(3, 3);
    const auto eye_add = attn::to_additive_mask(eye);
    bool eye_ok = true;
    for (Index p = 0; p < 3; ++p) {
        for (Index q = 0; q < 3; ++q) eye_ok &= eye_add.values(0, p, q) == (p == q ? 0.0 : -kInf);
    }
    t.expect(eye_ok, "identity mask maps to 0 / -inf");
    Ten3d bad(1, 2, 2, 1.0);
    bad(0, 0, 1) = 0.5;
    t.expect(throws_with([&] { attn::to_additive_mask(bad); }, "mask not binary"), "non-binary mask rejected");

    double worst = 0.0;
    for (int i = 0; i < 30; ++i) {
        const Index joints = i == 0 ? 1 : rand_int(rng, 1, 3);
        const Index frames = i == 0 ? 4 : rand_int(rng, 2, 10);
        const Index heads = i == 0 ? 2 : rand_int(rng, 1, 3);
        const Index width = i == 0 ? 4 : heads * rand_int(rng, 1, 3);
        const Ten3d y = gauss_ten(rng, joints, frames, width);
        const auto w = random_attn(rng, width, heads);
        Ten3d binary(joints, frames, frames);
        for (Index j = 0; j < joints; ++j) binary.slice(j) = random_mask(rng, frames, 0.4);
        const auto mask = attn::to_additive_mask(binary);
        const Ten3d out = attn::sft_mhsa(y, mask, w);
        for (Index j = 0; j < joints; ++j) {
            const Matd bias = mask.values.slice(j);
            std::vector<Matd> probs;
            const double d = max_diff(out.slice(j), oracle::attention(y.slice(j), y.slice(j), w, &bias, &probs));
            worst = std::max(worst, d);
            t.expect(d <= 1e-12, "sft_mhsa differs from the loop oracle by " + fmt(d));
            for (const auto& p : probs) {
                for (Index r = 0; r < frames; ++r) {
                    for (Index c = 0; c < frames; ++c) {
                        if (binary(j, r, c) == 0.0) t.expect(p(r, c) < 1e-15, "oracle weight at masked position");
                    }
                }
            }
        }
        auto w0 = w;
        w0.wv.setZero();
        t.expect(bitwise_equal(attn::sft_mhsa(y, mask, w0), y), "W_V = 0 leaves the residual only");

        // permuting frames and both mask axes permutes the output
        std::vector<Index> perm(static_cast<std::size_t>(frames));
        std::iota(perm.begin(), perm.end(), Index{0});
        for (Index a = frames - 1; a > 0; --a) std::swap(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(rand_int(rng, 0, a))]);
        const Ten3d yp = gather_axis1(y, perm);
        Ten3d bp(joints, frames, frames);
        for (Index j = 0; j < joints; ++j) {
            for (Index p = 0; p < frames; ++p) {
                for (Index q = 0; q < frames; ++q) {
                    bp(j, p, q) = binary(j, perm[static_cast<std::size_t>(p)], perm[static_cast<std::size_t>(q)]);
                }
            }
        }
        const double pd = max_abs_diff(attn::sft_mhsa(yp, attn::to_additive_mask(bp), w), gather_axis1(out, perm));
        t.expect(pd <= 1e-12, "frame permutation consistency off by " + fmt(pd));

        const auto f = random_ffn(rng, width, 2 * width);
        const Ten3d fo = attn::ffn_block(y, f);
        for (Index j = 0; j < joints; ++j) {
            const double d = max_diff(fo.slice(j), oracle::ffn(y.slice(j), f));
            t.expect(d <= 1e-12, "ffn_block differs from the loop oracle by " + fmt(d));
        }
        auto fz = f;
        fz.w2.setZero();
        fz.b2.setZero();
        t.expect(bitwise_equal(attn::ffn_block(y, fz), y), "zero MLP leaves the input");

        const Ten3d cond = gauss_ten(rng, joints, rand_int(rng, 1, frames), width);
        const Ten3d cross = attn::cross_mhsa(y, cond, w);
        for (Index j = 0; j < joints; ++j) {
            const double d = max_diff(cross.slice(j), oracle::attention(y.slice(j), cond.slice(j), w, nullptr));
            t.expect(d <= 1e-12, "cross_mhsa differs from the loop oracle by " + fmt(d));
        }
    }
    return t.finish("attention oracle", "30 instances vs loop oracle (max diff " + fmt(worst) +
                                            "), frame permutation, FFN and cross attention");
}

CheckResult mgptp_examples(std::uint64_t seed) {
    Tally t;
    const auto e = [](double x) { return std::exp(x); };
    mgptp::FrameTokens<double> ft{Matd(3, 1), Matd::Ones(3, 3), Matd::Ones(3, 3)};
    ft.z << 0, 3, 4;
    auto [d, lambda] = mgptp::masked_distance(ft);
    t.expect(d(0, 1) == 3 && d(0, 2) == 4 && d(1, 2) == 1 && d(0, 0) == 0, "distances of z = [0,3,4]");
    const auto phi = mgptp::knn_density(d, 1);
    t.expect(phi[0] == e(-9) && phi[1] == e(-1) && phi[2] == e(-1), "kNN density example");
    t.expect(mgptp::separation_distance(d, std::vector<double>{3, 2, 1}) == std::vector<double>{4, 3, 1},
             "separation example");
    ft.mask(0, 2) = ft.mask(2, 0) = 0;
    std::tie(d, lambda) = mgptp::masked_distance(ft);
    t.expect(d(0, 2) == 4 + 1e-6 && lambda == 4 + 1e-6, "sentinel distance");
    ft.z.setConstant(2.0);
    ft.mask.setOnes();
    std::tie(d, lambda) = mgptp::masked_distance(ft);
    t.expect(lambda == 1e-6 && d.cwiseAbs().maxCoeff() == 0.0, "identical tokens");
    t.expect(mgptp::knn_density(d, 2) == std::vector<double>(3, 1.0), "identical tokens have density 1");

    Matd two(2, 2);
    two << 1, 1, 0, 1;
    const auto resp = mgptp::response_density(std::vector<double>{1, 1}, two);
    t.expect(std::abs(resp[0] - e(2) / (e(2) + e(1))) < 1e-15 && std::abs(resp[0] - 0.7311) < 1e-4 &&
                 std::abs(resp[1] - 0.2689) < 1e-4,
             "response density example");
    t.expect(mgptp::separation_distance(Matd(Matd::Zero(1, 1)), std::vector<double>{1}) == std::vector<double>{0},
             "F = 1 separation");
    t.expect(mgptp::knn_density(Matd(Matd::Zero(1, 1)), 5) == std::vector<double>{1}, "F = 1 density");
    t.expect(throws_with([&] { mgptp::knn_density(d, 0); }, "k must be"), "k < 1 rejected");

    // pooling threshold
    tcep::TemporalMask<double> m{Ten3d(2, 2, 2, 1.0), 1};
    m.masks(1, 0, 1) = m.masks(1, 1, 0) = 0;
    const Ten3d tok(2, 2, 1, 1.0);
    t.expect(mgptp::pool_tokens_and_mask(tok, m, 0.5).mask(0, 1) == 1.0, "tau = 0.5 keeps a half vote");
    t.expect(mgptp::pool_tokens_and_mask(tok, m, 0.6).mask(0, 1) == 0.0, "tau = 0.6 drops a half vote");

    // kNN against exhaustive search, integer distances to force ties
    RngStream rng(RngStream::derive(seed, 12));
    for (int i = 0; i < 200; ++i) {
        const Index f = rand_int(rng, 1, 8);
        Matd dist = Matd::Zero(f, f);
        for (Index p = 0; p < f; ++p) {
            for (Index q = p + 1; q < f; ++q) dist(p, q) = dist(q, p) = static_cast<double>(rand_int(rng, 0, 3));
        }
        const Index k = rand_int(rng, 1, 8);
        t.expect(mgptp::knn_density(dist, k) == oracle::knn_density(dist, k), "kNN density vs exhaustive oracle");
    }

    // distance invariants, slicing and identity prune
    for (int i = 0; i < 50; ++i) {
        const Index joints = rand_int(rng, 1, 3);
        const Index frames = rand_int(rng, 2, 12);
        const Ten3d y = gauss_ten(rng, joints, frames, 3);
        const auto mask = tcep::build_mask(y, rand_int(rng, 1, frames - 1));
        const auto pooled = mgptp::pool_tokens_and_mask(y, mask, 0.5);
        for (Index p = 0; p < frames; ++p) t.expect(pooled.mask(p, p) == 1.0, "pooled diagonal");
        const auto [dm, lam] = mgptp::masked_distance(pooled);
        double valid_max = 0.0, masked_min = kInf;
        for (Index p = 0; p < frames; ++p) {
            t.expect(dm(p, p) == 0.0, "zero diagonal");
            for (Index q = 0; q < frames; ++q) {
                t.expect(dm(p, q) == dm(q, p), "distance symmetry");
                if (p == q) continue;
                if (pooled.mask(p, q) == 1.0) valid_max = std::max(valid_max, dm(p, q));
                else masked_min = std::min(masked_min, dm(p, q));
            }
        }
        t.expect(masked_min > valid_max, "masked pairs farther than every valid pair");
        mgptp::ClusterState<double> st;
        const Index keep = rand_int(rng, 1, frames);
        const auto res = mgptp::prune(y, mask, 0.5, 3, keep, &st);
        for (double v : st.density) t.expect(v > 0.0 && v <= 1.0, "density in (0, 1]");
        for (double v : st.separation) t.expect(v >= 0.0, "separation >= 0");
        t.expect(std::adjacent_find(res.index.frames.begin(), res.index.frames.end(),
                                    [](Index a, Index b) { return a >= b; }) == res.index.frames.end(),
                 "index strictly increasing");
        for (std::size_t r = 0; r < res.index.frames.size(); ++r) {
            for (Index j = 0; j < joints; ++j) {
                for (Index c = 0; c < 3; ++c) {
                    t.expect(std::bit_cast<std::uint64_t>(res.condensed(j, static_cast<Index>(r), c)) ==
                                 std::bit_cast<std::uint64_t>(y(j, res.index.frames[r], c)),
                             "slicing preserves token values");
                }
            }
        }
        const auto all = mgptp::prune(y, mask, 0.5, 3, frames);
        t.expect(bitwise_equal(all.condensed, y), "f = F is the identity prune");
        t.expect(throws_with([&] { mgptp::prune(y, mask, 0.5, 3, frames + 1); }, "f ="), "f > F rejected");
    }

    // a static sequence has equal saliency everywhere; ties keep the first f frames
    const auto still = app::generate_synthetic(17, 12, seed, app::MotionKind::static_pose);
    auto cfg = small_config(17, 12, 16, 2, 1, 5, 11);
    const auto params = model::init_params(cfg, seed);
    const Ten3d emb = model::pose_embed(still.pose_mm, app::normalise_keypoints(still.keypoints, {}), params.embed_w,
                                        params.embed_b);
    const auto full = tcep::build_mask(emb, 11);
    const auto kept = mgptp::prune(emb, full, 0.5, 3, 5);
    t.expect(kept.index.frames == std::vector<Index>{0, 1, 2, 3, 4}, "static sequence keeps frames 0..f-1");
    return t.finish("MGPTP examples", "worked examples, kNN oracle, distance and slicing invariants, static ties");
}

CheckResult diffusion_examples(std::uint64_t seed) {
    Tally t;
    const auto one = diffusion::build_schedule(1);
    t.expect(one.beta[1] == 1e-4 && one.alpha_bar[1] == 1.0 - 1e-4, "T = 1 schedule");
    const auto lin = diffusion::build_schedule(1000);
    t.expect(lin.beta[1] == 1e-4 && std::abs(lin.beta[1000] - 2e-2) < 1e-15, "linear endpoints");
    double log_sum = 0.0;
    for (int s = 1; s <= 1000; ++s) log_sum += std::log1p(-lin.beta[s]);
    t.expect(lin.alpha_bar[1000] < 5e-5 && std::abs(std::log(lin.alpha_bar[1000]) - log_sum) < 1e-9,
             "alpha_bar_T vs log-sum oracle");
    const auto cosine = diffusion::build_schedule(1000, diffusion::ScheduleKind::cosine);
    for (const auto* sched : {&lin, &cosine}) {
        for (int s = 1; s <= 1000; ++s) {
            t.expect(sched->alpha_bar[s] < sched->alpha_bar[s - 1], "alpha_bar strictly decreasing");
            t.expect(sched->beta[s] > 0.0 && sched->beta[s] < 1.0, "beta in (0, 1)");
        }
    }
    t.expect(throws_with([] { diffusion::build_schedule(0); }, "T"), "T = 0 rejected");
    t.expect(diffusion::timestep_for_iteration(1, 10, 1000) == 900, "k=1 -> 900");
    t.expect(diffusion::timestep_for_iteration(5, 10, 1000) == 500, "k=5 -> 500");
    t.expect(diffusion::timestep_for_iteration(10, 10, 1000) == 0, "k=K -> 0");

    const Ten3d y0(1, 1, 1, 2.0), eps(1, 1, 1, 1.0);
    diffusion::DiffusionSchedule quarter = one;
    quarter.alpha_bar[1] = 0.25;
    const Ten3d yt = diffusion::forward_diffuse(y0, 1, eps, quarter);
    t.expect(std::abs(yt(0, 0, 0) - (1.0 + std::sqrt(0.75))) < 1e-15 && std::abs(yt(0, 0, 0) - 1.8660) < 1e-4,
             "forward example 1.8660");
    t.expect(std::abs(diffusion::predict_eps(yt, y0, 1, quarter)(0, 0, 0) - 1.0) < 1e-12, "predict_eps example");
    t.expect(bitwise_equal(diffusion::forward_diffuse(y0, 0, eps, quarter), y0), "t = 0 returns y0");
    t.expect(throws_with([&] { diffusion::predict_eps(yt, y0, 0, quarter); }, "alpha_bar"), "division guard");
    t.expect(throws_with([&] { diffusion::forward_diffuse(y0, 2, eps, quarter); }, "timestep"), "t > T rejected");

    RngStream rng(RngStream::derive(seed, 13));
    for (int s : {1, 250, 999}) {
        const Ten3d y = gauss_ten(rng, 2, 3, 3);
        const Ten3d e = gauss_ten(rng, 2, 3, 3);
        const Ten3d fwd = diffusion::forward_diffuse(y, s, e, lin);
        t.expect(max_abs_diff(diffusion::predict_eps(fwd, y, s, lin), e) < 1e-12, "predict_eps inverts forward");
        t.expect(bitwise_equal(diffusion::forward_diffuse(y, s, Ten3d(2, 3, 3), lin),
                               [&] {
                                   Ten3d scaled = y;
                                   scaled.rows_view() *= std::sqrt(lin.alpha_bar[s]);
                                   return scaled;
                               }()),
                 "eps = 0 scales y0 exactly");
    }
    t.expect(diffusion::ddim_sigma(0.6, 0.6) == 0.0, "equal alpha_bar gives sigma 0");

    // deterministic chain is a pure function of its start
    const Ten3d target = gauss_ten(rng, 2, 4, 3);
    auto chain = [&](std::uint64_t s) {
        RngStream r(s);
        Ten3d y = gaussian<double>(r, 2, 4, 3);
        Ten3d shifted = target;
        for (int k = 0; k < 4; ++k) {
            const int tt = diffusion::timestep_for_iteration(k, 4, 1000);
            const int tp = diffusion::timestep_for_iteration(k + 1, 4, 1000);
            shifted.rows_view() = target.rows_view() + 0.01 * y.rows_view();
            y = diffusion::ddim_step(y, shifted, tt, tp, 0.0, r, lin);
        }
        return y;
    };
    t.expect(bitwise_equal(chain(5), chain(5)), "eta_ddim = 0 chain repeats");

    // aggregation
    const diffusion::CameraModel cam;
    const auto seq = app::generate_synthetic(17, 6, seed, app::MotionKind::walk_cycle, cam, 0.0);
    std::vector<Ten3d> copies(3, seq.pose_mm);
    std::vector<int> chosen;
    const Ten3d agg = diffusion::jpma_aggregate(copies, seq.keypoints, cam, &chosen);
    const Ten3d reproj = diffusion::project(agg, cam);
    t.expect(max_abs_diff(reproj, seq.keypoints) < 1e-9, "camera loop closes with zero reprojection error");
    t.expect(bitwise_equal(diffusion::jpma_aggregate({seq.pose_mm}, seq.keypoints, cam), seq.pose_mm), "H = 1");

    std::vector<Ten3d> hyps;
    for (int h = 0; h < 3; ++h) {
        Ten3d p = seq.pose_mm;
        p.rows_view() += gauss_mat(rng, p.d0() * p.d1(), 3, 40.0);
        hyps.push_back(p);
    }
    hyps[2](0, 0, 2) = -5.0;  // behind the camera at one joint
    const Ten3d pick = diffusion::jpma_aggregate(hyps, seq.keypoints, cam, &chosen);
    bool argmin_ok = true;
    for (Index j = 0; j < pick.d0(); ++j) {
        for (Index p = 0; p < pick.d1(); ++p) {
            int best = 0;
            double best_err = kInf;
            for (int h = 0; h < 3; ++h) {
                const double z = hyps[h](j, p, 2);
                if (z <= 0) continue;
                const double du = cam.fx * hyps[h](j, p, 0) / z + cam.cx - seq.keypoints(j, p, 0);
                const double dv = cam.fy * hyps[h](j, p, 1) / z + cam.cy - seq.keypoints(j, p, 1);
                const double err = std::sqrt(du * du + dv * dv);
                if (err < best_err) {
                    best_err = err;
                    best = h;
                }
            }
            argmin_ok &= chosen[static_cast<std::size_t>(j * pick.d1() + p)] == best;
            for (Index c = 0; c < 3; ++c) argmin_ok &= pick(j, p, c) == hyps[best](j, p, c);
        }
    }
    t.expect(argmin_ok, "JPMA matches the brute-force argmin");
    std::vector<Ten3d> behind(2, seq.pose_mm);
    for (auto& b : behind) b(0, 0, 2) = -1.0;
    t.expect(diffusion::jpma_aggregate(behind, seq.keypoints, cam)(0, 0, 2) == -1.0, "all disqualified -> hypothesis 0");

    Ten3d gt(1, 1, 3), pred(1, 1, 3);
    pred(0, 0, 0) = 3;
    pred(0, 0, 1) = 4;
    t.expect(diffusion::mpjpe(pred, gt) == 5.0 && diffusion::mpjpe(gt, gt) == 0.0, "MPJPE 3-4-5");
    pred.rows_view() *= 2.0;
    t.expect(diffusion::mpjpe(pred, gt) == 10.0, "MPJPE homogeneity");
    return t.finish("diffusion examples", "schedules, timesteps, forward/inverse, chain determinism, JPMA, MPJPE");
}

CheckResult denoiser_contract(std::uint64_t seed) {
    Tally t;
    RngStream rng(RngStream::derive(seed, 14));
    for (Index joints : {5, 17}) {
        for (Index frames : {9, 27, 81, 243}) {
            const Index keep = rand_int(rng, 1, frames);
            auto cfg = small_config(joints, frames, 16, 2, 1, keep, std::max<Index>(1, frames / 3));
            const auto params = model::init_params(cfg, seed + static_cast<std::uint64_t>(frames));
            const Ten3d noisy = gaussian<double>(rng, joints, frames, 3);
            const Ten3d kp = gauss_ten(rng, joints, frames, 2, 0.2);
            model::ForwardTrace trace;
            const Ten3d out = model::denoise_forward(noisy, kp, 300.0, cfg, params, &trace);
            const std::string where = "J=" + std::to_string(joints) + ", F=" + std::to_string(frames);
            t.expect(out.d0() == joints && out.d1() == frames && out.d2() == 3, "output shape " + where);
            t.expect(static_cast<Index>(trace.retained.size()) == keep, "retained count " + where);
            t.expect(all_finite(out), "finite output " + where);
            if (frames == 27) {
                t.expect(bitwise_equal(out, model::denoise_forward(noisy, kp, 300.0, cfg, params)),
                         "repeat call bitwise identical " + where);
            }
        }
    }

    // finite outputs over seeded random weights
    for (int trial = 0; trial < 100; ++trial) {
        auto cfg = small_config(5, 9, 16, 2, 1, rand_int(rng, 1, 9), rand_int(rng, 1, 8));
        const auto params = model::init_params(cfg, RngStream::derive(seed, 100 + static_cast<std::uint64_t>(trial)));
        const Ten3d out = model::denoise_forward(gauss_ten(rng, 5, 9, 3, 3.0), gauss_ten(rng, 5, 9, 2),
                                                 static_cast<double>(rand_int(rng, 0, 1000)), cfg, params);
        t.expect(all_finite(out), "non-finite output in trial " + std::to_string(trial));
    }

    // frame permutation with positional embeddings zeroed and an all-pairs temporal graph
    {
        auto cfg = small_config(5, 9, 16, 2, 1, 4, 4);
        auto params = model::init_params(cfg, seed);
        params.temporal_pos.setZero();
        params.global_topology = Matd::Ones(9, 9) - tcep::chain_adjacency<double>(9);
        const Ten3d noisy = gaussian<double>(rng, 5, 9, 3);
        const Ten3d kp = gauss_ten(rng, 5, 9, 2, 0.2);
        std::vector<Index> perm = {3, 7, 0, 8, 1, 5, 2, 6, 4};
        const Ten3d out = model::denoise_forward(noisy, kp, 200.0, cfg, params);
        const Ten3d outp =
            model::denoise_forward(gather_axis1(noisy, perm), gather_axis1(kp, perm), 200.0, cfg, params);
        const double d = max_abs_diff(outp, gather_axis1(out, perm));
        t.expect(d <= 1e-10, "frame permutation changes outputs by " + fmt(d));
    }

    // stage errors carry the stage name
    {
        auto cfg = small_config(5, 9, 16, 2, 1, 4, 4);
        auto params = model::init_params(cfg, seed);
        params.tcep_w = Matd::Zero(3, 3);
        t.expect(throws_with([&] { model::denoise_forward(Ten3d(5, 9, 3), Ten3d(5, 9, 2), 1.0, cfg, params); },
                             "stage 'tcep'"),
                 "stage name in error");
        cfg.skeleton = Matd::Ones(5, 5);
        cfg.skeleton(0, 1) = 0;
        t.expect(throws_with([&] { cfg.validate(); }, "symmetric"), "asymmetric skeleton rejected");
    }
    return t.finish("denoiser contract", "shapes for J in {5,17} x F in {9,27,81,243}, determinism, 100 finite "
                                         "trials, frame permutation, stage-tagged errors");
}

// Counts multiply-accumulates of a naive dense MHSA by walking its loops.
macs::Count enumerate_attention_macs(Index seq, Index rows, Index width, Index heads) {
    macs::Count n = 0;
    const Index dk = width / heads;
    for (Index r = 0; r < rows; ++r) {
        for (int proj = 0; proj < 4; ++proj) {
            for (Index i = 0; i < seq; ++i)
                for (Index o = 0; o < width; ++o)
                    for (Index c = 0; c < width; ++c) ++n;
        }
        for (Index h = 0; h < heads; ++h) {
            for (Index i = 0; i < seq; ++i) {
                for (Index j = 0; j < seq; ++j)
                    for (Index c = 0; c < dk; ++c) ++n;  // scores
                for (Index c = 0; c < dk; ++c)
                    for (Index j = 0; j < seq; ++j) ++n;  // context
            }
        }
    }
    return n;
}

CheckResult macs_invariants() {
    Tally t;
    t.expect(macs::macs_linear(1, 1, 1) == 1, "macs_linear(1,1,1)");
    t.expect(macs::macs_linear(17 * 243, 512, 512) == 1082916864ULL, "macs_linear example");
    t.expect(macs::macs_linear(2 * 17 * 243, 512, 512) == 2 * macs::macs_linear(17 * 243, 512, 512), "linearity");
    t.expect(macs::macs_attention(2, 1, 2, 1) == enumerate_attention_macs(2, 1, 2, 1) &&
                 enumerate_attention_macs(2, 1, 2, 1) == 48,
             "tiny attention enumeration");
    t.expect(macs::macs_attention(9, 4, 8, 2) == enumerate_attention_macs(9, 4, 8, 2), "attention enumeration");
    const macs::Count full = macs::macs_attention(243, 17, 512, 8);
    const macs::Count part = macs::macs_attention(243, 17, 512, 8, 243 * 243 * 17 / 2);
    t.expect(full - part == macs::macs_attention_scores(243 * 243 * 17 - 243 * 243 * 17 / 2, 512),
             "score term is linear in the mask support");

    for (Index frames : {9, 27, 81, 243}) {
        for (Index keep : {Index{1}, frames / 3, frames}) {
            for (Index eta : {Index{1}, frames / 2, frames - 1}) {
                model::DenoiserConfig cfg;
                cfg.frames = frames;
                cfg.keep = std::max<Index>(keep, 1);
                cfg.eta = std::max<Index>(eta, 1);
                const auto r = macs::profile_model(cfg, 3, 4, 1);
                for (const auto* pass : {&r.htp, &r.inference, &r.dense, &r.baseline}) {
                    macs::Count sum = 0;
                    for (const auto& s : pass->stages) sum += s.macs;
                    t.expect(sum == pass->total(), "total equals stage sum");
                }
                if (cfg.keep < frames || cfg.eta < frames - 1) {
                    t.expect(r.dense.total() >= r.htp.total(), "dense >= HTP");
                }
                t.expect(r.inference_total() == r.inference.total() * 12, "H x K scaling");
                const auto one = macs::profile_model(cfg, 1, 1);
                t.expect(one.inference_total() == one.htp.total(), "H = K = 1 equals one pass");
                // score term of post-prune blocks scales with kept frames squared
                const macs::Count s = r.htp.stage("block7.temporal.scores").macs;
                t.expect(s * static_cast<macs::Count>(frames * frames) ==
                             r.dense.stage("block7.temporal.scores").macs *
                                 static_cast<macs::Count>(cfg.keep * cfg.keep),
                         "kept-frames squared scaling");
            }
        }
    }
    // measured mask support overrides the expected one
    model::DenoiserConfig cfg;
    cfg.frames = 27;
    cfg.keep = 9;
    cfg.eta = 9;
    const auto measured = macs::profile_htp_pass(cfg, 3, 17 * 27 * 27);
    const auto dense_like = macs::profile_htp_pass([&] {
        auto c = cfg;
        c.eta = 26;
        return c;
    }(), 3);
    t.expect(measured.total() == dense_like.total(), "measured full support equals eta = F-1");
    return t.finish("MACs invariants", "examples, enumeration oracle, stage sums, dense >= HTP, scaling laws");
}

CheckResult io_roundtrip(std::uint64_t seed) {
    Tally t;
    RngStream rng(RngStream::derive(seed, 15));
    const auto dir = std::filesystem::temp_directory_path() /
                     ("htp-verify-" + std::to_string(seed) + "-" + std::to_string(rng.next_u64() % 100000));
    std::filesystem::create_directories(dir);

    HostTensor h;
    h.dims = {2, 3, 4};
    for (int i = 0; i < 24; ++i) h.values.push_back(rng.next_gaussian() * std::pow(10.0, rand_int(rng, -300, 300)));
    h.values[0] = -0.0;
    h.values[1] = std::numeric_limits<double>::denorm_min();
    h.values[2] = std::numeric_limits<double>::infinity();
    save_htp1(dir / "t.htp1", h);
    const HostTensor back = load_htp1(dir / "t.htp1");
    bool same = back.dims == h.dims && back.values.size() == h.values.size();
    for (std::size_t i = 0; same && i < h.values.size(); ++i) {
        same = std::bit_cast<std::uint64_t>(back.values[i]) == std::bit_cast<std::uint64_t>(h.values[i]);
    }
    t.expect(same, "HTP1 round trip");
    t.expect(throws_with([] { decode_htp1("HTP2xxxx"); }, "magic"), "bad magic rejected");

    const Ten3d pose = gauss_ten(rng, 17, 11, 3, 1234.5);
    app::write_pose_csv(dir / "p.csv", pose);
    t.expect(bitwise_equal(app::read_pose_csv(dir / "p.csv"), pose), "3D CSV round trip");
    const Ten3d kp = gauss_ten(rng, 5, 4, 2, 300.0);
    app::write_pose_csv(dir / "k.csv", kp);
    t.expect(bitwise_equal(app::read_pose_csv(dir / "k.csv"), kp), "2D CSV round trip");
    std::istringstream missing("frame,joint,x,y,z\n0,0,1,2,3\n1,1,1,2,3\n");
    t.expect(throws_with([&] { app::read_pose_csv(missing); }, "rows"), "non-dense CSV rejected");

    auto cfg = small_config(5, 9, 16, 2, 1, 4, 4);
    const auto params = model::init_params(cfg, seed);
    model::save_checkpoint(dir / "m.htpc", params);
    const auto loaded = model::load_checkpoint(dir / "m.htpc", cfg);
    bool params_same = true;
    std::vector<Matd> a, b;
    params.visit([&](const std::string&, const Matd& m) { a.push_back(m); });
    loaded.visit([&](const std::string&, const Matd& m) { b.push_back(m); });
    for (std::size_t i = 0; i < a.size(); ++i) params_same &= a[i] == b[i];
    t.expect(params_same, "checkpoint round trip");
    auto wider = cfg;
    wider.width = 32;
    t.expect(throws_with([&] { model::load_checkpoint(dir / "m.htpc", wider); }, "shape"),
             "checkpoint shape mismatch rejected");
    std::filesystem::remove_all(dir);
    return t.finish("I/O round trips", "HTP1 bit-exact, pose CSV bit-exact, checkpoint shapes validated");
}

CheckResult config_rejection() {
    Tally t;
    const auto reject = [&](const nlohmann::json& doc, const std::string& needle) {
        try {
            app::config_from_json(doc);
            t.fail("accepted " + doc.dump());
        } catch (const app::ConfigError& e) {
            t.expect(std::string(e.what()).find(needle) != std::string::npos,
                     "message for " + doc.dump() + " lacks '" + needle + "': " + e.what());
        } catch (const std::exception& e) {
            t.fail("non-config error for " + doc.dump() + ": " + e.what());
        }
    };
    reject({{"frames", 27}, {"keep", 30}}, "f = 30");
    reject({{"blocks", 2}, {"sft_blocks", 3}}, "n1 = 3");
    reject({{"eta", 0}}, "eta");
    reject({{"width", 30}, {"heads", 8}}, "divisible");
    reject({{"sft_blocks_infer", 9}}, "sft_blocks_infer");
    reject({{"iterations", 0}}, "iterations");
    reject({{"eta_ddim", 2.0}}, "eta_ddim");
    reject({{"pool_threshold", 0.0}}, "tau");
    reject({{"knn", 0}}, "k must");
    reject({{"frobnicate", 1}}, "unknown key 'frobnicate'");
    reject({{"camera", {{"fx", -1.0}}}}, "camera");
    reject({{"frames", "many"}}, "wrong type");
    reject({{"motion", "dance"}}, "motion");
    try {
        const auto cfg = app::config_from_json({{"frames", 27}, {"keep", 9}, {"eta", 9}});
        t.expect(cfg.model.frames == 27 && cfg.model.keep == 9, "valid config parsed");
        const auto again = app::config_from_json(app::config_to_json(cfg));
        t.expect(app::config_to_json(again) == app::config_to_json(cfg), "config JSON round trip");
    } catch (const std::exception& e) {
        t.fail(std::string("valid config rejected: ") + e.what());
    }
    return t.finish("config rejection", "invalid fields raise named configuration errors");
}

CheckResult inference_workflow(std::uint64_t seed) {
    Tally t;
    app::RunConfig cfg;
    cfg.model = small_config(17, 27, 16, 2, 1, 9, 9);
    cfg.sft_blocks_infer = 1;
    cfg.hypotheses = 3;
    cfg.iterations = 5;
    cfg.seed = seed;
    cfg.eta_ddim = 0.0;
    const auto seq = app::generate_synthetic(17, 27, seed, app::MotionKind::walk_cycle, cfg.camera, 0.0);

    Ten3d oracle_m(17, 27, 3);
    oracle_m.rows_view() = seq.pose_mm.rows_view() / 1000.0;
    const auto params = model::zero_params(cfg.model);
    const auto via_oracle = app::infer(cfg, seq.keypoints, params, oracle_m, seq.pose_mm);
    const double err = max_abs_diff(via_oracle.pose_mm, seq.pose_mm);
    t.expect(err <= 1e-6, "oracle denoiser output differs from y0 by " + fmt(err) + " mm");
    t.expect(via_oracle.mpjpe_mm && *via_oracle.mpjpe_mm <= 1e-6, "oracle MPJPE");

    const auto net_params = app::resolve_params(cfg);
    cfg.hypotheses = 1;
    cfg.iterations = 1;
    const auto single = app::infer(cfg, seq.keypoints, net_params);
    t.expect(single.denoiser_calls == 1, "H = K = 1 makes one denoiser call");
    cfg.hypotheses = 3;
    cfg.iterations = 2;
    cfg.eta_ddim = 1.0;
    const auto r1 = app::infer(cfg, seq.keypoints, net_params);
    const auto r2 = app::infer(cfg, seq.keypoints, net_params);
    t.expect(bitwise_equal(r1.pose_mm, r2.pose_mm), "fixed seed gives identical output");
    t.expect(r1.denoiser_calls == 6 && r1.retained.size() == 6, "H x K denoiser calls");
    t.expect(all_finite(r1.pose_mm), "finite inference output");
    return t.finish("inference workflow", "oracle denoiser reproduces y0 (" + fmt(err) +
                                              " mm), call counts, seeded determinism");
}

}  // namespace

std::vector<std::function<CheckResult()>> invariants(std::uint64_t seed) {
    return {
        [seed] { return tensor_examples(seed); },
        [seed] { return tcep_examples(seed); },
        [seed] { return tcep_refine_oracle(seed); },
        [seed] { return attention_oracle(seed); },
        [seed] { return mgptp_examples(seed); },
        [seed] { return diffusion_examples(seed); },
        [seed] { return denoiser_contract(seed); },
        [] { return macs_invariants(); },
        [seed] { return io_roundtrip(seed); },
        [] { return config_rejection(); },
        [seed] { return inference_workflow(seed); },
    };
}

std::string format_line(const CheckResult& r) {
    return std::string(r.passed ? "PASS" : "FAIL") + "  " + r.name + ": " + r.detail;
}

bool run_all(std::ostream& os, std::uint64_t seed) {
    const bool was_quiet = false;
    log::set_quiet(true);
    bool ok = true;
    int index = 0;
    auto run = [&](const std::function<CheckResult()>& fn, const std::string& prefix) {
        const auto start = std::chrono::steady_clock::now();
        CheckResult r;
        try {
            r = fn();
        } catch (const std::exception& e) {
            r = {prefix, false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        char timing[32];
        std::snprintf(timing, sizeof timing, " [%.1fs]", secs);
        os << prefix << format_line(r) << timing << std::endl;
        ok &= r.passed;
    };
    for (const auto& fn : criteria(seed)) run(fn, "[" + std::to_string(++index) + "] ");
    for (const auto& fn : invariants(seed)) run(fn, "[inv] ");
    log::set_quiet(was_quiet);
    os << (ok ? "verify: all checks passed" : "verify: FAILURES") << std::endl;
    return ok;
}

}  // namespace htp::verify
