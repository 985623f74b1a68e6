#include "htp/macs.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace htp::macs {

namespace {

Count to_count(Index v, const char* what) {
    if (v < 0) throw std::invalid_argument(std::string("macs: negative ") + what);
    return static_cast<Count>(v);
}

struct Dims {
    Count joints, frames, width, heads, hidden;
};

Dims dims_of(const model::DenoiserConfig& cfg) {
    return {to_count(cfg.joints, "J"), to_count(cfg.frames, "F"), to_count(cfg.width, "D"),
            to_count(cfg.heads, "h"), to_count(cfg.width * cfg.mlp_ratio, "hidden")};
}

// attention split into projection and score/context entries, then the MLP
void add_block(PassProfile& pass, const std::string& prefix, const Dims& d, Count seq, Count rows,
               Count support_total) {
    const Count tokens = seq * rows;
    pass.stages.push_back({prefix + ".proj", macs_attention(seq, rows, d.width, d.heads, support_total) -
                                                 macs_attention_scores(support_total, d.width)});
    pass.stages.push_back({prefix + ".scores", macs_attention_scores(support_total, d.width)});
    pass.stages.push_back(
        {prefix + ".ffn", macs_linear(tokens, d.width, d.hidden) + macs_linear(tokens, d.hidden, d.width)});
}

void add_spatial(PassProfile& pass, const std::string& prefix, const Dims& d, Count frames) {
    add_block(pass, prefix, d, d.joints, frames, d.joints * d.joints * frames);
}

void add_prologue(PassProfile& pass, const Dims& d) {
    const Count tokens = d.joints * d.frames;
    pass.stages.push_back({"pose_embed", macs_linear(tokens, 5, d.width)});
    pass.stages.push_back(
        {"spatial_gcn", macs_linear(tokens, d.width, d.width) + d.frames * d.joints * d.joints * d.width});
}

}  // namespace

Count macs_linear(Count tokens, Count d_in, Count d_out) { return tokens * d_in * d_out; }

Count macs_attention_scores(Count support_total, Count width) { return 2 * support_total * width; }

Count macs_attention(Count seq, Count batch_rows, Count width, Count heads, std::optional<Count> support_total) {
    if (heads == 0 || width % heads != 0) {
        throw std::invalid_argument("macs_attention: D must be divisible by h");
    }
    const Count support = support_total.value_or(seq * seq * batch_rows);
    return 4 * macs_linear(seq * batch_rows, width, width) + macs_attention_scores(support, width);
}

Count expected_row_support(Count frames, Count eta) {
    if (frames < 2) return 1;
    const Count e = std::min(eta, frames - 1);
    const Count gap = frames - 1 - e;
    return frames - (gap * gap) / (frames - 1);
}

Count PassProfile::total() const {
    Count sum = 0;
    for (const auto& s : stages) sum += s.macs;
    return sum;
}

Count PassProfile::total_matching(const std::string& suffix) const {
    Count sum = 0;
    for (const auto& s : stages) {
        if (s.name.size() >= suffix.size() &&
            s.name.compare(s.name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            sum += s.macs;
        }
    }
    return sum;
}

const StageEntry& PassProfile::stage(const std::string& name) const {
    for (const auto& s : stages) {
        if (s.name == name) return s;
    }
    throw std::out_of_range("no stage named '" + name + "' in profile " + label);
}

PassProfile profile_htp_pass(const model::DenoiserConfig& cfg, Index sft_blocks,
                             std::optional<Count> sft_support_total) {
    cfg.validate();
    if (sft_blocks < 0 || sft_blocks > cfg.blocks) {
        throw std::invalid_argument("profile: n1 = " + std::to_string(sft_blocks) + " outside [0, n]");
    }
    const Dims d = dims_of(cfg);
    const Count keep = to_count(cfg.keep, "f");
    const Count tokens = d.joints * d.frames;
    const Count support =
        sft_support_total.value_or(d.joints * d.frames * expected_row_support(d.frames, to_count(cfg.eta, "eta")));

    PassProfile pass;
    pass.label = "htp";
    add_prologue(pass, d);
    add_spatial(pass, "pre_spatial", d, d.frames);
    pass.stages.push_back({"tcep", d.joints * d.frames * d.frames * d.width + support * d.width +
                                       macs_linear(tokens, d.width, d.width)});
    pass.stages.push_back({"time_embed", 2 * d.width * d.width});
    for (Index b = 0; b < sft_blocks; ++b) {
        const std::string prefix = "block" + std::to_string(b);
        add_spatial(pass, prefix + ".spatial", d, d.frames);
        add_block(pass, prefix + ".sft", d, d.frames, d.joints, support);
    }
    pass.stages.push_back({"mgptp", d.frames * (d.frames - 1) / 2 * d.width});
    for (Index b = sft_blocks; b < cfg.blocks; ++b) {
        const std::string prefix = "block" + std::to_string(b);
        add_spatial(pass, prefix + ".spatial", d, keep);
        add_block(pass, prefix + ".temporal", d, keep, d.joints, keep * keep * d.joints);
    }
    const Count kept_tokens = d.joints * keep;
    pass.stages.push_back({"cross.proj", 2 * macs_linear(tokens, d.width, d.width) +
                                             2 * macs_linear(kept_tokens, d.width, d.width)});
    pass.stages.push_back({"cross.scores", macs_attention_scores(d.joints * d.frames * keep, d.width)});
    pass.stages.push_back({"head", macs_linear(tokens, d.width, 3)});
    return pass;
}

PassProfile profile_baseline_pass(const model::DenoiserConfig& cfg) {
    cfg.validate();
    const Dims d = dims_of(cfg);
    PassProfile pass;
    pass.label = "baseline";
    add_prologue(pass, d);
    for (Index b = 0; b < cfg.blocks; ++b) {
        const std::string prefix = "block" + std::to_string(b);
        add_spatial(pass, prefix + ".spatial", d, d.frames);
        add_block(pass, prefix + ".temporal", d, d.frames, d.joints, d.frames * d.frames * d.joints);
    }
    pass.stages.push_back({"head", macs_linear(d.joints * d.frames, d.width, 3)});
    return pass;
}

double published_g(Count macs) { return kPublishedScale * static_cast<double>(macs) / 1e9; }

Count MacsReport::inference_total() const {
    return inference.total() * static_cast<Count>(hypotheses) * static_cast<Count>(iterations);
}

Count MacsReport::baseline_inference_total() const {
    return baseline.total() * static_cast<Count>(hypotheses) * static_cast<Count>(iterations);
}

double MacsReport::train_per_frame_g() const { return published_g(htp.total()) / static_cast<double>(frames); }

double MacsReport::reduction_vs_dense() const {
    return 1.0 - static_cast<double>(htp.total()) / static_cast<double>(dense.total());
}

double MacsReport::reduction_vs_baseline() const {
    return 1.0 - static_cast<double>(htp.total()) / static_cast<double>(baseline.total());
}

double MacsReport::inference_reduction() const {
    return 1.0 - static_cast<double>(inference_total()) / static_cast<double>(baseline_inference_total());
}

MacsReport profile_model(const model::DenoiserConfig& cfg, Index hypotheses, Index iterations,
                         std::optional<Index> sft_blocks_infer, std::optional<Count> sft_support_total) {
    if (hypotheses < 1 || iterations < 1) throw std::invalid_argument("profile: H and K must be >= 1");
    MacsReport r;
    r.frames = cfg.frames;
    r.hypotheses = hypotheses;
    r.iterations = iterations;
    r.sft_blocks_infer = sft_blocks_infer.value_or(cfg.sft_blocks);
    r.htp = profile_htp_pass(cfg, cfg.sft_blocks, sft_support_total);
    r.inference = profile_htp_pass(cfg, r.sft_blocks_infer, sft_support_total);
    r.inference.label = "inference";
    model::DenoiserConfig full = cfg;
    full.keep = cfg.frames;
    full.eta = std::max<Index>(cfg.frames - 1, 1);
    r.dense = profile_htp_pass(full, cfg.sft_blocks);
    r.dense.label = "dense";
    r.baseline = profile_baseline_pass(cfg);
    return r;
}

std::string report_json(const MacsReport& r) {
    using nlohmann::ordered_json;
    auto pass_json = [](const PassProfile& p) {
        ordered_json stages = ordered_json::array();
        for (const auto& s : p.stages) stages.push_back({{"stage", s.name}, {"macs", s.macs}});
        return ordered_json{{"total_macs", p.total()}, {"published_g", published_g(p.total())}, {"stages", stages}};
    };
    ordered_json doc;
    doc["convention"] = "1 MAC = one multiply-accumulate; biases, softmax, GELU, LayerNorm excluded; published_g = 2 * MACs / 1e9";
    doc["frames"] = r.frames;
    doc["H"] = r.hypotheses;
    doc["K"] = r.iterations;
    doc["n1_infer"] = r.sft_blocks_infer;
    doc["totals"] = {
        {"train_total_macs", r.htp.total()},
        {"train_per_frame_g", r.train_per_frame_g()},
        {"inference_pass_macs", r.inference.total()},
        {"inference_total_macs", r.inference_total()},
        {"baseline_inference_total_macs", r.baseline_inference_total()},
        {"reduction_vs_dense", r.reduction_vs_dense()},
        {"reduction_vs_baseline", r.reduction_vs_baseline()},
        {"inference_reduction", r.inference_reduction()},
    };
    doc["htp"] = pass_json(r.htp);
    doc["inference"] = pass_json(r.inference);
    doc["dense"] = pass_json(r.dense);
    doc["baseline"] = pass_json(r.baseline);
    return doc.dump(2) + "\n";
}

std::string report_table(const MacsReport& r) {
    std::ostringstream out;
    char line[160];
    auto row = [&](const std::string& name, Count macs) {
        std::snprintf(line, sizeof line, "  %-24s %18llu %10.3f\n", name.c_str(), static_cast<unsigned long long>(macs),
                      published_g(macs));
        out << line;
    };
    for (const PassProfile* p : {&r.htp, &r.inference, &r.dense, &r.baseline}) {
        std::snprintf(line, sizeof line, "%-26s %18s %10s\n", p->label.c_str(), "MACs", "G(x2)");
        out << line;
        for (const auto& s : p->stages) row(s.name, s.macs);
        row("total", p->total());
        out << "\n";
    }
    std::snprintf(line, sizeof line,
                  "train per frame %.4f G | inference x%lldx%lld %.1f G vs baseline %.1f G | reduction %.1f%%\n",
                  r.train_per_frame_g(), static_cast<long long>(r.hypotheses), static_cast<long long>(r.iterations),
                  published_g(r.inference_total()), published_g(r.baseline_inference_total()),
                  100.0 * r.inference_reduction());
    out << line;
    return out.str();
}

}  // namespace htp::macs
