#include "htp/app.hpp"
#include "htp/denoiser.hpp"
#include "htp/htp1.hpp"
#include "htp/macs.hpp"
#include "htp/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using nlohmann::json;

// Flags that map one-to-one onto config keys. Only flags given on the command
// line end up in the overrides object.
struct Overrides {
    std::string config_path;
    std::vector<std::pair<std::string, std::optional<long long>>> ints;
    std::vector<std::pair<std::string, std::optional<double>>> reals;
    std::vector<std::pair<std::string, std::optional<std::string>>> strings;
    std::optional<std::uint64_t> seed;

    json to_json() const {
        json doc = json::object();
        for (const auto& [key, v] : ints) {
            if (v) doc[key] = *v;
        }
        for (const auto& [key, v] : reals) {
            if (v) doc[key] = *v;
        }
        for (const auto& [key, v] : strings) {
            if (v) doc[key] = *v;
        }
        if (seed) doc["seed"] = *seed;
        return doc;
    }

    htp::app::RunConfig load() const { return htp::app::load_config(config_path, to_json()); }
};

void add_int(CLI::App* cmd, Overrides& o, const std::string& flag, const std::string& key, const std::string& help) {
    o.ints.emplace_back(key, std::nullopt);
    cmd->add_option(flag, o.ints.back().second, help);
}

void add_real(CLI::App* cmd, Overrides& o, const std::string& flag, const std::string& key, const std::string& help) {
    o.reals.emplace_back(key, std::nullopt);
    cmd->add_option(flag, o.reals.back().second, help);
}

void add_string(CLI::App* cmd, Overrides& o, const std::string& flag, const std::string& key,
                const std::string& help) {
    o.strings.emplace_back(key, std::nullopt);
    cmd->add_option(flag, o.strings.back().second, help);
}

// The vectors above must not reallocate after options bind to their elements.
void add_model_flags(CLI::App* cmd, Overrides& o) {
    o.ints.reserve(32);
    o.reals.reserve(16);
    o.strings.reserve(16);
    cmd->add_option("--config", o.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "Seed for every random stream");
    add_int(cmd, o, "--joints", "joints", "Joints per frame (J)");
    add_int(cmd, o, "--frames", "frames", "Frames per sequence (F)");
    add_int(cmd, o, "--width", "width", "Token width (D)");
    add_int(cmd, o, "--keep", "keep", "Frames kept after pruning (f)");
    add_int(cmd, o, "--eta", "eta", "Top-eta neighbours per frame in the temporal mask");
    add_int(cmd, o, "--blocks", "blocks", "Spatial-temporal blocks (n)");
    add_int(cmd, o, "--sft-blocks", "sft_blocks", "Masked blocks before pruning (n1)");
    add_int(cmd, o, "--sft-blocks-infer", "sft_blocks_infer", "Masked blocks used at inference");
    add_int(cmd, o, "--heads", "heads", "Attention heads");
    add_int(cmd, o, "--knn", "knn", "Neighbours for the density estimate");
    add_real(cmd, o, "--pool-threshold", "pool_threshold", "Joint vote threshold for the pooled mask");
    add_int(cmd, o, "--H", "hypotheses", "Hypotheses per sequence");
    add_int(cmd, o, "--K", "iterations", "Reverse iterations per hypothesis");
    add_int(cmd, o, "--T", "diffusion_steps", "Diffusion steps of the noise schedule");
    add_real(cmd, o, "--eta-ddim", "eta_ddim", "DDIM stochasticity (0 = deterministic)");
    add_string(cmd, o, "--schedule", "schedule", "Noise schedule: linear or cosine");
}

int run_generate(const Overrides& o, const std::string& out_2d, const std::string& out_3d,
                 const std::optional<std::string>& motion, const std::optional<double>& noise) {
    json overrides = o.to_json();
    if (motion) overrides["motion"] = *motion;
    if (noise) overrides["noise_px"] = *noise;
    const auto cfg = htp::app::load_config(o.config_path, overrides);
    const auto seq = htp::app::generate_synthetic(cfg.model.joints, cfg.model.frames, cfg.seed, cfg.motion,
                                                  cfg.camera, cfg.noise_px);
    htp::app::write_pose_csv(out_2d, seq.keypoints);
    htp::app::write_pose_csv(out_3d, seq.pose_mm);
    std::cout << "generated " << cfg.model.joints << " joints x " << cfg.model.frames << " frames ("
              << htp::app::to_string(cfg.motion) << ") -> " << out_2d << ", " << out_3d << "\n";
    return 0;
}

int run_infer(htp::app::RunConfig cfg, bool show_time) {
    const auto result = htp::app::run_infer(cfg);
    std::cout << "infer: " << result.denoiser_calls << " denoiser calls";
    if (result.mpjpe_mm) {
        char buf[64];
        std::snprintf(buf, sizeof buf, ", MPJPE %.3f mm", *result.mpjpe_mm);
        std::cout << buf;
    }
    if (!cfg.output_3d.empty()) std::cout << " -> " << cfg.output_3d;
    std::cout << "\n";
    if (show_time) {
        const double fps = result.seconds > 0 ? static_cast<double>(cfg.model.frames) / result.seconds : 0.0;
        std::fprintf(stderr, "infer: %.3f s wall clock, %.2f frames/s\n", result.seconds, fps);
    }
    return 0;
}

int run_profile(const htp::app::RunConfig& cfg, const std::string& out_json) {
    const auto report = htp::macs::profile_model(cfg.model, cfg.hypotheses, cfg.iterations, cfg.sft_blocks_infer);
    const std::string doc = htp::macs::report_json(report);
    if (!out_json.empty()) {
        std::ofstream os(out_json, std::ios::binary);
        if (!os) throw htp::IoError("cannot open " + out_json + " for writing");
        os << doc << "\n";
        if (!os) throw htp::IoError("failed writing " + out_json);
    }
    std::cout << htp::macs::report_table(report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App cli{"Pose-lifting diffusion pipeline with hierarchical temporal pruning"};
    cli.require_subcommand(1);

    Overrides gen_o, inf_o, prof_o;

    auto* gen = cli.add_subcommand("generate", "Write a seeded synthetic 2D/3D pose sequence");
    add_model_flags(gen, gen_o);
    std::string out_2d, out_3d;
    std::optional<std::string> motion;
    std::optional<double> noise;
    gen->add_option("--out-2d", out_2d, "2D keypoint CSV to write")->required();
    gen->add_option("--out-3d", out_3d, "3D ground-truth CSV to write")->required();
    gen->add_option("--motion", motion, "static, walk_cycle or random_smooth");
    gen->add_option("--noise-px", noise, "Gaussian pixel noise added to the 2D track");

    auto* inf = cli.add_subcommand("infer", "Lift a 2D keypoint sequence to 3D");
    add_model_flags(inf, inf_o);
    add_string(inf, inf_o, "--input", "input_2d", "2D keypoint CSV");
    add_string(inf, inf_o, "--output", "output_3d", "3D output CSV");
    add_string(inf, inf_o, "--ground-truth", "ground_truth", "3D CSV for MPJPE");
    add_string(inf, inf_o, "--params", "params_in", "Checkpoint to load");
    add_string(inf, inf_o, "--save-params", "params_out", "Write the parameters used to a checkpoint");
    add_string(inf, inf_o, "--oracle-y0", "oracle_y0", "Replace the denoiser by a stub returning this 3D CSV");
    add_string(inf, inf_o, "--emit-retained", "emit_retained", "JSON file of retained frame indices");
    add_string(inf, inf_o, "--export-mask", "export_mask", "HTP1 file of the first temporal mask");
    bool show_time = false;
    inf->add_flag("--time", show_time, "Report wall-clock time on stderr");

    auto* prof = cli.add_subcommand("profile", "Analytic multiply-accumulate report");
    add_model_flags(prof, prof_o);
    std::string prof_out;
    prof->add_option("--out", prof_out, "JSON report to write");

    auto* ver = cli.add_subcommand("verify", "Run the oracle and property suites");
    std::uint64_t verify_seed = 20240521;
    ver->add_option("--seed", verify_seed, "Seed for the randomised suites");

    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = cli.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return run_generate(gen_o, out_2d, out_3d, motion, noise);
        if (inf->parsed()) return run_infer(inf_o.load(), show_time);
        if (prof->parsed()) return run_profile(prof_o.load(), prof_out);
        if (ver->parsed()) return htp::verify::run_all(std::cout, verify_seed) ? 0 : 4;
    } catch (const htp::app::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const htp::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const htp::app::VerifyFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
