#pragma once

// Run configuration, pose files, synthetic sequences and the generate / infer /
// profile workflows behind the command-line tool.

#include "htp/denoiser.hpp"
#include "htp/diffusion.hpp"
#include "htp/htp1.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace htp::app {

/// Invalid or unknown configuration; maps to exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A verification property failed; maps to exit code 4.
class VerifyFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class MotionKind { static_pose, walk_cycle, random_smooth };

MotionKind parse_motion_kind(const std::string& name);
std::string to_string(MotionKind kind);

struct RunConfig {
    model::DenoiserConfig model;
    Index sft_blocks_infer = 1;  // masked blocks used at inference
    Index hypotheses = 20;       // H
    Index iterations = 10;       // K
    int diffusion_steps = 1000;  // T
    double eta_ddim = 1.0;  // 1 keeps the full stochastic sigma, 0 is deterministic
    std::uint64_t seed = 0;
    diffusion::ScheduleKind schedule = diffusion::ScheduleKind::linear;
    diffusion::CameraModel camera;
    MotionKind motion = MotionKind::walk_cycle;
    double noise_px = 0.0;

    std::string input_2d;
    std::string output_3d;
    std::string ground_truth;
    std::string params_in;
    std::string params_out;
    std::string oracle_y0;
    std::string emit_retained;
    std::string export_mask;

    /// Throws ConfigError naming the offending field.
    void validate() const;

    /// Model config used for inference passes (n1 replaced by sft_blocks_infer).
    model::DenoiserConfig inference_model() const;
};

/// Applies the keys of `doc` on top of `base`. Unknown keys and wrongly typed
/// values raise ConfigError; the result is validated.
RunConfig config_from_json(const nlohmann::json& doc, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, const nlohmann::json& overrides = nlohmann::json::object());
nlohmann::json config_to_json(const RunConfig& cfg);

/// Pose CSV: header `frame,joint,x,y,z` (3D) or `frame,joint,u,v` (2D), one row
/// per (frame, joint). Values are written in shortest round-trip form.
void write_pose_csv(const std::filesystem::path& path, const Ten3d& pose);
void write_pose_csv(std::ostream& os, const Ten3d& pose);

/// Reads a J x F x C pose (C = 3 or 2 from the header). Every (frame, joint)
/// pair in [0, F) x [0, J) must appear exactly once.
Ten3d read_pose_csv(const std::filesystem::path& path);
Ten3d read_pose_csv(std::istream& is, const std::string& source = "<stream>");

struct SyntheticSequence {
    Ten3d pose_mm;    // J x F x 3, camera frame
    Ten3d keypoints;  // J x F x 2, pixels
};

/// Smooth seeded trajectory in front of the camera (root near Z = 4.5 m) and its
/// projection; `noise_px` adds seeded Gaussian pixel noise to the 2D track.
SyntheticSequence generate_synthetic(Index joints, Index frames, std::uint64_t seed, MotionKind kind,
                                     const diffusion::CameraModel& cam = {}, double noise_px = 0.0);

/// Keypoints in pixels -> normalised image coordinates fed to the network.
Ten3d normalise_keypoints(const Ten3d& keypoints, const diffusion::CameraModel& cam);

struct RetainedRecord {
    Index hypothesis = 0;
    Index iteration = 0;
    int timestep = 0;
    std::vector<Index> frames;
};

struct InferResult {
    Ten3d pose_mm;                          // aggregated J x F x 3
    std::vector<Ten3d> hypotheses_mm;       // per hypothesis, before aggregation
    std::vector<int> chosen;                // JPMA choice per (joint, frame)
    std::optional<double> mpjpe_mm;
    std::vector<RetainedRecord> retained;
    std::optional<tcep::TemporalMask<double>> first_mask;
    Index denoiser_calls = 0;
    double seconds = 0.0;
};

/// Runs H reverse chains of K DDIM iterations on `keypoints` and aggregates them.
/// With `oracle_y0` set, the denoiser is replaced by a stub returning it (metres).
InferResult infer(const RunConfig& cfg, const Ten3d& keypoints, const model::DenoiserParams& params,
                  const std::optional<Ten3d>& oracle_y0_m = std::nullopt,
                  const std::optional<Ten3d>& ground_truth_mm = std::nullopt);

/// Parameters named by `params_in`, or the seeded initialisation.
model::DenoiserParams resolve_params(const RunConfig& cfg);

/// File-level workflow: reads inputs named in `cfg`, runs `infer`, writes outputs.
InferResult run_infer(const RunConfig& cfg);

nlohmann::json retained_json(const InferResult& result);

}  // namespace htp::app
