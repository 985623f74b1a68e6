#include "htp/app.hpp"

#include "htp/checkpoint.hpp"
#include "htp/log.hpp"
#include "htp/rng.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <thread>

namespace htp::app {

using nlohmann::json;

MotionKind parse_motion_kind(const std::string& name) {
    if (name == "static") return MotionKind::static_pose;
    if (name == "walk_cycle") return MotionKind::walk_cycle;
    if (name == "random_smooth") return MotionKind::random_smooth;
    throw ConfigError("motion: unknown kind '" + name + "' (expected static, walk_cycle or random_smooth)");
}

std::string to_string(MotionKind kind) {
    switch (kind) {
        case MotionKind::static_pose: return "static";
        case MotionKind::walk_cycle: return "walk_cycle";
        case MotionKind::random_smooth: return "random_smooth";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void RunConfig::validate() const {
    try {
        model.validate();
        inference_model().validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
    if (sft_blocks_infer < 0 || sft_blocks_infer > model.blocks) {
        fail("sft_blocks_infer = " + std::to_string(sft_blocks_infer) + " must lie in [0, blocks = " +
             std::to_string(model.blocks) + "]");
    }
    if (hypotheses < 1) fail("hypotheses (H) must be >= 1");
    if (iterations < 1) fail("iterations (K) must be >= 1");
    if (diffusion_steps < 1) fail("diffusion_steps (T) must be >= 1");
    if (iterations > diffusion_steps) {
        fail("iterations K = " + std::to_string(iterations) + " exceeds diffusion_steps T = " +
             std::to_string(diffusion_steps));
    }
    if (!(eta_ddim >= 0.0 && eta_ddim <= 1.0)) fail("eta_ddim must lie in [0, 1]");
    if (!(noise_px >= 0.0) || !std::isfinite(noise_px)) fail("noise_px must be finite and >= 0");
    if (!(camera.fx > 0.0 && camera.fy > 0.0)) fail("camera.fx and camera.fy must be positive");
    if (!std::isfinite(camera.cx) || !std::isfinite(camera.cy)) fail("camera.cx and camera.cy must be finite");
}

model::DenoiserConfig RunConfig::inference_model() const {
    model::DenoiserConfig m = model;
    m.sft_blocks = std::clamp<Index>(sft_blocks_infer, 0, model.blocks);
    return m;
}

namespace {

template <typename T>
T get_as(const json& v, const std::string& key) {
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError("");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError("");
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError("");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError("");
        } else {
            if (!v.is_string()) throw ConfigError("");
        }
        return v.get<T>();
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' has the wrong type (got " + v.dump() + ")");
    }
}

using Setter = std::function<void(RunConfig&, const json&, const std::string&)>;

template <typename T, typename Member>
Setter set(Member member) {
    return [member](RunConfig& c, const json& v, const std::string& k) { std::invoke(member, c) = get_as<T>(v, k); };
}

template <typename T, typename Member>
Setter set_model(Member member) {
    return [member](RunConfig& c, const json& v, const std::string& k) {
        std::invoke(member, c.model) = get_as<T>(v, k);
    };
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"joints", set_model<Index>(&model::DenoiserConfig::joints)},
        {"frames", set_model<Index>(&model::DenoiserConfig::frames)},
        {"width", set_model<Index>(&model::DenoiserConfig::width)},
        {"keep", set_model<Index>(&model::DenoiserConfig::keep)},
        {"eta", set_model<Index>(&model::DenoiserConfig::eta)},
        {"blocks", set_model<Index>(&model::DenoiserConfig::blocks)},
        {"sft_blocks", set_model<Index>(&model::DenoiserConfig::sft_blocks)},
        {"heads", set_model<Index>(&model::DenoiserConfig::heads)},
        {"mlp_ratio", set_model<Index>(&model::DenoiserConfig::mlp_ratio)},
        {"pool_threshold", set_model<double>(&model::DenoiserConfig::pool_threshold)},
        {"knn", set_model<Index>(&model::DenoiserConfig::knn)},
        {"recompute_mask_per_block", set_model<bool>(&model::DenoiserConfig::recompute_mask_per_block)},
        {"skeleton",
         [](RunConfig& c, const json& v, const std::string& k) {
             if (v.is_null()) {
                 c.model.skeleton = Matd();
                 return;
             }
             if (!v.is_array()) throw ConfigError("config: key '" + k + "' must be a J x J array of 0/1");
             const auto n = static_cast<Index>(v.size());
             Matd a = Matd::Zero(n, n);
             for (Index i = 0; i < n; ++i) {
                 const auto& row = v[static_cast<std::size_t>(i)];
                 if (!row.is_array() || static_cast<Index>(row.size()) != n) {
                     throw ConfigError("config: key '" + k + "' must be square");
                 }
                 for (Index j = 0; j < n; ++j) a(i, j) = get_as<double>(row[static_cast<std::size_t>(j)], k);
             }
             c.model.skeleton = a;
         }},
        {"sft_blocks_infer", set<Index>(&RunConfig::sft_blocks_infer)},
        {"hypotheses", set<Index>(&RunConfig::hypotheses)},
        {"iterations", set<Index>(&RunConfig::iterations)},
        {"diffusion_steps", set<int>(&RunConfig::diffusion_steps)},
        {"eta_ddim", set<double>(&RunConfig::eta_ddim)},
        {"seed", set<std::uint64_t>(&RunConfig::seed)},
        {"schedule",
         [](RunConfig& c, const json& v, const std::string& k) {
             try {
                 c.schedule = diffusion::parse_schedule_kind(get_as<std::string>(v, k));
             } catch (const ConfigError&) {
                 throw;
             } catch (const std::invalid_argument& e) {
                 throw ConfigError(std::string("config: ") + e.what());
             }
         }},
        {"motion",
         [](RunConfig& c, const json& v, const std::string& k) {
             c.motion = parse_motion_kind(get_as<std::string>(v, k));
         }},
        {"noise_px", set<double>(&RunConfig::noise_px)},
        {"camera",
         [](RunConfig& c, const json& v, const std::string& k) {
             if (!v.is_object()) throw ConfigError("config: key '" + k + "' must be an object");
             for (const auto& item : v.items()) {
                 const std::string name = k + "." + item.key();
                 if (item.key() == "fx") c.camera.fx = get_as<double>(item.value(), name);
                 else if (item.key() == "fy") c.camera.fy = get_as<double>(item.value(), name);
                 else if (item.key() == "cx") c.camera.cx = get_as<double>(item.value(), name);
                 else if (item.key() == "cy") c.camera.cy = get_as<double>(item.value(), name);
                 else throw ConfigError("config: unknown key '" + name + "'");
             }
         }},
        {"input_2d", set<std::string>(&RunConfig::input_2d)},
        {"output_3d", set<std::string>(&RunConfig::output_3d)},
        {"ground_truth", set<std::string>(&RunConfig::ground_truth)},
        {"params_in", set<std::string>(&RunConfig::params_in)},
        {"params_out", set<std::string>(&RunConfig::params_out)},
        {"oracle_y0", set<std::string>(&RunConfig::oracle_y0)},
        {"emit_retained", set<std::string>(&RunConfig::emit_retained)},
        {"export_mask", set<std::string>(&RunConfig::export_mask)},
    };
    return table;
}

}  // namespace

RunConfig config_from_json(const json& doc, RunConfig base) {
    if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
    const auto& table = setters();
    for (const auto& item : doc.items()) {
        const auto it = table.find(item.key());
        if (it == table.end()) throw ConfigError("config: unknown key '" + item.key() + "'");
        it->second(base, item.value(), item.key());
    }
    base.validate();
    return base;
}

RunConfig load_config(const std::filesystem::path& path, const json& overrides) {
    json doc = json::object();
    if (!path.empty()) {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open config " + path.string());
        try {
            doc = json::parse(is);
        } catch (const json::parse_error& e) {
            throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
        }
        if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
    }
    for (const auto& item : overrides.items()) doc[item.key()] = item.value();
    return config_from_json(doc);
}

json config_to_json(const RunConfig& c) {
    json doc = {
        {"joints", c.model.joints},
        {"frames", c.model.frames},
        {"width", c.model.width},
        {"keep", c.model.keep},
        {"eta", c.model.eta},
        {"blocks", c.model.blocks},
        {"sft_blocks", c.model.sft_blocks},
        {"sft_blocks_infer", c.sft_blocks_infer},
        {"heads", c.model.heads},
        {"mlp_ratio", c.model.mlp_ratio},
        {"pool_threshold", c.model.pool_threshold},
        {"knn", c.model.knn},
        {"recompute_mask_per_block", c.model.recompute_mask_per_block},
        {"hypotheses", c.hypotheses},
        {"iterations", c.iterations},
        {"diffusion_steps", c.diffusion_steps},
        {"eta_ddim", c.eta_ddim},
        {"seed", c.seed},
        {"schedule", diffusion::to_string(c.schedule)},
        {"motion", to_string(c.motion)},
        {"noise_px", c.noise_px},
        {"camera", {{"fx", c.camera.fx}, {"fy", c.camera.fy}, {"cx", c.camera.cx}, {"cy", c.camera.cy}}},
    };
    if (c.model.skeleton.size() != 0) {
        json rows = json::array();
        for (Index i = 0; i < c.model.skeleton.rows(); ++i) {
            json row = json::array();
            for (Index j = 0; j < c.model.skeleton.cols(); ++j) row.push_back(c.model.skeleton(i, j));
            rows.push_back(row);
        }
        doc["skeleton"] = rows;
    }
    for (const auto& [key, value] : {std::pair{"input_2d", &c.input_2d}, {"output_3d", &c.output_3d},
                                     {"ground_truth", &c.ground_truth}, {"params_in", &c.params_in},
                                     {"params_out", &c.params_out}, {"oracle_y0", &c.oracle_y0},
                                     {"emit_retained", &c.emit_retained}, {"export_mask", &c.export_mask}}) {
        if (!value->empty()) doc[key] = *value;
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Pose CSV
// ---------------------------------------------------------------------------

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

void write_pose_csv(std::ostream& os, const Ten3d& pose) {
    if (pose.d2() != 3 && pose.d2() != 2) throw DimensionError("write_pose_csv: expected 2 or 3 coordinates, got " + pose.shape());
    std::string out = pose.d2() == 3 ? "frame,joint,x,y,z\n" : "frame,joint,u,v\n";
    for (Index p = 0; p < pose.d1(); ++p) {
        for (Index j = 0; j < pose.d0(); ++j) {
            out += std::to_string(p);
            out += ',';
            out += std::to_string(j);
            for (Index c = 0; c < pose.d2(); ++c) {
                out += ',';
                append_double(out, pose(j, p, c));
            }
            out += '\n';
        }
    }
    os << out;
    if (!os) throw IoError("write_pose_csv: write failed");
}

void write_pose_csv(const std::filesystem::path& path, const Ten3d& pose) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    write_pose_csv(os, pose);
}

Ten3d read_pose_csv(std::istream& is, const std::string& source) {
    auto fail = [&](std::size_t line_no, const std::string& what) -> IoError {
        return IoError(source + ":" + std::to_string(line_no) + ": " + what);
    };
    std::string line;
    if (!std::getline(is, line)) throw IoError(source + ": empty pose file");
    const std::string header(trim(line));
    Index coords = 0;
    if (header == "frame,joint,x,y,z") coords = 3;
    else if (header == "frame,joint,u,v") coords = 2;
    else throw fail(1, "unexpected header '" + header + "' (want frame,joint,x,y,z or frame,joint,u,v)");

    struct Row {
        Index frame, joint;
        double v[3];
    };
    std::vector<Row> rows;
    Index frames = 0, joints = 0;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_commas(line);
        if (static_cast<Index>(fields.size()) != 2 + coords) {
            throw fail(line_no, "expected " + std::to_string(2 + coords) + " fields, got " + std::to_string(fields.size()));
        }
        Row r{};
        for (int i = 0; i < 2; ++i) {
            const auto f = trim(fields[static_cast<std::size_t>(i)]);
            long long v = -1;
            const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
            if (res.ec != std::errc() || res.ptr != f.data() + f.size() || v < 0) {
                throw fail(line_no, "bad index '" + std::string(f) + "'");
            }
            (i == 0 ? r.frame : r.joint) = static_cast<Index>(v);
        }
        for (Index c = 0; c < coords; ++c) {
            const auto f = trim(fields[static_cast<std::size_t>(2 + c)]);
            double v = 0.0;
            const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
            if (res.ec != std::errc() || res.ptr != f.data() + f.size() || !std::isfinite(v)) {
                throw fail(line_no, "bad coordinate '" + std::string(f) + "'");
            }
            r.v[c] = v;
        }
        frames = std::max(frames, r.frame + 1);
        joints = std::max(joints, r.joint + 1);
        rows.push_back(r);
    }
    if (rows.empty()) throw IoError(source + ": no pose rows");
    if (static_cast<Index>(rows.size()) != frames * joints) {
        throw IoError(source + ": " + std::to_string(rows.size()) + " rows, expected J*F = " +
                      std::to_string(joints) + "*" + std::to_string(frames));
    }
    Ten3d out(joints, frames, coords);
    std::vector<char> seen(static_cast<std::size_t>(frames * joints), 0);
    for (const auto& r : rows) {
        auto& flag = seen[static_cast<std::size_t>(r.frame * joints + r.joint)];
        if (flag) {
            throw IoError(source + ": duplicate row for frame " + std::to_string(r.frame) + ", joint " +
                          std::to_string(r.joint));
        }
        flag = 1;
        for (Index c = 0; c < coords; ++c) out(r.joint, r.frame, c) = r.v[c];
    }
    return out;
}

Ten3d read_pose_csv(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open pose file " + path.string());
    return read_pose_csv(is, path.string());
}

// ---------------------------------------------------------------------------
// Synthetic sequences
// ---------------------------------------------------------------------------

namespace {

// Rest pose in millimetres relative to the pelvis; y points down, z away.
constexpr double kRestPose[17][3] = {
    {0, 0, 0},       {-130, 0, 0},    {-130, 450, 0},  {-130, 900, 0},  {130, 0, 0},     {130, 450, 0},
    {130, 900, 0},   {0, -230, 0},    {0, -480, 0},    {0, -580, 0},    {0, -700, 0},    {160, -450, 0},
    {170, -180, 0},  {175, 70, 0},    {-160, -450, 0}, {-170, -180, 0}, {-175, 70, 0},
};

// Limb swing groups: pivot joint and members for walking.
struct Limb {
    int pivot;
    int members[2];
    double sign;
    double amplitude;  // radians
};
constexpr Limb kLimbs[4] = {
    {1, {2, 3}, 1.0, 0.45},     // right leg
    {4, {5, 6}, -1.0, 0.45},    // left leg
    {11, {12, 13}, 1.0, 0.35},  // left arm, in phase with the right leg
    {14, {15, 16}, -1.0, 0.35},
};

Ten3d rest_pose(Index joints) {
    Ten3d rest(joints, 1, 3);
    if (joints == 17) {
        for (Index j = 0; j < 17; ++j) {
            for (Index c = 0; c < 3; ++c) rest(j, 0, c) = kRestPose[j][c];
        }
    } else {
        for (Index j = 0; j < joints; ++j) rest(j, 0, 1) = -100.0 * static_cast<double>(j);
    }
    return rest;
}

}  // namespace

SyntheticSequence generate_synthetic(Index joints, Index frames, std::uint64_t seed, MotionKind kind,
                                     const diffusion::CameraModel& cam, double noise_px) {
    if (joints < 1 || frames < 1) throw ConfigError("generate: joints and frames must be >= 1");
    if (!(noise_px >= 0.0)) throw ConfigError("generate: noise_px must be >= 0");
    cam.validate();
    RngStream rng(seed);
    const Ten3d rest = rest_pose(joints);
    const double root_x = rng.next_uniform(-300.0, 300.0);
    const double root_y = rng.next_uniform(-100.0, 100.0);
    const double root_z = 4500.0 + rng.next_uniform(-300.0, 300.0);
    const double phase = rng.next_uniform(0.0, 2.0 * std::numbers::pi);
    const double period = rng.next_uniform(40.0, 60.0);  // frames per gait cycle

    // per-joint sinusoid bank for random_smooth (and the chain skeleton walk)
    constexpr int kWaves = 3;
    std::vector<double> amp(static_cast<std::size_t>(joints * 3 * kWaves));
    std::vector<double> freq(amp.size());
    std::vector<double> ph(amp.size());
    for (std::size_t i = 0; i < amp.size(); ++i) {
        amp[i] = rng.next_uniform(10.0, 60.0);
        freq[i] = rng.next_uniform(0.005, 0.04);
        ph[i] = rng.next_uniform(0.0, 2.0 * std::numbers::pi);
    }
    std::vector<double> jitter(static_cast<std::size_t>(joints * 3));
    for (auto& v : jitter) v = rng.next_uniform(-20.0, 20.0);

    SyntheticSequence seq{Ten3d(joints, frames, 3), Ten3d()};
    for (Index p = 0; p < frames; ++p) {
        const double t = static_cast<double>(p);
        Matd pose(joints, 3);
        for (Index j = 0; j < joints; ++j) {
            for (Index c = 0; c < 3; ++c) pose(j, c) = rest(j, 0, c) + jitter[static_cast<std::size_t>(j * 3 + c)];
        }
        Eigen::RowVector3d root(root_x, root_y, root_z);
        if (kind == MotionKind::walk_cycle) {
            const double w = 2.0 * std::numbers::pi * t / period + phase;
            if (joints == 17) {
                for (const auto& limb : kLimbs) {
                    const double a = limb.sign * limb.amplitude * std::sin(w);
                    const Eigen::RowVector3d pivot = pose.row(limb.pivot);
                    for (int m : limb.members) {
                        const Eigen::RowVector3d rel = pose.row(m) - pivot;
                        pose(m, 1) = pivot(1) + rel(1) * std::cos(a) - rel(2) * std::sin(a);
                        pose(m, 2) = pivot(2) + rel(1) * std::sin(a) + rel(2) * std::cos(a);
                    }
                }
            } else {
                for (Index j = 0; j < joints; ++j) {
                    pose(j, 0) += 40.0 * std::sin(w + 0.3 * static_cast<double>(j));
                    pose(j, 2) += 40.0 * std::cos(w + 0.3 * static_cast<double>(j));
                }
            }
            root(0) += 150.0 * std::sin(0.5 * w);
            root(1) += 15.0 * std::sin(2.0 * w);
        } else if (kind == MotionKind::random_smooth) {
            for (Index j = 0; j < joints; ++j) {
                for (Index c = 0; c < 3; ++c) {
                    for (int k = 0; k < kWaves; ++k) {
                        const auto i = static_cast<std::size_t>((j * 3 + c) * kWaves + k);
                        pose(j, c) += amp[i] * std::sin(2.0 * std::numbers::pi * freq[i] * t + ph[i]);
                    }
                }
            }
        }
        for (Index j = 0; j < joints; ++j) {
            for (Index c = 0; c < 3; ++c) seq.pose_mm(j, p, c) = pose(j, c) + root(c);
        }
    }
    seq.keypoints = diffusion::project(seq.pose_mm, cam);
    if (noise_px > 0.0) {
        RngStream noise = rng.child(1);
        for (Index i = 0; i < seq.keypoints.size(); ++i) seq.keypoints.data()[i] += noise_px * noise.next_gaussian();
    }
    return seq;
}

Ten3d normalise_keypoints(const Ten3d& keypoints, const diffusion::CameraModel& cam) {
    if (keypoints.d2() != 2) throw DimensionError("normalise_keypoints: expected J x F x 2, got " + keypoints.shape());
    Ten3d out(keypoints.d0(), keypoints.d1(), 2);
    for (Index j = 0; j < keypoints.d0(); ++j) {
        for (Index p = 0; p < keypoints.d1(); ++p) {
            out(j, p, 0) = (keypoints(j, p, 0) - cam.cx) / cam.fx;
            out(j, p, 1) = (keypoints(j, p, 1) - cam.cy) / cam.fy;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

namespace {

struct ChainOutput {
    Ten3d pose_m;
    std::vector<RetainedRecord> retained;
    std::optional<tcep::TemporalMask<double>> first_mask;
    Index calls = 0;
};

ChainOutput run_chain(const RunConfig& cfg, const model::DenoiserConfig& net, const Ten3d& inputs_2d,
                      const model::DenoiserParams& params, const std::optional<Ten3d>& oracle,
                      const diffusion::DiffusionSchedule& sched, Index h) {
    RngStream rng = RngStream(cfg.seed).child(static_cast<std::uint64_t>(h));
    ChainOutput out;
    Ten3d y = gaussian<double>(rng, inputs_2d.d0(), inputs_2d.d1(), 3);
    for (Index k = 0; k < cfg.iterations; ++k) {
        const int t = diffusion::timestep_for_iteration(static_cast<int>(k), static_cast<int>(cfg.iterations),
                                                        cfg.diffusion_steps);
        const int t_prev = diffusion::timestep_for_iteration(static_cast<int>(k + 1), static_cast<int>(cfg.iterations),
                                                             cfg.diffusion_steps);
        Ten3d y0_hat;
        if (oracle) {
            y0_hat = *oracle;
        } else {
            model::ForwardTrace trace;
            y0_hat = model::denoise_forward(y, inputs_2d, static_cast<double>(t), net, params, &trace);
            out.retained.push_back({h, k, t, trace.retained});
            if (h == 0 && k == 0) out.first_mask = std::move(trace.mask);
        }
        ++out.calls;
        y = diffusion::ddim_step(y, y0_hat, t, t_prev, cfg.eta_ddim, rng, sched);
    }
    out.pose_m = std::move(y);
    return out;
}

}  // namespace

InferResult infer(const RunConfig& cfg, const Ten3d& keypoints, const model::DenoiserParams& params,
                  const std::optional<Ten3d>& oracle_y0_m, const std::optional<Ten3d>& ground_truth_mm) {
    cfg.validate();
    const model::DenoiserConfig net = cfg.inference_model();
    if (keypoints.d0() != net.joints || keypoints.d1() != net.frames || keypoints.d2() != 2) {
        throw ConfigError("infer: keypoints " + keypoints.shape() + " do not match joints x frames = (" +
                          std::to_string(net.joints) + "x" + std::to_string(net.frames) + "x2)");
    }
    if (oracle_y0_m && (oracle_y0_m->d0() != net.joints || oracle_y0_m->d1() != net.frames || oracle_y0_m->d2() != 3)) {
        throw ConfigError("infer: oracle pose " + oracle_y0_m->shape() + " does not match the 2D input");
    }
    if (!oracle_y0_m) model::validate_params(net, params);
    const auto started = std::chrono::steady_clock::now();
    const auto sched = diffusion::build_schedule(cfg.diffusion_steps, cfg.schedule);
    const Ten3d inputs_2d = normalise_keypoints(keypoints, cfg.camera);

    const auto hyps = static_cast<std::size_t>(cfg.hypotheses);
    std::vector<ChainOutput> chains(hyps);
    std::vector<std::exception_ptr> errors(hyps);
    const std::size_t workers = std::min<std::size_t>(hyps, std::max(1u, std::thread::hardware_concurrency()));
    auto work = [&](std::size_t first) {
        for (std::size_t h = first; h < hyps; h += workers) {
            try {
                chains[h] = run_chain(cfg, net, inputs_2d, params, oracle_y0_m, sched, static_cast<Index>(h));
            } catch (...) {
                errors[h] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    InferResult result;
    for (auto& c : chains) {
        Ten3d mm(c.pose_m.d0(), c.pose_m.d1(), 3);
        mm.rows_view() = c.pose_m.rows_view() * 1000.0;
        result.hypotheses_mm.push_back(std::move(mm));
        result.retained.insert(result.retained.end(), c.retained.begin(), c.retained.end());
        result.denoiser_calls += c.calls;
    }
    result.first_mask = std::move(chains.front().first_mask);
    result.pose_mm = diffusion::jpma_aggregate(result.hypotheses_mm, keypoints, cfg.camera, &result.chosen);
    if (ground_truth_mm) result.mpjpe_mm = diffusion::mpjpe(result.pose_mm, *ground_truth_mm);
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

model::DenoiserParams resolve_params(const RunConfig& cfg) {
    if (!cfg.params_in.empty()) return model::load_checkpoint(cfg.params_in, cfg.model);
    return model::init_params(cfg.model, RngStream::derive(cfg.seed, 0x9a7a3e5ULL));
}

json retained_json(const InferResult& result) {
    json records = json::array();
    for (const auto& r : result.retained) {
        records.push_back({{"hypothesis", r.hypothesis}, {"iteration", r.iteration}, {"t", r.timestep},
                           {"frames", r.frames}});
    }
    return json{{"retained", records}};
}

InferResult run_infer(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.input_2d.empty()) throw ConfigError("infer: input_2d is required");
    const Ten3d keypoints = read_pose_csv(cfg.input_2d);
    if (keypoints.d2() != 2) throw IoError(cfg.input_2d + ": expected a 2D pose file (frame,joint,u,v)");
    std::optional<Ten3d> gt;
    if (!cfg.ground_truth.empty()) {
        gt = read_pose_csv(cfg.ground_truth);
        if (gt->d2() != 3 || gt->d0() != keypoints.d0() || gt->d1() != keypoints.d1()) {
            throw IoError(cfg.ground_truth + ": ground truth " + gt->shape() + " does not match 2D input " +
                          keypoints.shape());
        }
    }
    std::optional<Ten3d> oracle;
    if (!cfg.oracle_y0.empty()) {
        Ten3d mm = read_pose_csv(cfg.oracle_y0);
        if (mm.d2() != 3) throw IoError(cfg.oracle_y0 + ": expected a 3D pose file");
        Ten3d m(mm.d0(), mm.d1(), 3);
        m.rows_view() = mm.rows_view() / 1000.0;
        oracle = std::move(m);
    }
    const model::DenoiserParams params = oracle ? model::zero_params(cfg.model) : resolve_params(cfg);
    InferResult result = infer(cfg, keypoints, params, oracle, gt);

    if (!cfg.params_out.empty() && !oracle) model::save_checkpoint(cfg.params_out, params);
    if (!cfg.output_3d.empty()) write_pose_csv(cfg.output_3d, result.pose_mm);
    if (!cfg.emit_retained.empty()) {
        std::ofstream os(cfg.emit_retained);
        if (!os) throw IoError("cannot open " + cfg.emit_retained + " for writing");
        os << retained_json(result).dump() << "\n";
    }
    if (!cfg.export_mask.empty()) {
        if (!result.first_mask) throw ConfigError("infer: export_mask needs the network denoiser (no oracle)");
        save_htp1(cfg.export_mask, to_host(result.first_mask->masks));
    }
    return result;
}

}  // namespace htp::app
