#include "htp/app.hpp"
#include "htp/checkpoint.hpp"
#include "htp/htp1.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace htp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "htp-tests";
    fs::create_directories(dir);
    return dir / name;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(HTP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("HTP1 layout") {
    HostTensor t;
    t.dims = {2};
    t.values = {1.0, -2.5};
    const std::string bytes = encode_htp1(t);
    CHECK(bytes.size() == 4 + 4 + 8 + 16);
    CHECK(bytes.substr(0, 4) == "HTP1");
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);
    CHECK(decode_htp1(bytes).values == t.values);
    CHECK_THROWS_AS(decode_htp1(bytes.substr(0, 20)), IoError);
}

TEST_CASE("pose CSV header and layout") {
    Ten3d pose(2, 1, 3);
    pose(1, 0, 2) = 0.1;
    std::ostringstream os;
    app::write_pose_csv(os, pose);
    CHECK(os.str() == "frame,joint,x,y,z\n0,0,0,0,0\n0,1,0,0,0.1\n");
    std::istringstream bad("frame,joint,x,y,z\n0,0,0,0,nan\n");
    CHECK_THROWS_AS(app::read_pose_csv(bad), IoError);
}

TEST_CASE("config overrides win over file values") {
    const auto path = scratch("cfg.json");
    std::ofstream(path) << R"({"frames": 27, "keep": 9, "eta": 4, "hypotheses": 3})";
    const auto cfg = app::load_config(path, {{"hypotheses", 5}});
    CHECK(cfg.hypotheses == 5);
    CHECK(cfg.model.frames == 27);
    CHECK_THROWS_AS(app::load_config(path, {{"keep", 40}}), app::ConfigError);
}

TEST_CASE("synthetic sequences are seeded") {
    const auto a = app::generate_synthetic(17, 10, 4, app::MotionKind::random_smooth, {}, 2.0);
    const auto b = app::generate_synthetic(17, 10, 4, app::MotionKind::random_smooth, {}, 2.0);
    CHECK(max_abs_diff(a.keypoints, b.keypoints) == 0.0);
    const auto still = app::generate_synthetic(5, 6, 1, app::MotionKind::static_pose);
    for (Index f = 1; f < 6; ++f) CHECK(still.pose_mm(3, f, 2) == still.pose_mm(3, 0, 2));
}

TEST_CASE("command-line exit codes") {
    const auto cfg = scratch("cli.json");
    std::ofstream(cfg) << R"({"joints": 5, "frames": 9, "width": 8, "heads": 2, "blocks": 2, "sft_blocks": 1,
                             "keep": 3, "eta": 2, "knn": 2, "hypotheses": 2, "iterations": 2, "seed": 3})";
    const std::string c = "--config " + cfg.string();
    const auto in2d = scratch("in2d.csv").string();
    const auto gt = scratch("gt.csv").string();
    const auto out = scratch("out.csv").string();
    CHECK(run_cli("generate " + c + " --out-2d " + in2d + " --out-3d " + gt) == 0);
    CHECK(run_cli("infer " + c + " --input " + in2d + " --output " + out + " --ground-truth " + gt) == 0);
    CHECK(fs::exists(out));
    CHECK(run_cli("infer " + c + " --input " + in2d + " --keep 20") == 2);
    CHECK(run_cli("infer " + c + " --input " + scratch("missing.csv").string()) == 3);
    CHECK(run_cli("profile " + c) == 0);
    CHECK(run_cli("bogus") == 2);
}

TEST_CASE("flags override the config file on the command line") {
    const auto cfg = scratch("cli2.json");
    std::ofstream(cfg) << R"({"joints": 5, "frames": 9, "width": 8, "heads": 2, "blocks": 2, "sft_blocks": 1,
                             "keep": 3, "eta": 2, "knn": 2, "hypotheses": 2, "iterations": 2})";
    const auto in2d = scratch("in2d-b.csv").string();
    const auto gt = scratch("gt-b.csv").string();
    REQUIRE(run_cli("generate --config " + cfg.string() + " --out-2d " + in2d + " --out-3d " + gt) == 0);
    const auto a = scratch("a.csv").string();
    const auto b = scratch("b.csv").string();
    const auto d = scratch("d.csv").string();
    const std::string base = "infer --config " + cfg.string() + " --input " + in2d;
    REQUIRE(run_cli(base + " --seed 1 --output " + a) == 0);
    REQUIRE(run_cli(base + " --seed 1 --output " + b) == 0);
    REQUIRE(run_cli(base + " --seed 2 --output " + d) == 0);
    const auto read = [](const std::string& p) {
        std::ifstream is(p);
        return std::string(std::istreambuf_iterator<char>(is), {});
    };
    CHECK(read(a) == read(b));
    CHECK(read(a) != read(d));
}

TEST_CASE("checkpoint rejects a missing tensor") {
    model::DenoiserConfig cfg;
    cfg.joints = 5;
    cfg.frames = 9;
    cfg.width = 8;
    cfg.heads = 2;
    cfg.blocks = 2;
    cfg.sft_blocks = 1;
    cfg.keep = 3;
    cfg.eta = 2;
    const auto params = model::init_params(cfg, 1);
    const auto path = scratch("ck.htpc");
    model::save_checkpoint(path, params);
    auto more = cfg;
    more.blocks = 3;
    CHECK_THROWS_WITH_AS(model::load_checkpoint(path, more), doctest::Contains("blocks.2"), IoError);
}
