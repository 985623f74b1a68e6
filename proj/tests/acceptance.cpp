// Acceptance run: one PASS/FAIL line per numbered criterion; exit status 0
// only when all pass.

#include "htp/log.hpp"
#include "htp/verify.hpp"

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using htp::verify::CheckResult;

namespace {

struct Captured {
    int status = -1;
    std::string out;
};

Captured capture(const std::string& cmd) {
    Captured c;
    FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
    if (pipe == nullptr) return c;
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) c.out.append(buf.data(), n);
    const int status = pclose(pipe);
    c.status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
}

// generate -> infer -> profile -> verify in `dir`; returns an error or "".
std::string pipeline(const fs::path& dir, std::string& verify_out) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "run.json") << R"({
  "joints": 17, "frames": 243, "width": 64, "heads": 8, "blocks": 8, "sft_blocks": 3,
  "keep": 54, "eta": 162, "sft_blocks_infer": 1, "hypotheses": 20, "iterations": 10,
  "diffusion_steps": 1000, "seed": 42, "motion": "walk_cycle", "noise_px": 1.0
})";
    const std::string cli = HTP_CLI_PATH;
    const std::string cfg = " --config " + (dir / "run.json").string();
    const auto p = [&](const char* name) { return (dir / name).string(); };
    const std::array<std::pair<const char*, std::string>, 3> steps = {{
        {"generate", cli + " generate" + cfg + " --out-2d " + p("in2d.csv") + " --out-3d " + p("gt.csv")},
        {"infer", cli + " infer" + cfg + " --input " + p("in2d.csv") + " --ground-truth " + p("gt.csv") +
                      " --output " + p("out.csv") + " --emit-retained " + p("retained.json") + " --export-mask " +
                      p("mask.htp1") + " --save-params " + p("params.htpc")},
        {"profile", cli + " profile" + cfg + " --out " + p("profile.json")},
    }};
    for (const auto& [name, cmd] : steps) {
        const auto r = capture(cmd);
        if (r.status != 0) return std::string(name) + " exited " + std::to_string(r.status) + ": " + r.out;
        std::ofstream(dir / (std::string(name) + ".log")) << r.out;
    }
    const auto v = capture(cli + " verify --seed 7");
    if (v.status != 0) return "verify exited " + std::to_string(v.status);
    // timings differ between runs; everything else must not
    verify_out = std::regex_replace(v.out, std::regex(R"( \[[0-9.]+s\])"), "");
    return "";
}

CheckResult end_to_end(const fs::path& root) {
    const auto start = std::chrono::steady_clock::now();
    std::string v1, v2;
    if (auto err = pipeline(root / "run1", v1); !err.empty()) return {"end-to-end smoke", false, "run 1: " + err};
    if (auto err = pipeline(root / "run2", v2); !err.empty()) return {"end-to-end smoke", false, "run 2: " + err};
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::string differing;
    for (const char* f : {"in2d.csv", "gt.csv", "out.csv", "retained.json", "mask.htp1", "params.htpc",
                          "profile.json", "infer.log", "profile.log"}) {
        // logs echo their own run directory
        const auto a = std::regex_replace(slurp(root / "run1" / f), std::regex((root / "run1").string()), "RUN");
        const auto b = std::regex_replace(slurp(root / "run2" / f), std::regex((root / "run2").string()), "RUN");
        if (a.empty() || a != b) differing += std::string(" ") + f;
    }
    if (v1 != v2) differing += " verify-output";
    char detail[256];
    std::snprintf(detail, sizeof detail,
                  "two full runs (J=17, F=243, D=64, H=20, K=10) in %.0f s total (limit 600 s per run pair); %s", secs,
                  differing.empty() ? "all artifacts bitwise identical" : ("differ:" + differing).c_str());
    return {"end-to-end smoke", differing.empty() && secs < 600.0, detail};
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "htp-acceptance";
    htp::log::set_quiet(true);
    bool ok = true;
    int index = 0;
    auto report = [&](const CheckResult& r) {
        std::cout << "criterion " << ++index << ": " << htp::verify::format_line(r) << std::endl;
        ok &= r.passed;
    };
    constexpr std::uint64_t seed = 20240521;
    for (const auto& fn : htp::verify::criteria(seed)) {
        try {
            report(fn());
        } catch (const std::exception& e) {
            report({"criterion", false, std::string("threw: ") + e.what()});
        }
    }
    report(end_to_end(root));
    return ok ? 0 : 1;
}
