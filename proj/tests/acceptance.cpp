// Acceptance checks for the hybrid-floquet toolkit. Prints one PASS/FAIL line
// per criterion and exits nonzero if any fails.

#include "hf/cli.hpp"
#include "hf/flow.hpp"
#include "hf/models.hpp"
#include "hf/poincare.hpp"
#include "hf/spectral.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hf;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

fs::path workdir() {
    static const fs::path p = [] {
        fs::path d = fs::temp_directory_path() / ("hf_acceptance_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return p;
}

json run_cli(const std::string& command, const json& user, const std::string& tag) {
    json cfg = cli::default_config();
    cli::merge_strict(cfg, user);
    const fs::path out = workdir() / tag;
    const int code = cli::run_command(command, cli::resolve(cfg), out.string());
    std::ifstream in(out / "manifest.json");
    json m = json::parse(in);
    m["dir"] = out.string();
    if (code != 0) throw std::runtime_error(command + " exited with " + std::to_string(code));
    return m;
}

json load(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

// Rows of a CSV written by the tool, skipping the comment and header lines.
std::vector<std::vector<double>> csv_rows(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::vector<double>> rows;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (n++ < 2) continue;
        std::vector<double> r;
        std::stringstream ss(line);
        for (std::string f; std::getline(ss, f, ',');) r.push_back(std::stod(f));
        rows.push_back(r);
    }
    return rows;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

Outcome c1_hopper_fixed_point() {
    const json m = run_cli("find-orbit", json::object(), "c1");
    const json o = load(fs::path(m["dir"].get<std::string>()) / "orbit.json");
    const double y = o["fixed_point"][0], yd = o["fixed_point"][1];
    return {std::abs(y - 1.96) <= 0.03 && std::abs(yd - 1.88) <= 0.03,
            fmt("u* = (%.4f, %.4f), target (1.96, 1.88) +- 0.03", y, yd)};
}

Outcome c2_hopper_multipliers() {
    const json m = run_cli("floquet", json::object(), "c2");
    const json f = load(fs::path(m["dir"].get<std::string>()) / "floquet.json");
    const json& mu = f["multipliers"];
    bool ok = mu.size() == 2;
    for (std::size_t i = 0; ok && i < 2; ++i) {
        const double re = mu[i]["re"], im = mu[i]["im"];
        ok = ok && std::abs(re + 0.25) <= 0.05 && std::abs(std::abs(im) - 0.70) <= 0.05 && std::hypot(re, im) < 1.0;
    }
    ok = ok && mu[0]["im"].get<double>() * mu[1]["im"].get<double>() < 0.0;
    for (const auto& r : f["sweep"]["ranks"]) ok = ok && r == 2;
    return {ok, fmt("lambda = %.4f +- %.4fj, |lambda| = %.4f, ranks all 2", mu[0]["re"].get<double>(),
                    std::abs(mu[0]["im"].get<double>()), mu[0]["modulus"].get<double>())};
}

Outcome c3_convergence_rate() {
    const json m = run_cli("converge", {{"converge", {{"perturbation", {0.05, 0.05}}, {"cycles", 15}}}}, "c3");
    const fs::path dir = m["dir"].get<std::string>();
    const auto rows = csv_rows(dir / "converge.csv");
    if (rows.size() != 16) return {false, "expected 16 rows"};
    const double d0 = rows[0][3], d5 = rows[5][3], d15 = rows[15][3];
    // per-cycle ratios oscillate with the rotation of a complex pair; its geometric mean is the modulus
    const double rate = std::pow(d15 / d5, 1.0 / 10.0);
    const double target = std::hypot(0.25, 0.70);
    const bool converged = d15 < 0.05 * d0;
    return {converged && std::abs(rate - target) <= 0.1,
            fmt("dist %.3g -> %.3g; mean ratio over cycles 5-15 = %.4f, target %.4f +- 0.1", d0, d15, rate, target)};
}

Outcome c4_example_rank_collapse() {
    const json m = run_cli("rank-sweep", {{"model", "floquet_example"}}, "c4");
    const json s = load(fs::path(m["dir"].get<std::string>()) / "rank_sweep.json")["sweep"];
    const std::vector<int> ranks = s["ranks"];
    const double rtol = s["rtol"];
    double kept = INFINITY, dropped = 0.0;
    for (std::size_t p = 0; p < ranks.size(); ++p) {
        const std::vector<double> sv = s["singular_values"][p];
        for (std::size_t i = 0; i < sv.size(); ++i) {
            const double rel = sv[i] / sv[0];
            if (static_cast<int>(i) < ranks[p]) {
                kept = std::min(kept, rel);
            } else {
                dropped = std::max(dropped, rel);
            }
        }
    }
    const bool ok = ranks == std::vector<int>{3, 2, 2, 2, 2, 2} && s["r"] == 2 && kept >= 1e3 * rtol &&
                    dropped <= rtol / 1e3;
    return {ok, fmt("ranks (3,2,2,2,2,2) r = 2; smallest kept sigma/sigma_max = %.3g, largest dropped = %.3g", kept,
                    dropped)};
}

Outcome c5_finite_time_collapse() {
    const json m = run_cli(
        "converge", {{"model", "floquet_example"}, {"converge", {{"trials", 100}, {"random_radius", 1.0}, {"cycles", 4}}}},
        "c5");
    const auto rows = csv_rows(fs::path(m["dir"].get<std::string>()) / "converge.csv");
    if (rows.size() != 500) return {false, "expected 500 rows"};
    double worst_after = 0.0, least_before = INFINITY, largest_start = 0.0;
    for (const auto& r : rows) {
        const double z = std::hypot(r[7], r[8]);
        const int cycle = static_cast<int>(r[1]);
        if (cycle == 0) largest_start = std::max(largest_start, z);
        if (cycle == 1) least_before = std::min(least_before, z);
        if (cycle >= 2) worst_after = std::max(worst_after, z);
    }
    return {worst_after <= 1e-12 && least_before > 1e-12 && largest_start <= 1.0,
            fmt("100 trials, max |z0| = %.3f; min |z| after 1 return = %.3g, max |z| after 2+ returns = %.3g",
                largest_start, least_before, worst_after)};
}

Outcome c6_section_independence() {
    const HybridSystem sys = models::make_hopper();
    const SectionDef ground = models::hopper_section();
    const auto fp = poincare::find_fixed_point(sys, ground, Eigen::Vector2d(2.0, 2.0), {});
    const PeriodicOrbitResult orbit = poincare::make_orbit(ground, fp);
    const auto rep =
        spectral::section_consistency(sys, {ground, models::hopper_aerial_section(0.0)}, orbit, {}, 1);
    const auto& air = rep.sections.at(1);
    double extra = 0.0;
    for (const auto& z : air.near_zero) extra = std::max(extra, std::abs(z));
    const bool ok = rep.counts_agree && air.nonzero.size() == 2 && air.near_zero.size() == 2 &&
                    rep.max_mismatch <= 1e-2 && extra < 1e-3;
    return {ok, fmt("ground vs aerial (phi = 0) mismatch %.3g; aerial extra |lambda| max %.3g", rep.max_mismatch, extra)};
}

Outcome c7_oracles() {
    const auto r1 = spectral::prop1_oracle(1000, 6, 42);
    const auto r2 = spectral::prop2_oracle(500, 42);
    return {r1.violations.empty() && r2.violations.empty(),
            fmt("prop1: %g violations / 1000, prop2: %g violations / 500", static_cast<double>(r1.violations.size()),
                static_cast<double>(r2.violations.size()))};
}

Outcome c8_composition() {
    const HybridSystem sys = models::make_hopper();
    const SectionDef sec = models::hopper_section();
    const auto fp = poincare::find_fixed_point(sys, sec, Eigen::Vector2d(2.0, 2.0), {});
    const PeriodicOrbitResult orbit = poincare::make_orbit(sec, fp);
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> off(-0.05, 0.05);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const State u = fp.u + Eigen::Vector2d(off(rng), off(rng));
        const State a = poincare::cycle_composition(sys, orbit, u, {});
        const State b = poincare::return_map(sys, sec, u, {}).u_out;
        worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
    }
    return {worst <= 1e-8, fmt("max |p_1 o p_0 - P| over 20 points = %.3g", worst)};
}

Outcome c9_event_location() {
    DomainDef air;
    air.id = "air";
    air.dim = 2;
    air.coord_names = {"y", "v"};
    air.field = [](const State& s) { return State(Eigen::Vector2d(s[1], -2.0)); };
    GuardDef floor;
    floor.id = "floor";
    floor.src = floor.dst = "air";
    floor.event = [](const State& s) { return s[0]; };
    floor.reset = [](const State& s) { return State(Eigen::Vector2d(0.0, -s[1])); };
    const HybridSystem fall({air}, {floor});
    double fall_err = 0.0;
    for (double h : {1e-2, 5e-3, 2.5e-3, 1e-3}) {
        flow::StepperConfig cfg;
        cfg.h = h;
        // y = 1.5 - t^2 hits the floor at sqrt(1.5)
        const double eta = flow::time_to_impact(fall, "air", Eigen::Vector2d(1.5, 0.0), cfg, 10.0).eta;
        fall_err = std::max(fall_err, std::abs(eta - std::sqrt(1.5)));
    }

    const double w = 10.0;
    DomainDef spring = air;
    spring.id = "spring";
    spring.field = [w](const State& s) { return State(Eigen::Vector2d(s[1], -w * w * s[0])); };
    GuardDef zero = floor;
    zero.id = "zero";
    zero.src = zero.dst = "spring";
    const HybridSystem osc({spring}, {zero});
    std::vector<double> err;
    for (double h : {1e-2, 5e-3, 2.5e-3}) {
        flow::StepperConfig cfg;
        cfg.h = h;
        const double eta = flow::time_to_impact(osc, "spring", Eigen::Vector2d(1.0, 0.0), cfg, 10.0).eta;
        err.push_back(std::abs(eta - std::numbers::pi / (2.0 * w)));
    }
    const double p1 = std::log2(err[0] / err[1]), p2 = std::log2(err[1] / err[2]);
    const bool ok = fall_err <= 1e-9 && p1 > 3.5 && p1 < 4.5 && p2 > 3.5 && p2 < 4.5;
    return {ok, fmt("free-fall eta error %.3g; RK4 observed orders %.3f, %.3f", fall_err, p1, p2)};
}

Outcome c10_nonconstant_rank() {
    const poincare::Map f = [](const State& u) { return State(Eigen::Vector2d(u[0] * u[0], u[0])); };
    const auto prof = spectral::rank_profile(f, Eigen::Vector2d::Zero(), 2, 0.1, 20, 42);
    return {!prof.constant, std::string(prof.constant ? "ConstantRank" : "NonConstant") + ": " + prof.details};
}

struct Criterion {
    int id;
    std::string name;
    double budget_s;
    std::function<Outcome()> check;
};

}  // namespace

int main() {
    const std::vector<Criterion> all = {
        {1, "hopper fixed point", 10.0, c1_hopper_fixed_point},
        {2, "hopper Floquet multipliers", 30.0, c2_hopper_multipliers},
        {3, "convergence rate matches the multiplier modulus", 30.0, c3_convergence_rate},
        {4, "example rank collapse", 5.0, c4_example_rank_collapse},
        {5, "finite-time collapse of the nilpotent block", 10.0, c5_finite_time_collapse},
        {6, "section independence of nonzero multipliers", 60.0, c6_section_independence},
        {7, "exact rank oracles", 30.0, c7_oracles},
        {8, "step-map composition equals the return map", 30.0, c8_composition},
        {9, "event-location accuracy", 5.0, c9_event_location},
        {10, "non-constant rank detection", 5.0, c10_nonconstant_rank},
    };
    int failures = 0;
    for (const Criterion& c : all) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > c.budget_s) {
            o.ok = false;
            o.detail += fmt(" [over budget %.0f s]", c.budget_s);
        }
        failures += !o.ok;
        std::printf("[%s] %d. %s: %s (%.2f s)\n", o.ok ? "PASS" : "FAIL", c.id, c.name.c_str(), o.detail.c_str(), secs);
    }
    std::fflush(stdout);
    fs::remove_all(workdir());
    return failures == 0 ? 0 : 1;
}
