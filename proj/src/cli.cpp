#include "hf/cli.hpp"

#include "hf/executor.hpp"
#include "hf/models.hpp"
#include "hf/parallel.hpp"
#include "hf/poincare.hpp"
#include "hf/spectral.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

namespace hf::cli {

using json = nlohmann::json;

namespace {

constexpr int kManifestVersion = 1;

const std::vector<std::string> kCommands = {"simulate", "find-orbit", "floquet", "rank-sweep", "converge", "props"};

}  // namespace

json default_config() {
    return {
        {"model", "hopper"},
        {"hopper",
         {{"m", 1.0}, {"M", 2.0}, {"k", 10.0}, {"b", 5.0}, {"l0", 2.0}, {"a", 20.0},
          {"omega", 2.0 * std::numbers::pi}, {"g", 2.0}}},
        {"floquet_example",
         {{"k_dim", 2}, {"l_dim", 2}, {"lambda_x", -1.0}, {"lambda_z", -1.0}, {"xi", nullptr}, {"A", nullptr}}},
        {"stepper",
         {{"method", "rk4"}, {"h", 1e-3}, {"event_tol_g", 1e-12}, {"event_tol_t", 1e-12},
          {"tangency_threshold", 1e-8}}},
        {"section", {{"domain", nullptr}, {"phase", nullptr}, {"clock", nullptr}}},
        {"simulate",
         {{"domain", nullptr}, {"x0", nullptr}, {"t_max", 10.0}, {"max_transitions", 1000000},
          {"zeno_dwell", 1e-9}, {"zeno_run", 10}}},
        {"orbit",
         {{"u0", nullptr}, {"method", "newton"}, {"tol", 1e-10}, {"max_iter", 50}, {"delta_rel", 1e-5},
          {"fd_scheme", "central"}, {"max_time", 100.0}}},
        {"floquet", {{"n_max", 6}, {"zero_tol", 1e-4}, {"rtol", 1e-6}, {"extra_sections", json::array()}}},
        {"rank_sweep",
         {{"n_max", 6}, {"rtol", 1e-6}, {"profile_samples", 0}, {"profile_radius", 0.01}, {"profile_m", 1},
          {"seed", 42}}},
        {"converge",
         {{"trials", 1}, {"cycles", 15}, {"perturbation", nullptr}, {"random_radius", 0.0}, {"seed", 42},
          {"ratio_window", {5, 15}}}},
        {"props", {{"seed", 42}, {"prop1_trials", 1000}, {"prop1_max_dim", 6}, {"prop2_trials", 500}}},
    };
}

void merge_strict(json& base, const json& user, const std::string& path) {
    if (!user.is_object()) throw ConfigError("configuration" + (path.empty() ? "" : " block '" + path + "'") + " must be a JSON object");
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("unknown configuration key '" + key + "'");
        json& slot = base[it.key()];
        if (slot.is_object()) {
            merge_strict(slot, it.value(), key);
        } else {
            slot = it.value();
        }
    }
}

void apply_set(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json patch = value;
    std::vector<std::string> parts;
    std::stringstream ss(key);
    for (std::string p; std::getline(ss, p, '.');) {
        if (p.empty()) throw ConfigError("malformed key '" + key + "' in --set");
        parts.push_back(p);
    }
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
    merge_strict(config, patch);
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

namespace {

// JSON helpers.

json vec_json(const State& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

json mat_json(const Matrix& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
    return a;
}

json complex_json(const std::vector<spectral::Complex>& zs) {
    json a = json::array();
    for (const auto& z : zs) a.push_back({{"re", z.real()}, {"im", z.imag()}, {"modulus", std::abs(z)}});
    return a;
}

State vec_from(const json& j, const std::string& key) {
    if (!j.is_array()) throw ConfigError("'" + key + "' must be an array of numbers");
    State v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ConfigError("'" + key + "' must be an array of numbers");
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

Matrix mat_from(const json& j, const std::string& key) {
    if (!j.is_array() || j.empty()) throw ConfigError("'" + key + "' must be a non-empty array of rows");
    const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
    Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < j.size(); ++i) {
        const State row = vec_from(j[i], key);
        if (static_cast<std::size_t>(row.size()) != cols) throw ConfigError("'" + key + "' rows differ in length");
        m.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return m;
}

double num(const json& j, const std::string& key) {
    if (!j.is_number()) throw ConfigError("'" + key + "' must be a number");
    return j.get<double>();
}

long integer(const json& j, const std::string& key) {
    if (!j.is_number_integer()) throw ConfigError("'" + key + "' must be an integer");
    return j.get<long>();
}

std::string str(const json& j, const std::string& key) {
    if (!j.is_string()) throw ConfigError("'" + key + "' must be a string");
    return j.get<std::string>();
}

// Resolved run context.

struct Context {
    json cfg;
    std::string model;
    HybridSystem system;
    flow::StepperConfig stepper;
    models::FloquetExampleParams fx;
    SectionDef section;
    State u0;
    poincare::FixedPointOptions fp;
};

json resolve_section(const std::string& model, const json& spec, const std::string& key) {
    if (!spec.is_object()) throw ConfigError("'" + key + "' must be an object");
    json s = {{"domain", nullptr}, {"phase", nullptr}, {"clock", nullptr}};
    merge_strict(s, spec, key);
    if (model == "hopper") {
        if (s["domain"].is_null()) s["domain"] = models::kGround;
        const std::string d = str(s["domain"], key + ".domain");
        if (d != models::kGround && d != models::kAerial) {
            throw ConfigError("'" + key + ".domain' must be \"ground\" or \"aerial\" for the hopper");
        }
        if (s["phase"].is_null()) s["phase"] = d == models::kGround ? models::kHopperSectionPhase : 0.0;
        num(s["phase"], key + ".phase");
    } else {
        if (s["domain"].is_null()) s["domain"] = models::kCycle;
        if (str(s["domain"], key + ".domain") != models::kCycle) {
            throw ConfigError("'" + key + ".domain' must be \"cycle\" for floquet_example");
        }
        if (s["clock"].is_null()) s["clock"] = 0.0;
        num(s["clock"], key + ".clock");
    }
    return s;
}

SectionDef build_section(const Context& c, const json& s) {
    if (c.model == "hopper") {
        const double phase = s["phase"].get<double>();
        return s["domain"] == models::kGround ? models::hopper_section(phase) : models::hopper_aerial_section(phase);
    }
    SectionDef sec = models::floquet_time_section(c.fx, s["clock"].get<double>());
    return sec;
}

Context build_context(const json& cfg) {
    Context c;
    c.cfg = cfg;
    c.model = str(cfg["model"], "model");
    if (c.model == "hopper") {
        const json& h = cfg["hopper"];
        models::HopperParams p;
        p.m = num(h["m"], "hopper.m");
        p.M = num(h["M"], "hopper.M");
        p.k = num(h["k"], "hopper.k");
        p.b = num(h["b"], "hopper.b");
        p.l0 = num(h["l0"], "hopper.l0");
        p.a = num(h["a"], "hopper.a");
        p.omega = num(h["omega"], "hopper.omega");
        p.g = num(h["g"], "hopper.g");
        c.system = models::make_hopper(p);
    } else if (c.model == "floquet_example") {
        const json& f = cfg["floquet_example"];
        c.fx.k = static_cast<int>(integer(f["k_dim"], "floquet_example.k_dim"));
        c.fx.l = static_cast<int>(integer(f["l_dim"], "floquet_example.l_dim"));
        c.fx.lambda_x = num(f["lambda_x"], "floquet_example.lambda_x");
        c.fx.lambda_z = num(f["lambda_z"], "floquet_example.lambda_z");
        if (!f["xi"].is_null()) c.fx.xi = vec_from(f["xi"], "floquet_example.xi");
        if (!f["A"].is_null()) c.fx.A = mat_from(f["A"], "floquet_example.A");
        c.fx = c.fx.resolved();
        c.system = models::make_floquet_example(c.fx);
    } else {
        throw ConfigError("'model' must be \"hopper\" or \"floquet_example\"");
    }

    const json& st = cfg["stepper"];
    c.stepper.method = flow::method_from_string(str(st["method"], "stepper.method"));
    c.stepper.h = num(st["h"], "stepper.h");
    c.stepper.event_tol_g = num(st["event_tol_g"], "stepper.event_tol_g");
    c.stepper.event_tol_t = num(st["event_tol_t"], "stepper.event_tol_t");
    c.stepper.tangency_threshold = num(st["tangency_threshold"], "stepper.tangency_threshold");
    c.stepper.check();

    c.section = build_section(c, cfg["section"]);
    const int d = c.system.domain(c.section.domain).dim - 1;

    const json& o = cfg["orbit"];
    c.u0 = vec_from(o["u0"], "orbit.u0");
    if (c.u0.size() != d) throw ConfigError("'orbit.u0' must have " + std::to_string(d) + " entries for this section");
    c.fp.tol = num(o["tol"], "orbit.tol");
    c.fp.max_iter = static_cast<int>(integer(o["max_iter"], "orbit.max_iter"));
    c.fp.method = poincare::fixed_point_method_from_string(str(o["method"], "orbit.method"));
    c.fp.delta_rel = num(o["delta_rel"], "orbit.delta_rel");
    c.fp.scheme = poincare::fd_scheme_from_string(str(o["fd_scheme"], "orbit.fd_scheme"));
    c.fp.max_time = num(o["max_time"], "orbit.max_time");
    if (!(c.fp.tol > 0) || c.fp.max_iter < 0 || !(c.fp.delta_rel > 0) || !(c.fp.max_time > 0)) {
        throw ConfigError("orbit: tol, delta_rel and max_time must be positive and max_iter non-negative");
    }
    return c;
}

}  // namespace

json resolve(const json& merged) {
    json cfg = merged;
    const std::string model = str(cfg["model"], "model");
    if (model != "hopper" && model != "floquet_example") {
        throw ConfigError("'model' must be \"hopper\" or \"floquet_example\"");
    }
    cfg["section"] = resolve_section(model, cfg["section"], "section");
    json extra = json::array();
    if (!cfg["floquet"]["extra_sections"].is_array()) throw ConfigError("'floquet.extra_sections' must be an array");
    for (std::size_t i = 0; i < cfg["floquet"]["extra_sections"].size(); ++i) {
        extra.push_back(resolve_section(model, cfg["floquet"]["extra_sections"][i],
                                        "floquet.extra_sections[" + std::to_string(i) + "]"));
    }
    cfg["floquet"]["extra_sections"] = extra;

    // Model-dependent defaults.
    if (model == "floquet_example") {
        const json& f = cfg["floquet_example"];
        const long k = integer(f["k_dim"], "floquet_example.k_dim");
        const long l = integer(f["l_dim"], "floquet_example.l_dim");
        if (k < 1 || l < 1 || k > 64 || l > 64) throw ConfigError("floquet_example: k_dim and l_dim must lie in [1, 64]");
        if (f["xi"].is_null()) cfg["floquet_example"]["xi"] = std::vector<double>(static_cast<std::size_t>(k), 0.0);
        if (f["A"].is_null()) {
            json a = json::array();
            for (long i = 0; i < l; ++i) {
                json row = json::array();
                for (long j = 0; j < l; ++j) row.push_back(j == i + 1 ? 1.0 : 0.0);
                a.push_back(row);
            }
            cfg["floquet_example"]["A"] = a;
        }
        const std::size_t d = static_cast<std::size_t>(k + l);
        if (cfg["orbit"]["u0"].is_null()) cfg["orbit"]["u0"] = std::vector<double>(d, 0.5);
        if (cfg["converge"]["perturbation"].is_null()) {
            std::vector<double> p(d, 0.0);
            for (std::size_t i = static_cast<std::size_t>(k); i < d; ++i) p[i] = 1.0;
            cfg["converge"]["perturbation"] = p;
        }
    } else {
        const bool ground = cfg["section"]["domain"] == models::kGround;
        if (cfg["orbit"]["u0"].is_null()) {
            if (!ground) throw ConfigError("'orbit.u0' has no default on an aerial section; give 4 coordinates");
            cfg["orbit"]["u0"] = {2.0, 2.0};
        }
        if (cfg["converge"]["perturbation"].is_null()) {
            cfg["converge"]["perturbation"] = std::vector<double>(cfg["orbit"]["u0"].size(), 0.05);
        }
    }

    Context c = build_context(cfg);
    if (cfg["simulate"]["domain"].is_null()) cfg["simulate"]["domain"] = c.section.domain;
    if (cfg["simulate"]["x0"].is_null()) cfg["simulate"]["x0"] = vec_json(c.section.lift(c.u0));
    const std::string dom = str(cfg["simulate"]["domain"], "simulate.domain");
    const DomainDef* dd = c.system.find_domain(dom);
    if (!dd) throw ConfigError("'simulate.domain' names an unknown domain '" + dom + "'");
    if (vec_from(cfg["simulate"]["x0"], "simulate.x0").size() != dd->dim) {
        throw ConfigError("'simulate.x0' must have " + std::to_string(dd->dim) + " entries");
    }
    if (!(num(cfg["simulate"]["t_max"], "simulate.t_max") >= 0.0)) throw ConfigError("'simulate.t_max' must be >= 0");
    if (integer(cfg["simulate"]["max_transitions"], "simulate.max_transitions") < 0 ||
        !(num(cfg["simulate"]["zeno_dwell"], "simulate.zeno_dwell") >= 0.0) ||
        integer(cfg["simulate"]["zeno_run"], "simulate.zeno_run") < 1) {
        throw ConfigError("simulate: max_transitions >= 0, zeno_dwell >= 0 and zeno_run >= 1 required");
    }

    const json& fl = cfg["floquet"];
    if (integer(fl["n_max"], "floquet.n_max") < 1 || !(num(fl["zero_tol"], "floquet.zero_tol") >= 0.0) ||
        !(num(fl["rtol"], "floquet.rtol") > 0.0)) {
        throw ConfigError("floquet: n_max >= 1, zero_tol >= 0 and rtol > 0 required");
    }
    const json& rs = cfg["rank_sweep"];
    if (integer(rs["n_max"], "rank_sweep.n_max") < 1 || !(num(rs["rtol"], "rank_sweep.rtol") > 0.0) ||
        integer(rs["profile_samples"], "rank_sweep.profile_samples") < 0 ||
        !(num(rs["profile_radius"], "rank_sweep.profile_radius") >= 0.0) ||
        integer(rs["profile_m"], "rank_sweep.profile_m") < 1 || integer(rs["seed"], "rank_sweep.seed") < 0) {
        throw ConfigError("rank_sweep: invalid bounds");
    }
    const json& cv = cfg["converge"];
    const long trials = integer(cv["trials"], "converge.trials");
    const long cycles = integer(cv["cycles"], "converge.cycles");
    const double radius = num(cv["random_radius"], "converge.random_radius");
    if (trials < 1 || cycles < 1 || !(radius >= 0.0) || integer(cv["seed"], "converge.seed") < 0) {
        throw ConfigError("converge: trials >= 1, cycles >= 1, random_radius >= 0, seed >= 0 required");
    }
    if (trials > 1 && radius == 0.0) throw ConfigError("converge: several trials need random_radius > 0");
    if (vec_from(cv["perturbation"], "converge.perturbation").size() != c.u0.size()) {
        throw ConfigError("'converge.perturbation' must match the section dimension");
    }
    const json& win = cv["ratio_window"];
    if (!win.is_array() || win.size() != 2 || integer(win[0], "converge.ratio_window") < 0 ||
        integer(win[1], "converge.ratio_window") <= win[0].get<long>()) {
        throw ConfigError("'converge.ratio_window' must be [first, last] with 0 <= first < last");
    }
    const json& pr = cfg["props"];
    if (integer(pr["seed"], "props.seed") < 0 || integer(pr["prop1_trials"], "props.prop1_trials") < 0 ||
        integer(pr["prop1_max_dim"], "props.prop1_max_dim") < 1 || integer(pr["prop1_max_dim"], "props.prop1_max_dim") > 12 ||
        integer(pr["prop2_trials"], "props.prop2_trials") < 0) {
        throw ConfigError("props: trial counts >= 0 and 1 <= prop1_max_dim <= 12 required");
    }
    return cfg;
}

namespace {

struct Failure {
    std::string kind;
    std::string message;
};

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << text;
    if (!f) throw std::runtime_error("failed writing " + p.string());
}

void write_json(const std::filesystem::path& p, const json& j) {
    write_text(p, j.dump(2) + "\n");
}

json orbit_json(const PeriodicOrbitResult& o) {
    json entries = json::array();
    for (const State& x : o.entry_points) entries.push_back(vec_json(x));
    return {{"section", {{"name", o.section.name}, {"domain", o.section.domain}}},
            {"fixed_point", vec_json(o.fixed_point)},
            {"period", o.period},
            {"domain_sequence", o.domain_sequence},
            {"dwell_times", o.dwell_times},
            {"entry_points", entries},
            {"transitions", o.transitions},
            {"residual", o.residual},
            {"iterations", o.iterations}};
}

json sweep_json(const spectral::RankSweep& s) {
    return {{"ranks", s.ranks},
            {"stabilization_index", s.stabilization_index},
            {"r", s.r},
            {"rtol", s.rtol},
            {"basis", mat_json(s.basis)},
            {"scales", s.scales},
            {"singular_values", s.singular_values}};
}

json report_json(const spectral::OracleReport& r) {
    json v = json::array();
    for (const auto& x : r.violations) v.push_back({{"trial", x.trial}, {"description", x.description}, {"witness", x.witness}});
    json lit = json::array();
    for (const auto& x : r.literal_examples) lit.push_back({{"trial", x.trial}, {"description", x.description}, {"witness", x.witness}});
    return {{"name", r.name},
            {"trials", r.trials},
            {"seed", r.seed},
            {"violation_count", r.violations.size()},
            {"violations", v},
            {"unrestricted_statement_failures", r.literal_failures},
            {"unrestricted_statement_examples", lit}};
}

poincare::Map return_map_fn(const Context& c, const SectionDef& s) {
    return [&c, s](const State& u) { return poincare::return_map(c.system, s, u, c.stepper, c.fp.max_time).u_out; };
}

int cmd_simulate(const Context& c, const std::filesystem::path& out, json& result) {
    const json& s = c.cfg["simulate"];
    ExecutionLimits lim;
    lim.max_transitions = s["max_transitions"].get<long>();
    lim.zeno_dwell = s["zeno_dwell"].get<double>();
    lim.zeno_run = s["zeno_run"].get<int>();
    const State x0 = vec_from(s["x0"], "simulate.x0");
    const Execution ex = execute(c.system, s["domain"].get<std::string>(), x0, s["t_max"].get<double>(), c.stepper, lim);

    const std::vector<std::string> cols = c.system.coordinate_union();
    std::ostringstream csv;
    csv << "# trajectory samples; t is global time, domain is the active domain id; coordinate cells are empty "
           "when the active domain has no such coordinate\r\n";
    csv << "t,domain";
    for (const auto& n : cols) csv << ',' << csv_field(n);
    csv << "\r\n";
    std::size_t rows = 0;
    for (const ExecutionArc& arc : ex.arcs) {
        const DomainDef& d = c.system.domain(arc.domain);
        std::vector<int> where(cols.size(), -1);
        for (std::size_t i = 0; i < cols.size(); ++i) {
            for (std::size_t j = 0; j < d.coord_names.size(); ++j) {
                if (d.coord_names[j] == cols[i]) where[i] = static_cast<int>(j);
            }
        }
        for (const auto& [t, x] : arc.samples) {
            csv << format_number(t) << ',' << csv_field(arc.domain);
            for (int w : where) csv << ',' << (w >= 0 ? format_number(x[w]) : std::string());
            csv << "\r\n";
            ++rows;
        }
    }
    write_text(out / "trajectory.csv", csv.str());
    result = {{"termination", to_string(ex.termination)},
              {"transitions", ex.transitions},
              {"arcs", ex.arcs.size()},
              {"rows", rows},
              {"end_time", ex.end_time()},
              {"message", ex.message},
              {"outputs", {"trajectory.csv"}}};
    return ex.termination == Termination::TimeLimit ? kExitOk : kExitAnalysis;
}

int cmd_find_orbit(const Context& c, const std::filesystem::path& out, json& result) {
    const poincare::FixedPointResult fp = poincare::find_fixed_point(c.system, c.section, c.u0, c.stepper, c.fp);
    const json orbit = orbit_json(poincare::make_orbit(c.section, fp));
    write_json(out / "orbit.json", orbit);
    result = {{"fixed_point", orbit["fixed_point"]}, {"period", orbit["period"]}, {"residual", fp.residual},
              {"outputs", {"orbit.json"}}};
    return kExitOk;
}

spectral::FloquetOptions floquet_options(const Context& c) {
    spectral::FloquetOptions fo;
    fo.fixed_point = c.fp;
    fo.n_max = c.cfg["floquet"]["n_max"].get<int>();
    fo.zero_tol = c.cfg["floquet"]["zero_tol"].get<double>();
    fo.rtol = c.cfg["floquet"]["rtol"].get<double>();
    return fo;
}

int cmd_floquet(const Context& c, const std::filesystem::path& out, json& result) {
    const spectral::FloquetOptions fo = floquet_options(c);
    const spectral::FloquetReport rep = spectral::floquet_report(c.system, c.section, c.u0, c.stepper, fo);
    json j = {{"fixed_point", vec_json(rep.fixed_point)},
              {"period", rep.period},
              {"jacobian", mat_json(rep.jacobian)},
              {"multipliers", complex_json(rep.multipliers)},
              {"sweep", sweep_json(rep.sweep)},
              {"stable", rep.stable},
              {"zero_tol", rep.zero_tol},
              {"orbit", orbit_json(rep.orbit)}};
    const json& extra = c.cfg["floquet"]["extra_sections"];
    if (!extra.empty()) {
        std::vector<SectionDef> secs{c.section};
        for (const json& s : extra) secs.push_back(build_section(c, s));
        spectral::ConsistencyOptions co;
        co.fixed_point = c.fp;
        co.fixed_point.method = poincare::FixedPointMethod::Newton;
        co.zero_tol = fo.zero_tol;
        const spectral::ConsistencyReport cr = spectral::section_consistency(c.system, secs, rep.orbit, c.stepper, 1, co);
        json per = json::array();
        for (const auto& s : cr.sections) {
            per.push_back({{"name", s.name},
                           {"fixed_point", vec_json(s.fixed_point)},
                           {"jacobian", mat_json(s.jacobian)},
                           {"multipliers", complex_json(s.multipliers)},
                           {"nonzero", complex_json(s.nonzero)},
                           {"near_zero", complex_json(s.near_zero)}});
        }
        j["section_consistency"] = {{"sections", per},
                                    {"counts_agree", cr.counts_agree},
                                    {"max_mismatch", std::isfinite(cr.max_mismatch) ? json(cr.max_mismatch) : json(nullptr)}};
    }
    write_json(out / "floquet.json", j);
    result = {{"stable", rep.stable}, {"multipliers", j["multipliers"]}, {"outputs", {"floquet.json"}}};
    return kExitOk;
}

int cmd_rank_sweep(const Context& c, const std::filesystem::path& out, json& result) {
    const json& rs = c.cfg["rank_sweep"];
    const poincare::FixedPointResult fp = poincare::find_fixed_point(c.system, c.section, c.u0, c.stepper, c.fp);
    const poincare::Map P = return_map_fn(c, c.section);
    const Matrix J = poincare::jacobian_fd(P, fp.u, c.fp.delta_rel, c.fp.scheme);
    const spectral::RankSweep sw = spectral::rank_sweep(J, rs["n_max"].get<int>(), rs["rtol"].get<double>());
    json j = {{"fixed_point", vec_json(fp.u)}, {"jacobian", mat_json(J)}, {"sweep", sweep_json(sw)},
              {"invariance_residual", spectral::invariance_residual(J, sw.basis)}};
    if (rs["profile_samples"].get<int>() > 0) {
        const spectral::RankProfile prof = spectral::rank_profile(
            P, fp.u, rs["profile_m"].get<int>(), rs["profile_radius"].get<double>(), rs["profile_samples"].get<int>(),
            rs["seed"].get<std::uint64_t>(), rs["rtol"].get<double>(), c.fp.delta_rel);
        json pts = json::array();
        for (const State& p : prof.points) pts.push_back(vec_json(p));
        j["profile"] = {{"verdict", prof.constant ? "ConstantRank" : "NonConstant"},
                        {"rank", prof.constant ? json(prof.rank) : json(nullptr)},
                        {"ranks", prof.ranks},
                        {"points", pts},
                        {"details", prof.details}};
    }
    write_json(out / "rank_sweep.json", j);
    result = {{"ranks", sw.ranks}, {"r", sw.r}, {"outputs", {"rank_sweep.json"}}};
    return kExitOk;
}

int cmd_converge(const Context& c, const std::filesystem::path& out, json& result) {
    const json& cv = c.cfg["converge"];
    const int trials = cv["trials"].get<int>();
    const int cycles = cv["cycles"].get<int>();
    const double radius = cv["random_radius"].get<double>();
    const std::uint64_t seed = cv["seed"].get<std::uint64_t>();
    const int w0 = cv["ratio_window"][0].get<int>(), w1 = cv["ratio_window"][1].get<int>();
    const State pert = vec_from(cv["perturbation"], "converge.perturbation");
    const spectral::FloquetOptions fo = floquet_options(c);

    const poincare::FixedPointResult fp = poincare::find_fixed_point(c.system, c.section, c.u0, c.stepper, c.fp);
    const poincare::Map P = return_map_fn(c, c.section);
    const Matrix J = poincare::jacobian_fd(P, fp.u, c.fp.delta_rel, c.fp.scheme);
    const spectral::RankSweep sw = spectral::rank_sweep(J, fo.n_max, fo.rtol);
    const Eigen::Index d = fp.u.size();
    const Matrix proj = Matrix::Identity(d, d) - sw.basis * sw.basis.transpose();

    struct Row {
        int cycle;
        double time;
        double dist;
        double orth;
        State u;
    };
    std::vector<std::vector<Row>> table(trials);
    std::vector<std::optional<std::string>> errors(trials);
    parallel_for(trials, [&](int t) {
        State dp = pert;
        if (radius > 0.0) {
            std::mt19937_64 rng(split_seed(seed, static_cast<std::uint64_t>(t)));
            std::normal_distribution<double> normal;
            std::uniform_real_distribution<double> unit;
            for (Eigen::Index i = 0; i < d; ++i) dp[i] = normal(rng);
            const double n = dp.norm();
            const double rad = radius * std::pow(unit(rng), 1.0 / static_cast<double>(d));
            dp = n > 0.0 ? State(dp * (rad / n)) : State(State::Zero(d));
        }
        State u = fp.u + dp;
        double time = 0.0;
        for (int n = 0; n <= cycles; ++n) {
            const State e = u - fp.u;
            table[t].push_back({n, time, e.norm(), (proj * e).norm(), u});
            if (n == cycles) break;
            try {
                const poincare::ReturnResult r = poincare::return_map(c.system, c.section, u, c.stepper, c.fp.max_time);
                u = r.u_out;
                time += r.return_time;
            } catch (const std::exception& ex) {
                errors[t] = "trial " + std::to_string(t) + ", cycle " + std::to_string(n + 1) + ": " + ex.what();
                return;
            }
        }
    });

    std::ostringstream csv;
    csv << "# per-return distances to the fixed point; dist_fixed = |u - u*|, dist_orth = |(I - B B^T)(u - u*)| with "
           "B the stabilized range basis of DP\r\n";
    csv << "trial,cycle,time,dist_fixed,dist_orth";
    for (Eigen::Index i = 0; i < d; ++i) csv << ",u" << i + 1;
    csv << "\r\n";
    json summary = json::array();
    bool failed = false;
    for (int t = 0; t < trials; ++t) {
        for (const Row& r : table[t]) {
            csv << t << ',' << r.cycle << ',' << format_number(r.time) << ',' << format_number(r.dist) << ','
                << format_number(r.orth);
            for (Eigen::Index i = 0; i < d; ++i) csv << ',' << format_number(r.u[i]);
            csv << "\r\n";
        }
        json s = {{"trial", t}, {"initial", vec_json(table[t].front().u)}};
        if (errors[t]) {
            failed = true;
            s["error"] = *errors[t];
        } else {
            const auto& rows = table[t];
            s["final_dist_fixed"] = rows.back().dist;
            if (w1 <= cycles && rows[w0].dist > 0.0 && rows[w1].dist > 0.0) {
                s["mean_ratio"] = std::pow(rows[w1].dist / rows[w0].dist, 1.0 / (w1 - w0));
            } else {
                s["mean_ratio"] = nullptr;
            }
            int collapse = -1;
            for (int n = cycles; n >= 0 && rows[n].orth <= 1e-12; --n) collapse = n;
            s["orth_collapse_cycle"] = collapse >= 0 ? json(collapse) : json(nullptr);
        }
        summary.push_back(s);
    }
    write_text(out / "converge.csv", csv.str());
    json j = {{"fixed_point", vec_json(fp.u)}, {"basis", mat_json(sw.basis)}, {"r", sw.r},
              {"ratio_window", {w0, w1}}, {"trials", summary}};
    write_json(out / "converge.json", j);
    result = {{"trials", trials}, {"failed", failed}, {"outputs", {"converge.csv", "converge.json"}}};
    if (failed) result["message"] = "some trials left the return map's domain";
    return failed ? kExitAnalysis : kExitOk;
}

int cmd_props(const Context& c, const std::filesystem::path& out, json& result) {
    const json& p = c.cfg["props"];
    const std::uint64_t seed = p["seed"].get<std::uint64_t>();
    const spectral::OracleReport r1 =
        spectral::prop1_oracle(p["prop1_trials"].get<int>(), p["prop1_max_dim"].get<int>(), seed);
    const spectral::OracleReport r2 = spectral::prop2_oracle(p["prop2_trials"].get<int>(), seed);
    write_json(out / "props.json", {{"prop1", report_json(r1)}, {"prop2", report_json(r2)}});
    const std::size_t v = r1.violations.size() + r2.violations.size();
    result = {{"prop1_violations", r1.violations.size()}, {"prop2_violations", r2.violations.size()},
              {"outputs", {"props.json"}}};
    return v == 0 ? kExitOk : kExitAnalysis;
}

std::string error_kind(const std::exception& e) {
    if (auto p = dynamic_cast<const poincare::PoincareError*>(&e)) return poincare::to_string(p->kind());
    if (auto s = dynamic_cast<const spectral::SpectralError*>(&e)) return spectral::to_string(s->kind());
    if (dynamic_cast<const flow::FlowError*>(&e)) return "FlowError";
    return "Error";
}

}  // namespace

int run_command(const std::string& command, const json& config, const std::string& out_dir) {
    const std::filesystem::path out(out_dir);
    std::filesystem::create_directories(out);
    const Context c = build_context(config);

    json result;
    int code = kExitOk;
    std::optional<Failure> failure;
    try {
        if (command == "simulate") {
            code = cmd_simulate(c, out, result);
        } else if (command == "find-orbit") {
            code = cmd_find_orbit(c, out, result);
        } else if (command == "floquet") {
            code = cmd_floquet(c, out, result);
        } else if (command == "rank-sweep") {
            code = cmd_rank_sweep(c, out, result);
        } else if (command == "converge") {
            code = cmd_converge(c, out, result);
        } else if (command == "props") {
            code = cmd_props(c, out, result);
        } else {
            throw ConfigError("unknown command '" + command + "'");
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const hf::Error& e) {
        failure = Failure{error_kind(e), e.what()};
        code = kExitAnalysis;
    }

    json manifest = {{"manifest_version", kManifestVersion},
                     {"command", command},
                     {"config", config},
                     {"threads", thread_count()},
                     {"exit_code", code},
                     {"status", code == kExitOk ? "ok" : "failed"},
                     {"result", result}};
    if (failure) manifest["error"] = {{"kind", failure->kind}, {"message", failure->message}};
    write_json(out / "manifest.json", manifest);
    if (failure) std::cerr << "analysis failed (" << failure->kind << "): " << failure->message << "\n";
    return code;
}

int main(int argc, char** argv) {
    CLI::App app{"Hybrid-system simulation, Poincaré return maps, Floquet multipliers and rank-of-iterates analysis."};
    std::string command, config_path, out_dir;
    std::vector<std::string> sets;
    app.add_option("command", command, "simulate | find-orbit | floquet | rank-sweep | converge | props")
        ->required()
        ->check(CLI::IsMember(kCommands));
    app.add_option("--config", config_path, "JSON configuration file (or a manifest.json from an earlier run)");
    app.add_option("--set", sets, "Override one key, e.g. --set hopper.a=0 or --set orbit.u0=[2,2]")
        ->allow_extra_args(false);
    app.add_option("--out", out_dir, "Output directory")->required();
    app.footer("Environment: HF_THREADS caps worker threads.\nExit codes: 0 success, 2 config error, 3 analysis failure.\n"
               "Defaults (null means chosen from the model):\n" + default_config().dump(2));
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    json cfg;
    try {
        cfg = default_config();
        if (!config_path.empty()) {
            std::ifstream f(config_path);
            if (!f) throw ConfigError("cannot open config file '" + config_path + "'");
            json user;
            try {
                user = json::parse(f);
            } catch (const json::parse_error& e) {
                throw ConfigError(std::string("malformed JSON in '") + config_path + "': " + e.what());
            }
            if (user.is_object() && user.contains("manifest_version") && user.contains("config")) user = user["config"];
            merge_strict(cfg, user);
        }
        for (const auto& s : sets) apply_set(cfg, s);
        cfg = resolve(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const models::InvalidParams& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const flow::FlowError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const poincare::PoincareError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        return run_command(command, cfg, out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitAnalysis;
    }
}

}  // namespace hf::cli
