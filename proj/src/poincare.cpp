#include "hf/poincare.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace hf::poincare {

const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::NoReturn: return "NoReturn";
        case ErrorKind::Termination: return "Termination";
        case ErrorKind::NoConvergence: return "NoConvergence";
        case ErrorKind::SingularNewtonStep: return "SingularNewtonStep";
        case ErrorKind::MapFailure: return "MapFailure";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "unknown";
}

FdScheme fd_scheme_from_string(const std::string& s) {
    if (s == "central") return FdScheme::Central;
    if (s == "forward") return FdScheme::Forward;
    throw PoincareError(ErrorKind::InvalidArgument, "unknown finite-difference scheme '" + s + "'");
}

const char* to_string(FdScheme s) {
    return s == FdScheme::Central ? "central" : "forward";
}

FixedPointMethod fixed_point_method_from_string(const std::string& s) {
    if (s == "newton") return FixedPointMethod::Newton;
    if (s == "iterate") return FixedPointMethod::Iterate;
    throw PoincareError(ErrorKind::InvalidArgument, "unknown fixed-point method '" + s + "'");
}

const char* to_string(FixedPointMethod m) {
    return m == FixedPointMethod::Newton ? "newton" : "iterate";
}

ReturnResult return_map(const HybridSystem& system, const SectionDef& section, const State& u,
                        const flow::StepperConfig& cfg, double max_time) {
    const DomainDef& dom = system.domain(section.domain);
    if (u.size() != dom.dim - 1) throw PoincareError(ErrorKind::InvalidArgument, "section coordinates have the wrong size");
    if (!all_finite(u)) throw PoincareError(ErrorKind::InvalidArgument, "section coordinates are not finite");

    SectionStop stop = make_section_stop(section, cfg, false);
    const Execution ex = execute_until(system, section.domain, section.lift(u), max_time, cfg, {}, &stop, false);

    if (ex.termination == Termination::TimeLimit) {
        std::ostringstream os;
        os << "no return to section '" << section.name << "' within " << max_time << " time units";
        throw PoincareError(ErrorKind::NoReturn, os.str());
    }
    if (ex.termination != Termination::Section) {
        std::ostringstream os;
        os << "execution toward section '" << section.name << "' ended with " << to_string(ex.termination) << " at t = "
           << ex.end_time();
        if (!ex.message.empty()) os << ": " << ex.message;
        throw PoincareError(ErrorKind::Termination, os.str());
    }

    ReturnResult r;
    std::size_t n_arcs = ex.arcs.size();
    const ExecutionArc& last = ex.arcs.back();
    if (n_arcs > 1 && last.t_exit == last.t_entry) --n_arcs;  // landing arc
    for (std::size_t i = 0; i < n_arcs; ++i) {
        const ExecutionArc& a = ex.arcs[i];
        r.domain_sequence.push_back(a.domain);
        r.dwell_times.push_back(a.t_exit - a.t_entry);
        r.entry_points.push_back(a.entry_state);
    }
    r.return_time = ex.end_time();
    r.transitions = ex.transitions;
    r.u_out = section.coords(ex.final_state());
    if (!(r.return_time > 0.0)) throw PoincareError(ErrorKind::Termination, "zero-time return to the section");
    return r;
}

Matrix jacobian_fd(const Map& map, const State& u, double delta_rel, FdScheme scheme) {
    if (!(delta_rel > 0.0)) throw PoincareError(ErrorKind::InvalidArgument, "delta_rel must be positive");
    const Eigen::Index d = u.size();
    auto eval = [&](Eigen::Index i, double delta) {
        State v = u;
        if (delta != 0.0) v[i] += delta;
        try {
            return map(v);
        } catch (const std::exception& e) {
            std::ostringstream os;
            if (delta == 0.0) {
                os << "map failed at the base point: " << e.what();
            } else {
                os << "map failed at perturbation " << (delta > 0 ? "+" : "-") << "delta e_" << i << ": " << e.what();
            }
            throw PoincareError(ErrorKind::MapFailure, os.str());
        }
    };

    Matrix J;
    State base;
    if (scheme == FdScheme::Forward) base = eval(0, 0.0);
    for (Eigen::Index i = 0; i < d; ++i) {
        const double delta = delta_rel * std::max(std::abs(u[i]), 1.0);
        State col;
        // divide by the perturbation actually represented in floating point
        const double hi = u[i] + delta;
        if (scheme == FdScheme::Central) {
            const double lo = u[i] - delta;
            col = (eval(i, delta) - eval(i, -delta)) / (hi - lo);
        } else {
            col = (eval(i, delta) - base) / (hi - u[i]);
        }
        if (i == 0) J.resize(col.size(), d);
        J.col(i) = col;
    }
    return J;
}

namespace {

double inf_norm(const State& v) {
    return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

}  // namespace

FixedPointResult find_fixed_point(const HybridSystem& system, const SectionDef& section, const State& u0,
                                  const flow::StepperConfig& cfg, const FixedPointOptions& opts) {
    if (!(opts.tol > 0.0) || opts.max_iter < 0) {
        throw PoincareError(ErrorKind::InvalidArgument, "fixed-point tolerance must be positive");
    }
    double best = std::numeric_limits<double>::infinity();
    auto fail = [&](const std::string& why) -> PoincareError {
        std::ostringstream os;
        os << "fixed-point search did not converge (best residual " << best << "): " << why;
        return PoincareError(ErrorKind::NoConvergence, os.str(), best);
    };
    auto P = [&](const State& u) { return return_map(system, section, u, cfg, opts.max_time); };

    FixedPointResult cur;
    cur.u = u0;
    try {
        cur.ret = P(u0);
    } catch (const PoincareError& e) {
        if (e.kind() == ErrorKind::InvalidArgument) throw;
        throw fail(std::string("return map undefined at the initial guess: ") + e.what());
    }
    cur.residual = inf_norm(cur.ret.u_out - cur.u);
    best = cur.residual;

    const Eigen::Index d = u0.size();
    Eigen::JacobiSVD<Matrix> svd;
    bool have_jacobian = false;
    while (!(cur.residual <= opts.tol)) {
        if (cur.iterations >= opts.max_iter) {
            std::ostringstream os;
            os << "iteration limit " << opts.max_iter << " reached";
            throw fail(os.str());
        }
        FixedPointResult next;
        next.iterations = cur.iterations + 1;
        if (opts.method == FixedPointMethod::Iterate) {
            next.u = cur.ret.u_out;
            try {
                next.ret = P(next.u);
            } catch (const PoincareError& e) {
                throw fail(e.what());
            }
            next.residual = inf_norm(next.ret.u_out - next.u);
        } else {
            Matrix J;
            try {
                J = jacobian_fd([&](const State& v) { return P(v).u_out; }, cur.u, opts.delta_rel, opts.scheme);
            } catch (const PoincareError& e) {
                throw fail(e.what());
            }
            const double scale = std::max(1.0, J.norm());
            J -= Matrix::Identity(d, d);
            svd.compute(J, Eigen::ComputeFullU | Eigen::ComputeFullV);
            const auto& s = svd.singularValues();
            if (!(s(d - 1) > 1e-12 * s(0)) || !(s(d - 1) > 1e-8 * scale)) {
                std::ostringstream os;
                os << "DP - I is numerically singular (sigma_min = " << s(d - 1) << ", sigma_max = " << s(0)
                   << "); a multiplier is close to 1";
                throw PoincareError(ErrorKind::SingularNewtonStep, os.str(), best);
            }
            have_jacobian = true;
            const State du = svd.solve(-(cur.ret.u_out - cur.u));
            bool accepted = false;
            double alpha = 1.0;
            std::string last_error = "no step length reduced the residual";
            for (int b = 0; b < 10 && !accepted; ++b, alpha *= 0.5) {
                next.u = cur.u + alpha * du;
                try {
                    next.ret = P(next.u);
                } catch (const PoincareError& e) {
                    last_error = e.what();
                    continue;
                }
                next.residual = inf_norm(next.ret.u_out - next.u);
                accepted = next.residual < cur.residual;
            }
            if (!accepted) throw fail(last_error);
        }
        cur = std::move(next);
        best = std::min(best, cur.residual);
    }
    if (have_jacobian && cur.residual > 0.0) {
        // polish with the last factorization; kept only if it helps
        FixedPointResult polished;
        polished.iterations = cur.iterations;
        polished.u = cur.u + svd.solve(-(cur.ret.u_out - cur.u));
        try {
            polished.ret = P(polished.u);
            polished.residual = inf_norm(polished.ret.u_out - polished.u);
            if (polished.residual < cur.residual) cur = std::move(polished);
        } catch (const PoincareError&) {
        }
    }
    return cur;
}

PeriodicOrbitResult make_orbit(const SectionDef& section, const FixedPointResult& fp) {
    PeriodicOrbitResult o;
    o.section = section;
    o.fixed_point = fp.u;
    o.period = fp.ret.return_time;
    o.domain_sequence = fp.ret.domain_sequence;
    o.dwell_times = fp.ret.dwell_times;
    o.entry_points = fp.ret.entry_points;
    o.transitions = fp.ret.transitions;
    o.residual = fp.residual;
    o.iterations = fp.iterations;
    return o;
}

int cycle_length(const PeriodicOrbitResult& orbit) {
    return std::max(orbit.transitions, 1);
}

EntryChart entry_chart(const HybridSystem& system, const PeriodicOrbitResult& orbit, int j,
                       const flow::StepperConfig& cfg) {
    const int k = cycle_length(orbit);
    if (j < 1 || j >= k || static_cast<std::size_t>(j) >= orbit.entry_points.size()) {
        throw PoincareError(ErrorKind::InvalidArgument, "entry chart index out of range");
    }
    EntryChart c;
    c.domain = orbit.domain_sequence[j];
    const DomainDef& dom = system.domain(c.domain);
    // gamma_j itself lies on a reset image, which may touch the exit guard (the hopper's x = 0)
    c.offset = 0.5 * orbit.dwell_times[j];
    c.anchor = flow::advance(dom, orbit.entry_points[j], c.offset, cfg);
    dom.apply_wrap(c.anchor);
    const State f = dom.field(c.anchor);
    f.cwiseAbs().maxCoeff(&c.dropped);
    for (const Wrap& w : dom.wrap) {
        if (w.index == c.dropped) c.period = w.period;
    }
    return c;
}

State chart_coords(const EntryChart& chart, const State& x) {
    const Eigen::Index n = x.size();
    State u(n - 1);
    for (Eigen::Index i = 0, o = 0; i < n; ++i) {
        if (i != chart.dropped) u[o++] = x[i];
    }
    return u;
}

State chart_lift(const EntryChart& chart, const State& u) {
    const Eigen::Index n = u.size() + 1;
    State x(n);
    for (Eigen::Index i = 0, o = 0; i < n; ++i) x[i] = (i == chart.dropped) ? chart.anchor[i] : u[o++];
    return x;
}

namespace {

// Flows a freshly reset state x onto the chart's hyperplane: Newton on the
// flow time s, started from the orbit's own time to the anchor.
State project(const DomainDef& dom, const EntryChart& chart, const State& x, const flow::StepperConfig& cfg) {
    const Eigen::Index i = chart.dropped;
    auto gap = [&](const State& y) {
        const double g = y[i] - chart.anchor[i];
        return chart.period > 0.0 ? std::remainder(g, chart.period) : g;
    };
    const double tol = 1e-14 * std::max(1.0, std::abs(chart.anchor[i]));
    double s = chart.offset;
    State y = flow::advance(dom, x, s, cfg);
    double r = gap(y);
    for (int it = 0; it < 50 && std::abs(r) > tol; ++it) {
        const double v = dom.field(y)[i];
        if (!(std::abs(v) > 0.0)) {
            throw PoincareError(ErrorKind::Termination, "flow is tangent to the chart of '" + dom.id + "'");
        }
        const double s_next = s - r / v;
        if (s_next == s) break;
        if (!(std::abs(s_next - chart.offset) <= chart.offset)) {
            throw PoincareError(ErrorKind::Termination, "state does not reach the chart of '" + dom.id +
                                                            "' within its arc");
        }
        s = s_next;
        y = flow::advance(dom, x, s, cfg);
        r = gap(y);
    }
    if (std::abs(r) > 1e-9) throw PoincareError(ErrorKind::Termination, "projection onto entry section failed");
    return y;
}

}  // namespace

State step_map(const HybridSystem& system, int j, const PeriodicOrbitResult& orbit, const State& u,
               const flow::StepperConfig& cfg, double max_time) {
    const int k = cycle_length(orbit);
    j = ((j % k) + k) % k;
    if (k == 1) return return_map(system, orbit.section, u, cfg, max_time).u_out;

    const std::string& dj = orbit.domain_sequence[j];
    const State x = j == 0 ? orbit.section.lift(u) : chart_lift(entry_chart(system, orbit, j, cfg), u);

    if (j == k - 1) {
        SectionStop stop = make_section_stop(orbit.section, cfg, true);
        const Execution ex = execute_until(system, dj, x, max_time, cfg, {}, &stop, false);
        if (ex.termination != Termination::Section) {
            std::ostringstream os;
            os << "step map " << j << " ended with " << to_string(ex.termination);
            if (!ex.message.empty()) os << ": " << ex.message;
            throw PoincareError(ex.termination == Termination::TimeLimit ? ErrorKind::NoReturn : ErrorKind::Termination,
                                os.str());
        }
        return orbit.section.coords(ex.final_state());
    }

    flow::ImpactResult impact;
    try {
        impact = flow::time_to_impact(system, dj, x, cfg, max_time);
    } catch (const flow::FlowError& e) {
        throw PoincareError(e.kind() == flow::FlowErrorKind::NoImpact ? ErrorKind::NoReturn : ErrorKind::Termination,
                            "step map " + std::to_string(j) + ": " + e.what());
    }
    const GuardDef& g = *system.find_guard(impact.guard_id);
    const EntryChart next = entry_chart(system, orbit, j + 1, cfg);
    if (g.dst != next.domain) {
        throw PoincareError(ErrorKind::Termination, "step map " + std::to_string(j) + " left through guard '" + g.id +
                                                        "', which does not follow the orbit's domain sequence");
    }
    const State r = g.reset(impact.exit_state);
    return chart_coords(next, project(system.domain(next.domain), next, r, cfg));
}

State cycle_composition(const HybridSystem& system, const PeriodicOrbitResult& orbit, const State& u,
                        const flow::StepperConfig& cfg, double max_time) {
    State v = u;
    for (int j = 0; j < cycle_length(orbit); ++j) v = step_map(system, j, orbit, v, cfg, max_time);
    return v;
}

}  // namespace hf::poincare
