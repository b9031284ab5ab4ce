#include "hf/flow.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hf::flow {

const char* to_string(Method m) {
    return m == Method::RK4 ? "rk4" : "euler";
}

Method method_from_string(const std::string& s) {
    if (s == "rk4" || s == "RK4") return Method::RK4;
    if (s == "euler" || s == "Euler") return Method::Euler;
    throw FlowError(FlowErrorKind::InvalidConfig, "unknown integration method '" + s + "'");
}

void StepperConfig::check() const {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(h) || !positive(event_tol_g) || !positive(event_tol_t) || !positive(tangency_threshold)) {
        throw FlowError(FlowErrorKind::InvalidConfig, "step size and tolerances must be positive and finite");
    }
}

State step(const VectorField& field, const State& x, double h, Method method) {
    State out;
    if (method == Method::Euler) {
        out = x + h * field(x);
    } else {
        const State k1 = field(x);
        const State k2 = field(x + (0.5 * h) * k1);
        const State k3 = field(x + (0.5 * h) * k2);
        const State k4 = field(x + h * k3);
        out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (!all_finite(out)) throw FlowError(FlowErrorKind::NonFiniteState, "integration step produced NaN/Inf");
    return out;
}

double event_rate(const EventFn& event, const VectorField& field, const State& x) {
    constexpr double dt = 1e-6;
    const State v = field(x);
    return (event(x + dt * v) - event(x - dt * v)) / (2.0 * dt);
}

namespace {

State substep(const DomainDef& domain, const State& x, double dt, Method method) {
    State y = step(domain.field, x, dt, method);
    domain.apply_wrap(y);
    return y;
}

struct Located {
    double t = 0.0;
    State x;
    double value = 0.0;
};

// Bisection on [0, dt] from the step-start state. Invariant: event(lo) > 0 >= event(hi).
Located locate(const DomainDef& domain, const EventFn& event, const State& x0, double e0, const State& x1,
               double e1, double dt, const StepperConfig& cfg) {
    double lo = 0.0, hi = dt;
    State x_lo = x0, x_hi = x1;
    double e_lo = e0, e_hi = e1;
    for (int it = 0; it < 400; ++it) {
        const bool narrow = (hi - lo) <= cfg.event_tol_t;
        const bool small = std::min(std::abs(e_lo), std::abs(e_hi)) <= cfg.event_tol_g;
        if (narrow && small) break;
        const double mid = lo + 0.5 * (hi - lo);
        if (!(mid > lo && mid < hi)) break;
        State xm = substep(domain, x0, mid, cfg.method);
        const double em = event(xm);
        if (em > 0.0) {
            lo = mid;
            x_lo = std::move(xm);
            e_lo = em;
        } else {
            hi = mid;
            x_hi = std::move(xm);
            e_hi = em;
        }
    }
    if (std::abs(e_hi) <= cfg.event_tol_g || std::abs(e_hi) <= std::abs(e_lo)) return {hi, x_hi, e_hi};
    return {lo, x_lo, e_lo};
}

}  // namespace

ArcOutcome integrate_arc(const DomainDef& domain, std::span<EventMonitor> monitors, const State& x0,
                         const StepperConfig& cfg, double budget, bool record) {
    cfg.check();
    ArcOutcome out;
    auto push = [&](double t, const State& x) {
        if (record) {
            out.times.push_back(t);
            out.states.push_back(x);
        }
    };
    auto finish = [&](ArcStatus status, double duration, const State& x, std::string msg = {}) {
        out.status = status;
        out.duration = duration;
        out.exit_state = x;
        out.message = std::move(msg);
        return out;
    };

    push(0.0, x0);
    if (!all_finite(x0)) return finish(ArcStatus::NonFinite, 0.0, x0, "initial state is not finite");

    const std::size_t n = monitors.size();
    std::vector<double> prev(n);
    std::vector<bool> departing(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        prev[i] = monitors[i].event(x0);
        if (prev[i] > monitors[i].arm_threshold) monitors[i].armed = true;
        departing[i] = monitors[i].must_depart && !(prev[i] > 0.0);
    }
    if (!(budget > 0.0)) return finish(ArcStatus::Horizon, 0.0, x0);

    State x = x0;
    long steps = 0;
    double elapsed = 0.0;
    const double h = cfg.h;
    while (true) {
        const double remaining = budget - elapsed;
        double dt = h;
        bool last = false;
        if (remaining <= h * (1.0 + 1e-9)) {
            dt = std::abs(remaining - h) <= 1e-9 * h ? h : remaining;
            last = true;
        }
        State x1;
        try {
            x1 = substep(domain, x, dt, cfg.method);
        } catch (const FlowError& e) {
            return finish(ArcStatus::NonFinite, elapsed, x, e.what());
        }

        std::size_t best = n;
        Located hit;
        std::vector<double> next(n);
        for (std::size_t i = 0; i < n; ++i) {
            next[i] = monitors[i].event(x1);
            if (departing[i]) {
                if (next[i] > 0.0) {
                    departing[i] = false;
                } else {
                    return finish(ArcStatus::Tangency, elapsed, x,
                                  "flow does not leave the surface of '" + monitors[i].id + "'");
                }
            }
            if (monitors[i].armed && prev[i] > 0.0 && next[i] <= 0.0) {
                Located loc = locate(domain, monitors[i].event, x, prev[i], x1, next[i], dt, cfg);
                if (best == n || loc.t < hit.t) {
                    best = i;
                    hit = std::move(loc);
                }
            } else if (last && monitors[i].armed && next[i] > 0.0 && next[i] <= cfg.event_tol_g && best == n) {
                // Within tolerance of the surface exactly at the horizon: the crossing belongs to this run.
                best = i;
                hit = {dt, x1, next[i]};
            }
        }

        if (best != n) {
            const double t_hit = elapsed + hit.t;
            if (std::abs(hit.value) > cfg.event_tol_g) {
                std::ostringstream os;
                os << "event '" << monitors[best].id << "' residual " << hit.value
                   << " above tolerance; event is not continuous along the flow";
                return finish(ArcStatus::Tangency, t_hit, hit.x, os.str());
            }
            const double rate = event_rate(monitors[best].event, domain.field, hit.x);
            if (!(rate <= -cfg.tangency_threshold)) {
                std::ostringstream os;
                os << "crossing of '" << monitors[best].id << "' is not transversal (d/dt = " << rate << ")";
                return finish(ArcStatus::Tangency, t_hit, hit.x, os.str());
            }
            push(t_hit, hit.x);
            out.monitor = best;
            return finish(ArcStatus::Event, t_hit, hit.x);
        }

        for (std::size_t i = 0; i < n; ++i) {
            if (next[i] > monitors[i].arm_threshold) monitors[i].armed = true;
        }
        prev = std::move(next);
        ++steps;
        elapsed = last ? budget : static_cast<double>(steps) * h;
        x = std::move(x1);
        push(elapsed, x);
        if (last) break;
    }
    return finish(ArcStatus::Horizon, budget, x);
}

State advance(const DomainDef& domain, const State& x0, double duration, const StepperConfig& cfg) {
    cfg.check();
    State x = x0;
    const double sign = duration < 0.0 ? -1.0 : 1.0;
    const double total = std::abs(duration);
    const double h = cfg.h;
    long steps = 0;
    double done = 0.0;
    while (total - done > 0.0) {
        const double remaining = total - done;
        double dt = h;
        bool last = false;
        if (remaining <= h * (1.0 + 1e-9)) {
            dt = std::abs(remaining - h) <= 1e-9 * h ? h : remaining;
            last = true;
        }
        x = substep(domain, x, sign * dt, cfg.method);
        ++steps;
        done = last ? total : static_cast<double>(steps) * h;
    }
    return x;
}

namespace {

std::vector<EventMonitor> guard_monitors(const HybridSystem& system, const std::string& domain) {
    std::vector<EventMonitor> ms;
    for (const GuardDef* g : system.guards_from(domain)) {
        ms.push_back({g->id, g->event, 0.0, false, true});
    }
    return ms;
}

}  // namespace

ImpactResult time_to_impact(const HybridSystem& system, const std::string& domain, const State& x,
                            const StepperConfig& cfg, double t_max) {
    const DomainDef& d = system.domain(domain);
    if (x.size() != d.dim) throw Error("state dimension does not match domain '" + domain + "'");
    auto monitors = guard_monitors(system, domain);
    ArcOutcome arc = integrate_arc(d, monitors, x, cfg, t_max, false);
    switch (arc.status) {
        case ArcStatus::Event:
            return {monitors[arc.monitor].id, arc.duration, arc.exit_state};
        case ArcStatus::Horizon:
            throw FlowError(FlowErrorKind::NoImpact, "no guard reached in domain '" + domain + "' before t_max");
        case ArcStatus::Tangency:
            throw FlowError(FlowErrorKind::Tangency, arc.message);
        case ArcStatus::NonFinite:
            throw FlowError(FlowErrorKind::NonFiniteState, arc.message);
    }
    throw Error("unreachable");
}

std::vector<State> sample_normalized(const HybridSystem& system, const std::string& domain, const State& x,
                                     const StepperConfig& cfg, std::span<const double> sigma_grid,
                                     double t_max) {
    const ImpactResult impact = time_to_impact(system, domain, x, cfg, t_max);
    const DomainDef& d = system.domain(domain);
    std::vector<State> out;
    out.reserve(sigma_grid.size());
    for (double sigma : sigma_grid) {
        if (!(sigma >= 0.0 && sigma <= 1.0)) throw Error("sigma must lie in [0, 1]");
        if (sigma == 0.0) {
            out.push_back(x);
        } else if (sigma == 1.0) {
            out.push_back(impact.exit_state);
        } else {
            out.push_back(advance(d, x, sigma * impact.eta, cfg));
        }
    }
    return out;
}

}  // namespace hf::flow
