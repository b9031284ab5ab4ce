#include "hf/executor.hpp"

#include <cmath>
#include <limits>

namespace hf {

const char* to_string(Termination t) {
    switch (t) {
        case Termination::TimeLimit: return "TimeLimit";
        case Termination::NoImpact: return "NoImpact";
        case Termination::Tangency: return "Tangency";
        case Termination::Zeno: return "Zeno";
        case Termination::MaxTransitions: return "MaxTransitions";
        case Termination::NonFiniteState: return "NonFiniteState";
        case Termination::Section: return "Section";
    }
    return "unknown";
}

SectionStop make_section_stop(const SectionDef& section, const flow::StepperConfig& cfg, bool armed) {
    flow::EventMonitor m;
    m.id = section.name.empty() ? "section" : section.name;
    m.event = section.event;
    m.arm_threshold = 10.0 * cfg.event_tol_g;
    m.armed = armed;
    m.must_depart = false;
    return {std::move(m), section.domain};
}

Execution execute(const HybridSystem& system, const std::string& domain0, const State& x0, double t_max,
                  const flow::StepperConfig& cfg, const ExecutionLimits& limits) {
    return execute_until(system, domain0, x0, t_max, cfg, limits, nullptr, true);
}

Execution execute_until(const HybridSystem& system, const std::string& domain0, const State& x0, double t_max,
                        const flow::StepperConfig& cfg, const ExecutionLimits& limits, SectionStop* stop,
                        bool record_samples) {
    cfg.check();
    Execution ex;
    const DomainDef* dom = &system.domain(domain0);
    if (x0.size() != dom->dim) throw Error("initial state dimension does not match domain '" + domain0 + "'");

    State x = x0;
    double t = 0.0;
    int short_run = 0;

    while (true) {
        const auto guards = system.guards_from(dom->id);
        std::vector<flow::EventMonitor> monitors;
        monitors.reserve(guards.size() + 1);
        for (const GuardDef* g : guards) monitors.push_back({g->id, g->event, 0.0, false, true});
        const bool watch = stop != nullptr && stop->domain == dom->id;
        if (watch) monitors.push_back(stop->monitor);

        ExecutionArc arc;
        arc.domain = dom->id;
        arc.t_entry = t;
        arc.entry_state = x;

        if (!std::isfinite(t_max) && monitors.empty()) {
            arc.t_exit = t;
            arc.exit_state = x;
            arc.samples.emplace_back(t, x);
            ex.arcs.push_back(std::move(arc));
            ex.termination = Termination::NoImpact;
            ex.message = "domain '" + dom->id + "' has no guards";
            return ex;
        }

        flow::ArcOutcome out = flow::integrate_arc(*dom, monitors, x, cfg, t_max - t, record_samples);
        if (watch) stop->monitor.armed = monitors.back().armed;

        arc.t_exit = t + out.duration;
        arc.exit_state = out.exit_state;
        if (record_samples) {
            arc.samples.reserve(out.times.size());
            for (std::size_t i = 0; i < out.times.size(); ++i) arc.samples.emplace_back(t + out.times[i], out.states[i]);
        } else {
            arc.samples.emplace_back(t, x);
            if (out.duration > 0.0) arc.samples.emplace_back(arc.t_exit, out.exit_state);
        }
        t = arc.t_exit;

        switch (out.status) {
            case flow::ArcStatus::Horizon:
                ex.arcs.push_back(std::move(arc));
                ex.termination = Termination::TimeLimit;
                return ex;
            case flow::ArcStatus::Tangency:
                ex.arcs.push_back(std::move(arc));
                ex.termination = Termination::Tangency;
                ex.message = out.message;
                return ex;
            case flow::ArcStatus::NonFinite:
                ex.arcs.push_back(std::move(arc));
                ex.termination = Termination::NonFiniteState;
                ex.message = out.message;
                return ex;
            case flow::ArcStatus::Event:
                break;
        }

        if (watch && out.monitor == monitors.size() - 1) {
            ex.arcs.push_back(std::move(arc));
            ex.termination = Termination::Section;
            return ex;
        }

        const GuardDef& g = *guards[out.monitor];
        arc.exit_guard = g.id;
        ex.arcs.push_back(std::move(arc));
        ++ex.transitions;

        State next = g.reset(out.exit_state);
        const DomainDef* dst = &system.domain(g.dst);
        if (next.size() != dst->dim) throw Error("reset '" + g.id + "' produced a state of the wrong dimension");
        if (!all_finite(next)) {
            ex.termination = Termination::NonFiniteState;
            ex.message = "reset '" + g.id + "' produced NaN/Inf";
            return ex;
        }

        short_run = (out.duration < limits.zeno_dwell) ? short_run + 1 : 0;
        if (short_run >= limits.zeno_run) {
            ex.termination = Termination::Zeno;
            ex.message = "consecutive arcs shorter than zeno_dwell";
            return ex;
        }
        if (ex.transitions >= limits.max_transitions) {
            ex.termination = Termination::MaxTransitions;
            return ex;
        }

        dom = dst;
        x = std::move(next);

        // A reset may land directly on an armed section (e.g. a clock reset to the section value).
        if (stop != nullptr && stop->domain == dom->id && stop->monitor.armed &&
            stop->monitor.event(x) <= cfg.event_tol_g) {
            ExecutionArc landing;
            landing.domain = dom->id;
            landing.t_entry = landing.t_exit = t;
            landing.entry_state = landing.exit_state = x;
            landing.samples.emplace_back(t, x);
            ex.arcs.push_back(std::move(landing));
            ex.termination = Termination::Section;
            return ex;
        }
        // No arc is opened for a reset that happens at the horizon (to event-time tolerance).
        if (t_max - t <= cfg.event_tol_t) {
            ex.termination = Termination::TimeLimit;
            return ex;
        }
    }
}

}  // namespace hf
