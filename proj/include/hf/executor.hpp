#pragma once

// Hybrid execution: alternate single-domain flow and reset until a horizon,
// a limit, or a failure condition.

#include "hf/core.hpp"
#include "hf/flow.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hf {

struct ExecutionArc {
    std::string domain;
    double t_entry = 0.0;
    double t_exit = 0.0;
    State entry_state;
    State exit_state;
    std::optional<std::string> exit_guard;
    std::vector<std::pair<double, State>> samples;  // global time
};

enum class Termination {
    TimeLimit,
    NoImpact,
    Tangency,
    Zeno,
    MaxTransitions,
    NonFiniteState,
    /// Stopped on the requested section crossing (return-map runs only).
    Section,
};

const char* to_string(Termination t);

struct Execution {
    std::vector<ExecutionArc> arcs;
    Termination termination = Termination::TimeLimit;
    int transitions = 0;
    std::string message;

    double end_time() const { return arcs.empty() ? 0.0 : arcs.back().t_exit; }
    const State& final_state() const { return arcs.back().exit_state; }
};

struct ExecutionLimits {
    long max_transitions = 1'000'000;
    double zeno_dwell = 1e-9;
    int zeno_run = 10;
};

/// Stop condition for return-map runs: a downward crossing of `section.event`
/// inside `section.domain`, or a reset that lands on it once armed.
struct SectionStop {
    flow::EventMonitor monitor;
    std::string domain;
};

/// Builds a stop monitor with the refractory band 10 * event_tol_g.
SectionStop make_section_stop(const SectionDef& section, const flow::StepperConfig& cfg, bool armed = false);

Execution execute(const HybridSystem& system, const std::string& domain0, const State& x0, double t_max,
                  const flow::StepperConfig& cfg, const ExecutionLimits& limits = {});

/// As execute(), optionally stopping at a section and optionally skipping sample storage
/// (arcs then carry only their entry and exit samples).
Execution execute_until(const HybridSystem& system, const std::string& domain0, const State& x0, double t_max,
                        const flow::StepperConfig& cfg, const ExecutionLimits& limits, SectionStop* stop,
                        bool record_samples);

}  // namespace hf
