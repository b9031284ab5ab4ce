#pragma once

// Fixed-step integration inside one domain, guard-crossing detection with
// bisection refinement, and time-normalized sampling of a single arc.

#include "hf/core.hpp"

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace hf::flow {

enum class Method { RK4, Euler };

const char* to_string(Method m);
Method method_from_string(const std::string& s);

struct StepperConfig {
    Method method = Method::RK4;
    double h = 1e-3;
    double event_tol_g = 1e-12;
    double event_tol_t = 1e-12;
    double tangency_threshold = 1e-8;

    /// Throws FlowError(InvalidConfig) unless h and all tolerances are positive.
    void check() const;
};

enum class FlowErrorKind { NoImpact, Tangency, NonFiniteState, InvalidConfig };

class FlowError : public Error {
public:
    FlowError(FlowErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
    FlowErrorKind kind() const { return kind_; }

private:
    FlowErrorKind kind_;
};

/// One explicit step of size h.
State step(const VectorField& field, const State& x, double h, Method method);

/// Zero-crossing monitor used during arc integration. A crossing counts once
/// the monitor is armed (value has exceeded `arm_threshold`) and the value
/// drops from positive to non-positive within one step.
struct EventMonitor {
    std::string id;
    EventFn event;
    double arm_threshold = 0.0;
    bool armed = false;
    /// Guards: a start value <= 0 must turn positive within the first step,
    /// otherwise the flow is not leaving the guard surface.
    bool must_depart = true;
};

enum class ArcStatus { Event, Horizon, Tangency, NonFinite };

struct ArcOutcome {
    ArcStatus status = ArcStatus::Horizon;
    std::size_t monitor = std::numeric_limits<std::size_t>::max();
    double duration = 0.0;
    State exit_state;
    std::vector<double> times;  // arc-local, first entry 0
    std::vector<State> states;
    std::string message;
};

/// Integrates `x0` in `domain` until a monitor fires or `budget` time elapses.
/// Monitors are updated in place (arming persists for the caller). The
/// earliest crossing wins; ties go to the lower monitor index.
ArcOutcome integrate_arc(const DomainDef& domain, std::span<EventMonitor> monitors, const State& x0,
                         const StepperConfig& cfg, double budget, bool record);

/// Advances `x0` by exactly `duration` (negative allowed) with steps of at most cfg.h.
State advance(const DomainDef& domain, const State& x0, double duration, const StepperConfig& cfg);

/// Central-difference derivative of an event along the flow, d(event)/dt.
double event_rate(const EventFn& event, const VectorField& field, const State& x);

struct ImpactResult {
    std::string guard_id;
    double eta = 0.0;
    State exit_state;
};

/// Time for the flow from `x` to reach the earliest guard of `domain`.
/// Throws FlowError with kind NoImpact, Tangency or NonFiniteState.
ImpactResult time_to_impact(const HybridSystem& system, const std::string& domain, const State& x,
                            const StepperConfig& cfg, double t_max);

/// Points along the arc from `x` to its impact at normalized times sigma in [0, 1]:
/// sigma = 0 returns x, sigma = 1 the impact state (both bitwise).
std::vector<State> sample_normalized(const HybridSystem& system, const std::string& domain, const State& x,
                                     const StepperConfig& cfg, std::span<const double> sigma_grid,
                                     double t_max = 1e3);

}  // namespace hf::flow
