#pragma once

// Poincaré return maps through a section, single-domain step maps around a
// located cycle, fixed-point solvers and finite-difference linearization.

#include "hf/core.hpp"
#include "hf/executor.hpp"
#include "hf/flow.hpp"

#include <functional>
#include <string>
#include <vector>

namespace hf::poincare {

enum class ErrorKind { NoReturn, Termination, NoConvergence, SingularNewtonStep, MapFailure, InvalidArgument };

const char* to_string(ErrorKind k);

class PoincareError : public Error {
public:
    PoincareError(ErrorKind kind, const std::string& what, double best_residual = 0.0)
        : Error(what), kind_(kind), best_residual_(best_residual) {}
    ErrorKind kind() const { return kind_; }
    /// Smallest residual reached before a NoConvergence failure.
    double best_residual() const { return best_residual_; }

private:
    ErrorKind kind_;
    double best_residual_;
};

struct ReturnResult {
    State u_out;
    double return_time = 0.0;
    std::vector<std::string> domain_sequence;
    std::vector<double> dwell_times;
    std::vector<State> entry_points;
    int transitions = 0;
};

/// First return of lift(u) to `section`. Throws NoReturn when max_time
/// elapses and Termination for any other abnormal end of the execution.
ReturnResult return_map(const HybridSystem& system, const SectionDef& section, const State& u,
                        const flow::StepperConfig& cfg, double max_time = 100.0);

using Map = std::function<State(const State&)>;

enum class FdScheme { Central, Forward };

FdScheme fd_scheme_from_string(const std::string& s);
const char* to_string(FdScheme s);

/// Finite-difference Jacobian with steps delta_i = delta_rel * max(|u_i|, 1).
/// Map failures are rethrown as MapFailure naming the perturbation.
Matrix jacobian_fd(const Map& map, const State& u, double delta_rel = 1e-5, FdScheme scheme = FdScheme::Central);

enum class FixedPointMethod { Newton, Iterate };

FixedPointMethod fixed_point_method_from_string(const std::string& s);
const char* to_string(FixedPointMethod m);

struct FixedPointOptions {
    double tol = 1e-10;
    int max_iter = 50;
    FixedPointMethod method = FixedPointMethod::Newton;
    double delta_rel = 1e-5;
    FdScheme scheme = FdScheme::Central;
    double max_time = 100.0;
};

struct FixedPointResult {
    State u;
    double residual = 0.0;  // ||P(u) - u||_inf
    int iterations = 0;
    ReturnResult ret;       // P(u)
};

FixedPointResult find_fixed_point(const HybridSystem& system, const SectionDef& section, const State& u0,
                                  const flow::StepperConfig& cfg, const FixedPointOptions& opts = {});

/// Packages a converged fixed point as orbit metadata.
PeriodicOrbitResult make_orbit(const SectionDef& section, const FixedPointResult& fp);

/// Number of step maps in one cycle (one per transition).
int cycle_length(const PeriodicOrbitResult& orbit);

/// Hyperplane chart for the j-th arc of the cycle, j >= 1, anchored at the
/// orbit point halfway through that arc: the coordinate with the largest
/// field component is fixed at its anchor value.
struct EntryChart {
    std::string domain;
    int dropped = 0;
    State anchor;
    double offset = 0.0;  // orbit time from gamma_j to the anchor
    double period = 0.0;  // wrap period of the dropped coordinate, 0 if unwrapped
};

EntryChart entry_chart(const HybridSystem& system, const PeriodicOrbitResult& orbit, int j,
                       const flow::StepperConfig& cfg = {});
State chart_coords(const EntryChart& chart, const State& x);
State chart_lift(const EntryChart& chart, const State& u);

/// p_j: flow in the j-th domain of the cycle to its exit guard, reset, and
/// express the result on the next arc's chart. Indices wrap modulo the cycle length.
State step_map(const HybridSystem& system, int j, const PeriodicOrbitResult& orbit, const State& u,
               const flow::StepperConfig& cfg, double max_time = 100.0);

/// step_map composed once around the cycle, starting on the orbit's section.
State cycle_composition(const HybridSystem& system, const PeriodicOrbitResult& orbit, const State& u,
                        const flow::StepperConfig& cfg, double max_time = 100.0);

}  // namespace hf::poincare
