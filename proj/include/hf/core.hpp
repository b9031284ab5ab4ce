#pragma once

// Hybrid system definitions: domains with autonomous vector fields, guards
// with reset maps, and the validated triple tying them together.

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hf {

using State = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using VectorField = std::function<State(const State&)>;
using EventFn = std::function<double(const State&)>;
using ResetMap = std::function<State(const State&)>;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

bool all_finite(const State& x);

/// A circle-valued coordinate, reduced into [0, period) after each accepted step.
struct Wrap {
    int index = 0;
    double period = 0.0;
};

struct DomainDef {
    std::string id;
    int dim = 0;
    std::vector<std::string> coord_names;
    VectorField field;
    std::vector<Wrap> wrap;

    /// Reduces wrapped coordinates in place.
    void apply_wrap(State& x) const;
};

/// Flow happens where event > 0; the transition fires when the event value
/// reaches zero while decreasing along the flow.
struct GuardDef {
    std::string id;
    std::string src;
    std::string dst;
    EventFn event;
    ResetMap reset;
};

class HybridSystem {
public:
    HybridSystem() = default;
    HybridSystem(std::vector<DomainDef> domains, std::vector<GuardDef> guards)
        : domains_(std::move(domains)), guards_(std::move(guards)) {}

    const std::vector<DomainDef>& domains() const { return domains_; }
    const std::vector<GuardDef>& guards() const { return guards_; }

    const DomainDef* find_domain(const std::string& id) const;
    const GuardDef* find_guard(const std::string& id) const;

    /// Throws hf::Error when the id is not declared.
    const DomainDef& domain(const std::string& id) const;

    /// Guards leaving `domain`, in declaration order.
    std::vector<const GuardDef*> guards_from(const std::string& domain) const;

    /// Column names of the union of all domain coordinates, in first-seen order.
    std::vector<std::string> coordinate_union() const;

private:
    std::vector<DomainDef> domains_;
    std::vector<GuardDef> guards_;
};

enum class DiagnosticKind {
    DuplicateDomain,
    DuplicateGuard,
    InvalidDimension,
    CoordNameMismatch,
    InvalidWrap,
    UnresolvedDomain,
    DimensionMismatch,
    MissingCallable,
    ProbeFailure,
};

const char* to_string(DiagnosticKind kind);

struct Diagnostic {
    DiagnosticKind kind;
    std::string subject;  // offending domain or guard id
    std::string message;
};

/// Checks the well-formedness of `system`. Callables are probed once at the
/// zero state of their domain to check output dimensions.
std::vector<Diagnostic> validate(const HybridSystem& system);

using ChartCoords = std::function<State(const State&)>;
using ChartLift = std::function<State(const State&)>;

/// Codimension-1 section inside one domain: the zero set of `event`, crossed
/// downward. `coords` charts the section onto R^(dim-1); `lift` is its right
/// inverse landing on the zero set.
struct SectionDef {
    std::string name;
    std::string domain;
    EventFn event;
    ChartCoords coords;
    ChartLift lift;
};

/// A periodic orbit located through a Poincaré section. Arc `i` of one cycle
/// runs in `domain_sequence[i]` for `dwell_times[i]` starting at `entry_points[i]`;
/// arc 0 starts on the section at lift(fixed_point).
struct PeriodicOrbitResult {
    SectionDef section;
    State fixed_point;
    double period = 0.0;
    std::vector<std::string> domain_sequence;
    std::vector<double> dwell_times;
    std::vector<State> entry_points;
    int transitions = 0;
    double residual = 0.0;
    int iterations = 0;
};

}  // namespace hf
