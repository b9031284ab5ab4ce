#pragma once

// Bundled systems: the forced two-mass vertical hopper and a single-domain
// system whose reset contracts a block of coordinates nilpotently.

#include "hf/core.hpp"

#include <numbers>
#include <stdexcept>

namespace hf::models {

class InvalidParams : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Hopper ids and coordinate layout.
inline constexpr const char* kAerial = "aerial";  // (phi, x, xdot, y, ydot)
inline constexpr const char* kGround = "ground";  // (phi, y, ydot)
inline constexpr const char* kTouchdown = "touchdown";
inline constexpr const char* kLiftoff = "liftoff";

struct HopperParams {
    double m = 1.0;      // lower mass
    double M = 2.0;      // upper mass
    double k = 10.0;     // spring stiffness
    double b = 5.0;      // aerial drag on the lower mass
    double l0 = 2.0;     // spring rest length
    double a = 20.0;     // actuator amplitude
    double omega = 2.0 * std::numbers::pi;
    double g = 2.0;

    void check() const;
};

/// Ground normal force on the lower mass while it rests on the ground.
double hopper_normal_force(const HopperParams& p, double phi, double y);

HybridSystem make_hopper(const HopperParams& p = {});

/// Phase of the default ground section; the stable gait is in stance there.
inline constexpr double kHopperSectionPhase = std::numbers::pi;

/// Section {phi = phase} in the ground domain, charted by (y, ydot).
SectionDef hopper_section(double phase = kHopperSectionPhase);

/// Section {phi = phase} in the aerial domain, charted by (x, xdot, y, ydot).
SectionDef hopper_aerial_section(double phase);

/// Smooth phase-crossing event: positive just before `phase`, zero on it,
/// negative just after, held at +1 on the opposite half circle.
double phase_event(double phi, double phase);

inline constexpr const char* kCycle = "cycle";  // (clock, x_1..x_k, z_1..z_l)
inline constexpr const char* kClockReset = "clock_reset";

struct FloquetExampleParams {
    int k = 2;
    int l = 2;
    Matrix A;          // l x l nilpotent; empty means a single Jordan block
    double lambda_x = -1.0;
    double lambda_z = -1.0;
    State xi;          // empty means zero

    /// Fills defaults and throws InvalidParams unless A^l == 0 exactly.
    FloquetExampleParams resolved() const;
};

HybridSystem make_floquet_example(const FloquetExampleParams& p = {});

/// Section {clock = c} for c in [0, 1), charted by (x, z). The c = 0 section
/// is reached through the clock reset.
SectionDef floquet_time_section(const FloquetExampleParams& p = {}, double clock = 0.0);

/// Closed-form return map on a clock section: (x, z) -> (xi + e^lx (x - xi), e^lz A z).
State floquet_return_closed_form(const FloquetExampleParams& p, const State& u);

}  // namespace hf::models
