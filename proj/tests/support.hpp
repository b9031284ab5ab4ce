#pragma once

#include "hf/models.hpp"
#include "hf/poincare.hpp"

#include <cmath>
#include <string>

namespace hf::test {

/// (y, v) under constant gravity g; guard "floor" at y = 0 resets v -> -v.
inline HybridSystem free_fall(double g = 2.0) {
    DomainDef d;
    d.id = "air";
    d.dim = 2;
    d.coord_names = {"y", "v"};
    d.field = [g](const State& s) {
        State f(2);
        f << s[1], -g;
        return f;
    };
    GuardDef floor;
    floor.id = "floor";
    floor.src = floor.dst = "air";
    floor.event = [](const State& s) { return s[0]; };
    floor.reset = [](const State& s) {
        State r(2);
        r << 0.0, -s[1];
        return r;
    };
    return HybridSystem({d}, {floor});
}

/// Harmonic oscillator (x, v) with frequency w; guard at x = 0.
inline HybridSystem oscillator(double w) {
    DomainDef d;
    d.id = "spring";
    d.dim = 2;
    d.coord_names = {"x", "v"};
    d.field = [w](const State& s) {
        State f(2);
        f << s[1], -w * w * s[0];
        return f;
    };
    GuardDef g;
    g.id = "zero";
    g.src = g.dst = "spring";
    g.event = [](const State& s) { return s[0]; };
    g.reset = [](const State& s) { return s; };
    return HybridSystem({d}, {g});
}

inline State vec(std::initializer_list<double> xs) {
    State v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

/// Hopper orbit on the default ground section, located once per process.
inline const PeriodicOrbitResult& hopper_orbit() {
    static const PeriodicOrbitResult orbit = [] {
        const HybridSystem sys = models::make_hopper();
        const SectionDef sec = models::hopper_section();
        const auto fp = poincare::find_fixed_point(sys, sec, vec({2.0, 2.0}), {});
        return poincare::make_orbit(sec, fp);
    }();
    return orbit;
}

inline double max_abs(const State& v) {
    return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
}

}  // namespace hf::test
