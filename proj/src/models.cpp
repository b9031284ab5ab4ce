#include "hf/models.hpp"

#include <cmath>
#include <string>

namespace hf::models {

void HopperParams::check() const {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
    if (!positive(m) || !positive(M) || !positive(l0) || !positive(omega) || !positive(g)) {
        throw InvalidParams("hopper: m, M, l0, omega and g must be strictly positive");
    }
    if (!nonneg(k) || !nonneg(a) || !nonneg(b)) {
        throw InvalidParams("hopper: k, a and b must be non-negative");
    }
}

double hopper_normal_force(const HopperParams& p, double phi, double y) {
    return p.k * p.l0 + p.a * std::sin(phi) - p.k * y + p.g * p.m;
}

HybridSystem make_hopper(const HopperParams& p) {
    p.check();
    const double two_pi = 2.0 * std::numbers::pi;

    DomainDef aerial;
    aerial.id = kAerial;
    aerial.dim = 5;
    aerial.coord_names = {"phi", "x", "xdot", "y", "ydot"};
    aerial.wrap = {{0, two_pi}};
    aerial.field = [p](const State& s) {
        const double phi = s[0], x = s[1], xd = s[2], y = s[3], yd = s[4];
        const double drive = p.a * std::sin(phi);
        State f(5);
        f << p.omega, xd, (-p.k * p.l0 - drive + p.k * (y - x) - p.b * xd - p.g * p.m) / p.m, yd,
            (p.k * p.l0 + drive - p.k * (y - x) - p.g * p.M) / p.M;
        return f;
    };

    DomainDef ground;
    ground.id = kGround;
    ground.dim = 3;
    ground.coord_names = {"phi", "y", "ydot"};
    ground.wrap = {{0, two_pi}};
    ground.field = [p](const State& s) {
        State f(3);
        f << p.omega, s[2], (p.k * p.l0 + p.a * std::sin(s[0]) - p.k * s[1] - p.g * p.M) / p.M;
        return f;
    };

    GuardDef touchdown;
    touchdown.id = kTouchdown;
    touchdown.src = kAerial;
    touchdown.dst = kGround;
    touchdown.event = [](const State& s) { return s[1]; };
    // Plastic impact: the lower mass stops on contact.
    touchdown.reset = [](const State& s) {
        State r(3);
        r << s[0], s[3], s[4];
        return r;
    };

    GuardDef liftoff;
    liftoff.id = kLiftoff;
    liftoff.src = kGround;
    liftoff.dst = kAerial;
    liftoff.event = [p](const State& s) { return hopper_normal_force(p, s[0], s[1]); };
    liftoff.reset = [](const State& s) {
        State r(5);
        r << s[0], 0.0, 0.0, s[1], s[2];
        return r;
    };

    return HybridSystem({std::move(aerial), std::move(ground)}, {std::move(touchdown), std::move(liftoff)});
}

double phase_event(double phi, double phase) {
    const double d = phi - phase;
    return std::cos(d) > 0.0 ? -std::sin(d) : 1.0;
}

namespace {

SectionDef phase_section(std::string name, std::string domain, int dim, double phase) {
    SectionDef s;
    s.name = std::move(name);
    s.domain = std::move(domain);
    s.event = [phase](const State& x) { return phase_event(x[0], phase); };
    s.coords = [dim](const State& x) -> State { return x.tail(dim - 1); };
    s.lift = [phase, dim](const State& u) {
        State x(dim);
        x[0] = phase;
        x.tail(dim - 1) = u;
        return x;
    };
    return s;
}

}  // namespace

SectionDef hopper_section(double phase) {
    return phase_section("ground_phase", kGround, 3, phase);
}

SectionDef hopper_aerial_section(double phase) {
    return phase_section("aerial_phase", kAerial, 5, phase);
}

FloquetExampleParams FloquetExampleParams::resolved() const {
    FloquetExampleParams p = *this;
    if (p.k < 1 || p.l < 1) throw InvalidParams("floquet example: k and l must be at least 1");
    if (!(p.lambda_x < 0.0) || !(p.lambda_z < 0.0)) {
        throw InvalidParams("floquet example: lambda_x and lambda_z must be negative");
    }
    if (p.A.size() == 0) {
        p.A = Matrix::Zero(p.l, p.l);
        for (int i = 0; i + 1 < p.l; ++i) p.A(i, i + 1) = 1.0;
    }
    if (p.A.rows() != p.l || p.A.cols() != p.l) throw InvalidParams("floquet example: A must be l x l");
    if (p.xi.size() == 0) p.xi = State::Zero(p.k);
    if (p.xi.size() != p.k) throw InvalidParams("floquet example: xi must have k entries");
    Matrix power = Matrix::Identity(p.l, p.l);
    for (int i = 0; i < p.l; ++i) power = power * p.A;
    if ((power.array() != 0.0).any()) throw InvalidParams("floquet example: A^l is not exactly zero");
    return p;
}

HybridSystem make_floquet_example(const FloquetExampleParams& params) {
    const FloquetExampleParams p = params.resolved();
    const int k = p.k, l = p.l, n = 1 + k + l;

    DomainDef cycle;
    cycle.id = kCycle;
    cycle.dim = n;
    cycle.coord_names.push_back("clock");
    for (int i = 1; i <= k; ++i) cycle.coord_names.push_back("x" + std::to_string(i));
    for (int i = 1; i <= l; ++i) cycle.coord_names.push_back("z" + std::to_string(i));
    cycle.field = [p, k, l, n](const State& s) {
        State f(n);
        f[0] = 1.0;
        f.segment(1, k) = p.lambda_x * (s.segment(1, k) - p.xi);
        f.tail(l) = p.lambda_z * s.tail(l);
        return f;
    };

    GuardDef reset;
    reset.id = kClockReset;
    reset.src = kCycle;
    reset.dst = kCycle;
    reset.event = [](const State& s) { return 1.0 - s[0]; };
    reset.reset = [A = p.A, k, l, n](const State& s) {
        State r(n);
        r[0] = 0.0;
        r.segment(1, k) = s.segment(1, k);
        r.tail(l) = A * s.tail(l);
        return r;
    };

    return HybridSystem({std::move(cycle)}, {std::move(reset)});
}

SectionDef floquet_time_section(const FloquetExampleParams& params, double clock) {
    if (!(clock >= 0.0 && clock < 1.0)) throw InvalidParams("floquet section clock must lie in [0, 1)");
    const int n = 1 + params.k + params.l;
    SectionDef s;
    s.name = "clock_section";
    s.domain = kCycle;
    if (clock == 0.0) {
        s.event = [](const State& x) { return x[0]; };
    } else {
        s.event = [clock](const State& x) { return clock - x[0]; };
    }
    s.coords = [n](const State& x) -> State { return x.tail(n - 1); };
    s.lift = [clock, n](const State& u) {
        State x(n);
        x[0] = clock;
        x.tail(n - 1) = u;
        return x;
    };
    return s;
}

State floquet_return_closed_form(const FloquetExampleParams& params, const State& u) {
    const FloquetExampleParams p = params.resolved();
    State out(p.k + p.l);
    out.head(p.k) = p.xi + std::exp(p.lambda_x) * (u.head(p.k) - p.xi);
    out.tail(p.l) = std::exp(p.lambda_z) * (p.A * u.tail(p.l));
    return out;
}

}  // namespace hf::models
