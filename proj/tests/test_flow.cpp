#include "hf/flow.hpp"
#include "hf/models.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

using namespace hf;
using flow::StepperConfig;

TEST_CASE("single RK4 step of exponential decay") {
    const VectorField decay = [](const State& v) -> State { return -v; };
    const State y = flow::step(decay, test::vec({1.0}), 0.1, flow::Method::RK4);
    CHECK(std::abs(y[0] - std::exp(-0.1)) < 1e-7);
    // Euler is first order: 1 - h
    CHECK(flow::step(decay, test::vec({1.0}), 0.1, flow::Method::Euler)[0] == doctest::Approx(0.9));
}

TEST_CASE("zero field leaves the state unchanged") {
    const VectorField zero = [](const State& v) -> State { return State::Zero(v.size()); };
    const State x = test::vec({0.3, -1.7, 2.5});
    for (double h : {1e-3, 0.5, 10.0}) {
        CHECK(flow::step(zero, x, h, flow::Method::RK4) == x);
        CHECK(flow::step(zero, x, h, flow::Method::Euler) == x);
    }
}

TEST_CASE("hopper ground rest point is an equilibrium without forcing") {
    models::HopperParams p;
    p.a = 0.0;
    const HybridSystem hop = models::make_hopper(p);
    const DomainDef& ground = hop.domain(models::kGround);
    const State x = test::vec({1.0, 1.6, 0.0});
    const State y = flow::step(ground.field, x, 1e-3, flow::Method::RK4);
    CHECK(y[1] == x[1]);
    CHECK(y[2] == x[2]);
}

TEST_CASE("non-finite step output is an error") {
    const VectorField blow = [](const State& v) -> State { return State::Constant(v.size(), INFINITY); };
    try {
        flow::step(blow, test::vec({1.0}), 0.1, flow::Method::RK4);
        FAIL("expected FlowError");
    } catch (const flow::FlowError& e) {
        CHECK(e.kind() == flow::FlowErrorKind::NonFiniteState);
    }
}

TEST_CASE("stepper configuration is checked") {
    StepperConfig cfg;
    cfg.h = 0.0;
    CHECK_THROWS_AS(cfg.check(), flow::FlowError);
    cfg = {};
    cfg.event_tol_g = -1.0;
    CHECK_THROWS_AS(cfg.check(), flow::FlowError);
    CHECK(flow::method_from_string("euler") == flow::Method::Euler);
    CHECK_THROWS_AS(flow::method_from_string("midpoint"), flow::FlowError);
}

TEST_CASE("free-fall impact time") {
    const HybridSystem sys = test::free_fall(2.0);
    const StepperConfig cfg;
    const State x0 = test::vec({1.0, 0.0});
    const auto hit = flow::time_to_impact(sys, "air", x0, cfg, 10.0);
    CHECK(hit.guard_id == "floor");
    // y = 1 - t^2 reaches 0 at t = sqrt(2 y0 / g) = 1
    CHECK(std::abs(hit.eta - std::sqrt(2.0 * 1.0 / 2.0)) <= 1e-9);
    CHECK(std::abs(hit.exit_state[0]) <= cfg.event_tol_g);
    CHECK(hit.eta > 0.0);
}

TEST_CASE("impact time of the unit clock") {
    const HybridSystem sys = models::make_floquet_example();
    const State x0 = test::vec({0.0, 0.3, -0.2, 0.5, 0.1});
    const auto hit = flow::time_to_impact(sys, models::kCycle, x0, {}, 10.0);
    CHECK(hit.guard_id == models::kClockReset);
    CHECK(std::abs(hit.eta - 1.0) <= 1e-12);
}

TEST_CASE("impact-time refinement is consistent across step sizes") {
    const HybridSystem sys = test::free_fall(2.0);
    for (double h : {1e-2, 5e-3, 2.5e-3, 1e-3}) {
        StepperConfig cfg;
        cfg.h = h;
        const auto hit = flow::time_to_impact(sys, "air", test::vec({1.0, 0.0}), cfg, 10.0);
        CHECK(std::abs(hit.eta - 1.0) <= 1e-9);
        CHECK(std::abs(hit.exit_state[0]) <= cfg.event_tol_g);
    }
}

TEST_CASE("RK4 impact time converges at fourth order") {
    // x'' = -w^2 x from (1, 0) first reaches x = 0 at pi / (2 w)
    const double w = 10.0;
    const HybridSystem sys = test::oscillator(w);
    const double exact = std::numbers::pi / (2.0 * w);
    std::vector<double> err;
    for (double h : {1e-2, 5e-3, 2.5e-3}) {
        StepperConfig cfg;
        cfg.h = h;
        err.push_back(std::abs(flow::time_to_impact(sys, "spring", test::vec({1.0, 0.0}), cfg, 10.0).eta - exact));
    }
    for (std::size_t i = 0; i + 1 < err.size(); ++i) {
        const double order = std::log2(err[i] / err[i + 1]);
        INFO("observed order " << order);
        CHECK(order > 3.5);
        CHECK(order < 4.5);
    }
}

TEST_CASE("Euler impact time converges at first order") {
    // x' = -x from 1 reaches 1/2 at ln 2
    DomainDef d;
    d.id = "decay";
    d.dim = 1;
    d.coord_names = {"x"};
    d.field = [](const State& s) -> State { return -s; };
    GuardDef g;
    g.id = "half";
    g.src = g.dst = "decay";
    g.event = [](const State& s) { return s[0] - 0.5; };
    g.reset = [](const State& s) { return s; };
    const HybridSystem sys({d}, {g});
    std::vector<double> err;
    for (double h : {1e-3, 5e-4, 2.5e-4}) {
        StepperConfig cfg;
        cfg.h = h;
        cfg.method = flow::Method::Euler;
        err.push_back(std::abs(flow::time_to_impact(sys, "decay", test::vec({1.0}), cfg, 10.0).eta - std::log(2.0)));
    }
    for (std::size_t i = 0; i + 1 < err.size(); ++i) {
        const double order = std::log2(err[i] / err[i + 1]);
        INFO("observed order " << order);
        CHECK(order > 0.8);
        CHECK(order < 1.2);
    }
}

TEST_CASE("no impact before the horizon") {
    const HybridSystem sys = test::free_fall(2.0);
    try {
        flow::time_to_impact(sys, "air", test::vec({100.0, 0.0}), {}, 1.0);
        FAIL("expected NoImpact");
    } catch (const flow::FlowError& e) {
        CHECK(e.kind() == flow::FlowErrorKind::NoImpact);
    }
}

TEST_CASE("tangential crossing is rejected") {
    // event (1 - t)^3 reaches zero with zero slope
    DomainDef d;
    d.id = "clock";
    d.dim = 1;
    d.coord_names = {"t"};
    d.field = [](const State&) { return test::vec({1.0}); };
    GuardDef g;
    g.id = "flat";
    g.src = g.dst = "clock";
    g.event = [](const State& s) { return std::pow(1.0 - s[0], 3); };
    g.reset = [](const State& s) { return s; };
    const HybridSystem sys({d}, {g});
    try {
        flow::time_to_impact(sys, "clock", test::vec({0.0}), {}, 5.0);
        FAIL("expected Tangency");
    } catch (const flow::FlowError& e) {
        CHECK(e.kind() == flow::FlowErrorKind::Tangency);
    }
}

TEST_CASE("starting on a guard requires leaving it") {
    const HybridSystem sys = test::free_fall(2.0);
    // on the floor moving down: not a valid start
    try {
        flow::time_to_impact(sys, "air", test::vec({0.0, -1.0}), {}, 5.0);
        FAIL("expected Tangency");
    } catch (const flow::FlowError& e) {
        CHECK(e.kind() == flow::FlowErrorKind::Tangency);
    }
    // on the floor moving up: the flow leaves the surface and comes back after 2 v / g
    const auto hit = flow::time_to_impact(sys, "air", test::vec({0.0, 1.0}), {}, 5.0);
    CHECK(std::abs(hit.eta - 1.0) <= 1e-9);
}

TEST_CASE("earliest guard wins") {
    HybridSystem base = test::free_fall(2.0);
    std::vector<GuardDef> guards = base.guards();
    GuardDef high = guards[0];
    high.id = "ceiling_band";
    high.event = [](const State& s) { return s[0] - 0.5; };
    guards.push_back(high);
    const HybridSystem sys(base.domains(), guards);
    const auto hit = flow::time_to_impact(sys, "air", test::vec({1.0, 0.0}), {}, 5.0);
    CHECK(hit.guard_id == "ceiling_band");
    CHECK(std::abs(hit.eta - std::sqrt(0.5)) <= 1e-9);
}

TEST_CASE("normalized sampling") {
    const HybridSystem sys = test::free_fall(2.0);
    const StepperConfig cfg;
    const State x0 = test::vec({1.0, 0.0});
    const auto hit = flow::time_to_impact(sys, "air", x0, cfg, 1e3);

    const std::vector<double> ends{0.0, 1.0};
    const auto s = flow::sample_normalized(sys, "air", x0, cfg, ends);
    REQUIRE(s.size() == 2);
    CHECK(s[0] == x0);
    CHECK(s[1] == hit.exit_state);

    const std::vector<double> half{0.5};
    const auto m = flow::sample_normalized(sys, "air", x0, cfg, half);
    // y(t) = 1 - t^2 at t = eta / 2 = 0.5
    CHECK(std::abs(m[0][0] - 0.75) <= 1e-8);
    CHECK(std::abs(m[0][1] + 1.0) <= 1e-8);

    const std::vector<double> bad{1.5};
    CHECK_THROWS_AS(flow::sample_normalized(sys, "air", x0, cfg, bad), Error);
}

TEST_CASE("signed advance retraces the flow") {
    const HybridSystem sys = test::oscillator(3.0);
    const DomainDef& d = sys.domain("spring");
    const State x0 = test::vec({0.4, -0.2});
    const State fwd = flow::advance(d, x0, 0.7, {});
    const State back = flow::advance(d, fwd, -0.7, {});
    CHECK(test::max_abs(back - x0) < 1e-10);
    CHECK(flow::advance(d, x0, 0.0, {}) == x0);
}

TEST_CASE("event rate along the flow") {
    const HybridSystem sys = test::free_fall(2.0);
    const DomainDef& d = sys.domain("air");
    const double rate = flow::event_rate(sys.guards()[0].event, d.field, test::vec({0.5, -1.5}));
    CHECK(rate == doctest::Approx(-1.5).epsilon(1e-9));
}
