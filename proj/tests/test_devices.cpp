#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "gfmsim/devices.hpp"

using namespace gfmsim;
using Catch::Approx;

namespace {
constexpr double kOmega0 = 376.99111843077515;  // 60 Hz

// 4th-order step of the device flow with frozen network inputs; used only to
// cross-check the analytic derivative fields.
template <typename State, typename Deriv, typename Rhs>
State rk4_step(const State& x0, double h, Rhs rhs) {
    auto add = [](const State& s, const Deriv& d, double a) {
        State out = s;
        out.theta = s.theta + a * d.d_theta;
        out.omega = s.omega + a * d.d_omega;
        if constexpr (requires { s.p_mech; }) {
            out.p_mech = s.p_mech + a * d.d_p_mech;
        } else {
            out.v_err = s.v_err + a * d.d_v_err;
            out.e_mag = s.e_mag + a * d.d_e_mag;
        }
        return out;
    };
    const Deriv k1 = rhs(x0);
    const Deriv k2 = rhs(add(x0, k1, h / 2));
    const Deriv k3 = rhs(add(x0, k2, h / 2));
    const Deriv k4 = rhs(add(x0, k3, h));
    State out = add(x0, k1, h / 6);
    out = add(out, k2, h / 3);
    out = add(out, k3, h / 3);
    out = add(out, k4, h / 6);
    return out;
}
}  // namespace

TEST_CASE("SG derivatives vanish at the governor equilibrium", "[devices][sg]") {
    SgParams p;
    SgState s;
    s.omega = kOmega0;
    s.p_mech = 0.0;
    const auto d = sg_derivatives(s, p, 0.0, kOmega0);
    CHECK(d.d_theta == 0.0);
    CHECK(d.d_omega == 0.0);
    CHECK(d.d_p_mech == 0.0);
}

TEST_CASE("SG swing acceleration from an injection imbalance", "[devices][sg]") {
    SgParams p;
    p.inertia = 10.0;
    p.damping = 1.0;
    SgState s;
    s.omega = kOmega0;
    s.p_mech = 0.0;
    const auto d = sg_derivatives(s, p, 0.5, kOmega0);
    CHECK(d.d_omega == Approx(-0.05).margin(1e-15));
}

TEST_CASE("SG governor response to a frequency offset", "[devices][sg]") {
    SgParams p;
    p.r_gov = 0.05;
    p.t_ch = 0.5;
    SgState s;
    s.omega = kOmega0 + 0.1;
    s.p_mech = 0.0;
    const auto d = sg_derivatives(s, p, 0.0, kOmega0);
    CHECK(d.d_p_mech == Approx(-4.0).margin(1e-12));
    CHECK(d.d_theta == Approx(0.1).margin(1e-15));
}

TEST_CASE("GFM derivatives vanish at the droop equilibrium", "[devices][gfm]") {
    GfmParams p;
    GfmState s;
    s.omega = kOmega0;
    s.p_set = 0.3;
    s.v_err = 0.0;
    const auto d = gfm_derivatives(s, p, 0.3, p.q_set, p.v_set, kOmega0);
    CHECK(d.d_theta == 0.0);
    CHECK(d.d_omega == 0.0);
    CHECK(d.d_v_err == 0.0);
    CHECK(d.d_e_mag == 0.0);
}

TEST_CASE("GFM droop reaction to a power surplus", "[devices][gfm]") {
    GfmParams p;
    p.tau = 0.01;
    p.m_p = 0.05;
    GfmState s;
    s.omega = kOmega0;
    s.p_set = 0.0;
    const auto d = gfm_derivatives(s, p, 0.1, p.q_set, p.v_set, kOmega0);
    CHECK(d.d_omega == Approx(-0.5).margin(1e-12));
}

TEST_CASE("GFM voltage error and internal voltage dynamics", "[devices][gfm]") {
    GfmParams p;
    p.tau = 0.01;
    p.k_pv = 1.0;
    p.k_iv = 10.0;
    p.v_set = 1.0;
    GfmState s;
    s.omega = kOmega0;
    s.v_err = 0.0;
    const auto d = gfm_derivatives(s, p, 0.0, p.q_set, 0.98, kOmega0);
    CHECK(d.d_v_err == Approx(2.0).margin(1e-12));
    CHECK(d.d_e_mag == Approx(2.0).margin(1e-12));
}

TEST_CASE("capacity check", "[devices]") {
    CHECK(check_capacity(0.6, 0.8, 1.0));   // exactly on the rating circle
    CHECK(check_capacity(0.0, 0.0, 0.1));
    CHECK_FALSE(check_capacity(1.0, 0.1, 1.0));
}

TEST_CASE("zero-derivative states stay below 1e-12 for random parameters", "[devices][property]") {
    std::mt19937 rng(7151);
    std::uniform_real_distribution<double> u(0.1, 3.0);
    for (int trial = 0; trial < 1000; ++trial) {
        SgParams sp;
        sp.inertia = u(rng);
        sp.damping = u(rng);
        sp.t_ch = u(rng);
        sp.r_gov = u(rng);
        SgState ss;
        ss.omega = kOmega0;
        ss.p_mech = 0.0;
        const auto ds = sg_derivatives(ss, sp, 0.0, kOmega0);
        CHECK(std::max({std::abs(ds.d_theta), std::abs(ds.d_omega), std::abs(ds.d_p_mech)}) <
              1e-12);

        GfmParams gp;
        gp.m_p = u(rng);
        gp.m_q = u(rng);
        gp.tau = u(rng);
        gp.q_set = u(rng) - 1.5;
        gp.v_set = u(rng);
        GfmState gs;
        gs.omega = kOmega0;
        gs.p_set = u(rng) - 1.5;
        gs.v_err = 0.0;
        const double q = u(rng) - 1.5;
        const double v = gp.v_set + gp.m_q * (gp.q_set - q);
        const auto dg = gfm_derivatives(gs, gp, gs.p_set, q, v, kOmega0);
        CHECK(std::max({std::abs(dg.d_theta), std::abs(dg.d_omega), std::abs(dg.d_v_err),
                        std::abs(dg.d_e_mag)}) < 1e-12);
    }
}

TEST_CASE("analytic fields match central differences of the integrated flow",
          "[devices][property]") {
    std::mt19937 rng(40432);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double h = 2e-5;
    for (int trial = 0; trial < 200; ++trial) {
        SgParams sp;
        sp.inertia = 2.0 + u(rng);
        sp.damping = 1.0 + 0.5 * u(rng);
        sp.t_ch = 0.5 + 0.2 * u(rng);
        sp.r_gov = 0.1 + 0.05 * u(rng);
        const double p_inj = u(rng);
        SgState s;
        s.theta = u(rng);
        s.omega = kOmega0 + u(rng);
        s.p_mech = u(rng);
        auto rhs = [&](const SgState& x) { return sg_derivatives(x, sp, p_inj, kOmega0); };
        const auto fwd = rk4_step<SgState, SgDerivatives>(s, h, rhs);
        const auto bwd = rk4_step<SgState, SgDerivatives>(s, -h, rhs);
        const auto d = rhs(s);
        CHECK(std::abs((fwd.theta - bwd.theta) / (2 * h) - d.d_theta) < 1e-6);
        CHECK(std::abs((fwd.omega - bwd.omega) / (2 * h) - d.d_omega) < 1e-6);
        CHECK(std::abs((fwd.p_mech - bwd.p_mech) / (2 * h) - d.d_p_mech) < 1e-6);

        GfmParams gp;
        gp.tau = 0.02 + 0.005 * u(rng);
        gp.m_p = 0.05;
        const double pg = u(rng), qg = u(rng), vg = 1.0 + 0.05 * u(rng);
        GfmState g;
        g.theta = u(rng);
        g.omega = kOmega0 + u(rng);
        g.v_err = 0.1 * u(rng);
        g.e_mag = 1.0 + 0.05 * u(rng);
        g.p_set = u(rng);
        auto grhs = [&](const GfmState& x) {
            return gfm_derivatives(x, gp, pg, qg, vg, kOmega0);
        };
        // third derivatives scale like 1/tau^3 here, so probe with a finer step
        const double hg = 2e-5;
        const auto gf = rk4_step<GfmState, GfmDerivatives>(g, hg, grhs);
        const auto gb = rk4_step<GfmState, GfmDerivatives>(g, -hg, grhs);
        const auto gd = grhs(g);
        CHECK(std::abs((gf.omega - gb.omega) / (2 * hg) - gd.d_omega) < 1e-4);
        CHECK(std::abs((gf.v_err - gb.v_err) / (2 * hg) - gd.d_v_err) < 1e-4);
        CHECK(std::abs((gf.e_mag - gb.e_mag) / (2 * hg) - gd.d_e_mag) < 1e-4);
    }
}

TEST_CASE("governor state converges to -delta_omega/R under a held offset",
          "[devices][sg]") {
    SgParams p;
    p.r_gov = 0.05;
    p.t_ch = 0.5;
    SgState s;
    s.omega = kOmega0 + 0.1;  // held constant: only the governor ODE is integrated
    s.p_mech = 0.0;
    const double h = 1e-3;
    for (int k = 0; k < 20000; ++k) {
        auto rhs = [&](const SgState& x) {
            auto d = sg_derivatives(x, p, 0.0, kOmega0);
            d.d_theta = 0.0;
            d.d_omega = 0.0;
            return d;
        };
        s = rk4_step<SgState, SgDerivatives>(s, h, rhs);
    }
    CHECK(s.p_mech == Approx(-0.1 / 0.05).margin(1e-6));
}
