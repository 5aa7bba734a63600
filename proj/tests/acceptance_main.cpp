// Acceptance suite for the bundled desk-scale system: exercises the full
// pipeline end to end and prints one pass/fail line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gfmsim/io.hpp"
#include "gfmsim/simulator.hpp"

using namespace gfmsim;

namespace {

const std::string kDataDir = GFMSIM_DATA_DIR;
int g_failures = 0;

void report(int criterion, bool pass, const std::string& what) {
    std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, what.c_str());
    if (!pass) ++g_failures;
}

struct Runs {
    TrajectoryLog consensus;
    TrajectoryLog safety;
    double safety_wall_s = 0.0;
};

TrajectoryLog run_mode(const SystemConfig& cfg, const ScenarioScript& sc, ControlMode mode,
                       double end_time, double step = 1e-3) {
    ControlConfig ctrl = cfg.control;
    ctrl.mode = mode;
    return run_scenario(cfg.system, ctrl, cfg.graph, ScheduleConfig::from(ctrl, step, end_time),
                        sc);
}

double min_coi(const TrajectoryLog& log) {
    double v = log.coi_hz.front();
    for (double f : log.coi_hz) v = std::min(v, f);
    return v;
}

double max_coi(const TrajectoryLog& log) {
    double v = log.coi_hz.front();
    for (double f : log.coi_hz) v = std::max(v, f);
    return v;
}

std::string fmt(double v) { return format_sig12(v); }

}  // namespace

// Criterion 1: consensus-only violates the lower limit by >= 0.2 Hz on the
// bundled disturbance sequence; safety-consensus stays inside
// [f_min - eps, f_max + eps] with eps = delta_margin + 0.02 Hz. Runtime under
// one wall-clock second per simulated second.
static Runs criterion_1(const SystemConfig& cfg) {
    const auto sc = parse_scenario(kDataDir + "/sc1.scn", cfg);
    const double end_time = sc.last_event_time() + 40.0;

    Runs runs;
    runs.consensus = run_mode(cfg, sc, ControlMode::Consensus, end_time);
    const auto t0 = std::chrono::steady_clock::now();
    runs.safety = run_mode(cfg, sc, ControlMode::SafetyConsensus, end_time);
    const auto t1 = std::chrono::steady_clock::now();
    runs.safety_wall_s = std::chrono::duration<double>(t1 - t0).count();

    const double delta_hz = delta_margin(cfg.system.gfms[0].params, cfg.control) / kTwoPi;
    const double eps = delta_hz + 0.02;
    const double f_min = cfg.control.omega_min / kTwoPi;
    const double f_max = cfg.control.omega_max / kTwoPi;

    const double dip = min_coi(runs.consensus);
    const bool sized = dip <= f_min - 0.2;
    const double lo = min_coi(runs.safety);
    const double hi = max_coi(runs.safety);
    const bool contained = lo >= f_min - eps && hi <= f_max + eps;
    const bool fast = runs.safety_wall_s / end_time < 1.0;

    report(1, sized && contained && fast,
           "safety containment: consensus-only min CoI " + fmt(dip) + " Hz (<= " +
               fmt(f_min - 0.2) + "), safety-consensus CoI in [" + fmt(lo) + ", " + fmt(hi) +
               "] vs [" + fmt(f_min - eps) + ", " + fmt(f_max + eps) + "], " +
               fmt(runs.safety_wall_s) + " s wall for " + fmt(end_time) + " s simulated");
    return runs;
}

// Criteria 2-4 share the small-disturbance scenario.
static void criteria_2_3_4(const SystemConfig& cfg) {
    const auto sc = parse_scenario(kDataDir + "/sc3.scn", cfg);
    const double end_time = sc.last_event_time() + 40.0;

    const auto log_n = run_mode(cfg, sc, ControlMode::NoSecondary, end_time);
    const auto log_c = run_mode(cfg, sc, ControlMode::Consensus, end_time);
    const auto log_s = run_mode(cfg, sc, ControlMode::SafetyConsensus, end_time);

    // 2: secondary control restores nominal frequency, primary alone does not.
    const auto sum_n = summarize(log_n, sc.last_event_time());
    const auto sum_c = summarize(log_c, sc.last_event_time());
    const auto sum_s = summarize(log_s, sc.last_event_time());
    const bool settled = sum_c.settling_time_s >= 0.0 && sum_c.settling_time_s <= 40.0 &&
                         sum_s.settling_time_s >= 0.0 && sum_s.settling_time_s <= 40.0 &&
                         sum_c.steady_state_deviation_hz <= 0.01 &&
                         sum_s.steady_state_deviation_hz <= 0.01;
    const bool residual = sum_n.steady_state_deviation_hz > 0.01;
    report(2, settled && residual,
           "zero steady-state deviation: consensus settles in " + fmt(sum_c.settling_time_s) +
               " s, safety-consensus in " + fmt(sum_s.settling_time_s) +
               " s; no-secondary residual " + fmt(sum_n.steady_state_deviation_hz) + " Hz");

    // 3: with no limit approach, the safety layer changes nothing.
    double worst = 0.0;
    for (std::size_t u = 0; u < log_c.gfm_names.size(); ++u) {
        for (std::size_t r = 0; r < log_c.record_count(); ++r) {
            worst = std::max(worst, std::abs(log_c.gfm_omega[u][r] - log_s.gfm_omega[u][r]));
            worst = std::max(worst, std::abs(log_c.gfm_p_set[u][r] - log_s.gfm_p_set[u][r]));
            worst = std::max(worst, std::abs(log_c.gfm_p_inj[u][r] - log_s.gfm_p_inj[u][r]));
        }
    }
    for (std::size_t u = 0; u < log_c.sg_names.size(); ++u)
        for (std::size_t r = 0; r < log_c.record_count(); ++r)
            worst = std::max(worst, std::abs(log_c.sg_omega[u][r] - log_s.sg_omega[u][r]));
    report(3, worst <= 1e-9,
           "minimal invasiveness: max |consensus - safety-consensus| over all samples = " +
               fmt(worst));

    // 4: droop-weighted set-points agree across units at steady state.
    const bool sharing =
        sum_c.sharing_mismatch_pu <= 1e-3 && sum_s.sharing_mismatch_pu <= 1e-3;
    report(4, sharing,
           "power sharing: final max |m_p_i P_i - m_p_j P_j| = " +
               fmt(std::max(sum_c.sharing_mismatch_pu, sum_s.sharing_mismatch_pu)) + " p.u.");
}

// Criterion 5: barrier-derived bounds are always ordered.
static void criterion_5() {
    ControlConfig cfg;  // published gains
    GfmParams gfm;      // m_p = 0.05, tau = 0.01, S = 1
    std::mt19937 rng(118999);
    const double dw = cfg.delta_omega();
    std::uniform_real_distribution<double> w(cfg.omega0 - 3.0 * dw, cfg.omega0 + 3.0 * dw);
    std::uniform_real_distribution<double> p(-2.0, 2.0);
    int violations = 0;
    for (int i = 0; i < 100000; ++i) {
        const auto b = safety_bounds(w(rng), p(rng), gfm, cfg);
        if (!(b.low < b.up)) ++violations;
    }
    report(5, violations == 0,
           "bound ordering: " + std::to_string(violations) + " violations in 100000 samples");
}

// Criterion 6: beyond the delta margin the composed set-point always pushes
// the frequency back toward the band.
static void criterion_6() {
    ControlConfig cfg;
    GfmParams gfm;
    const double dw = cfg.delta_omega();
    const double delta = delta_margin(gfm, cfg);
    const double admissible = gfm.s_rating - delta / gfm.m_p;
    std::mt19937 rng(271828);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_real_distribution<double> p(-2.0, 2.0);
    int violations = 0;
    for (int i = 0; i < 10000; ++i) {
        const bool upper = (i % 2) == 0;
        const double excess = delta + u(rng) * (2.0 * dw - delta);
        const double omega = upper ? cfg.omega_max + excess : cfg.omega_min - excess;
        const double p_inj = p(rng);
        const double p_con = (2.0 * u(rng) - 1.0) * admissible;
        const double composed = compose_safety_consensus(p_con, safety_bounds(omega, p_inj, gfm, cfg));
        const double d_omega = (cfg.omega0 - omega + gfm.m_p * (composed - p_inj)) / gfm.tau;
        if (upper ? d_omega >= 0.0 : d_omega <= 0.0) ++violations;
    }
    report(6, violations == 0,
           "override direction: " + std::to_string(violations) + " violations in 10000 samples");
}

// Criterion 7: Newton mismatch on the fixtures, the 3-bus oracle, and the
// integrator order check.
static void criterion_7(const SystemConfig& cfg) {
    // Newton on the bundled fixture.
    PowerSystem sys = cfg.system;
    Simulator sim(sys, cfg.control, cfg.graph, ScheduleConfig::from(cfg.control, 1e-3, 0.1));
    bool newton_ok = true;
    std::string newton_note;
    try {
        sim.initialize();
    } catch (const Error& e) {
        newton_ok = false;
        newton_note = e.what();
    }

    // 3-bus solve against a coarse-to-fine grid-search of the injection sums.
    GridModel m;
    m.add_bus(1, BusKind::SgInternal);
    m.add_bus(2, BusKind::Load, 0.5, 0.0);
    m.add_bus(3, BusKind::Passive);
    m.add_branch(1, 2, 0.0, -10.0);
    m.add_branch(1, 3, 0.0, -10.0);
    m.assemble();
    std::vector<BoundarySpec> spec(3);
    spec[0] = {BusBoundary::Fixed, 0.0, 0.0};
    spec[1] = {BusBoundary::PQ, -0.5, 0.0};
    spec[2] = {BusBoundary::PQ, 0.0, 0.0};
    const auto stats = solve_network(m, spec);

    const double B[3][3] = {{-20.0, 10.0, 10.0}, {10.0, -10.0, 0.0}, {10.0, 0.0, -10.0}};
    double lo_v = 0.8, hi_v = 1.1, lo_a = -0.3, hi_a = 0.1, best_v = 1.0, best_a = 0.0;
    for (int level = 0; level < 9; ++level) {
        double best = 1e30;
        for (int iv = 0; iv <= 40; ++iv) {
            for (int ia = 0; ia <= 40; ++ia) {
                const double v2 = lo_v + (hi_v - lo_v) * iv / 40.0;
                const double a2 = lo_a + (hi_a - lo_a) * ia / 40.0;
                const double v[3] = {1.0, v2, 1.0};
                const double a[3] = {0.0, a2, 0.0};
                double mp = 0.5, mq = 0.0;  // injection sums at bus 2 plus spec
                for (int k = 0; k < 3; ++k) {
                    mp += v[1] * v[k] * B[1][k] * std::sin(a[1] - a[k]);
                    mq += v[1] * v[k] * (-B[1][k]) * std::cos(a[1] - a[k]);
                }
                const double miss = std::max(std::abs(mp), std::abs(mq));
                if (miss < best) {
                    best = miss;
                    best_v = v2;
                    best_a = a2;
                }
            }
        }
        const double dv = (hi_v - lo_v) / 40.0, da = (hi_a - lo_a) / 40.0;
        lo_v = best_v - dv;
        hi_v = best_v + dv;
        lo_a = best_a - da;
        hi_a = best_a + da;
    }
    const double oracle_err = std::max(std::abs(m.bus(1).v_mag - best_v),
                                       std::abs(m.bus(1).v_ang - best_a));

    // Integrator order: end-state error should fall ~16x when h halves.
    PowerSystem small;
    small.omega0 = cfg.system.omega0;
    small.grid.add_bus(1, BusKind::Passive);
    small.grid.add_bus(2, BusKind::Load, 0.5, 0.0);
    small.grid.add_branch(1, 2, 0.0, -10.0);
    SgUnit sg;
    sg.name = "SG1";
    sg.bus_id = 1;
    sg.params.x_coupling = 0.1;
    sg.params.emf = 1.02;
    small.sgs.push_back(sg);
    GfmUnit g;
    g.name = "GFM1";
    g.bus_id = 2;
    g.params.x_coupling = 0.05;
    small.gfms.push_back(g);
    small.build();
    ControlConfig ctrl;
    ctrl.mode = ControlMode::NoSecondary;
    ScenarioScript kick;
    kick.events.push_back({0.0, EventKind::LoadStep, "2", 0.2, MagnitudeBasis::AbsolutePu});
    auto end_state = [&](double h) {
        Simulator s(small, ctrl, CommGraph::ring(1), ScheduleConfig::from(ctrl, h, 0.08));
        s.set_solver_tolerance(1e-12);
        const auto log = s.run(kick);
        return std::array<double, 3>{log.sg_omega[0].back(), log.gfm_omega[0].back(),
                                     log.gfm_emag[0].back()};
    };
    const auto ref = end_state(3.125e-4);
    auto err = [&](double h) {
        const auto v = end_state(h);
        double worst = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i)
            worst = std::max(worst, std::abs(v[i] - ref[i]));
        return worst;
    };
    const double e1 = err(5e-3);
    const double e2 = err(2.5e-3);
    const double ratio = e1 / e2;
    const bool order_ok = ratio > 8.0 && ratio < 40.0;

    report(7, newton_ok && stats.max_mismatch <= 1e-8 && oracle_err <= 1e-6 && order_ok,
           "numerical core: fixture initialization " + std::string(newton_ok ? "ok" : newton_note) +
               ", 3-bus mismatch " + fmt(stats.max_mismatch) + ", oracle deviation " +
               fmt(oracle_err) + ", order ratio " + fmt(ratio));
}

// Criterion 8: zero-order hold. The emitted trajectories.csv may only change
// consensus set-points on the 4 s grid and applied set-points on the 0.05 s
// grid.
static void criterion_8(const Runs& runs) {
    const std::string csv = render_trajectories_csv(runs.safety);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    std::vector<std::string> header;
    {
        std::istringstream hs(line);
        std::string col;
        while (std::getline(hs, col, ',')) header.push_back(col);
    }
    std::vector<int> con_cols, set_cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c].rfind("pset_con_", 0) == 0) con_cols.push_back(static_cast<int>(c));
        else if (header[c].rfind("pset_", 0) == 0) set_cols.push_back(static_cast<int>(c));
    }
    auto on_grid = [](double t, double period) {
        const double r = t / period;
        return std::abs(r - std::round(r)) < 1e-6;
    };
    std::vector<double> prev;
    int bad_con = 0, bad_set = 0;
    bool first = true;
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::istringstream rs(line);
        std::string cell;
        while (std::getline(rs, cell, ',')) row.push_back(std::stod(cell));
        if (!first) {
            for (int c : con_cols)
                if (row[static_cast<std::size_t>(c)] != prev[static_cast<std::size_t>(c)] &&
                    !on_grid(row[0], 4.0))
                    ++bad_con;
            for (int c : set_cols)
                if (row[static_cast<std::size_t>(c)] != prev[static_cast<std::size_t>(c)] &&
                    !on_grid(row[0], 0.05))
                    ++bad_set;
        }
        prev = std::move(row);
        first = false;
    }
    report(8, bad_con == 0 && bad_set == 0,
           "zero-order hold: " + std::to_string(bad_con) + " off-grid consensus changes, " +
               std::to_string(bad_set) + " off-grid set-point changes in trajectories.csv");
}

// Criterion 9: repeated runs are byte-identical.
static void criterion_9(const SystemConfig& cfg) {
    const auto sc = parse_scenario(kDataDir + "/sc3.scn", cfg);
    const auto a = run_mode(cfg, sc, ControlMode::SafetyConsensus, 10.0);
    const auto b = run_mode(cfg, sc, ControlMode::SafetyConsensus, 10.0);
    const bool same = render_trajectories_csv(a) == render_trajectories_csv(b) &&
                      render_heatmap_csv(a) == render_heatmap_csv(b) &&
                      render_summary(summarize(a, sc.last_event_time())) ==
                          render_summary(summarize(b, sc.last_event_time()));
    report(9, same, std::string("determinism: repeated runs byte-identical: ") +
                        (same ? "yes" : "no"));
}

int main() {
    std::printf("gfmsim acceptance suite (fixture: %s)\n", (kDataDir + "/desk9.sys").c_str());
    try {
        const auto cfg = parse_system(kDataDir + "/desk9.sys");
        const Runs runs = criterion_1(cfg);
        criteria_2_3_4(cfg);
        criterion_5();
        criterion_6();
        criterion_7(cfg);
        criterion_8(runs);
        criterion_9(cfg);
    } catch (const Error& e) {
        std::printf("[FAIL] acceptance suite aborted: %s\n", e.what());
        return 99;
    }
    std::printf("%d criterion(s) failed\n", g_failures);
    return g_failures;
}
