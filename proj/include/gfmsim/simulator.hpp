#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <type_traits>
#include <vector>

#include "gfmsim/common.hpp"
#include "gfmsim/control.hpp"
#include "gfmsim/devices.hpp"
#include "gfmsim/network.hpp"
#include "gfmsim/scenario.hpp"
#include "gfmsim/system.hpp"

namespace gfmsim {

// ---------------------------------------------------------------------------
// Multi-rate schedule: integration grid plus the two control-layer periods.
// ---------------------------------------------------------------------------

struct ScheduleConfig {
    double step = 1e-3;      // integration step h, s
    double end_time = 10.0;  // s
    double safety_period = 0.05;
    double consensus_period = 4.0;

    static ScheduleConfig from(const ControlConfig& ctrl, double step, double end_time) {
        ScheduleConfig s;
        s.step = step;
        s.end_time = end_time;
        s.safety_period = ctrl.safety_period;
        s.consensus_period = ctrl.consensus_period;
        return s;
    }

    static long exact_multiple(double period, double base, const std::string& what) {
        const long n = std::lround(period / base);
        if (n < 1 || std::abs(static_cast<double>(n) * base - period) >
                         1e-9 * std::max(1.0, period))
            throw ConfigError(what + " (" + format_sig12(period) +
                              ") must be a positive integer multiple of " + format_sig12(base));
        return n;
    }

    void validate() const {
        if (!(step > 0.0)) throw ConfigError("integration step must be positive");
        if (!(end_time > 0.0)) throw ConfigError("end time must be positive");
        if (step > safety_period + 1e-15)
            throw ConfigError("integration step must not exceed the safety period");
        exact_multiple(safety_period, step, "safety period");
        exact_multiple(consensus_period, step, "consensus period");
        exact_multiple(consensus_period, safety_period, "consensus period vs safety period");
    }

    long steps_per_safety() const { return exact_multiple(safety_period, step, "safety period"); }
    long steps_per_consensus() const {
        return exact_multiple(consensus_period, step, "consensus period");
    }
    long total_steps() const {
        return static_cast<long>(std::ceil(end_time / step - 1e-9));
    }
};

// ---------------------------------------------------------------------------
// Trajectory log: one record per grid time, columnar.
// ---------------------------------------------------------------------------

struct TrajectoryLog {
    double omega0 = 0.0;
    double f0_hz = 60.0;
    double f_min_hz = 59.5;
    double f_max_hz = 60.5;
    std::string mode;

    std::vector<std::string> sg_names;
    std::vector<std::string> gfm_names;
    std::vector<double> gfm_m_p;
    std::vector<int> bus_ids;  // file-declared buses (device-internal buses excluded)

    std::vector<double> time;
    std::vector<std::vector<double>> sg_theta, sg_omega, sg_pmech;  // [unit][record]
    std::vector<std::vector<double>> gfm_theta, gfm_omega, gfm_verr, gfm_emag;
    std::vector<std::vector<double>> gfm_p_consensus, gfm_p_low, gfm_p_up, gfm_p_set, gfm_p_inj;
    std::vector<std::vector<double>> bus_v, bus_f_hz;  // [bus][record]
    std::vector<double> coi_hz;
    std::vector<double> total_load_p;

    struct Marker {
        double time = 0.0;
        std::string text;
    };
    std::vector<Marker> event_markers;
    std::vector<std::string> diagnostics;

    std::size_t record_count() const { return time.size(); }
};

/// Inertia-weighted mean frequency over the in-service generators, rad/s.
inline double coi_frequency(const std::vector<SgUnit>& sgs) {
    double num = 0.0;
    double den = 0.0;
    for (const auto& sg : sgs) {
        if (!sg.in_service) continue;
        num += sg.params.inertia * sg.state.omega;
        den += sg.params.inertia;
    }
    if (den == 0.0)
        throw Error("center-of-inertia frequency undefined: no in-service synchronous generator");
    return num / den;
}

struct BusDeviation {
    int bus_id = 0;
    double df_max_hz = 0.0;
};

/// Per-bus maximum |f - f0| over the whole run, Hz.
inline std::vector<BusDeviation> max_deviation_map(const TrajectoryLog& log) {
    std::vector<BusDeviation> out;
    out.reserve(log.bus_ids.size());
    for (std::size_t b = 0; b < log.bus_ids.size(); ++b) {
        double worst = 0.0;
        for (double f : log.bus_f_hz[b]) worst = std::max(worst, std::abs(f - log.f0_hz));
        out.push_back({log.bus_ids[b], worst});
    }
    return out;
}

struct RunSummary {
    std::string mode;
    double max_coi_deviation_hz = 0.0;
    double violation_depth_hz = 0.0;     // 0 when the CoI frequency never left the safe band
    double steady_state_deviation_hz = 0.0;
    double settling_time_s = -1.0;       // after the last event; -1 when never settled
    double sharing_mismatch_pu = 0.0;    // max over pairs |m_p_i P_i - m_p_j P_j| at end time
};

inline RunSummary summarize(const TrajectoryLog& log, double last_event_time,
                            double settle_tol_hz = 0.01) {
    RunSummary s;
    s.mode = log.mode;
    for (double f : log.coi_hz) {
        s.max_coi_deviation_hz = std::max(s.max_coi_deviation_hz, std::abs(f - log.f0_hz));
        const double depth = std::max(log.f_min_hz - f, f - log.f_max_hz);
        s.violation_depth_hz = std::max(s.violation_depth_hz, depth);
    }
    s.violation_depth_hz = std::max(s.violation_depth_hz, 0.0);
    if (!log.coi_hz.empty())
        s.steady_state_deviation_hz = std::abs(log.coi_hz.back() - log.f0_hz);

    // First time T >= last event with |f - f0| <= tol for every later sample.
    std::size_t hold_from = log.record_count();
    for (std::size_t i = log.record_count(); i-- > 0;) {
        if (std::abs(log.coi_hz[i] - log.f0_hz) <= settle_tol_hz)
            hold_from = i;
        else
            break;
    }
    if (hold_from < log.record_count())
        s.settling_time_s = std::max(0.0, log.time[hold_from] - last_event_time);

    if (!log.gfm_names.empty() && log.record_count() > 0) {
        const std::size_t last = log.record_count() - 1;
        for (std::size_t i = 0; i < log.gfm_names.size(); ++i) {
            for (std::size_t j = i + 1; j < log.gfm_names.size(); ++j) {
                const double d = std::abs(log.gfm_m_p[i] * log.gfm_p_consensus[i][last] -
                                          log.gfm_m_p[j] * log.gfm_p_consensus[j][last]);
                s.sharing_mismatch_pu = std::max(s.sharing_mismatch_pu, d);
            }
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Simulator: fixed-step integration of the coupled device-network system with
// the two-layer control schedule and timed disturbances.
// ---------------------------------------------------------------------------

class Simulator {
public:
    Simulator(PowerSystem system, ControlConfig control, CommGraph graph, ScheduleConfig sched)
        : sys_(std::move(system)),
          ctrl_(control),
          graph_(std::move(graph)),
          sched_(sched) {
        ctrl_.validate();
        sched_.validate();
        graph_.validate();
        if (graph_.size() != static_cast<int>(sys_.gfms.size()))
            throw ConfigError("communication graph size does not match the number of GFM units");
        steps_per_safety_ = sched_.steps_per_safety();
        steps_per_consensus_ = sched_.steps_per_consensus();
    }

    /// Hard-abort band around nominal frequency, Hz. Exceeding it terminates
    /// the run instead of producing divergent output.
    void set_abort_band_hz(double band) { abort_band_hz_ = band; }

    /// Mismatch tolerance of the per-stage network solves.
    void set_solver_tolerance(double tol) { solve_opt_.tolerance = tol; }

    const PowerSystem& system() const { return sys_; }
    const ControlConfig& control() const { return ctrl_; }
    double time() const { return static_cast<double>(step_index_) * sched_.step; }

    /// Solves the pre-disturbance operating point and seeds all device states
    /// so that every derivative vanishes: SG dispatches carry the load, GFM
    /// units start dormant with zero injection.
    void initialize() {
        const int n = sys_.grid.size();
        sys_.grid.assemble();
        sys_.grid.check_connected();

        int slack = -1;
        double inertia_sum = 0.0;
        for (const auto& sg : sys_.sgs) {
            if (!sg.in_service) continue;
            if (slack < 0) slack = static_cast<int>(&sg - sys_.sgs.data());
            inertia_sum += sg.params.inertia;
        }
        if (slack < 0) throw ConfigError("system has no in-service synchronous generator");

        // Flat start; SG internal magnitudes pinned to their EMF.
        for (int i = 0; i < n; ++i) {
            sys_.grid.bus(i).v_mag = 1.0;
            sys_.grid.bus(i).v_ang = 0.0;
        }
        const double total_load = sys_.grid.total_load_p();
        std::vector<BoundarySpec> spec(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const Bus& b = sys_.grid.bus(i);
            spec[static_cast<std::size_t>(i)] = {BusBoundary::PQ, -b.load_p, -b.load_q};
        }
        for (std::size_t u = 0; u < sys_.sgs.size(); ++u) {
            auto& sg = sys_.sgs[u];
            if (!sg.in_service) continue;
            sys_.grid.bus(sg.internal_bus).v_mag = sg.params.emf;
            auto& sp = spec[static_cast<std::size_t>(sg.internal_bus)];
            if (static_cast<int>(u) == slack) {
                sp.type = BusBoundary::Fixed;
            } else {
                // Dispatch shared in proportion to inertia; the slack unit
                // absorbs the network losses on top of its own share.
                sp.type = BusBoundary::PV;
                sp.p = total_load * sg.params.inertia / inertia_sum;
            }
        }

        // Tight enough that the residual GFM injection keeps every derivative
        // under the 1e-9 equilibrium gate, yet above the float noise floor of
        // large per-unit loadings.
        SolveOptions opt;
        opt.tolerance = 1e-10;
        opt.max_iterations = 50;
        try {
            solve_network(sys_.grid, spec, opt);
        } catch (const SolverError& e) {
            throw SolverError("no pre-disturbance equilibrium found: " + std::string(e.what()),
                              e.mismatch);
        }

        for (auto& sg : sys_.sgs) {
            if (!sg.in_service) continue;
            sg.dispatch = sys_.grid.injection_at(sg.internal_bus).p;
            sg.state.theta = sys_.grid.bus(sg.internal_bus).v_ang;
            sg.state.omega = sys_.omega0;
            sg.state.p_mech = 0.0;
        }
        for (auto& g : sys_.gfms) {
            if (!g.in_service) continue;
            const Bus& internal = sys_.grid.bus(g.internal_bus);
            g.state.theta = internal.v_ang;
            g.state.omega = sys_.omega0;
            g.state.e_mag = internal.v_mag;
            g.state.v_err = 0.0;
            g.state.p_set = 0.0;
            const double v_term =
                sys_.grid.bus(sys_.grid.index_of(g.bus_id)).v_mag;
            const double q_inj = sys_.grid.injection_at(g.internal_bus).q;
            g.params.v_set = v_term - g.params.m_q * (g.params.q_set - q_inj);
        }

        rebuild_boundary_spec();
        refresh_measurements();

        double residual = 0.0;
        for (const auto& sg : sys_.sgs) {
            if (!sg.in_service) continue;
            auto d = sg_derivatives(sg.state, sg.params,
                                    sg_p_meas_[index_of(sg)] - sg.dispatch, sys_.omega0);
            residual = std::max({residual, std::abs(d.d_theta), std::abs(d.d_omega),
                                 std::abs(d.d_p_mech)});
        }
        for (const auto& g : sys_.gfms) {
            if (!g.in_service) continue;
            const std::size_t i = index_of(g);
            auto d = gfm_derivatives(g.state, g.params, gfm_p_meas_[i], gfm_q_meas_[i],
                                     gfm_v_meas_[i], sys_.omega0);
            residual = std::max({residual, std::abs(d.d_theta), std::abs(d.d_omega),
                                 std::abs(d.d_v_err), std::abs(d.d_e_mag)});
        }
        if (residual >= 1e-9)
            throw SimulationError("no equilibrium: derivative max-norm " +
                                      format_sig12(residual) + " at t=0",
                                  0.0);

        p_consensus_.assign(sys_.gfms.size(), 0.0);
        held_bounds_.assign(sys_.gfms.size(), SetpointBounds{});
        capacity_flag_.assign(sys_.gfms.size(), false);
        capacity_episode_.assign(sys_.gfms.size(), false);
        bus_freq_dev_.assign(external_bus_count(), 0.0);
        snapshot_prev_angles();
        step_index_ = 0;
        initialized_ = true;
    }

    /// Full run: control ticks, event application and logging at each grid
    /// time, integration between them. Deterministic for identical inputs.
    TrajectoryLog run(const ScenarioScript& scenario) {
        for (std::size_t i = 1; i < scenario.events.size(); ++i) {
            if (scenario.events[i].time < scenario.events[i - 1].time)
                throw ConfigError("scenario event times must be nondecreasing");
        }
        if (!initialized_) initialize();

        TrajectoryLog log;
        prepare_log(log);

        std::size_t next_event = 0;
        const long total = sched_.total_steps();
        for (long k = 0; k <= total; ++k) {
            const double t = static_cast<double>(k) * sched_.step;
            try {
                if (k % steps_per_consensus_ == 0) consensus_tick();
                if (k % steps_per_safety_ == 0) safety_tick(log);

                bool fired = false;
                while (next_event < scenario.events.size() &&
                       scenario.events[next_event].time <= t + 1e-9) {
                    const Event& ev = scenario.events[next_event];
                    sys_.apply_event(ev);
                    log.event_markers.push_back({t, describe(ev)});
                    ++next_event;
                    fired = true;
                }
                if (fired) {
                    rebuild_boundary_spec();
                    refresh_measurements();
                    snapshot_prev_angles();
                }

                append_record(log, t);
                if (k == total) break;
                integrate_step();
                refresh_measurements();
                update_bus_frequency();
                check_abort_band(t + sched_.step);
                ++step_index_;
            } catch (const SolverError& e) {
                throw SimulationError(std::string("network solve failed: ") + e.what(), t);
            } catch (const TopologyError& e) {
                throw SimulationError(std::string(e.what()), t);
            }
        }
        return log;
    }

private:
    template <typename Unit>
    std::size_t index_of(const Unit& u) const;

    std::size_t external_bus_count() const {
        std::size_t n = 0;
        for (const auto& b : sys_.grid.buses())
            if (b.kind == BusKind::Load || b.kind == BusKind::Passive) ++n;
        return n;
    }

    void rebuild_boundary_spec() {
        const int n = sys_.grid.size();
        bspec_.assign(static_cast<std::size_t>(n), BoundarySpec{});
        for (int i = 0; i < n; ++i) {
            const Bus& b = sys_.grid.bus(i);
            auto& sp = bspec_[static_cast<std::size_t>(i)];
            if (b.kind == BusKind::SgInternal || b.kind == BusKind::GfmInternal) {
                sp.type = BusBoundary::Fixed;
            } else {
                sp.type = BusBoundary::PQ;
                sp.p = -b.load_p;
                sp.q = -b.load_q;
            }
        }
    }

    /// Pushes the committed device states into the network, solves it and
    /// caches the device injections and terminal voltages.
    void refresh_measurements() {
        write_device_boundaries();
        solve_network(sys_.grid, bspec_, solve_opt_);
        cache_injections();
    }

    void write_device_boundaries() {
        for (const auto& sg : sys_.sgs) {
            if (!sg.in_service) continue;
            Bus& b = sys_.grid.bus(sg.internal_bus);
            b.v_mag = sg.params.emf;
            b.v_ang = sg.state.theta;
        }
        for (const auto& g : sys_.gfms) {
            if (!g.in_service) continue;
            Bus& b = sys_.grid.bus(g.internal_bus);
            b.v_mag = g.state.e_mag;
            b.v_ang = g.state.theta;
        }
    }

    void cache_injections() {
        sg_p_meas_.assign(sys_.sgs.size(), 0.0);
        gfm_p_meas_.assign(sys_.gfms.size(), 0.0);
        gfm_q_meas_.assign(sys_.gfms.size(), 0.0);
        gfm_v_meas_.assign(sys_.gfms.size(), 0.0);
        for (std::size_t u = 0; u < sys_.sgs.size(); ++u) {
            if (!sys_.sgs[u].in_service) continue;
            sg_p_meas_[u] = sys_.grid.injection_at(sys_.sgs[u].internal_bus).p;
        }
        for (std::size_t u = 0; u < sys_.gfms.size(); ++u) {
            const auto& g = sys_.gfms[u];
            if (!g.in_service) continue;
            const auto inj = sys_.grid.injection_at(g.internal_bus);
            gfm_p_meas_[u] = inj.p;
            gfm_q_meas_[u] = inj.q;
            gfm_v_meas_[u] = sys_.grid.bus(sys_.grid.index_of(g.bus_id)).v_mag;
        }
    }

    // --- control layers --------------------------------------------------

    void consensus_tick() {
        if (ctrl_.mode == ControlMode::NoSecondary) return;
        std::vector<double> next = p_consensus_;
        for (std::size_t i = 0; i < sys_.gfms.size(); ++i) {
            const auto& g = sys_.gfms[i];
            if (!g.in_service) continue;
            std::vector<NeighborSetpoint> nbrs;
            for (int j : graph_.neighbors[i]) {
                const auto& other = sys_.gfms[static_cast<std::size_t>(j)];
                if (!other.in_service) continue;
                nbrs.push_back({other.params.m_p, p_consensus_[static_cast<std::size_t>(j)]});
            }
            if (nbrs.empty() && count_in_service_gfms() > 1)
                throw ConfigError("GFM " + g.name +
                                  " lost all consensus neighbors; graph no longer connected");
            next[i] = consensus_update(p_consensus_[i], g.state.omega, g.params.m_p, nbrs,
                                       ctrl_);
        }
        p_consensus_ = next;

        if (ctrl_.mode == ControlMode::Consensus) {
            for (std::size_t i = 0; i < sys_.gfms.size(); ++i) {
                auto& g = sys_.gfms[i];
                if (!g.in_service) continue;
                bool over = false;
                g.state.p_set = capacity_clamp(p_consensus_[i], gfm_q_meas_[i],
                                               g.params.s_rating, &over);
                capacity_flag_[i] = over;
            }
        }
    }

    /// Recomputes the barrier bounds from the latest measurements (all modes,
    /// for observability); applies the composed, capacity-clamped set-point
    /// only in safety-consensus mode.
    void safety_tick(TrajectoryLog& log) {
        for (std::size_t i = 0; i < sys_.gfms.size(); ++i) {
            auto& g = sys_.gfms[i];
            if (!g.in_service) continue;
            held_bounds_[i] = safety_bounds(g.state.omega, gfm_p_meas_[i], g.params, ctrl_);
            if (ctrl_.mode != ControlMode::SafetyConsensus) continue;
            const double composed = compose_safety_consensus(p_consensus_[i], held_bounds_[i]);
            bool over = false;
            g.state.p_set = capacity_clamp(composed, gfm_q_meas_[i], g.params.s_rating, &over);
            if (over && !capacity_flag_[i])
                log.diagnostics.push_back("t=" + format_sig12(time()) + ": GFM " + g.name +
                                          " reactive loading exceeds rating; P set-point forced to 0");
            capacity_flag_[i] = over;
        }
        if (ctrl_.mode != ControlMode::SafetyConsensus) return;
        for (std::size_t i = 0; i < sys_.gfms.size(); ++i) {
            const auto& g = sys_.gfms[i];
            if (!g.in_service) continue;
            if (!check_capacity(gfm_p_meas_[i], gfm_q_meas_[i], g.params.s_rating, 1e-9) &&
                !capacity_episode_[i]) {
                log.diagnostics.push_back("t=" + format_sig12(time()) + ": GFM " + g.name +
                                          " apparent power exceeds rating S=" +
                                          format_sig12(g.params.s_rating));
                capacity_episode_[i] = true;
            } else if (check_capacity(gfm_p_meas_[i], gfm_q_meas_[i], g.params.s_rating, 1e-9)) {
                capacity_episode_[i] = false;
            }
        }
    }

    int count_in_service_gfms() const {
        int n = 0;
        for (const auto& g : sys_.gfms)
            if (g.in_service) ++n;
        return n;
    }

    // --- integration ------------------------------------------------------

    std::vector<double> gather_state() const {
        std::vector<double> x;
        for (const auto& sg : sys_.sgs) {
            if (!sg.in_service) continue;
            x.push_back(sg.state.theta);
            x.push_back(sg.state.omega);
            x.push_back(sg.state.p_mech);
        }
        for (const auto& g : sys_.gfms) {
            if (!g.in_service) continue;
            x.push_back(g.state.theta);
            x.push_back(g.state.omega);
            x.push_back(g.state.v_err);
            x.push_back(g.state.e_mag);
        }
        return x;
    }

    void scatter_state(const std::vector<double>& x) {
        std::size_t k = 0;
        for (auto& sg : sys_.sgs) {
            if (!sg.in_service) continue;
            sg.state.theta = x[k++];
            sg.state.omega = x[k++];
            sg.state.p_mech = x[k++];
        }
        for (auto& g : sys_.gfms) {
            if (!g.in_service) continue;
            g.state.theta = x[k++];
            g.state.omega = x[k++];
            g.state.v_err = x[k++];
            g.state.e_mag = x[k++];
        }
    }

    /// Derivative field at the device states currently scattered into the
    /// system, solving the algebraic network first.
    std::vector<double> derivative(bool resolve) {
        if (resolve) refresh_measurements();
        std::vector<double> d;
        for (const auto& sg : sys_.sgs) {
            if (!sg.in_service) continue;
            auto dv = sg_derivatives(sg.state, sg.params,
                                     sg_p_meas_[index_of(sg)] - sg.dispatch, sys_.omega0);
            d.push_back(dv.d_theta);
            d.push_back(dv.d_omega);
            d.push_back(dv.d_p_mech);
        }
        for (const auto& g : sys_.gfms) {
            if (!g.in_service) continue;
            const std::size_t i = index_of(g);
            auto dv = gfm_derivatives(g.state, g.params, gfm_p_meas_[i], gfm_q_meas_[i],
                                      gfm_v_meas_[i], sys_.omega0);
            d.push_back(dv.d_theta);
            d.push_back(dv.d_omega);
            d.push_back(dv.d_v_err);
            d.push_back(dv.d_e_mag);
        }
        return d;
    }

    /// Classical 4th-order step; the network is re-solved at every stage.
    void integrate_step() {
        const double h = sched_.step;
        const std::vector<double> x0 = gather_state();
        const std::size_t n = x0.size();

        auto axpy = [&](const std::vector<double>& base, double a,
                        const std::vector<double>& dir) {
            std::vector<double> out(n);
            for (std::size_t i = 0; i < n; ++i) out[i] = base[i] + a * dir[i];
            return out;
        };

        // Measurements are already current for x0; skip the redundant solve.
        const std::vector<double> k1 = derivative(false);
        scatter_state(axpy(x0, 0.5 * h, k1));
        const std::vector<double> k2 = derivative(true);
        scatter_state(axpy(x0, 0.5 * h, k2));
        const std::vector<double> k3 = derivative(true);
        scatter_state(axpy(x0, h, k3));
        const std::vector<double> k4 = derivative(true);

        std::vector<double> x1(n);
        for (std::size_t i = 0; i < n; ++i)
            x1[i] = x0[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        scatter_state(x1);
    }

    void check_abort_band(double t) const {
        const double band = abort_band_hz_ * kTwoPi;
        for (const auto& sg : sys_.sgs) {
            if (sg.in_service && std::abs(sg.state.omega - sys_.omega0) > band)
                throw SimulationError("SG " + sg.name + " frequency left the +/-" +
                                          format_sig12(abort_band_hz_) + " Hz abort band",
                                      t);
        }
        for (const auto& g : sys_.gfms) {
            if (g.in_service && std::abs(g.state.omega - sys_.omega0) > band)
                throw SimulationError("GFM " + g.name + " frequency left the +/-" +
                                          format_sig12(abort_band_hz_) + " Hz abort band",
                                      t);
        }
    }

    // --- bus frequency estimate -------------------------------------------

    void snapshot_prev_angles() {
        prev_ang_.clear();
        for (const auto& b : sys_.grid.buses())
            if (b.kind == BusKind::Load || b.kind == BusKind::Passive)
                prev_ang_.push_back(b.v_ang);
    }

    /// First-order filtered angle derivative; filter time constant equal to
    /// the safety period.
    void update_bus_frequency() {
        const double h = sched_.step;
        const double gain = h / sched_.safety_period;
        std::size_t k = 0;
        for (const auto& b : sys_.grid.buses()) {
            if (b.kind != BusKind::Load && b.kind != BusKind::Passive) continue;
            const double raw = std::remainder(b.v_ang - prev_ang_[k], kTwoPi) / h;
            bus_freq_dev_[k] += gain * (raw - bus_freq_dev_[k]);
            prev_ang_[k] = b.v_ang;
            ++k;
        }
    }

    // --- logging ------------------------------------------------------------

    void prepare_log(TrajectoryLog& log) const {
        log.omega0 = sys_.omega0;
        log.f0_hz = sys_.omega0 / kTwoPi;
        log.f_min_hz = ctrl_.omega_min / kTwoPi;
        log.f_max_hz = ctrl_.omega_max / kTwoPi;
        log.mode = to_string(ctrl_.mode);
        for (const auto& sg : sys_.sgs) log.sg_names.push_back(sg.name);
        for (const auto& g : sys_.gfms) {
            log.gfm_names.push_back(g.name);
            log.gfm_m_p.push_back(g.params.m_p);
        }
        for (const auto& b : sys_.grid.buses())
            if (b.kind == BusKind::Load || b.kind == BusKind::Passive)
                log.bus_ids.push_back(b.id);
        const std::size_t records = static_cast<std::size_t>(sched_.total_steps()) + 1;
        auto reserve_all = [&](std::vector<std::vector<double>>& v, std::size_t units) {
            v.assign(units, {});
            for (auto& col : v) col.reserve(records);
        };
        reserve_all(log.sg_theta, sys_.sgs.size());
        reserve_all(log.sg_omega, sys_.sgs.size());
        reserve_all(log.sg_pmech, sys_.sgs.size());
        reserve_all(log.gfm_theta, sys_.gfms.size());
        reserve_all(log.gfm_omega, sys_.gfms.size());
        reserve_all(log.gfm_verr, sys_.gfms.size());
        reserve_all(log.gfm_emag, sys_.gfms.size());
        reserve_all(log.gfm_p_consensus, sys_.gfms.size());
        reserve_all(log.gfm_p_low, sys_.gfms.size());
        reserve_all(log.gfm_p_up, sys_.gfms.size());
        reserve_all(log.gfm_p_set, sys_.gfms.size());
        reserve_all(log.gfm_p_inj, sys_.gfms.size());
        reserve_all(log.bus_v, log.bus_ids.size());
        reserve_all(log.bus_f_hz, log.bus_ids.size());
        log.time.reserve(records);
        log.coi_hz.reserve(records);
        log.total_load_p.reserve(records);
    }

    void append_record(TrajectoryLog& log, double t) {
        log.time.push_back(t);
        for (std::size_t u = 0; u < sys_.sgs.size(); ++u) {
            const auto& sg = sys_.sgs[u];
            log.sg_theta[u].push_back(sg.state.theta);
            log.sg_omega[u].push_back(sg.state.omega);
            log.sg_pmech[u].push_back(sg.in_service ? sg.dispatch + sg.state.p_mech : 0.0);
        }
        for (std::size_t u = 0; u < sys_.gfms.size(); ++u) {
            const auto& g = sys_.gfms[u];
            log.gfm_theta[u].push_back(g.state.theta);
            log.gfm_omega[u].push_back(g.state.omega);
            log.gfm_verr[u].push_back(g.state.v_err);
            log.gfm_emag[u].push_back(g.state.e_mag);
            log.gfm_p_consensus[u].push_back(p_consensus_[u]);
            log.gfm_p_low[u].push_back(held_bounds_[u].low);
            log.gfm_p_up[u].push_back(held_bounds_[u].up);
            log.gfm_p_set[u].push_back(g.state.p_set);
            log.gfm_p_inj[u].push_back(g.in_service ? gfm_p_meas_[u] : 0.0);
        }
        std::size_t k = 0;
        for (const auto& b : sys_.grid.buses()) {
            if (b.kind != BusKind::Load && b.kind != BusKind::Passive) continue;
            log.bus_v[k].push_back(b.v_mag);
            log.bus_f_hz[k].push_back((sys_.omega0 + bus_freq_dev_[k]) / kTwoPi);
            ++k;
        }
        log.coi_hz.push_back(coi_frequency(sys_.sgs) / kTwoPi);
        log.total_load_p.push_back(sys_.grid.total_load_p());
    }

    static std::string describe(const Event& ev) {
        switch (ev.kind) {
            case EventKind::LoadStep:
                return "load_step bus " + ev.target + " magnitude " +
                       format_sig12(ev.magnitude) +
                       (ev.basis == MagnitudeBasis::FractionOfTotalLoad ? " (fraction of total load)"
                                                                        : " p.u.");
            case EventKind::GenTrip:
                return "gen_trip " + ev.target;
            case EventKind::BranchTrip:
                return "branch_trip " + ev.target;
        }
        return "event";
    }

    PowerSystem sys_;
    ControlConfig ctrl_;
    CommGraph graph_;
    ScheduleConfig sched_;
    SolveOptions solve_opt_{};
    double abort_band_hz_ = 5.0;

    bool initialized_ = false;
    long step_index_ = 0;
    long steps_per_safety_ = 1;
    long steps_per_consensus_ = 1;

    std::vector<BoundarySpec> bspec_;
    std::vector<double> p_consensus_;
    std::vector<SetpointBounds> held_bounds_;
    std::vector<bool> capacity_flag_;
    std::vector<bool> capacity_episode_;

    std::vector<double> sg_p_meas_, gfm_p_meas_, gfm_q_meas_, gfm_v_meas_;
    std::vector<double> bus_freq_dev_, prev_ang_;
};

template <typename Unit>
std::size_t Simulator::index_of(const Unit& u) const {
    if constexpr (std::is_same_v<Unit, SgUnit>) {
        return static_cast<std::size_t>(&u - sys_.sgs.data());
    } else {
        return static_cast<std::size_t>(&u - sys_.gfms.data());
    }
}

/// Convenience wrapper: build, run, return the log.
inline TrajectoryLog run_scenario(const PowerSystem& system, const ControlConfig& control,
                                  const CommGraph& graph, const ScheduleConfig& sched,
                                  const ScenarioScript& scenario) {
    Simulator sim(system, control, graph, sched);
    return sim.run(scenario);
}

}  // namespace gfmsim
