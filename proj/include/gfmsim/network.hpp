#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gfmsim/common.hpp"

namespace gfmsim {

enum class BusKind { SgInternal, GfmInternal, Load, Passive };

struct Bus {
    int id = 0;  // file ids are positive; device-internal buses get negative ids
    BusKind kind = BusKind::Passive;
    double v_mag = 1.0;   // current solution, p.u.
    double v_ang = 0.0;   // current solution, rad
    double load_p = 0.0;  // p.u., consumption positive; nonzero only for Load buses
    double load_q = 0.0;
    bool active = true;
};

struct Branch {
    int from = 0;    // bus ids
    int to = 0;
    double g = 0.0;  // series conductance, p.u.
    double b = 0.0;  // series susceptance, p.u.
    bool in_service = true;
};

struct DeviceCoupling {
    int internal_bus = -1;  // bus indices, not ids
    int terminal_bus = -1;
    double reactance = 0.0;
    bool in_service = true;
};

struct AdmittanceMatrix {
    Eigen::MatrixXd G;
    Eigen::MatrixXd B;

    int size() const { return static_cast<int>(G.rows()); }
};

/// Nodal admittance matrix over the in-service branch/coupling set. Rows of
/// inactive buses stay zero.
inline AdmittanceMatrix assemble_ybus(const std::vector<Bus>& buses,
                                      const std::vector<Branch>& branches,
                                      const std::vector<DeviceCoupling>& couplings,
                                      const std::map<int, int>& id_to_index) {
    const int n = static_cast<int>(buses.size());
    AdmittanceMatrix y;
    y.G = Eigen::MatrixXd::Zero(n, n);
    y.B = Eigen::MatrixXd::Zero(n, n);

    auto stamp = [&](int i, int k, double g, double b) {
        y.G(i, i) += g;
        y.B(i, i) += b;
        y.G(k, k) += g;
        y.B(k, k) += b;
        y.G(i, k) -= g;
        y.B(i, k) -= b;
        y.G(k, i) -= g;
        y.B(k, i) -= b;
    };

    for (const auto& br : branches) {
        if (!br.in_service) continue;
        const int i = id_to_index.at(br.from);
        const int k = id_to_index.at(br.to);
        if (!buses[static_cast<std::size_t>(i)].active ||
            !buses[static_cast<std::size_t>(k)].active)
            continue;
        stamp(i, k, br.g, br.b);
    }
    for (const auto& c : couplings) {
        if (!c.in_service) continue;
        if (!buses[static_cast<std::size_t>(c.internal_bus)].active ||
            !buses[static_cast<std::size_t>(c.terminal_bus)].active)
            continue;
        require(c.reactance > 0.0, "coupling reactance must be positive");
        stamp(c.internal_bus, c.terminal_bus, 0.0, -1.0 / c.reactance);
    }
    return y;
}

struct PowerInjection {
    double p = 0.0;
    double q = 0.0;
};

/// Active/reactive injection at bus i for the given voltage profile.
inline PowerInjection power_injection(std::span<const double> v_mag,
                                      std::span<const double> v_ang,
                                      const AdmittanceMatrix& y, int i) {
    const int n = y.size();
    double p = 0.0;
    double q = 0.0;
    for (int k = 0; k < n; ++k) {
        const double g = y.G(i, k);
        const double b = y.B(i, k);
        if (g == 0.0 && b == 0.0) continue;
        const double d = v_ang[static_cast<std::size_t>(i)] - v_ang[static_cast<std::size_t>(k)];
        const double vk = v_mag[static_cast<std::size_t>(k)];
        p += vk * (g * std::cos(d) + b * std::sin(d));
        q += vk * (g * std::sin(d) - b * std::cos(d));
    }
    p *= v_mag[static_cast<std::size_t>(i)];
    q *= v_mag[static_cast<std::size_t>(i)];
    return {p, q};
}

// ---------------------------------------------------------------------------
// Static network description plus the current voltage solution.
// ---------------------------------------------------------------------------

class GridModel {
public:
    int add_bus(int id, BusKind kind, double load_p = 0.0, double load_q = 0.0) {
        if (id_to_index_.count(id))
            throw TopologyError("duplicate bus id " + std::to_string(id));
        Bus bus;
        bus.id = id;
        bus.kind = kind;
        bus.load_p = load_p;
        bus.load_q = load_q;
        const int idx = static_cast<int>(buses_.size());
        buses_.push_back(bus);
        id_to_index_[id] = idx;
        return idx;
    }

    /// Device-internal bus behind a coupling reactance; returns its index.
    int add_device_bus(BusKind kind, int terminal_id, double reactance) {
        const int internal_id = next_internal_id_--;
        const int idx = add_bus(internal_id, kind);
        DeviceCoupling c;
        c.internal_bus = idx;
        c.terminal_bus = index_of(terminal_id);
        c.reactance = reactance;
        couplings_.push_back(c);
        return idx;
    }

    void add_branch(int from_id, int to_id, double g, double b, bool in_service = true) {
        if (from_id == to_id)
            throw TopologyError("branch endpoints coincide at bus " + std::to_string(from_id));
        index_of(from_id);
        index_of(to_id);
        branches_.push_back({from_id, to_id, g, b, in_service});
    }

    int index_of(int bus_id) const {
        auto it = id_to_index_.find(bus_id);
        if (it == id_to_index_.end())
            throw TopologyError("unknown bus id " + std::to_string(bus_id));
        return it->second;
    }

    bool has_bus(int bus_id) const { return id_to_index_.count(bus_id) != 0; }

    int size() const { return static_cast<int>(buses_.size()); }
    const std::vector<Bus>& buses() const { return buses_; }
    Bus& bus(int index) { return buses_[static_cast<std::size_t>(index)]; }
    const Bus& bus(int index) const { return buses_[static_cast<std::size_t>(index)]; }
    const std::vector<Branch>& branches() const { return branches_; }
    const std::vector<DeviceCoupling>& couplings() const { return couplings_; }
    const AdmittanceMatrix& ybus() const { return y_; }

    void assemble() { y_ = assemble_ybus(buses_, branches_, couplings_, id_to_index_); }

    // --- topology events -----------------------------------------------

    void trip_branch(int branch_index) {
        if (branch_index < 0 || branch_index >= static_cast<int>(branches_.size()))
            throw TopologyError("branch index " + std::to_string(branch_index + 1) +
                                " does not exist");
        Branch& br = branches_[static_cast<std::size_t>(branch_index)];
        if (!br.in_service)
            throw TopologyError("branch " + std::to_string(branch_index + 1) +
                                " is already out of service");
        br.in_service = false;
        assemble();
        check_connected();
    }

    /// Removes a device from the network: coupling out of service, internal
    /// bus deactivated.
    void trip_coupling(int coupling_index) {
        DeviceCoupling& c = couplings_[static_cast<std::size_t>(coupling_index)];
        if (!c.in_service) throw TopologyError("device coupling already out of service");
        c.in_service = false;
        buses_[static_cast<std::size_t>(c.internal_bus)].active = false;
        assemble();
        check_connected();
    }

    void step_load(int bus_id, double delta_p, double delta_q = 0.0) {
        Bus& b = buses_[static_cast<std::size_t>(index_of(bus_id))];
        if (b.kind != BusKind::Load)
            throw TopologyError("load step addressed to non-load bus " + std::to_string(bus_id));
        b.load_p += delta_p;
        b.load_q += delta_q;
    }

    double total_load_p() const {
        double s = 0.0;
        for (const auto& b : buses_)
            if (b.active) s += b.load_p;
        return s;
    }

    /// All active buses must form one island.
    void check_connected() const {
        const int n = size();
        std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
        auto link = [&](int i, int k) {
            adj[static_cast<std::size_t>(i)].push_back(k);
            adj[static_cast<std::size_t>(k)].push_back(i);
        };
        for (const auto& br : branches_) {
            if (!br.in_service) continue;
            link(id_to_index_.at(br.from), id_to_index_.at(br.to));
        }
        for (const auto& c : couplings_) {
            if (!c.in_service) continue;
            link(c.internal_bus, c.terminal_bus);
        }

        int start = -1;
        int n_active = 0;
        for (int i = 0; i < n; ++i) {
            if (buses_[static_cast<std::size_t>(i)].active) {
                ++n_active;
                if (start < 0) start = i;
            }
        }
        if (n_active <= 1) return;

        std::vector<char> seen(static_cast<std::size_t>(n), 0);
        std::vector<int> stack = {start};
        seen[static_cast<std::size_t>(start)] = 1;
        int reached = 1;
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            for (int w : adj[static_cast<std::size_t>(v)]) {
                if (!buses_[static_cast<std::size_t>(w)].active) continue;
                if (!seen[static_cast<std::size_t>(w)]) {
                    seen[static_cast<std::size_t>(w)] = 1;
                    ++reached;
                    stack.push_back(w);
                }
            }
        }
        if (reached != n_active) {
            std::string isl;
            for (int i = 0; i < n; ++i) {
                if (buses_[static_cast<std::size_t>(i)].active &&
                    !seen[static_cast<std::size_t>(i)]) {
                    if (!isl.empty()) isl += ", ";
                    isl += std::to_string(buses_[static_cast<std::size_t>(i)].id);
                }
            }
            throw TopologyError("network is disconnected; islanded buses: {" + isl + "}");
        }
    }

    PowerInjection injection_at(int index) const {
        std::vector<double> v(buses_.size()), a(buses_.size());
        for (std::size_t i = 0; i < buses_.size(); ++i) {
            v[i] = buses_[i].v_mag;
            a[i] = buses_[i].v_ang;
        }
        return power_injection(v, a, y_, index);
    }

private:
    std::vector<Bus> buses_;
    std::vector<Branch> branches_;
    std::vector<DeviceCoupling> couplings_;
    std::map<int, int> id_to_index_;
    AdmittanceMatrix y_;
    int next_internal_id_ = -1;
};

// ---------------------------------------------------------------------------
// Newton-Raphson solution of the algebraic network equations.
// ---------------------------------------------------------------------------

enum class BusBoundary {
    Fixed,  // V and theta imposed (device internal bus during dynamics; slack at init)
    PV,     // P and V imposed, theta free (SG internal bus at initialization)
    PQ      // P and Q imposed, V and theta free (loads, passive, dormant GFMs at init)
};

struct BoundarySpec {
    BusBoundary type = BusBoundary::PQ;
    double p = 0.0;  // specified injection (generation positive)
    double q = 0.0;
};

struct SolveOptions {
    double tolerance = 1e-8;  // max power mismatch, p.u.
    int max_iterations = 20;
};

struct SolveStats {
    int iterations = 0;
    double max_mismatch = 0.0;
};

/// Solves the power-balance equations for the free bus voltages, starting
/// from (and overwriting) the voltages stored in the model.
inline SolveStats solve_network(GridModel& model, const std::vector<BoundarySpec>& spec,
                                const SolveOptions& opt = {}) {
    const int n = model.size();
    require(static_cast<int>(spec.size()) == n, "boundary spec size mismatch");
    const AdmittanceMatrix& y = model.ybus();

    std::vector<double> vm(static_cast<std::size_t>(n)), va(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        vm[static_cast<std::size_t>(i)] = model.bus(i).v_mag;
        va[static_cast<std::size_t>(i)] = model.bus(i).v_ang;
    }

    // Unknown layout: one angle per active PV/PQ bus, one magnitude per PQ bus.
    std::vector<int> ang_of(static_cast<std::size_t>(n), -1);
    std::vector<int> mag_of(static_cast<std::size_t>(n), -1);
    std::vector<int> row_p(static_cast<std::size_t>(n), -1);
    std::vector<int> row_q(static_cast<std::size_t>(n), -1);
    int nu = 0;
    for (int i = 0; i < n; ++i) {
        if (!model.bus(i).active || spec[static_cast<std::size_t>(i)].type == BusBoundary::Fixed)
            continue;
        ang_of[static_cast<std::size_t>(i)] = nu;
        row_p[static_cast<std::size_t>(i)] = nu;
        ++nu;
    }
    for (int i = 0; i < n; ++i) {
        if (!model.bus(i).active || spec[static_cast<std::size_t>(i)].type != BusBoundary::PQ)
            continue;
        mag_of[static_cast<std::size_t>(i)] = nu;
        row_q[static_cast<std::size_t>(i)] = nu;
        ++nu;
    }

    auto commit = [&]() {
        for (int i = 0; i < n; ++i) {
            model.bus(i).v_mag = vm[static_cast<std::size_t>(i)];
            model.bus(i).v_ang = va[static_cast<std::size_t>(i)];
        }
    };

    if (nu == 0) {
        commit();
        return {1, 0.0};
    }

    std::vector<double> pc(static_cast<std::size_t>(n)), qc(static_cast<std::size_t>(n));
    Eigen::VectorXd f(nu);
    Eigen::MatrixXd jac(nu, nu);

    SolveStats stats;
    for (int it = 1; it <= opt.max_iterations; ++it) {
        stats.iterations = it;
        for (int i = 0; i < n; ++i) {
            if (!model.bus(i).active) continue;
            auto inj = power_injection(vm, va, y, i);
            pc[static_cast<std::size_t>(i)] = inj.p;
            qc[static_cast<std::size_t>(i)] = inj.q;
        }

        f.setZero();
        double worst = 0.0;
        for (int i = 0; i < n; ++i) {
            const auto& s = spec[static_cast<std::size_t>(i)];
            if (row_p[static_cast<std::size_t>(i)] >= 0) {
                const double mp = pc[static_cast<std::size_t>(i)] - s.p;
                f(row_p[static_cast<std::size_t>(i)]) = mp;
                worst = std::max(worst, std::abs(mp));
            }
            if (row_q[static_cast<std::size_t>(i)] >= 0) {
                const double mq = qc[static_cast<std::size_t>(i)] - s.q;
                f(row_q[static_cast<std::size_t>(i)]) = mq;
                worst = std::max(worst, std::abs(mq));
            }
        }
        stats.max_mismatch = worst;
        if (worst <= opt.tolerance) {
            commit();
            for (int i = 0; i < n; ++i) {
                if (model.bus(i).active && !(model.bus(i).v_mag > 0.0))
                    throw SolverError("network solution has non-positive voltage at bus " +
                                          std::to_string(model.bus(i).id),
                                      std::vector<double>(f.data(), f.data() + nu));
            }
            return stats;
        }

        jac.setZero();
        for (int i = 0; i < n; ++i) {
            if (!model.bus(i).active) continue;
            const int rp = row_p[static_cast<std::size_t>(i)];
            const int rq = row_q[static_cast<std::size_t>(i)];
            if (rp < 0 && rq < 0) continue;
            const double vi = vm[static_cast<std::size_t>(i)];
            for (int k = 0; k < n; ++k) {
                if (!model.bus(k).active) continue;
                const int ca = ang_of[static_cast<std::size_t>(k)];
                const int cm = mag_of[static_cast<std::size_t>(k)];
                if (ca < 0 && cm < 0) continue;
                const double g = y.G(i, k);
                const double b = y.B(i, k);
                const double vk = vm[static_cast<std::size_t>(k)];
                if (i == k) {
                    if (rp >= 0 && ca >= 0)
                        jac(rp, ca) = -qc[static_cast<std::size_t>(i)] - b * vi * vi;
                    if (rp >= 0 && cm >= 0)
                        jac(rp, cm) = pc[static_cast<std::size_t>(i)] / vi + g * vi;
                    if (rq >= 0 && ca >= 0)
                        jac(rq, ca) = pc[static_cast<std::size_t>(i)] - g * vi * vi;
                    if (rq >= 0 && cm >= 0)
                        jac(rq, cm) = qc[static_cast<std::size_t>(i)] / vi - b * vi;
                } else {
                    if (g == 0.0 && b == 0.0) continue;
                    const double d = va[static_cast<std::size_t>(i)] - va[static_cast<std::size_t>(k)];
                    const double cs = std::cos(d);
                    const double sn = std::sin(d);
                    if (rp >= 0 && ca >= 0) jac(rp, ca) = vi * vk * (g * sn - b * cs);
                    if (rp >= 0 && cm >= 0) jac(rp, cm) = vi * (g * cs + b * sn);
                    if (rq >= 0 && ca >= 0) jac(rq, ca) = -vi * vk * (g * cs + b * sn);
                    if (rq >= 0 && cm >= 0) jac(rq, cm) = vi * (g * sn - b * cs);
                }
            }
        }

        Eigen::VectorXd dx = jac.partialPivLu().solve(f);
        for (int i = 0; i < n; ++i) {
            if (ang_of[static_cast<std::size_t>(i)] >= 0)
                va[static_cast<std::size_t>(i)] -= dx(ang_of[static_cast<std::size_t>(i)]);
            if (mag_of[static_cast<std::size_t>(i)] >= 0)
                vm[static_cast<std::size_t>(i)] -= dx(mag_of[static_cast<std::size_t>(i)]);
        }
    }

    std::vector<double> residual(f.data(), f.data() + nu);
    throw SolverError("network solve did not converge within " +
                          std::to_string(opt.max_iterations) +
                          " iterations (max mismatch " + format_sig12(stats.max_mismatch) + ")",
                      residual);
}

}  // namespace gfmsim
