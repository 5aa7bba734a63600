#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "gfmsim/common.hpp"
#include "gfmsim/devices.hpp"

namespace gfmsim {

enum class ControlMode { NoSecondary, Consensus, SafetyConsensus };

inline std::string to_string(ControlMode m) {
    switch (m) {
        case ControlMode::NoSecondary: return "no-secondary";
        case ControlMode::Consensus: return "consensus";
        case ControlMode::SafetyConsensus: return "safety-consensus";
    }
    throw Error("unreachable control mode");
}

inline ControlMode parse_control_mode(const std::string& s) {
    if (s == "no-secondary") return ControlMode::NoSecondary;
    if (s == "consensus") return ControlMode::Consensus;
    if (s == "safety-consensus") return ControlMode::SafetyConsensus;
    throw ConfigError("unknown control mode '" + s +
                      "' (expected no-secondary, consensus or safety-consensus)");
}

struct ControlConfig {
    double zeta1 = 2.0;             // consensus frequency gain
    double zeta2 = 0.05;            // consensus sharing gain
    double alpha_bar = 5e6;         // barrier gain, = tau*alpha/m_p
    int exponent = 3;               // p, odd positive integer
    double omega0 = 376.99111843077515;
    double omega_min = omega0 - kTwoPi * 0.5;
    double omega_max = omega0 + kTwoPi * 0.5;
    double consensus_period = 4.0;  // s
    double safety_period = 0.05;    // s
    ControlMode mode = ControlMode::SafetyConsensus;

    void validate() const {
        if (!(zeta1 > 0.0)) throw ConfigError("consensus gain zeta1 must be positive");
        if (!(zeta2 > 0.0)) throw ConfigError("consensus gain zeta2 must be positive");
        if (!(alpha_bar > 0.0)) throw ConfigError("barrier gain alpha_bar must be positive");
        if (exponent < 1 || exponent % 2 == 0)
            throw ConfigError("barrier exponent p must be an odd positive integer");
        if (!(omega_min < omega0 && omega0 < omega_max))
            throw ConfigError("frequency limits must bracket the nominal frequency");
        if (!(consensus_period > 0.0) || !(safety_period > 0.0))
            throw ConfigError("control periods must be positive");
        if (safety_period > consensus_period)
            throw ConfigError("safety period must not exceed the consensus period");
    }

    /// Conservative half-width of the safe band; equals either side when the
    /// limits are symmetric about omega0.
    double delta_omega() const {
        return std::min(omega0 - omega_min, omega_max - omega0);
    }

    bool symmetric_limits(double tol = 1e-12) const {
        return std::abs((omega0 - omega_min) - (omega_max - omega0)) <= tol;
    }

    /// Barrier gain in its alpha form.
    double alpha(const GfmParams& gfm) const { return alpha_bar * gfm.m_p / gfm.tau; }
};

// ---------------------------------------------------------------------------
// Communication graph for the consensus exchange.
// ---------------------------------------------------------------------------

struct CommGraph {
    std::vector<std::vector<int>> neighbors;  // undirected adjacency over GFM indices

    static CommGraph ring(int n) {
        CommGraph g;
        g.neighbors.resize(static_cast<std::size_t>(n));
        if (n == 2) {
            g.neighbors[0] = {1};
            g.neighbors[1] = {0};
        } else if (n > 2) {
            for (int i = 0; i < n; ++i) {
                g.neighbors[static_cast<std::size_t>(i)] = {(i + n - 1) % n, (i + 1) % n};
            }
        }
        return g;
    }

    int size() const { return static_cast<int>(neighbors.size()); }

    void add_edge(int a, int b) {
        neighbors[static_cast<std::size_t>(a)].push_back(b);
        neighbors[static_cast<std::size_t>(b)].push_back(a);
    }

    void validate() const {
        const int n = size();
        for (int i = 0; i < n; ++i) {
            for (int j : neighbors[static_cast<std::size_t>(i)]) {
                if (j == i) throw ConfigError("communication graph has a self-loop");
                if (j < 0 || j >= n) throw ConfigError("communication graph edge out of range");
                const auto& back = neighbors[static_cast<std::size_t>(j)];
                if (std::find(back.begin(), back.end(), i) == back.end())
                    throw ConfigError("communication graph is not symmetric");
            }
            if (n > 1 && neighbors[static_cast<std::size_t>(i)].empty())
                throw ConfigError("GFM " + std::to_string(i) +
                                  " has no consensus neighbors in a multi-GFM system");
        }
        if (n > 1 && !connected())
            throw ConfigError("communication graph is not connected");
    }

    bool connected() const {
        const int n = size();
        if (n == 0) return true;
        std::vector<char> seen(static_cast<std::size_t>(n), 0);
        std::vector<int> stack = {0};
        seen[0] = 1;
        int count = 1;
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            for (int w : neighbors[static_cast<std::size_t>(v)]) {
                if (!seen[static_cast<std::size_t>(w)]) {
                    seen[static_cast<std::size_t>(w)] = 1;
                    ++count;
                    stack.push_back(w);
                }
            }
        }
        return count == n;
    }
};

// ---------------------------------------------------------------------------
// Set-point pipeline: consensus -> safety bounds -> composition -> capacity.
// ---------------------------------------------------------------------------

struct NeighborSetpoint {
    double m_p = 0.0;
    double p_set = 0.0;
};

/// One synchronous consensus update for a single unit. Neighbor values are the
/// set-points published at the previous tick.
inline double consensus_update(double p_set, double omega, double m_p_own,
                               std::span<const NeighborSetpoint> neighbors,
                               const ControlConfig& cfg) {
    double mismatch = 0.0;
    for (const auto& nb : neighbors) {
        mismatch += m_p_own * p_set - nb.m_p * nb.p_set;
    }
    return p_set - cfg.zeta1 * (omega - cfg.omega0) - cfg.zeta2 * mismatch;
}

struct BarrierValues {
    double h_min = 0.0;
    double h_max = 0.0;
};

inline BarrierValues barrier_values(double omega, const ControlConfig& cfg) {
    return {omega - cfg.omega_min, cfg.omega_max - omega};
}

struct SetpointBounds {
    double low = 0.0;
    double up = 0.0;
};

inline double odd_power(double x, int p) {
    double r = 1.0;
    for (int i = 0; i < p; ++i) r *= x;
    return r;
}

/// Barrier-derived admissible set-point interval for one unit.
inline SetpointBounds safety_bounds(double omega, double p_injected,
                                    const GfmParams& gfm, const ControlConfig& cfg) {
    const double droop_term = p_injected + (omega - cfg.omega0) / gfm.m_p;
    SetpointBounds b;
    b.low = droop_term - cfg.alpha_bar * odd_power(omega - cfg.omega_min, cfg.exponent);
    b.up = droop_term - cfg.alpha_bar * odd_power(omega - cfg.omega_max, cfg.exponent);
    return b;
}

/// Clamp the consensus set-point into the safety interval. Closed interval:
/// a consensus value sitting exactly on a bound passes through unchanged.
inline double compose_safety_consensus(double p_consensus, const SetpointBounds& bounds) {
    require(bounds.low < bounds.up, "safety bounds must be ordered low < up");
    return std::min(bounds.up, std::max(bounds.low, p_consensus));
}

/// Storage capacity clamp. If reactive loading alone exceeds the rating the
/// active set-point collapses to zero and *q_over_rating is flagged.
inline double capacity_clamp(double p_hat, double q, double s,
                             bool* q_over_rating = nullptr) {
    if (q_over_rating) *q_over_rating = false;
    if (std::abs(q) > s) {
        if (q_over_rating) *q_over_rating = true;
        return 0.0;
    }
    const double p_max = std::sqrt(s * s - q * q);
    return std::min(p_max, std::max(-p_max, p_hat));
}

/// Safety margin delta from the containment theorem: how far beyond a limit
/// the frequency may transiently travel before the override dominates.
inline double delta_margin(const GfmParams& gfm, const ControlConfig& cfg) {
    const double dw = cfg.delta_omega();
    const double arg = 2.0 * dw / (cfg.alpha(gfm) * gfm.m_p);
    return std::pow(arg, 1.0 / static_cast<double>(cfg.exponent));
}

struct Theorem1Report {
    bool symmetric_limits = true;    // asymmetric limits use the conservative delta_omega
    double delta = 0.0;              // rad/s
    bool droop_ok = false;           // m_p < delta_omega / S
    double droop_slack = 0.0;        // delta_omega/S - m_p
    double setpoint_bound = 0.0;     // S - delta/m_p; |P_con| must stay below it
    double dp_upper = 0.0;           // delta_omega/m_p - S
    bool dp_interval_nonempty = false;
    double dp = 0.0;                 // disturbance bound under test
    bool dp_ok = false;              // dp inside (0, dp_upper)
    double dp_slack = 0.0;           // dp_upper - dp

    bool all_ok() const { return droop_ok && dp_interval_nonempty && dp_ok; }
};

/// Numeric check of the containment theorem's hypotheses for one unit.
/// Informational: callers warn on failure instead of aborting.
inline Theorem1Report theorem1_preconditions(const GfmParams& gfm, const ControlConfig& cfg,
                                             double disturbance_bound) {
    Theorem1Report r;
    r.symmetric_limits = cfg.symmetric_limits();
    r.delta = delta_margin(gfm, cfg);
    const double dw = cfg.delta_omega();
    r.droop_slack = dw / gfm.s_rating - gfm.m_p;
    r.droop_ok = r.droop_slack > 0.0;
    r.setpoint_bound = gfm.s_rating - r.delta / gfm.m_p;
    r.dp_upper = dw / gfm.m_p - gfm.s_rating;
    r.dp_interval_nonempty = r.dp_upper > 0.0;
    r.dp = disturbance_bound;
    r.dp_ok = disturbance_bound > 0.0 && disturbance_bound < r.dp_upper;
    r.dp_slack = r.dp_upper - disturbance_bound;
    return r;
}

}  // namespace gfmsim
