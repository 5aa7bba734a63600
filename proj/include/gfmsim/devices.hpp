#pragma once

#include <cmath>
#include <string>

#include "gfmsim/common.hpp"

namespace gfmsim {

// ---------------------------------------------------------------------------
// Synchronous generator: classical swing model with a first-order governor.
// ---------------------------------------------------------------------------

struct SgParams {
    double inertia = 10.0;     // M, p.u. power per (rad/s^2)
    double damping = 1.0;      // D, p.u. per (rad/s)
    double t_ch = 0.5;         // governor time constant, s
    double r_gov = 0.05;       // governor droop, (rad/s) per p.u.
    double x_coupling = 0.1;   // transient reactance to the terminal bus, p.u.
    double emf = 1.0;          // internal EMF magnitude, held constant

    void validate(const std::string& name, std::vector<std::string>& issues) const {
        if (!(inertia > 0.0)) issues.push_back(name + ": inertia must be positive");
        if (!(t_ch > 0.0)) issues.push_back(name + ": governor time constant must be positive");
        if (!(r_gov > 0.0)) issues.push_back(name + ": governor droop must be positive");
        if (!(x_coupling > 0.0)) issues.push_back(name + ": coupling reactance must be positive");
        if (!(emf > 0.0)) issues.push_back(name + ": internal EMF must be positive");
    }
};

/// p_mech is the governor state measured from the dispatch point fixed at
/// initialization; the dispatch itself is held on the unit, so the swing
/// equation sees electrical power as a deviation as well.
struct SgState {
    double theta = 0.0;   // rad
    double omega = 0.0;   // rad/s
    double p_mech = 0.0;  // p.u.
};

struct SgDerivatives {
    double d_theta = 0.0;
    double d_omega = 0.0;
    double d_p_mech = 0.0;
};

inline SgDerivatives sg_derivatives(const SgState& s, const SgParams& p,
                                    double p_injected, double omega0) {
    SgDerivatives d;
    d.d_theta = s.omega - omega0;
    d.d_omega = (p.damping * (omega0 - s.omega) + s.p_mech - p_injected) / p.inertia;
    d.d_p_mech = -(s.p_mech + (s.omega - omega0) / p.r_gov) / p.t_ch;
    return d;
}

// ---------------------------------------------------------------------------
// Grid-forming inverter: P-f / Q-V droop behind a coupling reactance.
// ---------------------------------------------------------------------------

struct GfmParams {
    double m_p = 0.05;         // P-f droop, (rad/s) per p.u.
    double m_q = 0.05;         // Q-V droop, p.u. per p.u.
    double tau = 0.01;         // measurement filter time constant, s
    double k_pv = 1.0;         // Q-V loop proportional gain
    double k_iv = 10.0;        // Q-V loop integral gain
    double s_rating = 1.0;     // apparent power capacity S, p.u.
    double x_coupling = 0.05;  // coupling reactance to the terminal bus, p.u.
    double v_set = 1.0;        // trimmed at initialization so the unit starts dormant
    double q_set = 0.0;

    void validate(const std::string& name, std::vector<std::string>& issues) const {
        if (!(m_p > 0.0)) issues.push_back(name + ": droop gain m_p must be positive");
        if (!(m_q > 0.0)) issues.push_back(name + ": droop gain m_q must be positive");
        if (!(tau > 0.0)) issues.push_back(name + ": filter time constant must be positive");
        if (!(s_rating > 0.0)) issues.push_back(name + ": apparent power rating must be positive");
        if (!(x_coupling > 0.0)) issues.push_back(name + ": coupling reactance must be positive");
    }
};

struct GfmState {
    double theta = 0.0;  // rad
    double omega = 0.0;  // rad/s
    double v_err = 0.0;  // voltage error state, p.u.
    double e_mag = 1.0;  // internal voltage magnitude, p.u.
    double p_set = 0.0;  // applied active power set-point, written by the control layer
};

struct GfmDerivatives {
    double d_theta = 0.0;
    double d_omega = 0.0;
    double d_v_err = 0.0;
    double d_e_mag = 0.0;
};

inline GfmDerivatives gfm_derivatives(const GfmState& s, const GfmParams& p,
                                      double p_injected, double q_injected,
                                      double v_terminal, double omega0) {
    GfmDerivatives d;
    d.d_theta = s.omega - omega0;
    d.d_omega = (omega0 - s.omega + p.m_p * (s.p_set - p_injected)) / p.tau;
    d.d_v_err = (p.v_set - v_terminal - s.v_err + p.m_q * (p.q_set - q_injected)) / p.tau;
    d.d_e_mag = p.k_pv * d.d_v_err + p.k_iv * s.v_err;
    return d;
}

/// True iff the operating point respects the apparent power rating.
/// Violations are diagnostics, not faults; enforcement happens through the
/// set-point capacity clamp.
inline bool check_capacity(double p, double q, double s, double tol = 1e-9) {
    return std::sqrt(p * p + q * q) <= s + tol;
}

}  // namespace gfmsim
