#pragma once

#include <charconv>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gfmsim {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// Base class for all gfmsim errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Input file rejected. Carries every issue found, not just the first.
struct ParseError : Error {
    std::vector<std::string> issues;

    explicit ParseError(std::vector<std::string> list)
        : Error(join(list)), issues(std::move(list)) {}

private:
    static std::string join(const std::vector<std::string>& list) {
        std::string out;
        for (const auto& s : list) {
            if (!out.empty()) out += "\n";
            out += s;
        }
        return out;
    }
};

/// Network is (or became) electrically unusable: islands, sourceless grid,
/// trips addressed to unknown or already-removed elements.
struct TopologyError : Error {
    using Error::Error;
};

/// Newton solve failed to converge; carries the final mismatch vector.
struct SolverError : Error {
    std::vector<double> mismatch;

    SolverError(const std::string& what, std::vector<double> residual)
        : Error(what), mismatch(std::move(residual)) {}
};

/// Invalid control/schedule configuration.
struct ConfigError : Error {
    using Error::Error;
};

/// Runtime failure inside a simulation run, annotated with simulation time.
struct SimulationError : Error {
    double time;

    SimulationError(const std::string& what, double t)
        : Error(what + " (at t=" + format_shortest(t) + " s)"), time(t) {}

    static std::string format_shortest(double v) {
        char buf[32];
        auto res = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, res.ptr);
    }
};

/// Invariant that must hold by construction. Throws instead of aborting so
/// the failure is reportable in every build type.
inline void require(bool condition, const std::string& what) {
    if (!condition) throw Error("internal invariant violated: " + what);
}

/// Result serialization format: 12 significant digits.
inline std::string format_sig12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

/// Canonical model serialization: shortest text that round-trips exactly.
inline std::string format_exact(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace gfmsim
