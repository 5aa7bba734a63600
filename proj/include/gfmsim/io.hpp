#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gfmsim/common.hpp"
#include "gfmsim/control.hpp"
#include "gfmsim/scenario.hpp"
#include "gfmsim/simulator.hpp"
#include "gfmsim/system.hpp"

namespace gfmsim {

/// A parsed system file: plant, control configuration and consensus graph.
struct SystemConfig {
    PowerSystem system;  // built (device-internal buses appended, Y assembled)
    ControlConfig control;
    CommGraph graph;
    bool graph_explicit = false;
};

namespace detail {

struct SourceLine {
    int number = 0;
    std::string section;
    std::vector<std::string> tokens;
    bool is_key_value = false;
    std::string key;
    std::string value;
};

inline std::vector<SourceLine> tokenize_config(const std::string& text,
                                               const std::string& name,
                                               std::vector<std::string>& issues) {
    std::vector<SourceLine> out;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int number = 0;
    while (std::getline(in, raw)) {
        ++number;
        const auto hash = raw.find('#');
        std::string line = hash == std::string::npos ? raw : raw.substr(0, hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);

        if (line.front() == '[') {
            if (line.back() != ']') {
                issues.push_back(name + ":" + std::to_string(number) +
                                 ": malformed section header '" + line + "'");
                continue;
            }
            section = line.substr(1, line.size() - 2);
            continue;
        }
        if (section.empty()) {
            issues.push_back(name + ":" + std::to_string(number) +
                             ": content before any [section] header");
            continue;
        }

        SourceLine sl;
        sl.number = number;
        sl.section = section;
        const auto eq = line.find('=');
        if (eq != std::string::npos) {
            sl.is_key_value = true;
            auto strip = [](std::string s) {
                const auto b = s.find_first_not_of(" \t");
                const auto e = s.find_last_not_of(" \t");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            sl.key = strip(line.substr(0, eq));
            sl.value = strip(line.substr(eq + 1));
        } else {
            std::istringstream ls(line);
            std::string tok;
            while (ls >> tok) sl.tokens.push_back(tok);
        }
        out.push_back(std::move(sl));
    }
    return out;
}

inline bool parse_double(const std::string& s, double& out) {
    try {
        std::size_t used = 0;
        out = std::stod(s, &used);
        return used == s.size();
    } catch (const std::exception&) {
        return false;
    }
}

inline bool parse_int(const std::string& s, int& out) {
    try {
        std::size_t used = 0;
        out = std::stoi(s, &used);
        return used == s.size();
    } catch (const std::exception&) {
        return false;
    }
}

inline bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
    return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// System file
// ---------------------------------------------------------------------------

inline SystemConfig parse_system_text(const std::string& text, const std::string& name) {
    std::vector<std::string> issues;
    auto lines = detail::tokenize_config(text, name, issues);
    auto at = [&](const detail::SourceLine& sl) {
        return name + ":" + std::to_string(sl.number) + ": ";
    };

    SystemConfig cfg;
    double f0_hz = 60.0;
    double f_min_hz = 59.5;
    double f_max_hz = 60.5;
    std::vector<std::pair<std::string, std::string>> graph_edges;
    std::map<int, int> load_lines;  // bus id -> line, duplicate detection

    for (const auto& sl : lines) {
        if (sl.section == "base") {
            if (!sl.is_key_value) {
                issues.push_back(at(sl) + "expected key = value in [base]");
            } else if (sl.key == "frequency_hz") {
                if (!detail::parse_double(sl.value, f0_hz))
                    issues.push_back(at(sl) + "invalid frequency '" + sl.value + "'");
            } else {
                issues.push_back(at(sl) + "unknown [base] key '" + sl.key + "'");
            }
        } else if (sl.section == "buses") {
            if (sl.tokens.size() != 2) {
                issues.push_back(at(sl) + "expected: <id> <load|passive>");
                continue;
            }
            int id = 0;
            if (!detail::parse_int(sl.tokens[0], id) || id <= 0) {
                issues.push_back(at(sl) + "bus id must be a positive integer");
                continue;
            }
            BusKind kind;
            if (sl.tokens[1] == "load")
                kind = BusKind::Load;
            else if (sl.tokens[1] == "passive")
                kind = BusKind::Passive;
            else {
                issues.push_back(at(sl) + "unknown bus kind '" + sl.tokens[1] + "'");
                continue;
            }
            try {
                cfg.system.grid.add_bus(id, kind);
            } catch (const TopologyError& e) {
                issues.push_back(at(sl) + e.what());
            }
        } else if (sl.section == "branches") {
            if (sl.tokens.size() != 5) {
                issues.push_back(at(sl) + "expected: <from> <to> <g> <b> <status>");
                continue;
            }
            int from = 0, to = 0, status = 1;
            double g = 0.0, b = 0.0;
            bool ok = detail::parse_int(sl.tokens[0], from) &&
                      detail::parse_int(sl.tokens[1], to) &&
                      detail::parse_double(sl.tokens[2], g) &&
                      detail::parse_double(sl.tokens[3], b) &&
                      detail::parse_int(sl.tokens[4], status);
            if (!ok) {
                issues.push_back(at(sl) + "malformed branch record");
                continue;
            }
            try {
                cfg.system.grid.add_branch(from, to, g, b, status != 0);
            } catch (const TopologyError& e) {
                issues.push_back(at(sl) + e.what());
            }
        } else if (sl.section == "loads") {
            if (sl.tokens.size() != 3) {
                issues.push_back(at(sl) + "expected: <bus> <p> <q>");
                continue;
            }
            int id = 0;
            double p = 0.0, q = 0.0;
            if (!detail::parse_int(sl.tokens[0], id) || !detail::parse_double(sl.tokens[1], p) ||
                !detail::parse_double(sl.tokens[2], q)) {
                issues.push_back(at(sl) + "malformed load record");
                continue;
            }
            if (!cfg.system.grid.has_bus(id)) {
                issues.push_back(at(sl) + "load references unknown bus " + std::to_string(id));
                continue;
            }
            if (load_lines.count(id)) {
                issues.push_back(at(sl) + "duplicate load entry for bus " + std::to_string(id) +
                                 " (first at line " + std::to_string(load_lines[id]) + ")");
                continue;
            }
            load_lines[id] = sl.number;
            Bus& bus = cfg.system.grid.bus(cfg.system.grid.index_of(id));
            if (bus.kind != BusKind::Load) {
                issues.push_back(at(sl) + "bus " + std::to_string(id) +
                                 " is not declared as a load bus");
                continue;
            }
            bus.load_p = p;
            bus.load_q = q;
        } else if (sl.section == "sg") {
            if (sl.tokens.size() != 8) {
                issues.push_back(at(sl) +
                                 "expected: <name> <bus> <inertia> <damping> <t_ch> <r_gov> "
                                 "<x_coupling> <emf>");
                continue;
            }
            SgUnit sg;
            sg.name = sl.tokens[0];
            bool ok = detail::valid_name(sg.name) && detail::parse_int(sl.tokens[1], sg.bus_id) &&
                      detail::parse_double(sl.tokens[2], sg.params.inertia) &&
                      detail::parse_double(sl.tokens[3], sg.params.damping) &&
                      detail::parse_double(sl.tokens[4], sg.params.t_ch) &&
                      detail::parse_double(sl.tokens[5], sg.params.r_gov) &&
                      detail::parse_double(sl.tokens[6], sg.params.x_coupling) &&
                      detail::parse_double(sl.tokens[7], sg.params.emf);
            if (!ok) {
                issues.push_back(at(sl) + "malformed SG record");
                continue;
            }
            cfg.system.sgs.push_back(std::move(sg));
        } else if (sl.section == "gfm") {
            if (sl.tokens.size() != 10) {
                issues.push_back(at(sl) +
                                 "expected: <name> <bus> <m_p> <m_q> <tau> <k_pv> <k_iv> "
                                 "<s_rating> <x_coupling> <q_set>");
                continue;
            }
            GfmUnit g;
            g.name = sl.tokens[0];
            bool ok = detail::valid_name(g.name) && detail::parse_int(sl.tokens[1], g.bus_id) &&
                      detail::parse_double(sl.tokens[2], g.params.m_p) &&
                      detail::parse_double(sl.tokens[3], g.params.m_q) &&
                      detail::parse_double(sl.tokens[4], g.params.tau) &&
                      detail::parse_double(sl.tokens[5], g.params.k_pv) &&
                      detail::parse_double(sl.tokens[6], g.params.k_iv) &&
                      detail::parse_double(sl.tokens[7], g.params.s_rating) &&
                      detail::parse_double(sl.tokens[8], g.params.x_coupling) &&
                      detail::parse_double(sl.tokens[9], g.params.q_set);
            if (!ok) {
                issues.push_back(at(sl) + "malformed GFM record");
                continue;
            }
            cfg.system.gfms.push_back(std::move(g));
        } else if (sl.section == "control") {
            if (!sl.is_key_value) {
                issues.push_back(at(sl) + "expected key = value in [control]");
                continue;
            }
            auto num = [&](double& target) {
                if (!detail::parse_double(sl.value, target))
                    issues.push_back(at(sl) + "invalid number '" + sl.value + "' for " + sl.key);
            };
            if (sl.key == "zeta1") num(cfg.control.zeta1);
            else if (sl.key == "zeta2") num(cfg.control.zeta2);
            else if (sl.key == "alpha_bar") num(cfg.control.alpha_bar);
            else if (sl.key == "p") {
                if (!detail::parse_int(sl.value, cfg.control.exponent))
                    issues.push_back(at(sl) + "invalid integer '" + sl.value + "' for p");
            } else if (sl.key == "f_min_hz") num(f_min_hz);
            else if (sl.key == "f_max_hz") num(f_max_hz);
            else if (sl.key == "safety_period") num(cfg.control.safety_period);
            else if (sl.key == "consensus_period") num(cfg.control.consensus_period);
            else if (sl.key == "mode") {
                try {
                    cfg.control.mode = parse_control_mode(sl.value);
                } catch (const ConfigError& e) {
                    issues.push_back(at(sl) + e.what());
                }
            } else {
                issues.push_back(at(sl) + "unknown [control] key '" + sl.key + "'");
            }
        } else if (sl.section == "comm_graph") {
            if (sl.tokens.size() != 2) {
                issues.push_back(at(sl) + "expected: <gfm_name> <gfm_name>");
                continue;
            }
            graph_edges.emplace_back(sl.tokens[0], sl.tokens[1]);
        } else {
            issues.push_back(at(sl) + "unknown section [" + sl.section + "]");
        }
    }

    if (cfg.system.sgs.empty())
        issues.push_back(name + ": system declares no synchronous generator");

    // Frequency bookkeeping: rad/s internally, Hz at the file boundary.
    cfg.system.omega0 = kTwoPi * f0_hz;
    cfg.control.omega0 = cfg.system.omega0;
    cfg.control.omega_min = kTwoPi * f_min_hz;
    cfg.control.omega_max = kTwoPi * f_max_hz;

    if (!issues.empty()) throw ParseError(std::move(issues));

    try {
        cfg.system.build();
        cfg.control.validate();
    } catch (const ParseError& e) {
        std::vector<std::string> all;
        for (const auto& s : e.issues) all.push_back(name + ": " + s);
        throw ParseError(std::move(all));
    } catch (const Error& e) {
        throw ParseError({name + ": " + e.what()});
    }

    // Consensus graph: explicit edge list, or a ring over declaration order.
    if (!graph_edges.empty()) {
        cfg.graph_explicit = true;
        cfg.graph.neighbors.assign(cfg.system.gfms.size(), {});
        std::map<std::string, int> gfm_index;
        for (std::size_t i = 0; i < cfg.system.gfms.size(); ++i)
            gfm_index[cfg.system.gfms[i].name] = static_cast<int>(i);
        for (const auto& [a, b] : graph_edges) {
            if (!gfm_index.count(a))
                issues.push_back(name + ": comm_graph references unknown GFM " + a);
            else if (!gfm_index.count(b))
                issues.push_back(name + ": comm_graph references unknown GFM " + b);
            else
                cfg.graph.add_edge(gfm_index[a], gfm_index[b]);
        }
        if (!issues.empty()) throw ParseError(std::move(issues));
    } else {
        cfg.graph = CommGraph::ring(static_cast<int>(cfg.system.gfms.size()));
    }
    try {
        cfg.graph.validate();
    } catch (const Error& e) {
        throw ParseError({name + ": " + e.what()});
    }
    return cfg;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError({"cannot open file " + path});
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline SystemConfig parse_system(const std::string& path) {
    return parse_system_text(read_file(path), path);
}

/// Canonical serialization; parse(serialize(parse(x))) == parse(x) exactly.
inline std::string serialize_system(const SystemConfig& cfg) {
    std::string out;
    auto f = format_exact;
    out += "[base]\nfrequency_hz = " + f(cfg.system.omega0 / kTwoPi) + "\n\n[buses]\n";
    for (const auto& b : cfg.system.grid.buses()) {
        if (b.kind == BusKind::Load)
            out += std::to_string(b.id) + " load\n";
        else if (b.kind == BusKind::Passive)
            out += std::to_string(b.id) + " passive\n";
    }
    out += "\n[branches]\n";
    for (const auto& br : cfg.system.grid.branches()) {
        out += std::to_string(br.from) + " " + std::to_string(br.to) + " " + f(br.g) + " " +
               f(br.b) + " " + (br.in_service ? "1" : "0") + "\n";
    }
    out += "\n[loads]\n";
    for (const auto& b : cfg.system.grid.buses()) {
        if (b.kind == BusKind::Load && (b.load_p != 0.0 || b.load_q != 0.0))
            out += std::to_string(b.id) + " " + f(b.load_p) + " " + f(b.load_q) + "\n";
    }
    out += "\n[sg]\n";
    for (const auto& sg : cfg.system.sgs) {
        out += sg.name + " " + std::to_string(sg.bus_id) + " " + f(sg.params.inertia) + " " +
               f(sg.params.damping) + " " + f(sg.params.t_ch) + " " + f(sg.params.r_gov) + " " +
               f(sg.params.x_coupling) + " " + f(sg.params.emf) + "\n";
    }
    out += "\n[gfm]\n";
    for (const auto& g : cfg.system.gfms) {
        out += g.name + " " + std::to_string(g.bus_id) + " " + f(g.params.m_p) + " " +
               f(g.params.m_q) + " " + f(g.params.tau) + " " + f(g.params.k_pv) + " " +
               f(g.params.k_iv) + " " + f(g.params.s_rating) + " " + f(g.params.x_coupling) +
               " " + f(g.params.q_set) + "\n";
    }
    out += "\n[control]\n";
    out += "zeta1 = " + f(cfg.control.zeta1) + "\n";
    out += "zeta2 = " + f(cfg.control.zeta2) + "\n";
    out += "alpha_bar = " + f(cfg.control.alpha_bar) + "\n";
    out += "p = " + std::to_string(cfg.control.exponent) + "\n";
    out += "f_min_hz = " + f(cfg.control.omega_min / kTwoPi) + "\n";
    out += "f_max_hz = " + f(cfg.control.omega_max / kTwoPi) + "\n";
    out += "safety_period = " + f(cfg.control.safety_period) + "\n";
    out += "consensus_period = " + f(cfg.control.consensus_period) + "\n";
    out += "mode = " + to_string(cfg.control.mode) + "\n";
    if (cfg.graph_explicit) {
        out += "\n[comm_graph]\n";
        for (std::size_t i = 0; i < cfg.graph.neighbors.size(); ++i) {
            for (int j : cfg.graph.neighbors[i]) {
                if (static_cast<int>(i) < j)
                    out += cfg.system.gfms[i].name + " " +
                           cfg.system.gfms[static_cast<std::size_t>(j)].name + "\n";
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scenario file
// ---------------------------------------------------------------------------

inline ScenarioScript parse_scenario_text(const std::string& text, const std::string& name,
                                          const SystemConfig& cfg) {
    std::vector<std::string> issues;
    auto lines = detail::tokenize_config(text, name, issues);
    auto at = [&](const detail::SourceLine& sl) {
        return name + ":" + std::to_string(sl.number) + ": ";
    };

    ScenarioScript script;
    for (const auto& sl : lines) {
        if (sl.section != "events") {
            issues.push_back(at(sl) + "unknown section [" + sl.section + "]");
            continue;
        }
        if (sl.tokens.size() < 3) {
            issues.push_back(at(sl) + "expected: <time> <kind> <target> [magnitude] [basis]");
            continue;
        }
        Event ev;
        if (!detail::parse_double(sl.tokens[0], ev.time) || ev.time < 0.0) {
            issues.push_back(at(sl) + "event time must be a nonnegative number");
            continue;
        }
        const std::string& kind = sl.tokens[1];
        ev.target = sl.tokens[2];
        if (kind == "load_step") {
            if (sl.tokens.size() < 4 || !detail::parse_double(sl.tokens[3], ev.magnitude)) {
                issues.push_back(at(sl) + "load_step requires a numeric magnitude");
                continue;
            }
            ev.kind = EventKind::LoadStep;
            if (sl.tokens.size() >= 5) {
                if (sl.tokens[4] == "frac")
                    ev.basis = MagnitudeBasis::FractionOfTotalLoad;
                else if (sl.tokens[4] == "pu")
                    ev.basis = MagnitudeBasis::AbsolutePu;
                else {
                    issues.push_back(at(sl) + "unknown magnitude basis '" + sl.tokens[4] +
                                     "' (expected frac or pu)");
                    continue;
                }
            }
            int bus_id = 0;
            if (!detail::parse_int(ev.target, bus_id) || !cfg.system.grid.has_bus(bus_id)) {
                issues.push_back(at(sl) + "load_step targets unknown bus " + ev.target);
                continue;
            }
            if (cfg.system.grid.bus(cfg.system.grid.index_of(bus_id)).kind != BusKind::Load) {
                issues.push_back(at(sl) + "load_step target bus " + ev.target +
                                 " is not a load bus");
                continue;
            }
        } else if (kind == "gen_trip") {
            ev.kind = EventKind::GenTrip;
            bool known = false;
            for (const auto& sg : cfg.system.sgs) known |= sg.name == ev.target;
            for (const auto& g : cfg.system.gfms) known |= g.name == ev.target;
            if (!known) {
                issues.push_back(at(sl) + "gen_trip targets unknown device " + ev.target);
                continue;
            }
        } else if (kind == "branch_trip") {
            ev.kind = EventKind::BranchTrip;
            int number = 0;
            if (!detail::parse_int(ev.target, number) || number < 1 ||
                number > static_cast<int>(cfg.system.grid.branches().size())) {
                issues.push_back(at(sl) + "branch_trip targets unknown branch " + ev.target);
                continue;
            }
        } else {
            issues.push_back(at(sl) + "unknown event kind '" + kind + "'");
            continue;
        }
        if (!script.events.empty() && ev.time < script.events.back().time) {
            issues.push_back(at(sl) + "event times must be nondecreasing");
            continue;
        }
        script.events.push_back(std::move(ev));
    }
    if (!issues.empty()) throw ParseError(std::move(issues));
    return script;
}

inline ScenarioScript parse_scenario(const std::string& path, const SystemConfig& cfg) {
    return parse_scenario_text(read_file(path), path, cfg);
}

// ---------------------------------------------------------------------------
// Result emission
// ---------------------------------------------------------------------------

inline std::string render_trajectories_csv(const TrajectoryLog& log) {
    std::string out;
    out.reserve(64 * (log.record_count() + 1));
    out += "t";
    for (const auto& n : log.sg_names) out += ",omega_" + n;
    for (const auto& n : log.gfm_names)
        out += ",omega_" + n + ",pset_con_" + n + ",plow_" + n + ",pup_" + n + ",pset_" + n +
               ",pinj_" + n;
    out += ",coi_f_hz\n";
    for (std::size_t r = 0; r < log.record_count(); ++r) {
        out += format_sig12(log.time[r]);
        for (std::size_t u = 0; u < log.sg_names.size(); ++u)
            out += "," + format_sig12(log.sg_omega[u][r]);
        for (std::size_t u = 0; u < log.gfm_names.size(); ++u) {
            out += "," + format_sig12(log.gfm_omega[u][r]);
            out += "," + format_sig12(log.gfm_p_consensus[u][r]);
            out += "," + format_sig12(log.gfm_p_low[u][r]);
            out += "," + format_sig12(log.gfm_p_up[u][r]);
            out += "," + format_sig12(log.gfm_p_set[u][r]);
            out += "," + format_sig12(log.gfm_p_inj[u][r]);
        }
        out += "," + format_sig12(log.coi_hz[r]);
        out += "\n";
    }
    return out;
}

inline std::string render_heatmap_csv(const TrajectoryLog& log) {
    std::string out = "bus_id,delta_f_max_hz\n";
    for (const auto& d : max_deviation_map(log))
        out += std::to_string(d.bus_id) + "," + format_sig12(d.df_max_hz) + "\n";
    return out;
}

inline std::string render_summary(const RunSummary& s) {
    std::string out;
    out += "mode: " + s.mode + "\n";
    out += "max_coi_deviation_hz: " + format_sig12(s.max_coi_deviation_hz) + "\n";
    out += "violation_depth_hz: " + format_sig12(s.violation_depth_hz) + "\n";
    out += "steady_state_deviation_hz: " + format_sig12(s.steady_state_deviation_hz) + "\n";
    out += "settling_time_s: " +
           (s.settling_time_s < 0.0 ? std::string("never") : format_sig12(s.settling_time_s)) +
           "\n";
    out += "power_sharing_mismatch_pu: " + format_sig12(s.sharing_mismatch_pu) + "\n";
    return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open output file " + path.string());
    out << content;
    if (!out) throw Error("failed writing output file " + path.string());
}

/// Writes trajectories.csv, heatmap.csv and summary.txt into out_dir.
inline void emit_results(const TrajectoryLog& log, const RunSummary& summary,
                         const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error("cannot create output directory " + out_dir.string());
    write_file(out_dir / "trajectories.csv", render_trajectories_csv(log));
    write_file(out_dir / "heatmap.csv", render_heatmap_csv(log));
    std::string text = render_summary(summary);
    if (!log.event_markers.empty()) {
        text += "events:\n";
        for (const auto& m : log.event_markers)
            text += "  t=" + format_sig12(m.time) + " " + m.text + "\n";
    }
    if (!log.diagnostics.empty()) {
        text += "diagnostics:\n";
        for (const auto& d : log.diagnostics) text += "  " + d + "\n";
    }
    write_file(out_dir / "summary.txt", text);
}

}  // namespace gfmsim
