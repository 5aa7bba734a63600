#pragma once

#include <string>
#include <vector>

#include "gfmsim/common.hpp"
#include "gfmsim/devices.hpp"
#include "gfmsim/network.hpp"
#include "gfmsim/scenario.hpp"

namespace gfmsim {

struct SgUnit {
    std::string name;
    int bus_id = 0;  // terminal bus
    SgParams params;
    SgState state;
    double dispatch = 0.0;  // mechanical power operating point, set at initialization
    bool in_service = true;
    int internal_bus = -1;  // bus index, assigned by build()
    int coupling_index = -1;
};

struct GfmUnit {
    std::string name;
    int bus_id = 0;
    GfmParams params;
    GfmState state;
    bool in_service = true;
    int internal_bus = -1;
    int coupling_index = -1;
};

/// The complete physical plant: network plus attached devices.
class PowerSystem {
public:
    GridModel grid;
    std::vector<SgUnit> sgs;
    std::vector<GfmUnit> gfms;
    double omega0 = 376.99111843077515;  // rad/s
    double total_load_p0 = 0.0;          // captured by build(); basis for fractional load steps

    /// Appends the device-internal buses and couplings, assembles the
    /// admittance matrix and validates the result. Call once after all buses,
    /// branches and devices are declared.
    void build() {
        std::vector<std::string> issues;
        for (const auto& sg : sgs) sg.params.validate("SG " + sg.name, issues);
        for (const auto& g : gfms) g.params.validate("GFM " + g.name, issues);
        for (std::size_t i = 0; i < sgs.size(); ++i)
            for (std::size_t j = i + 1; j < sgs.size(); ++j)
                if (sgs[i].name == sgs[j].name)
                    issues.push_back("duplicate device name " + sgs[i].name);
        for (std::size_t i = 0; i < gfms.size(); ++i)
            for (std::size_t j = i + 1; j < gfms.size(); ++j)
                if (gfms[i].name == gfms[j].name)
                    issues.push_back("duplicate device name " + gfms[i].name);
        for (const auto& sg : sgs)
            if (!grid.has_bus(sg.bus_id))
                issues.push_back("SG " + sg.name + " references unknown bus " +
                                 std::to_string(sg.bus_id));
        for (const auto& g : gfms)
            if (!grid.has_bus(g.bus_id))
                issues.push_back("GFM " + g.name + " references unknown bus " +
                                 std::to_string(g.bus_id));
        if (!issues.empty()) throw ParseError(std::move(issues));

        for (auto& sg : sgs) {
            sg.coupling_index = static_cast<int>(grid.couplings().size());
            sg.internal_bus = grid.add_device_bus(BusKind::SgInternal, sg.bus_id,
                                                  sg.params.x_coupling);
        }
        for (auto& g : gfms) {
            g.coupling_index = static_cast<int>(grid.couplings().size());
            g.internal_bus = grid.add_device_bus(BusKind::GfmInternal, g.bus_id,
                                                 g.params.x_coupling);
        }
        grid.assemble();
        grid.check_connected();
        total_load_p0 = grid.total_load_p();
    }

    int in_service_sg_count() const {
        int n = 0;
        for (const auto& sg : sgs)
            if (sg.in_service) ++n;
        return n;
    }

    /// Applies one timed disturbance. Throws TopologyError for events
    /// addressed to unknown or already-removed elements.
    void apply_event(const Event& ev) {
        switch (ev.kind) {
            case EventKind::LoadStep: {
                const int bus_id = parse_bus_target(ev.target);
                const double dp = ev.basis == MagnitudeBasis::FractionOfTotalLoad
                                      ? ev.magnitude * total_load_p0
                                      : ev.magnitude;
                grid.step_load(bus_id, dp);
                return;
            }
            case EventKind::GenTrip: {
                for (auto& sg : sgs) {
                    if (sg.name != ev.target) continue;
                    if (!sg.in_service)
                        throw TopologyError("device " + ev.target + " is already tripped");
                    sg.in_service = false;
                    grid.trip_coupling(sg.coupling_index);
                    ensure_not_sourceless();
                    return;
                }
                for (auto& g : gfms) {
                    if (g.name != ev.target) continue;
                    if (!g.in_service)
                        throw TopologyError("device " + ev.target + " is already tripped");
                    g.in_service = false;
                    grid.trip_coupling(g.coupling_index);
                    ensure_not_sourceless();
                    return;
                }
                throw TopologyError("trip of unknown device " + ev.target);
            }
            case EventKind::BranchTrip: {
                int number = 0;
                try {
                    number = std::stoi(ev.target);
                } catch (const std::exception&) {
                    throw TopologyError("branch trip target '" + ev.target +
                                        "' is not a branch number");
                }
                grid.trip_branch(number - 1);
                return;
            }
        }
        throw Error("unreachable event kind");
    }

private:
    int parse_bus_target(const std::string& target) const {
        try {
            const int id = std::stoi(target);
            grid.index_of(id);
            return id;
        } catch (const TopologyError&) {
            throw;
        } catch (const std::exception&) {
            throw TopologyError("load step target '" + target + "' is not a bus id");
        }
    }

    void ensure_not_sourceless() const {
        int sources = in_service_sg_count();
        for (const auto& g : gfms)
            if (g.in_service) ++sources;
        if (sources == 0)
            throw TopologyError("trip leaves the network sourceless");
    }
};

}  // namespace gfmsim
