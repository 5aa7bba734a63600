#pragma once

#include <string>
#include <vector>

namespace gfmsim {

enum class EventKind { LoadStep, GenTrip, BranchTrip };

enum class MagnitudeBasis {
    FractionOfTotalLoad,  // signed fraction of the pre-disturbance total system load
    AbsolutePu
};

struct Event {
    double time = 0.0;    // s
    EventKind kind = EventKind::LoadStep;
    std::string target;   // load_step: bus id; gen_trip: device name; branch_trip: branch number
    double magnitude = 0.0;
    MagnitudeBasis basis = MagnitudeBasis::FractionOfTotalLoad;
};

struct ScenarioScript {
    std::vector<Event> events;  // times nonnegative and nondecreasing

    double last_event_time() const {
        return events.empty() ? 0.0 : events.back().time;
    }
};

}  // namespace gfmsim
