#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cmc/conditioning.hpp"
#include "cmc/interference.hpp"

namespace cmc {

enum class Topology { ConstOffTimePeak, ConstOnTimeValley, FixedFreqPeak, FixedFreqValley };

const char* to_string(Topology t);
Topology parse_topology(const std::string& name);

struct LoopConfig {
    Topology topology = Topology::ConstOffTimePeak;
    double m1 = 0.0;        // rising slope [A/s]
    double m2 = 0.0;        // falling slope [A/s]
    double t_off = 0.0;     // ConstOffTimePeak
    double t_on = 0.0;      // ConstOnTimeValley
    double t_period = 0.0;  // fixed-frequency loops
    double t_on_min = 0.0;  // shortest search phase (blanking), also the minimum event time
    double i_max = 0.0;
    // Search window for the constant-time loops; 0 selects 8x the nominal event time.
    double t_search_max = 0.0;

    bool is_peak() const;
    bool is_fixed_frequency() const;
    // Slope of the inductor current while the comparator is armed.
    double search_slope() const;
    double other_slope() const;
    // Steady-state duration of the search phase with no interference.
    double nominal_event_time() const;
    double search_window() const;
    void validate() const;
};

struct LoopState {
    int cycle = 0;
    double i_extremum = 0.0;
    double t_event = 0.0;
    double wall_time = 0.0;
    // Filter output at the last event, in the loop's search coordinates.
    double filter_state = 0.0;
    // Overdrive comparator: trigger instant minus the integrator release instant.
    double overdrive_delay = 0.0;
};

// Steady state for a constant command with no interference.
LoopState initial_state(const LoopConfig& cfg, double i_extremum);

struct Detector {
    enum class Kind { Ideal, Filtered, OverdriveDelay };
    Kind kind = Kind::Ideal;
    double command_slope = 0.0;  // slope compensation
    double tau = 0.0;            // filter
    double carried = 0.0;        // filter state at the segment start
    Conditioning comparator;     // overdrive

    static Detector ideal(double m_s = 0.0);
    static Detector filtered(double tau, double carried_state);
    static Detector overdrive(const Conditioning& comp);
};

struct CrossingResult {
    double t_event = 0.0;
    double detector_value = 0.0;  // filter output at the event
    double t_fi = 0.0;            // integrator release instant (overdrive)
    double overdrive_delay = 0.0;  // trigger minus release (overdrive)
};

// Earliest t in [t_min, window] at which the detector fires on the sensed signal
// ramp_offset + ramp_slope*t + w(w_origin + t) against `command`.
CrossingResult first_crossing_detail(double ramp_offset, double ramp_slope, double command,
                                     const Signal& w, const Detector& det, double window,
                                     double t_min = 0.0, double w_origin = 0.0);

double first_crossing(double ramp_offset, double ramp_slope, double command, const Signal& w,
                      const Detector& det, double window, double t_min = 0.0,
                      double w_origin = 0.0);

enum class InterferenceMode { FreeRunning, CycleSynchronous };

// Advances one switching cycle. In free-running mode w is read in absolute time
// (offset by w_time_offset); in cycle-synchronous mode it restarts at each search phase.
LoopState step_cycle(const LoopConfig& cfg, const LoopState& state, double i_c,
                     const Conditioning& cond, const Signal& w,
                     InterferenceMode mode = InterferenceMode::FreeRunning,
                     double w_time_offset = 0.0);

struct Verdict {
    enum class Kind { Converged, LimitCycle, Divergent, NoCrossing, Unresolved };
    Kind kind = Kind::Unresolved;
    int cycles = 0;  // settling cycle for Converged
    int period = 0;  // for LimitCycle
    std::string str() const;
};

struct SimOptions {
    InterferenceMode mode = InterferenceMode::FreeRunning;
    bool stop_on_verdict = true;
    double tol_rel = 1e-9;     // of i_max
    int converge_run = 8;
    int max_period = 32;
    double twin_delta_rel = 1e-6;  // of i_max
};

struct Trace {
    LoopState initial;
    std::vector<LoopState> states;  // cycles 1..n
    Verdict verdict;
};

Trace simulate(const LoopConfig& cfg, const std::vector<double>& i_c_sequence,
               const Conditioning& cond, const Signal& w, int n_cycles, std::uint64_t seed,
               const LoopState& initial, const SimOptions& opt = {});

// Starts from initial_state(cfg, 0).
Trace simulate(const LoopConfig& cfg, const std::vector<double>& i_c_sequence,
               const Conditioning& cond, const Signal& w, int n_cycles, std::uint64_t seed);

enum class StaticMapMode { ClosedLoop, FixedRamp };

struct MapSample {
    enum class Outcome { Reached, LimitCycle, Divergent, NoCrossing, Unresolved };
    double i_c = 0.0;
    Outcome outcome = Outcome::Unresolved;
    double i_p = 0.0;            // Reached
    int period = 0;              // LimitCycle
    std::vector<double> values;  // LimitCycle / Unresolved tail
};

struct StaticMap {
    std::vector<MapSample> samples;
};

struct StaticMapOptions {
    StaticMapMode mode = StaticMapMode::ClosedLoop;
    // FixedRamp: start of the sensed ramp (valley for peak loops, peak for valley loops).
    double ramp_origin = 0.0;
    int max_cycles = 2000;
};

// Cycle-synchronous interference; each command is iterated to its periodic steady state.
StaticMap static_map(const LoopConfig& cfg, const std::vector<double>& i_c_grid,
                     const Conditioning& cond, const Signal& w, const StaticMapOptions& opt = {});

// Length of the attained output range not covered by continuous pieces of the map.
double discontinuity_measure(const StaticMap& map, double jump_factor = 20.0);

double nonlinearity_degree(const StaticMap& map);

bool monotone_sensor_check(const Signal& w, double slope, double window, double t0 = 0.0);

void write_trace_csv(std::ostream& os, const Trace& trace);
void write_static_map_csv(std::ostream& os, const StaticMap& map);

}  // namespace cmc
