#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmc/conditioning.hpp"
#include "cmc/interference.hpp"
#include "cmc/loop.hpp"
#include "cmc/sweep.hpp"

namespace cmc {

struct RunSettings {
    int n_cycles = 200;
    std::uint64_t seed = 1;
    std::string output_path = ".";
};

// Normalized sweep settings for design-diagram and mc-region.
struct SweepSettings {
    DesignMethod method = DesignMethod::Slope;
    bool method_set = false;
    std::vector<double> levels;
    double param_lo = 0.0;
    double param_hi = 0.0;
    int param_points = 17;
    double mc_a_max = 1.0;
    double mc_omega_min = 0.25;
    double mc_omega_max = 8.0;
};

// Physical operating point with all interference amplitudes in the current domain.
struct Scenario {
    std::string name;
    LoopConfig loop;
    Conditioning conditioning;
    Signal interference;
    SpectralBounds spectral;
    double i_command = 0.0;  // extremum command [A]
    double r_sample = 1.0;
    double v_in = 0.0;
    double v_out = 0.0;
    double inductance = 0.0;
    double i_out = 0.0;
    StaticMapMode map_mode = StaticMapMode::ClosedLoop;
    double map_lo = 0.0;
    double map_hi = 0.0;
    int map_points = 201;
    double step = 0.0;  // transient command step [A]
    std::string fit_data;
    RunSettings run;
    SweepSettings sweep;
};

// Flat key=value text; '#' starts a comment. Dimensioned values take an optional SI
// suffix (bare numbers are base units). Voltage amplitudes are divided by r_sample.
Scenario parse_scenario(const std::string& text, const std::string& name = "scenario");

Scenario load_scenario_file(const std::string& path);

Scenario load_preset(const std::string& name);

// Preset name, or a path when no preset of that name exists and the file is readable.
Scenario load_scenario(const std::string& path_or_preset);

std::vector<std::string> preset_names();
std::string preset_text(const std::string& name);

// Inductor ripple at the interference-free operating point [A].
double ripple(const LoopConfig& cfg);

}  // namespace cmc
