#include "cmc/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

#include "cmc/errors.hpp"

namespace cmc {

namespace {

enum class Dim {
    Text,
    Number,
    Count,
    Time,
    Frequency,
    Voltage,
    Current,
    Inductance,
    Resistance,
    CurrentSlope,
    VoltageSlope,
    Angle,
    NumberList,
};

struct Unit {
    const char* suffix;
    Dim dim;
    double scale;
};

const Unit kUnits[] = {
    {"s", Dim::Time, 1.0},          {"ms", Dim::Time, 1e-3},
    {"us", Dim::Time, 1e-6},        {"ns", Dim::Time, 1e-9},
    {"ps", Dim::Time, 1e-12},       {"Hz", Dim::Frequency, 1.0},
    {"kHz", Dim::Frequency, 1e3},   {"MHz", Dim::Frequency, 1e6},
    {"GHz", Dim::Frequency, 1e9},   {"V", Dim::Voltage, 1.0},
    {"mV", Dim::Voltage, 1e-3},     {"uV", Dim::Voltage, 1e-6},
    {"A", Dim::Current, 1.0},       {"mA", Dim::Current, 1e-3},
    {"H", Dim::Inductance, 1.0},    {"mH", Dim::Inductance, 1e-3},
    {"uH", Dim::Inductance, 1e-6},  {"nH", Dim::Inductance, 1e-9},
    {"ohm", Dim::Resistance, 1.0},  {"mohm", Dim::Resistance, 1e-3},
    {"A/s", Dim::CurrentSlope, 1.0}, {"A/ms", Dim::CurrentSlope, 1e3},
    {"A/us", Dim::CurrentSlope, 1e6}, {"A/ns", Dim::CurrentSlope, 1e9},
    {"V/s", Dim::VoltageSlope, 1.0}, {"V/ms", Dim::VoltageSlope, 1e3},
    {"V/us", Dim::VoltageSlope, 1e6}, {"V/ns", Dim::VoltageSlope, 1e9},
    {"mV/ns", Dim::VoltageSlope, 1e6}, {"rad", Dim::Angle, 1.0},
    {"deg", Dim::Angle, std::numbers::pi / 180.0},
};

struct KeySpec {
    const char* key;
    Dim dims[2];
};

const KeySpec kKeys[] = {
    {"topology", {Dim::Text, Dim::Text}},
    {"conditioning", {Dim::Text, Dim::Text}},
    {"interference", {Dim::Text, Dim::Text}},
    {"map_mode", {Dim::Text, Dim::Text}},
    {"design_method", {Dim::Text, Dim::Text}},
    {"out", {Dim::Text, Dim::Text}},
    {"fit_data", {Dim::Text, Dim::Text}},
    {"v_in", {Dim::Voltage, Dim::Voltage}},
    {"v_out", {Dim::Voltage, Dim::Voltage}},
    {"l", {Dim::Inductance, Dim::Inductance}},
    {"m1", {Dim::CurrentSlope, Dim::CurrentSlope}},
    {"m2", {Dim::CurrentSlope, Dim::CurrentSlope}},
    {"m_s", {Dim::CurrentSlope, Dim::VoltageSlope}},
    {"t_on", {Dim::Time, Dim::Time}},
    {"t_off", {Dim::Time, Dim::Time}},
    {"t_period", {Dim::Time, Dim::Time}},
    {"f_sw", {Dim::Frequency, Dim::Frequency}},
    {"t_on_min", {Dim::Time, Dim::Time}},
    {"t_search_max", {Dim::Time, Dim::Time}},
    {"i_out", {Dim::Current, Dim::Current}},
    {"i_command", {Dim::Current, Dim::Current}},
    {"i_max", {Dim::Current, Dim::Current}},
    {"r_sample", {Dim::Resistance, Dim::Resistance}},
    {"f_int", {Dim::Frequency, Dim::Frequency}},
    {"a_int", {Dim::Voltage, Dim::Current}},
    {"slew_int", {Dim::VoltageSlope, Dim::CurrentSlope}},
    {"phase_int", {Dim::Angle, Dim::Angle}},
    {"tau", {Dim::Time, Dim::Time}},
    {"tau_c", {Dim::Time, Dim::Time}},
    {"v_trig", {Dim::Voltage, Dim::Voltage}},
    {"t_d", {Dim::Time, Dim::Time}},
    {"t_blank", {Dim::Time, Dim::Time}},
    {"cycles", {Dim::Count, Dim::Count}},
    {"seed", {Dim::Count, Dim::Count}},
    {"map_lo", {Dim::Current, Dim::Current}},
    {"map_hi", {Dim::Current, Dim::Current}},
    {"map_points", {Dim::Count, Dim::Count}},
    {"step", {Dim::Current, Dim::Current}},
    {"design_levels", {Dim::NumberList, Dim::NumberList}},
    {"design_lo", {Dim::Number, Dim::Number}},
    {"design_hi", {Dim::Number, Dim::Number}},
    {"design_points", {Dim::Count, Dim::Count}},
    {"mc_a_max", {Dim::Number, Dim::Number}},
    {"mc_omega_min", {Dim::Number, Dim::Number}},
    {"mc_omega_max", {Dim::Number, Dim::Number}},
};

const char* const kBuckPrototype = R"(# Constant on-time valley buck prototype
topology = ConstOnTimeValley
v_in = 12 V
v_out = 2 V
l = 240 nH
t_on = 100 ns
r_sample = 10 mohm
i_out = 8 A
i_max = 40 A
interference = sinusoid
f_int = 5 MHz
a_int = 4 mV
conditioning = none
)";

struct Value {
    Dim dim = Dim::Text;
    double number = 0.0;
    std::string text;
    std::vector<double> list;
    int line = 0;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

const KeySpec* find_key(const std::string& key) {
    for (const KeySpec& k : kKeys)
        if (key == k.key) return &k;
    return nullptr;
}

bool parse_double(const std::string& s, double& out, std::size_t& used) {
    const char* first = s.data();
    const auto [ptr, ec] = std::from_chars(first, first + s.size(), out);
    if (ec != std::errc()) return false;
    used = static_cast<std::size_t>(ptr - first);
    return std::isfinite(out);
}

Value parse_value(const KeySpec& spec, const std::string& key, const std::string& raw, int line) {
    Value v;
    v.line = line;
    if (raw.empty()) throw ParseError("missing value for '" + key + "'", line);
    if (spec.dims[0] == Dim::Text) {
        v.dim = Dim::Text;
        v.text = raw;
        return v;
    }
    if (spec.dims[0] == Dim::NumberList) {
        v.dim = Dim::NumberList;
        std::stringstream ss(raw);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            double x = 0.0;
            std::size_t used = 0;
            if (!parse_double(item, x, used) || used != item.size())
                throw ParseError("bad number '" + item + "' in '" + key + "'", line);
            v.list.push_back(x);
        }
        return v;
    }
    double x = 0.0;
    std::size_t used = 0;
    if (!parse_double(raw, x, used)) throw ParseError("bad number for '" + key + "'", line);
    const std::string suffix = trim(raw.substr(used));
    if (spec.dims[0] == Dim::Number || spec.dims[0] == Dim::Count) {
        if (!suffix.empty())
            throw ParseError("'" + key + "' takes no unit, got '" + suffix + "'", line);
        if (spec.dims[0] == Dim::Count && (x < 0.0 || x != std::floor(x)))
            throw ParseError("'" + key + "' must be a non-negative integer", line);
        v.dim = spec.dims[0];
        v.number = x;
        return v;
    }
    if (suffix.empty()) {
        v.dim = spec.dims[0];
        v.number = x;
        return v;
    }
    for (const Unit& u : kUnits) {
        if (suffix == u.suffix && (u.dim == spec.dims[0] || u.dim == spec.dims[1])) {
            v.dim = u.dim;
            v.number = x * u.scale;
            return v;
        }
    }
    throw ParseError("unit '" + suffix + "' does not fit '" + key + "'", line);
}

std::map<std::string, Value> parse_pairs(const std::string& text) {
    std::map<std::string, Value> values;
    std::istringstream in(text);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected key = value", n);
        const std::string key = trim(line.substr(0, eq));
        const std::string raw = trim(line.substr(eq + 1));
        if (key.empty()) throw ParseError("empty key", n);
        const KeySpec* spec = find_key(key);
        if (!spec) throw ParseError("unknown key '" + key + "'", n);
        if (values.count(key)) throw ParseError("duplicate key '" + key + "'", n);
        values.emplace(key, parse_value(*spec, key, raw, n));
    }
    if (values.empty()) throw ParseError("scenario has no assignments", 0);
    return values;
}

class Reader {
public:
    explicit Reader(const std::map<std::string, Value>& values) : values_(values) {}

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    const Value& at(const std::string& key) const { return values_.at(key); }

    std::optional<double> number(const std::string& key) const {
        if (!has(key)) return std::nullopt;
        return at(key).number;
    }
    double number_or(const std::string& key, double fallback) const {
        return number(key).value_or(fallback);
    }
    std::string text_or(const std::string& key, const std::string& fallback) const {
        return has(key) ? at(key).text : fallback;
    }
    int line(const std::string& key) const { return has(key) ? at(key).line : 0; }

    // Voltage-domain values become currents through the sense resistor.
    double current_domain(const std::string& key, double r_sample) const {
        const Value& v = at(key);
        if (v.dim == Dim::Voltage || v.dim == Dim::VoltageSlope) return v.number / r_sample;
        return v.number;
    }

private:
    const std::map<std::string, Value>& values_;
};

template <typename F>
auto checked(const Reader& r, const std::string& key, F&& f) {
    try {
        return f();
    } catch (const PreconditionError& e) {
        throw ParseError(key + ": " + e.what(), r.line(key));
    }
}

Scenario build(const std::map<std::string, Value>& values, const std::string& name) {
    const Reader r(values);
    Scenario sc;
    sc.name = name;

    if (!r.has("topology")) throw ParseError("missing key 'topology'", 0);
    sc.loop.topology =
        checked(r, "topology", [&] { return parse_topology(r.at("topology").text); });
    LoopConfig& cfg = sc.loop;

    sc.r_sample = r.number_or("r_sample", 1.0);
    if (!(sc.r_sample > 0.0)) throw ParseError("r_sample must be positive", r.line("r_sample"));
    sc.v_in = r.number_or("v_in", 0.0);
    sc.v_out = r.number_or("v_out", 0.0);
    sc.inductance = r.number_or("l", 0.0);
    sc.i_out = r.number_or("i_out", 0.0);

    const bool buck = r.has("v_in") && r.has("v_out") && r.has("l");
    if (buck && !(sc.v_in > sc.v_out && sc.v_out > 0.0 && sc.inductance > 0.0))
        throw ParseError("buck stage needs v_in > v_out > 0 and l > 0", r.line("v_in"));
    if (r.has("m1"))
        cfg.m1 = *r.number("m1");
    else if (buck)
        cfg.m1 = (sc.v_in - sc.v_out) / sc.inductance;
    else
        throw ParseError("missing key 'm1' (or v_in, v_out, l)", 0);
    if (r.has("m2"))
        cfg.m2 = *r.number("m2");
    else if (buck)
        cfg.m2 = sc.v_out / sc.inductance;
    else
        throw ParseError("missing key 'm2' (or v_in, v_out, l)", 0);

    cfg.t_on = r.number_or("t_on", 0.0);
    cfg.t_off = r.number_or("t_off", 0.0);
    if (r.has("t_period"))
        cfg.t_period = *r.number("t_period");
    else if (r.has("f_sw"))
        cfg.t_period = 1.0 / *r.number("f_sw");
    cfg.t_on_min = r.number_or("t_on_min", 0.0);
    cfg.t_search_max = r.number_or("t_search_max", 0.0);

    const std::string cond = r.text_or("conditioning", "none");
    if (cond == "none") {
        sc.conditioning = Conditioning::none();
    } else if (cond == "slope") {
        if (!r.has("m_s")) throw ParseError("slope conditioning needs 'm_s'", r.line("conditioning"));
        sc.conditioning = checked(r, "m_s", [&] {
            return Conditioning::slope(r.current_domain("m_s", sc.r_sample));
        });
    } else if (cond == "filter") {
        if (!r.has("tau")) throw ParseError("filter conditioning needs 'tau'", r.line("conditioning"));
        sc.conditioning = checked(r, "tau", [&] { return Conditioning::filter(*r.number("tau")); });
    } else if (cond == "overdrive") {
        if (!r.has("tau_c") || !r.has("v_trig"))
            throw ParseError("overdrive conditioning needs 'tau_c' and 'v_trig'",
                             r.line("conditioning"));
        sc.conditioning = checked(r, "tau_c", [&] {
            return Conditioning::overdrive(*r.number("tau_c"), *r.number("v_trig"),
                                           r.number_or("t_d", 0.0), sc.r_sample);
        });
    } else {
        throw ParseError("unknown conditioning '" + cond + "'", r.line("conditioning"));
    }
    sc.conditioning.t_blank = r.number_or("t_blank", 0.0);

    const double rip_nominal = [&] {
        LoopConfig probe = cfg;
        probe.i_max = 1.0;
        try {
            return ripple(probe);
        } catch (const PreconditionError& e) {
            throw ParseError(std::string("loop timing: ") + e.what(), r.line("topology"));
        }
    }();

    if (r.has("i_command"))
        sc.i_command = *r.number("i_command");
    else if (r.has("i_out"))
        sc.i_command = cfg.is_peak() ? sc.i_out + 0.5 * rip_nominal : sc.i_out - 0.5 * rip_nominal;
    else
        throw ParseError("missing key 'i_command' (or i_out)", 0);
    cfg.i_max = r.number_or("i_max", 4.0 * (std::abs(sc.i_command) + rip_nominal));
    checked(r, "topology", [&] {
        cfg.validate();
        return 0;
    });

    const std::string kind = r.text_or("interference", "zero");
    const double phase = r.number_or("phase_int", 0.0);
    if (kind == "zero") {
        sc.interference = Signal::zero();
    } else if (kind == "sinusoid" || kind == "trapezoid") {
        if (!r.has("a_int") || !r.has("f_int"))
            throw ParseError(kind + " interference needs 'a_int' and 'f_int'",
                             r.line("interference"));
        const double a = r.current_domain("a_int", sc.r_sample);
        const double omega = 2.0 * std::numbers::pi * *r.number("f_int");
        if (kind == "sinusoid") {
            sc.interference = checked(r, "a_int", [&] { return Signal::sinusoid(a, omega, phase); });
        } else {
            const double slew = r.has("slew_int") ? r.current_domain("slew_int", sc.r_sample)
                                                  : std::abs(a) * omega;
            sc.interference =
                checked(r, "slew_int", [&] { return Signal::trapezoid(a, omega, slew, phase); });
        }
    } else {
        throw ParseError("unknown interference '" + kind + "'", r.line("interference"));
    }
    sc.spectral = bounds(sc.interference);

    const std::string mode = r.text_or("map_mode", "closed_loop");
    if (mode == "closed_loop")
        sc.map_mode = StaticMapMode::ClosedLoop;
    else if (mode == "fixed_ramp")
        sc.map_mode = StaticMapMode::FixedRamp;
    else
        throw ParseError("unknown map_mode '" + mode + "'", r.line("map_mode"));
    sc.map_lo = r.number_or("map_lo", sc.i_command - rip_nominal);
    sc.map_hi = r.number_or("map_hi", sc.i_command + rip_nominal);
    sc.map_points = static_cast<int>(r.number_or("map_points", 201));
    if (!(sc.map_hi > sc.map_lo) || sc.map_points < 2)
        throw ParseError("static map range needs map_hi > map_lo and two points",
                         r.line("map_points"));
    sc.step = r.number_or("step", 0.1 * rip_nominal);
    sc.fit_data = r.text_or("fit_data", "");

    sc.run.n_cycles = static_cast<int>(r.number_or("cycles", sc.run.n_cycles));
    sc.run.seed = static_cast<std::uint64_t>(r.number_or("seed", 1));
    sc.run.output_path = r.text_or("out", ".");

    SweepSettings& sw = sc.sweep;
    if (r.has("design_method")) {
        sw.method = checked(r, "design_method",
                            [&] { return parse_design_method(r.at("design_method").text); });
        sw.method_set = true;
    } else {
        switch (sc.conditioning.kind) {
            case Conditioning::Kind::Filter:
                sw.method = DesignMethod::Filter;
                break;
            case Conditioning::Kind::Overdrive:
                sw.method = DesignMethod::Comparator;
                break;
            default:
                sw.method = DesignMethod::Slope;
                break;
        }
    }
    if (r.has("design_levels")) sw.levels = r.at("design_levels").list;
    switch (sw.method) {
        case DesignMethod::Slope:
            if (sw.levels.empty()) sw.levels = {0.2, 0.4};
            sw.param_lo = 0.0;
            sw.param_hi = 1.0;
            break;
        case DesignMethod::Filter:
            if (sw.levels.empty()) sw.levels = {0.01, 0.03};
            sw.param_lo = 0.05;
            sw.param_hi = 3.0;
            break;
        case DesignMethod::Comparator:
            if (sw.levels.empty()) sw.levels = {0.02};
            sw.param_lo = 0.05;
            sw.param_hi = 0.95;
            break;
    }
    sw.param_lo = r.number_or("design_lo", sw.param_lo);
    sw.param_hi = r.number_or("design_hi", sw.param_hi);
    sw.param_points = static_cast<int>(r.number_or("design_points", sw.param_points));
    if (sw.param_points < 1 || sw.param_hi < sw.param_lo)
        throw ParseError("design axis needs design_hi >= design_lo and a point",
                         r.line("design_points"));
    sw.mc_a_max = r.number_or("mc_a_max", sw.mc_a_max);
    sw.mc_omega_min = r.number_or("mc_omega_min", sw.mc_omega_min);
    sw.mc_omega_max = r.number_or("mc_omega_max", sw.mc_omega_max);
    if (!(sw.mc_omega_min > 0.0) || sw.mc_omega_max < sw.mc_omega_min || !(sw.mc_a_max > 0.0))
        throw ParseError("mc grid needs 0 < mc_omega_min <= mc_omega_max and mc_a_max > 0",
                         r.line("mc_omega_min"));
    return sc;
}

}  // namespace

double ripple(const LoopConfig& cfg) {
    cfg.validate();
    switch (cfg.topology) {
        case Topology::ConstOffTimePeak:
            return cfg.m2 * cfg.t_off;
        case Topology::ConstOnTimeValley:
            return cfg.m1 * cfg.t_on;
        default:
            return cfg.m1 * cfg.m2 / (cfg.m1 + cfg.m2) * cfg.t_period;
    }
}

Scenario parse_scenario(const std::string& text, const std::string& name) {
    return build(parse_pairs(text), name);
}

Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read scenario file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), path);
}

std::vector<std::string> preset_names() { return {"buck-prototype"}; }

std::string preset_text(const std::string& name) {
    if (name == "buck-prototype") return kBuckPrototype;
    throw UnknownPreset("unknown preset '" + name + "'");
}

Scenario load_preset(const std::string& name) { return parse_scenario(preset_text(name), name); }

Scenario load_scenario(const std::string& path_or_preset) {
    const auto names = preset_names();
    if (std::find(names.begin(), names.end(), path_or_preset) != names.end())
        return load_preset(path_or_preset);
    std::ifstream probe(path_or_preset);
    if (!probe) throw UnknownPreset("no preset or readable file named '" + path_or_preset + "'");
    return load_scenario_file(path_or_preset);
}

}  // namespace cmc
