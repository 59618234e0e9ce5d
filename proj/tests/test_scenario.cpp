#include <cstdio>
#include <cstdlib>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "doctest.h"

#include "cmc/errors.hpp"
#include "cmc/scenario.hpp"

using namespace cmc;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("cmc_unit_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

int run_cli(const std::string& args, const fs::path& stdout_file) {
    const std::string cmd =
        std::string("\"") + CMC_CLI_PATH + "\" " + args + " > \"" + stdout_file.string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("buck prototype preset") {
    const Scenario sc = load_preset("buck-prototype");
    CHECK(sc.loop.topology == Topology::ConstOnTimeValley);
    CHECK(sc.loop.m1 == doctest::Approx(10.0 / 240e-9).epsilon(1e-12));
    CHECK(sc.loop.m2 == doctest::Approx(8.333e6).epsilon(1e-4));
    CHECK(sc.loop.t_on == doctest::Approx(100e-9));
    CHECK(sc.r_sample == doctest::Approx(0.01));
    // 4 mV across 10 mOhm.
    CHECK(sc.spectral.a_ub == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(sc.spectral.lambda_ub == doctest::Approx(0.4 * 2.0 * std::numbers::pi * 5e6).epsilon(1e-12));
    // Valley command sits half a ripple below the load current.
    CHECK(sc.i_command == doctest::Approx(8.0 - 0.5 * sc.loop.m1 * 100e-9).epsilon(1e-12));
    CHECK_THROWS_AS(load_preset("boost-prototype"), UnknownPreset);
    CHECK_THROWS_AS(load_scenario("no-such-preset-or-file"), UnknownPreset);
}

TEST_CASE("scenario parse errors") {
    CHECK_THROWS_AS(parse_scenario(""), ParseError);
    CHECK_THROWS_AS(parse_scenario("# only a comment\n\n"), ParseError);
    try {
        parse_scenario("topology = ConstOffTimePeak\nm1 = 1 A/us\nm2 = 1 A/us\nt_off = 3 mV\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 4);
        CHECK(std::string(e.what()).find("t_off") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_scenario("topology = ConstOffTimePeak\nbogus = 1\n"), ParseError);
    CHECK_THROWS_AS(parse_scenario("topology = ConstOffTimePeak\nm1 1 A/us\n"), ParseError);
    CHECK_THROWS_AS(parse_scenario("topology = Sideways\nm1 = 1\nm2 = 1\nt_off = 1\ni_command = 1\n"),
                    ParseError);
}

TEST_CASE("explicit scenario with unit suffixes") {
    const Scenario sc = parse_scenario(
        "topology = ConstOffTimePeak\n"
        "m1 = 2 A/us   # rising\n"
        "m2 = 1 A/us\n"
        "t_off = 500 ns\n"
        "i_command = 3 A\n"
        "i_max = 20 A\n"
        "r_sample = 5 mohm\n"
        "interference = trapezoid\n"
        "a_int = 1 mV\n"
        "f_int = 2 MHz\n"
        "slew_int = 100 V/us\n"
        "conditioning = overdrive\n"
        "tau_c = 2 ns\n"
        "v_trig = 10 mV\n");
    CHECK(sc.loop.m1 == doctest::Approx(2e6));
    CHECK(sc.loop.t_off == doctest::Approx(5e-7));
    CHECK(sc.spectral.a_ub == doctest::Approx(0.2));
    CHECK(sc.spectral.lambda_ub == doctest::Approx(100e6 / 5e-3));
    CHECK(sc.conditioning.kind == Conditioning::Kind::Overdrive);
    CHECK(sc.conditioning.overdrive_area() == doctest::Approx(10e-3 * 2e-9 / 5e-3));
}

TEST_CASE("command line: stability on the buck prototype") {
    const fs::path d = scratch_dir("stability");
    const int rc = run_cli("stability --preset buck-prototype --out \"" + d.string() + "\"",
                           d / "stdout.txt");
    CHECK(rc == 0);
    const std::string out = slurp(d / "stdout.txt");
    // Lambda_ub = 0.4 A * 2 pi * 5 MHz = 12.6 A/us exceeds m2/2 = 4.17 A/us.
    CHECK(out.find("stability: NotGuaranteed") != std::string::npos);
    CHECK(fs::exists(d / "stability.json"));
}

TEST_CASE("command line: deadbeat simulation without interference") {
    const fs::path d = scratch_dir("simulate");
    {
        std::ofstream s(d / "zero.cfg");
        s << "topology = ConstOffTimePeak\nm1 = 1 A/us\nm2 = 1 A/us\nt_off = 1 us\n"
             "i_command = 1.5 A\ni_max = 20 A\ninterference = zero\n";
    }
    const int rc = run_cli("simulate --scenario \"" + (d / "zero.cfg").string() + "\" --cycles 5 --out \"" +
                               d.string() + "\"",
                           d / "stdout.txt");
    CHECK(rc == 0);
    std::istringstream csv(slurp(d / "trace.csv"));
    std::string header, first;
    std::getline(csv, header);
    std::getline(csv, first);
    CHECK(header.rfind("cycle,i_extremum", 0) == 0);
    const double ip = std::stod(first.substr(first.find(',') + 1));
    CHECK(ip == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("command line: mc-region is byte-identical for the same seed") {
    const fs::path a = scratch_dir("mc_a");
    const fs::path b = scratch_dir("mc_b");
    const std::string args =
        "mc-region --preset buck-prototype --grid 3x3 --samples 4 --cycles 200 --seed 17 --out ";
    CHECK(run_cli(args + "\"" + a.string() + "\"", a / "stdout.txt") == 0);
    CHECK(run_cli(args + "\"" + b.string() + "\" --threads 1", b / "stdout.txt") == 0);
    const std::string ca = slurp(a / "mc_region.csv");
    CHECK(!ca.empty());
    CHECK(ca == slurp(b / "mc_region.csv"));
    CHECK(ca.rfind("a_hat,omega_hat,stable_fraction,theorem_flag\n", 0) == 0);
}

TEST_CASE("command line exit codes") {
    const fs::path d = scratch_dir("exit");
    CHECK(run_cli("stability --scenario \"" + (d / "missing.cfg").string() + "\"", d / "o1.txt") == 1);
    CHECK(run_cli("mc-region --preset buck-prototype --grid 0x3 --out \"" + d.string() + "\"",
                  d / "o2.txt") == 2);
    {
        std::ofstream s(d / "bad.cfg");
        s << "topology = ConstOffTimePeak\nm1 = 1 A/us\nm2 = 1 A/us\nt_off = 1 us\n"
             "i_command = 1.5 A\ni_max = 20 A\n";
    }
    {
        std::ofstream s(d / "pts.csv");
        s << "overdrive,delay\n0.01,1e-9\n";
    }
    CHECK(run_cli("fit-comparator --scenario \"" + (d / "bad.cfg").string() + "\" --data \"" +
                      (d / "pts.csv").string() + "\" --out \"" + d.string() + "\"",
                  d / "o3.txt") == 2);
    CHECK(run_cli("fit-comparator --scenario \"" + (d / "bad.cfg").string() + "\" --data \"" +
                      (d / "nothing.csv").string() + "\" --out \"" + d.string() + "\"",
                  d / "o4.txt") == 1);
}
