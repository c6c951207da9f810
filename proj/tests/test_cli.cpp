#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "asyncdet/errors.hpp"
#include "commands.hpp"
#include "doctest.h"

using namespace asyncdet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = 0;
    std::string out;
    std::string err;
};

Outcome invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "asyncdet");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out, err;
    Outcome o;
    o.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() /
                ("asyncdet_cli_" + std::to_string(std::random_device{}()) + "_" + std::to_string(counter_++));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
    static inline int counter_ = 0;
};

}  // namespace

TEST_CASE("simulate reproduces the noiseless step example") {
    const auto o = invoke({"simulate", "--k", "2", "--sigma2", "0", "--alpha", "1,2", "--onsets", "3,5",
                           "--horizon", "6", "--seed", "1"});
    CHECK(o.code == 0);
    CHECK(o.out == "t,s1,s2\n1,0,0\n2,0,0\n3,0,0\n4,1,0\n5,1,0\n6,1,2\n");

    const auto common = invoke({"simulate", "--k", "2", "--sigma2", "0", "--mu", "1", "--onsets", "3,5",
                                "--horizon", "6", "--seed", "1"});
    CHECK(common.code == 0);
    CHECK(common.out == "t,s1,s2\n1,0,0\n2,0,0\n3,0,0\n4,1,0\n5,1,0\n6,1,1\n");
}

TEST_CASE("simulate output is a function of the seed") {
    TempDir dir;
    const std::vector<std::string> base{"simulate", "--k", "4", "--sigma2", "1", "--mu", "0.5",
                                        "--change", "50", "--tau-max", "5", "--horizon", "200"};
    auto with = [&](const std::string& seed, const fs::path& out) {
        auto args = base;
        args.insert(args.end(), {"--seed", seed, "--out", out.string()});
        return invoke(args);
    };
    CHECK(with("9", dir / "a.csv").code == 0);
    CHECK(with("9", dir / "b.csv").code == 0);
    CHECK(with("10", dir / "c.csv").code == 0);
    const auto a = slurp(dir / "a.csv");
    CHECK(a.size() > 1000);
    CHECK(a == slurp(dir / "b.csv"));
    CHECK(a != slurp(dir / "c.csv"));

    // the file is what the module produces for the same configuration
    cli::RunConfig c;
    c.k = 4;
    c.sigma2 = 1;
    c.mu = 0.5;
    c.change = 50;
    c.tau_max = 5;
    c.horizon = 200;
    c.seed = 9;
    std::ostringstream direct;
    write_sensor_csv(direct, cli::cmd_simulate(c));
    CHECK(direct.str() == a);
}

TEST_CASE("exit codes") {
    TempDir dir;
    SUBCASE("missing seed is a validation error") {
        const auto o = invoke({"simulate", "--k", "2", "--horizon", "5"});
        CHECK(o.code == 1);
        CHECK(o.err.find("--seed") != std::string::npos);
    }
    SUBCASE("unknown flag") {
        CHECK(invoke({"simulate", "--bogus", "1"}).code == 1);
        CHECK(invoke({}).code == 1);
    }
    SUBCASE("missing input file") {
        const auto o = invoke({"detect", "--in", (dir / "nope.csv").string(), "--d", "1", "--b", "5"});
        CHECK(o.code == 2);
    }
    SUBCASE("malformed CSV reports the line") {
        std::ofstream(dir / "bad.csv") << "t,s1,s2\n1,0,0\n2,0,zz\n";
        const auto o = invoke({"detect", "--in", (dir / "bad.csv").string(), "--d", "1", "--b", "5"});
        CHECK(o.code == 2);
        CHECK(o.err.find("line 3") != std::string::npos);
    }
    SUBCASE("empty threshold grid") {
        const auto o = invoke({"curve", "--k", "3", "--mu", "0.5", "--seed", "1", "--trials", "2"});
        CHECK(o.code == 1);
    }
    SUBCASE("calibration prefix shorter than the window") {
        std::ofstream(dir / "n.csv") << "t,s1,s2\n1,0.1,0.3\n2,0.2,-0.1\n3,0.5,0.4\n";
        const auto o = invoke({"calibrate", "--in", (dir / "n.csv").string(), "--w", "20", "--prefix", "2"});
        CHECK(o.code == 1);
    }
    SUBCASE("error classes map to codes") {
        CHECK(cli::exit_code_for(NonConvergenceError("x", 1.0, 3)) == 3);
        CHECK(cli::exit_code_for(ParseError("x", 4)) == 2);
        CHECK(cli::exit_code_for(IoError("x")) == 2);
        CHECK(cli::exit_code_for(DegenerateInputError("x")) == 1);
        CHECK(cli::exit_code_for(ValidationError("x")) == 1);
    }
}

TEST_CASE("detect matches the library run") {
    TempDir dir;
    const auto data = dir / "data.csv";
    REQUIRE(invoke({"simulate", "--k", "5", "--sigma2", "1", "--mu", "0.6", "--change", "300", "--tau-max",
                    "3", "--horizon", "600", "--seed", "4", "--out", data.string()})
                .code == 0);
    const auto o = invoke({"detect", "--in", data.string(), "--w", "10", "--tau-max", "3", "--sync", "--d",
                           "1.6", "--b", "15", "--full", "--trajectory", (dir / "traj.csv").string(),
                           "--delays", (dir / "delays.csv").string()});
    REQUIRE(o.code == 0);

    cli::RunConfig c;
    c.in = data.string();
    c.w = 10;
    c.tau_max = 3;
    c.sync = true;
    c.d = 1.6;
    c.b = 15;
    c.full = true;
    const auto report = cli::cmd_detect(c);
    std::ostringstream rep, traj, delays;
    detect::write_report_csv(rep, report);
    detect::write_trajectory_csv(traj, report);
    detect::write_delay_log_csv(delays, report);
    CHECK(o.out == rep.str());
    CHECK(slurp(dir / "traj.csv") == traj.str());
    CHECK(slurp(dir / "delays.csv") == delays.str());

    // and the command is the plain module pipeline
    const auto table = read_sensor_csv_file(data.string());
    detect::AsyncParams ap;
    ap.w = 10;
    ap.tau_max = 3;
    ap.d = 1.6;
    ap.b = 15;
    ap.stop_at_alarm = false;
    const auto direct = detect::async_pipeline(table, ap);
    CHECK(direct.crossed_at == report.crossed_at);
    REQUIRE(direct.trajectory.size() == report.trajectory.size());
    for (std::size_t j = 0; j < direct.trajectory.size(); ++j) {
        CHECK(direct.trajectory[j].S == report.trajectory[j].S);
    }
    REQUIRE(report.alarmed());
    CHECK(*report.reported_at - *report.crossed_at == 10);
}

TEST_CASE("detect on an injected noiseless change") {
    TempDir dir;
    const auto data = dir / "clean.csv";
    REQUIRE(invoke({"simulate", "--k", "3", "--sigma2", "0", "--alpha", "1,0.8,0.6", "--onsets",
                    "100,104,102", "--signal", "sine:30", "--horizon", "300", "--seed", "1", "--out",
                    data.string()})
                .code == 0);
    const auto o = invoke({"detect", "--in", data.string(), "--w", "20", "--tau-max", "6", "--sync", "--d",
                           "0.1", "--b", "2", "--full", "--cadence", "1", "--delays", (dir / "d.csv").string()});
    REQUIRE(o.code == 0);
    CHECK(o.err.find("skipped") != std::string::npos);
    std::istringstream rows(o.out);
    std::string header, row;
    std::getline(rows, header);
    std::getline(rows, row);
    CHECK(header == "detector,crossed_at,reported_at,b,d");
    // detector,crossed,reported,...
    const auto c1 = row.find(',');
    const auto c2 = row.find(',', c1 + 1);
    const auto c3 = row.find(',', c2 + 1);
    const long reported = std::stol(row.substr(c2 + 1, c3 - c2 - 1));
    CHECK(reported >= 100);

    const auto log = slurp(dir / "d.csv");
    CHECK(log.rfind("t,tau_1,tau_2,tau_3,iterations,converged\n", 0) == 0);
    CHECK(log.find(",0,4,2,") != std::string::npos);
}

TEST_CASE("detect on pure noise with a huge threshold") {
    TempDir dir;
    const auto data = dir / "noise.csv";
    REQUIRE(invoke({"simulate", "--k", "3", "--sigma2", "1", "--horizon", "500", "--seed", "2", "--out",
                    data.string()})
                .code == 0);
    const auto o = invoke({"detect", "--in", data.string(), "--w", "10", "--d", "1.5", "--b", "1e9",
                           "--rate", "100"});
    CHECK(o.code == 0);
    CHECK(o.out == "detector,crossed_at,reported_at,b,d,crossed_at_s,reported_at_s\nsubspace,,,1e+09,1.5,,\n");
}

TEST_CASE("calibrate on pure noise") {
    TempDir dir;
    const auto data = dir / "noise.csv";
    REQUIRE(invoke({"simulate", "--k", "5", "--sigma2", "1", "--horizon", "20000", "--seed", "5", "--out",
                    data.string()})
                .code == 0);
    const auto a = invoke({"calibrate", "--in", data.string(), "--w", "200", "--prefix", "19000"});
    REQUIRE(a.code == 0);
    CHECK(std::stod(a.out) == doctest::Approx(1.5).epsilon(0.05));
    const auto b = invoke({"calibrate", "--in", data.string(), "--w", "200", "--prefix", "19000", "--factor", "1"});
    REQUIRE(b.code == 0);
    CHECK(std::stod(b.out) == doctest::Approx(1.0).epsilon(0.05));
    CHECK(std::stod(a.out) == doctest::Approx(1.5 * std::stod(b.out)).epsilon(1e-12));
}

TEST_CASE("curve matches the library and honours config files") {
    TempDir dir;
    const auto preset = dir / "preset.cfg";
    std::ofstream(preset) << "k=4\nsigma2=1\nmu=0.8\nw=6\ntau-max=2\ntrials=20\nhorizon=400\nseed=3\n"
                             "detector=subspace\nb-grid=2,5\nd=1.8\n";
    const auto o = invoke({"curve", "--config", preset.string(), "--threads", "1"});
    REQUIRE(o.code == 0);

    cli::RunConfig c;
    c.k = 4;
    c.sigma2 = 1;
    c.mu = 0.8;
    c.w = 6;
    c.tau_max = 2;
    c.trials = 20;
    c.horizon = 400;
    c.seed = 3;
    c.detector = "subspace";
    c.b_grid = {2, 5};
    c.d = 1.8;
    c.threads = 1;
    std::ostringstream direct;
    sim::write_curve_csv(direct, cli::cmd_curve(c));
    CHECK(o.out == direct.str());

    // flags win over the file
    const auto o2 = invoke({"curve", "--config", preset.string(), "--threads", "1", "--b-grid", "3"});
    REQUIRE(o2.code == 0);
    CHECK(o2.out.find("\nsubspace,3,") != std::string::npos);

    // one file serves several workflows; keys another workflow takes are skipped
    const auto o3 = invoke({"simulate", "--config", preset.string(), "--horizon", "3"});
    REQUIRE(o3.code == 0);
    CHECK(o3.out.rfind("t,s1,s2,s3,s4\n", 0) == 0);

    const auto bad = dir / "bad.cfg";
    std::ofstream(bad) << "k=4\nwindow=6\n";
    const auto o4 = invoke({"simulate", "--config", bad.string(), "--seed", "1"});
    CHECK(o4.code == 2);
    CHECK(o4.err.find("line 2") != std::string::npos);
}

TEST_CASE("shipped presets parse") {
    for (const char* name : {"comparison.conf", "seismic.conf"}) {
        const auto path = fs::path(ASYNCDET_SOURCE_DIR) / "presets" / name;
        REQUIRE(fs::exists(path));
        const auto args = cli::expand_config({"detect", "--config", path.string()});
        CHECK(args.size() > 2);
    }
}

TEST_CASE("peak picking keeps separated maxima") {
    std::vector<detect::StatisticPoint> traj;
    const double s[] = {0, 5, 4, 0, 0, 3, 0, 9, 8, 0};
    for (int j = 0; j < 10; ++j) {
        traj.push_back({j + 1, 0.0, s[j]});
    }
    const auto peaks = cli::find_peaks(traj, 3, 2);
    REQUIRE(peaks.size() == 3);
    CHECK(peaks[0].t == 8);
    CHECK(peaks[1].t == 2);
    CHECK(peaks[2].t == 6);
}
