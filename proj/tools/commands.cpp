#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "CLI11.hpp"
#include "asyncdet/errors.hpp"

namespace asyncdet::cli {
namespace {

std::uint64_t require_seed(const RunConfig& c) {
    if (!c.seed) {
        throw ValidationError("--seed is required for simulation commands");
    }
    return *c.seed;
}

Waveform parse_signal(const std::string& spec) {
    if (spec == "step") {
        return Waveform::step();
    }
    if (spec.rfind("sine:", 0) == 0) {
        try {
            return Waveform::sine_cycle(std::stoll(spec.substr(5)));
        } catch (const std::logic_error&) {
            throw ValidationError("bad sine period in --signal " + spec);
        }
    }
    throw ValidationError("unknown --signal '" + spec + "' (step or sine:<period>)");
}

void require_detector_params(const RunConfig& c) {
    if (c.w < 1) {
        throw ValidationError("--w must be at least 1");
    }
    if (c.sync && c.w < 2) {
        throw ValidationError("delay estimation needs --w of at least 2");
    }
    if (c.tau_max < 0 || c.delta < 0 || c.n_max < 1) {
        throw ValidationError("need --tau-max >= 0, --delta >= 0, --n-max >= 1");
    }
    if (!std::isfinite(c.factor)) {
        throw ValidationError("--factor must be finite");
    }
}

template <typename Write>
void write_output(const std::string& path, std::ostream& fallback, Write&& write) {
    if (path.empty() || path == "-") {
        write(fallback);
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open " + path + " for writing");
    }
    write(f);
    f.flush();
    if (!f) {
        throw IoError("failed writing " + path);
    }
}

}  // namespace

ScenarioModel scenario_from_config(const RunConfig& c) {
    if (c.k < 1) {
        throw ValidationError("--k must be at least 1");
    }
    if (!(c.sigma2 >= 0.0) || !std::isfinite(c.sigma2)) {
        throw ValidationError("--sigma2 must be finite and nonnegative");
    }
    if (c.horizon < 1) {
        throw ValidationError("--horizon must be at least 1");
    }
    if (c.tau_max < 0) {
        throw ValidationError("--tau-max must be nonnegative");
    }
    ScenarioModel m;
    m.k = c.k;
    m.sigma2 = c.sigma2;
    m.waveform = parse_signal(c.signal);
    if (!c.alpha.empty()) {
        if (c.mu) {
            throw ValidationError("give either --mu or --alpha, not both");
        }
        m.alpha = c.alpha;
    } else {
        m.alpha.assign(c.k, c.mu.value_or(0.0));
    }

    if (!c.onsets.empty()) {
        if (c.change) {
            throw ValidationError("give either --onsets or --change, not both");
        }
        m.onsets = c.onsets;
    } else if (c.change) {
        m.onsets.assign(c.k, *c.change);
    } else {
        // No change inside the episode.
        m.onsets.assign(c.k, c.horizon);
    }
    m.validate();
    return m;
}

SensorTable cmd_simulate(const RunConfig& c) {
    const std::uint64_t seed = require_seed(c);
    ScenarioModel m = scenario_from_config(c);
    if (c.change && c.tau_max > 0) {
        sim::Scenario s{m, c.tau_max};
        m = s.draw(sim::mix_seed(seed, 0x5ce7));
    }
    return sim::generate_episode(m, c.horizon, seed);
}

SensorTable load_input(const RunConfig& c) {
    if (c.in.empty()) {
        throw ValidationError("--in is required");
    }
    SensorTable table = read_sensor_csv_file(c.in);
    if (c.normalize == "none") {
        return table;
    }
    std::optional<std::size_t> prefix;
    if (c.normalize == "prefix") {
        if (!c.prefix) {
            throw ValidationError("--normalize prefix needs --prefix");
        }
        prefix = c.prefix;
    } else if (c.normalize != "full") {
        throw ValidationError("--normalize must be none, full or prefix");
    }
    for (auto& s : table.streams) {
        s = normalize_stream(s, prefix);
    }
    return table;
}

detect::SubspaceOptions subspace_options(const RunConfig& c, double d) {
    detect::SubspaceOptions o;
    o.w = c.w;
    o.d = d;
    o.estimate_delays = c.sync;
    o.joint.delta = c.delta;
    o.joint.n_max = c.n_max;
    o.joint.tau_max = c.tau_max;
    o.cadence = c.cadence;
    return o;
}

double cmd_calibrate(const RunConfig& c) {
    require_detector_params(c);
    if (!c.prefix) {
        throw ValidationError("--prefix (calibration length in ticks) is required");
    }
    const SensorTable table = load_input(c);
    const auto series = detect::projection_series(table, *c.prefix, subspace_options(c, 0.0));
    return detect::calibrate_drift(series, c.factor);
}

detect::StoppingReport cmd_detect(const RunConfig& c) {
    require_detector_params(c);
    if (!c.b && !c.full) {
        throw ValidationError("--b is required unless --full is given");
    }
    if (c.rate && !(*c.rate > 0.0)) {
        throw ValidationError("--rate must be positive");
    }
    const SensorTable table = load_input(c);
    double d = 0.0;
    if (c.d) {
        d = *c.d;
    } else if (c.prefix) {
        d = detect::calibrate_drift(detect::projection_series(table, *c.prefix, subspace_options(c, 0.0)),
                                    c.factor);
    } else {
        throw ValidationError("give --d or a calibration --prefix");
    }
    detect::SubspaceCusum detector(subspace_options(c, d));
    return detect::run_detector(detector, table,
                                detect::RunOptions{.b = c.b.value_or(std::numeric_limits<double>::infinity()),
                                                   .stop_at_alarm = !c.full});
}

std::vector<sim::CurvePoint> cmd_curve(const RunConfig& c) {
    const std::uint64_t seed = require_seed(c);
    if (c.b_grid.empty()) {
        throw ValidationError("--b-grid must list at least one threshold");
    }
    if (!std::is_sorted(c.b_grid.begin(), c.b_grid.end()) ||
        std::adjacent_find(c.b_grid.begin(), c.b_grid.end()) != c.b_grid.end()) {
        throw ValidationError("--b-grid must be strictly increasing");
    }
    if (!c.mu || *c.mu == 0.0) {
        throw ValidationError("--mu must be given and nonzero");
    }
    if (c.k < 2 || !(c.sigma2 > 0.0) || c.trials < 1 || c.horizon < 1) {
        throw ValidationError("need --k >= 2, --sigma2 > 0, --trials >= 1, --horizon >= 1");
    }
    require_detector_params(c);

    const sim::ComparisonPreset preset{c.k, c.sigma2, c.tau_max, c.w, *c.mu};
    const auto kind = detect::parse_detector_kind(c.detector);
    detect::DetectorConfig config;
    switch (kind) {
        case detect::DetectorKind::OneShot:
            config = sim::one_shot_config(preset);
            break;
        case detect::DetectorKind::Subspace:
        case detect::DetectorKind::AsyncSubspace: {
            const double d = c.d ? *c.d : sim::choose_drift(preset, kind, 20000, sim::mix_seed(seed, 7)).d;
            config = sim::subspace_config(preset, kind, d);
            config.delta = c.delta;
            config.n_max = c.n_max;
            config.cadence = c.cadence;
            break;
        }
        case detect::DetectorKind::KnownSubspace:
            config.kind = kind;
            config.u.assign(c.k, 1.0 / std::sqrt(static_cast<double>(c.k)));
            config.sigma2 = c.sigma2;
            config.rho = preset.rho();
            break;
    }
    config.validate();
    const sim::DetectorFactory factory = [config] { return detect::make_detector(config); };

    sim::CurveOptions options;
    options.arl = {c.trials, c.horizon, sim::mix_seed(seed, 1), c.threads, false};
    options.edd = {c.trials, c.edd_horizon.value_or(c.horizon), sim::mix_seed(seed, 2), c.threads, false};
    return sim::operating_curve(factory, c.detector, sim::pure_noise(c.k, c.sigma2),
                                sim::mean_shift(c.k, c.sigma2, *c.mu, 0, c.tau_max), c.b_grid, options);
}

std::vector<Peak> find_peaks(const std::vector<detect::StatisticPoint>& trajectory, std::size_t count,
                             Tick separation) {
    std::vector<std::size_t> order(trajectory.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return trajectory[a].S > trajectory[b].S; });
    std::vector<Peak> peaks;
    for (std::size_t i : order) {
        if (peaks.size() >= count) {
            break;
        }
        const auto& p = trajectory[i];
        const bool isolated = std::all_of(peaks.begin(), peaks.end(), [&](const Peak& q) {
            return std::abs(q.t - p.t) >= separation;
        });
        if (isolated) {
            peaks.push_back({p.t, p.S});
        }
    }
    return peaks;
}

// ---------------------------------------------------------------------------
// Command line

namespace {

void add_scenario_options(CLI::App* app, RunConfig& c) {
    app->add_option("--k", c.k, "number of sensors");
    app->add_option("--sigma2", c.sigma2, "noise variance");
    app->add_option("--mu", c.mu, "common post-change amplitude");
    app->add_option("--alpha", c.alpha, "per-sensor amplitudes")->delimiter(',');
    app->add_option("--horizon", c.horizon, "episode length in ticks");
    app->add_option("--seed", c.seed, "random seed");
}

void add_detector_options(CLI::App* app, RunConfig& c) {
    app->add_option("--w", c.w, "lookahead window (ticks)");
    app->add_option("--tau-max", c.tau_max, "largest relative delay (ticks)");
    app->add_option("--delta", c.delta, "delay convergence tolerance (ticks)");
    app->add_option("--n-max", c.n_max, "joint estimation pass limit");
    app->add_option("--cadence", c.cadence, "ticks between delay re-estimations (0: w)");
}

void add_input_options(CLI::App* app, RunConfig& c) {
    app->add_option("--in", c.in, "sensor CSV (t,s1,...,sk)");
    app->add_option("--normalize", c.normalize, "none | full | prefix");
    app->add_flag("--sync", c.sync, "estimate inter-sensor delays");
    app->add_option("--factor", c.factor, "drift calibration factor");
    app->add_option("--prefix", c.prefix, "pre-change calibration length (ticks)");
}

}  // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const NonConvergenceError*>(&e)) {
        return kNonConvergence;
    }
    if (dynamic_cast<const IoError*>(&e)) {
        return kIo;
    }
    return kValidation;
}

std::vector<std::string> expand_config(std::vector<std::string> args, const KeyFilter& accepts,
                                       const KeyFilter& known) {
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (path.empty() || args.empty()) {
        return args;
    }
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config file " + path);
    }
    auto given = [&](const std::string& key) {
        const std::string flag = "--" + key;
        return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
            return a == flag || a.rfind(flag + "=", 0) == 0;
        });
    };
    auto trim = [](std::string v) {
        const auto b = v.find_first_not_of(" \t\r");
        const auto e = v.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    std::vector<std::string> injected;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(path + ": expected key=value", number);
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || key == "config" || given(key)) {
            continue;
        }
        if (accepts && !accepts(key)) {
            if (known && known(key)) {
                continue;  // belongs to another workflow
            }
            throw ParseError(path + ": unknown key '" + key + "'", number);
        }
        if (value == "true") {
            injected.push_back("--" + key);
        } else if (value != "false") {
            injected.push_back("--" + key);
            injected.push_back(value);
        }
    }
    // Right after the subcommand name, ahead of the explicit flags.
    args.insert(args.begin() + 1, injected.begin(), injected.end());
    return args;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Asynchronous multi-sensor Subspace-CUSUM change detection"};
    app.require_subcommand(1);
    RunConfig c;
    std::string config_path;

    auto* simulate = app.add_subcommand("simulate", "generate a synthetic episode as CSV");
    simulate->add_option("--config", config_path, "key=value preset file; flags override it");
    add_scenario_options(simulate, c);
    simulate->add_option("--onsets", c.onsets, "per-sensor onset ticks")->delimiter(',');
    simulate->add_option("--change", c.change, "change point; onsets drawn in [change, change+tau-max]");
    simulate->add_option("--signal", c.signal, "step | sine:<period>");
    simulate->add_option("--tau-max", c.tau_max, "largest random relative delay");
    simulate->add_option("--w", c.w, "window (accepted for preset files)");
    simulate->add_option("--out", c.out, "output CSV (default stdout)");

    auto* calibrate = app.add_subcommand("calibrate", "print the calibrated drift");
    calibrate->add_option("--config", config_path, "key=value preset file; flags override it");
    add_detector_options(calibrate, c);
    add_input_options(calibrate, c);

    auto* detect_cmd = app.add_subcommand("detect", "run the Subspace-CUSUM on a CSV");
    detect_cmd->add_option("--config", config_path, "key=value preset file; flags override it");
    add_detector_options(detect_cmd, c);
    add_input_options(detect_cmd, c);
    detect_cmd->add_option("--d", c.d, "drift (default: calibrate on --prefix)");
    detect_cmd->add_option("--b", c.b, "threshold");
    detect_cmd->add_option("--rate", c.rate, "sampling rate in Hz for times in seconds");
    detect_cmd->add_option("--out", c.out, "report CSV (default stdout)");
    detect_cmd->add_option("--trajectory", c.trajectory, "statistic trajectory CSV");
    detect_cmd->add_option("--delays", c.delays, "delay estimate log CSV");
    detect_cmd->add_flag("--full", c.full, "keep running after the first alarm");
    detect_cmd->add_option("--peaks", c.peaks, "print the N largest statistic peaks");
    detect_cmd->add_option("--peak-separation", c.peak_separation,
                           "minimum peak spacing (seconds with --rate, else ticks)");

    auto* curve = app.add_subcommand("curve", "Monte Carlo ARL/EDD operating curve");
    curve->add_option("--config", config_path, "key=value preset file; flags override it");
    add_scenario_options(curve, c);
    add_detector_options(curve, c);
    curve->add_option("--detector", c.detector, "async-subspace | subspace | oneshot | known-subspace");
    curve->add_option("--d", c.d, "drift (default: chosen from the model)");
    curve->add_option("--b-grid", c.b_grid, "increasing thresholds")->delimiter(',');
    curve->add_option("--trials", c.trials, "trials per threshold");
    curve->add_option("--edd-horizon", c.edd_horizon, "tick limit for delay trials");
    curve->add_option("--threads", c.threads, "worker threads (0: all cores)");
    curve->add_option("--out", c.out, "output CSV (default stdout)");

    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    try {
        const std::string sub = args.empty() ? std::string() : args.front();
        auto accepts = [&](const std::string& key) {
            const auto* cmd = app.get_subcommand_no_throw(sub);
            return cmd != nullptr && cmd->get_option_no_throw("--" + key) != nullptr;
        };
        auto known = [&](const std::string& key) {
            for (const char* name : {"simulate", "calibrate", "detect", "curve"}) {
                const auto* cmd = app.get_subcommand_no_throw(name);
                if (cmd != nullptr && cmd->get_option_no_throw("--" + key) != nullptr) {
                    return true;
                }
            }
            return false;
        };
        args = expand_config(std::move(args), accepts, known);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kValidation;
    }

    try {
        if (simulate->parsed()) {
            const auto table = cmd_simulate(c);
            write_output(c.out, out, [&](std::ostream& o) { write_sensor_csv(o, table); });
        } else if (calibrate->parsed()) {
            out << format_number(cmd_calibrate(c)) << '\n';
        } else if (detect_cmd->parsed()) {
            const auto report = cmd_detect(c);
            write_output(c.out, out, [&](std::ostream& o) { detect::write_report_csv(o, report, c.rate); });
            if (!c.trajectory.empty()) {
                write_output(c.trajectory, out,
                             [&](std::ostream& o) { detect::write_trajectory_csv(o, report); });
            }
            if (!c.delays.empty()) {
                write_output(c.delays, out, [&](std::ostream& o) { detect::write_delay_log_csv(o, report); });
            }
            if (c.peaks > 0) {
                const double sep = c.rate ? c.peak_separation * *c.rate : c.peak_separation;
                const auto peaks = find_peaks(report.trajectory, c.peaks, static_cast<Tick>(std::llround(sep)));
                out << "rank,t,seconds,S\n";
                for (std::size_t i = 0; i < peaks.size(); ++i) {
                    out << (i + 1) << ',' << peaks[i].t << ','
                        << (c.rate ? format_number(static_cast<double>(peaks[i].t) / *c.rate) : std::string())
                        << ',' << format_number(peaks[i].S) << '\n';
                }
            }
            if (!report.gaps.empty()) {
                const auto& g = report.gaps.front();
                err << report.gaps.size() << " tick(s) skipped; first at " << g.t << ": " << g.reason
                    << '\n';
            }
        } else if (curve->parsed()) {
            const auto points = cmd_curve(c);
            write_output(c.out, out, [&](std::ostream& o) { sim::write_curve_csv(o, points); });
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return kOk;
}

}  // namespace asyncdet::cli
