#pragma once

#include <cstdint>
#include <exception>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "asyncdet/csv.hpp"
#include "asyncdet/detect.hpp"
#include "asyncdet/sim.hpp"

namespace asyncdet::cli {

// Every parameter a workflow can take. Flags and config-file keys map 1:1
// onto these fields.
struct RunConfig {
    // scenario
    std::size_t k = 2;
    double sigma2 = 1.0;
    std::optional<double> mu;
    std::vector<double> alpha;
    std::vector<Tick> onsets;
    std::optional<Tick> change;
    std::string signal = "step";  // step | sine:<period>
    Tick horizon = 1000;
    std::optional<std::uint64_t> seed;

    // detector
    std::string detector = "async-subspace";
    std::size_t w = 20;
    int tau_max = 0;
    int delta = 1;
    int n_max = 10;
    std::size_t cadence = 0;
    bool sync = false;  // estimate delays in detect/calibrate
    std::optional<double> d;
    double factor = 1.5;
    std::optional<std::size_t> prefix;
    std::optional<double> b;
    std::vector<double> b_grid;

    // preprocessing
    std::string normalize = "none";  // none | full | prefix

    // Monte Carlo
    std::size_t trials = 500;
    std::optional<Tick> edd_horizon;
    unsigned threads = 0;

    // output
    std::optional<double> rate;
    std::string in;
    std::string out;
    std::string trajectory;
    std::string delays;
    bool full = false;  // keep running after the first alarm
    std::size_t peaks = 0;
    double peak_separation = 60.0;  // seconds when rate is set, otherwise ticks
};

enum ExitCode : int { kOk = 0, kValidation = 1, kIo = 2, kNonConvergence = 3 };

// Workflows. Each validates the fields it uses before computing anything.
ScenarioModel scenario_from_config(const RunConfig& config);
SensorTable cmd_simulate(const RunConfig& config);
SensorTable load_input(const RunConfig& config);  // read + optional normalization
detect::SubspaceOptions subspace_options(const RunConfig& config, double d);
double cmd_calibrate(const RunConfig& config);
detect::StoppingReport cmd_detect(const RunConfig& config);
std::vector<sim::CurvePoint> cmd_curve(const RunConfig& config);

struct Peak {
    Tick t = 0;
    double S = 0.0;
};
// Largest values of the statistic, greedily chosen at least `separation`
// ticks apart, in decreasing order.
std::vector<Peak> find_peaks(const std::vector<detect::StatisticPoint>& trajectory, std::size_t count,
                             Tick separation);

// Exit code for an error raised by a workflow.
int exit_code_for(const std::exception& e);

using KeyFilter = std::function<bool(const std::string&)>;

// Replaces `--config FILE` with the file's key=value pairs as flags placed
// right after the subcommand; keys also given as flags are dropped. With
// filters, keys the subcommand does not take are dropped when `known` still
// recognizes them and rejected otherwise.
std::vector<std::string> expand_config(std::vector<std::string> args, const KeyFilter& accepts = {},
                                       const KeyFilter& known = {});

// Full command line: parses, dispatches, writes outputs, maps errors to
// exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace asyncdet::cli
