#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "asyncdet/core.hpp"
#include "asyncdet/csv.hpp"
#include "asyncdet/detect.hpp"

namespace asyncdet::sim {

// SplitMix64 finalizer; derives independent substream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Seedable Gaussian source: Marsaglia's polar method over the 53-bit
/// uniforms of std::mt19937_64. Both engines are fully specified by the
/// standard, so a seed reproduces the same draws on every conforming
/// platform (up to libm's log).
class NormalRng {
public:
    explicit NormalRng(std::uint64_t seed) : engine_(seed) {}

    double uniform();                  // [0, 1)
    double normal();                   // N(0, 1)
    std::int64_t integer(std::int64_t lo, std::int64_t hi);  // uniform on [lo, hi]

private:
    std::mt19937_64 engine_;
    std::optional<double> spare_;
};

/// Produces the frames of one episode x_i(t) = alpha_i s(t - onset_i) + e_i(t)
/// for t = 1..horizon, one frame at a time.
class EpisodeStream {
public:
    EpisodeStream(ScenarioModel model, Tick horizon, std::uint64_t seed);

    std::optional<MultiSensorFrame> next();

private:
    ScenarioModel model_;
    Tick horizon_;
    Tick t_ = 0;
    double sigma_;
    NormalRng rng_;
};

SensorTable generate_episode(const ScenarioModel& model, Tick horizon, std::uint64_t seed);

/// A scenario for repeated trials. When `random_delay_max` is set, every
/// trial redraws the onsets as change + U{0..max} per sensor, shifted so the
/// earliest onset equals the change point of `model`.
struct Scenario {
    ScenarioModel model;
    std::optional<int> random_delay_max;

    ScenarioModel draw(std::uint64_t trial_seed) const;
};

// k sensors, unit-step signal with common amplitude mu, no change before
// `horizon` (onsets placed past it).
Scenario pure_noise(std::size_t k, double sigma2);
// Mean shift N(0, sigma2) -> N(mu, sigma2) at tick `change` + random delays.
Scenario mean_shift(std::size_t k, double sigma2, double mu, Tick change, int delay_max);

struct TrialResult {
    std::string detector_id;
    std::optional<Tick> stopped_at;
    std::optional<Tick> change_point;
    bool false_alarm = false;
};

using DetectorFactory = std::function<std::unique_ptr<detect::Detector>()>;

struct MonteCarloOptions {
    std::size_t trials = 500;
    Tick horizon = 10000;
    std::uint64_t seed = 1;
    unsigned threads = 0;        // 0: hardware concurrency
    bool keep_trajectories = false;
};

// Per-trial outcome for every threshold of a grid, from one pass.
struct TrialLog {
    std::optional<Tick> change_point;
    std::vector<std::optional<Tick>> reported;  // per threshold
    std::vector<detect::StatisticPoint> trajectory;  // when kept
    std::size_t lookahead = 0;
};

// Runs `options.trials` independent episodes. Trial n uses seed
// mix_seed(options.seed, n), so results do not depend on scheduling.
std::vector<TrialLog> run_trials(const DetectorFactory& factory, const Scenario& scenario,
                                 std::span<const double> b_grid, const MonteCarloOptions& options);

// Ticks from the change to the reported alarm when the trial alarmed after
// the change.
struct ArlEstimate {
    double b = 0.0;
    double mean = 0.0;
    double se = 0.0;
    double censored_frac = 0.0;
    bool unreliable = false;  // more than half the trials censored
    std::size_t trials = 0;
};

struct EddEstimate {
    double b = 0.0;
    double mean = 0.0;
    double se = 0.0;
    double censored_frac = 0.0;
    std::size_t false_alarms = 0;
    std::size_t trials_used = 0;
};

std::vector<TrialResult> trial_results(std::span<const TrialLog> logs, std::size_t b_index,
                                       const std::string& detector_id);

// Mean of the stopping time under no change; trials without an alarm count
// at the horizon.
ArlEstimate summarize_arl(std::span<const TrialLog> logs, std::size_t b_index, double b, Tick horizon);
// Mean of reported_at - change_point over trials alarming after the change;
// earlier alarms are excluded and counted as false alarms; trials without an
// alarm count at the horizon.
EddEstimate summarize_edd(std::span<const TrialLog> logs, std::size_t b_index, double b, Tick horizon);

std::vector<ArlEstimate> estimate_arl(const DetectorFactory& factory, const Scenario& noise,
                                      std::span<const double> b_grid, const MonteCarloOptions& options);
ArlEstimate estimate_arl(const DetectorFactory& factory, const Scenario& noise, double b,
                         const MonteCarloOptions& options);

std::vector<EddEstimate> estimate_edd(const DetectorFactory& factory, const Scenario& change,
                                      std::span<const double> b_grid, const MonteCarloOptions& options);
EddEstimate estimate_edd(const DetectorFactory& factory, const Scenario& change, double b,
                         const MonteCarloOptions& options);

struct CurvePoint {
    std::string detector;
    double b = 0.0;
    double arl = 0.0;
    double arl_se = 0.0;
    double edd = 0.0;
    double edd_se = 0.0;
    double censored_frac = 0.0;  // larger of the ARL and EDD censoring fractions
    bool unreliable = false;
};

struct CurveOptions {
    MonteCarloOptions arl;
    MonteCarloOptions edd;
};

// One (ARL, EDD) point per threshold. b_grid must be nonempty and increasing.
std::vector<CurvePoint> operating_curve(const DetectorFactory& factory, const std::string& detector_id,
                                        const Scenario& noise, const Scenario& change,
                                        std::span<const double> b_grid, const CurveOptions& options);

void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve, bool header = true);

// EDD at a given ARL by linear interpolation in log(ARL) between curve
// points sorted by ARL; nullopt outside the sampled ARL range.
std::optional<double> edd_at_arl(std::span<const CurvePoint> curve, double arl);

// Mean squared projection (u_hat^T x~_t)^2 over `ticks` ticks of a scenario,
// skipping the first `skip` logical ticks. Used to place the drift between
// the empirical pre- and post-change means when the closed-form interval is
// empty.
double mean_projection(const detect::DetectorConfig& subspace_config, const Scenario& scenario,
                       Tick ticks, Tick skip, std::uint64_t seed);

/// The mean-shift comparison setting: sigma2 = 1, k = 50, tau_max = 20,
/// w = 20, with s = 1 and alpha_i = mu.
struct ComparisonPreset {
    std::size_t k = 50;
    double sigma2 = 1.0;
    int tau_max = 20;
    std::size_t w = 20;
    double mu = 0.1;

    // rho = k mu^2 / sigma2 (unit-step signal, E0 = 1).
    double rho() const { return static_cast<double>(k) * mu * mu / sigma2; }
};

struct DriftChoice {
    double d = 0.0;
    bool from_bounds = false;       // midpoint of the closed-form interval
    double prechange_mean = 0.0;    // empirical, when estimated
    double postchange_mean = 0.0;
};

// Midpoint of drift_bounds when that interval is nonempty, otherwise the
// midpoint of the empirical pre/post-change projection means.
DriftChoice choose_drift(const ComparisonPreset& preset, detect::DetectorKind kind, Tick ticks,
                         std::uint64_t seed);

detect::DetectorConfig subspace_config(const ComparisonPreset& preset, detect::DetectorKind kind,
                                       double d);
detect::DetectorConfig one_shot_config(const ComparisonPreset& preset);

}  // namespace asyncdet::sim
