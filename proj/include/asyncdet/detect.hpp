#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "asyncdet/core.hpp"
#include "asyncdet/csv.hpp"
#include "asyncdet/linalg.hpp"
#include "asyncdet/sync.hpp"

namespace asyncdet::detect {

/// Running CUSUM statistic with first-crossing bookkeeping. An alarm raised
/// at internal tick t is reported at t + w, because the subspace estimate
/// behind tick t already consumed samples up to t + w.
struct CusumState {
    double S = 0.0;
    double d = 0.0;
    double b = std::numeric_limits<double>::infinity();
    std::size_t w = 0;
    Tick t = 0;  // last tick folded in
    std::optional<Tick> crossed_at;
    std::optional<Tick> reported_at;
};

// S' = max(S, 0) + gain at tick t, recording the first tick with S' >= b.
CusumState cusum_update(CusumState state, Tick t, double gain);

// sigma^2 (1 + 1/rho) ln(1 + rho)
double known_subspace_offset(double sigma2, double rho);

// CUSUM with a known unit subspace u. Throws ValidationError if |u| is off
// unity by more than 1e-9 or sigma2/rho are not positive.
CusumState cusum_step_known_u(CusumState state, const MultiSensorFrame& frame,
                              std::span<const double> u, double sigma2, double rho);

// Unit vector estimated from the frames window_first..window_last.
struct SubspaceEstimate {
    std::vector<double> u;
    Tick window_first = 0;
    Tick window_last = 0;
};

// S' = max(S, 0) + (u^T x~_t)^2 - d. Throws ContractViolationError when the
// estimate's window does not lie strictly after frame.t.
CusumState subspace_cusum_step(CusumState state, const MultiSensorFrame& frame,
                               const SubspaceEstimate& estimate);

struct StatisticPoint {
    Tick t = 0;
    double increment = 0.0;  // gain folded in at t (for one-shot: the leading sensor's)
    double S = 0.0;
};

struct Gap {
    Tick t = 0;
    std::string reason;
};

struct DelayLogEntry {
    Tick t = 0;  // logical tick whose window [t+1, t+w] produced the estimate
    DelayProfile delays;
};

// Streaming detector. push() consumes raw frames in tick order and appends
// every statistic point that became computable; finish() flushes what the
// tail of the stream still allows.
class Detector {
public:
    virtual ~Detector() = default;

    virtual std::string_view name() const = 0;
    virtual std::size_t lookahead() const = 0;
    virtual double drift() const = 0;

    virtual void push(const MultiSensorFrame& frame, std::vector<StatisticPoint>& out) = 0;
    virtual void finish(std::vector<StatisticPoint>& /*out*/) {}

    virtual std::span<const Gap> gaps() const { return {}; }
    virtual std::span<const DelayLogEntry> delay_log() const { return {}; }
};

class KnownSubspaceCusum final : public Detector {
public:
    KnownSubspaceCusum(std::vector<double> u, double sigma2, double rho);

    std::string_view name() const override { return "known-subspace"; }
    std::size_t lookahead() const override { return 0; }
    double drift() const override { return offset_; }
    void push(const MultiSensorFrame& frame, std::vector<StatisticPoint>& out) override;

private:
    std::vector<double> u_;
    double sigma2_;
    double rho_;
    double offset_;
    CusumState state_;
};

/// Per-sensor Gaussian mean-shift CUSUM with a known post-change mean mu;
/// the fused statistic is the maximum over sensors, so the first local
/// alarm is the network alarm.
class OneShotCusum final : public Detector {
public:
    OneShotCusum(double mu, double sigma2);

    std::string_view name() const override { return "oneshot"; }
    std::size_t lookahead() const override { return 0; }
    double drift() const override { return mu_ / 2.0; }
    void push(const MultiSensorFrame& frame, std::vector<StatisticPoint>& out) override;

    std::span<const double> sensor_statistics() const { return stats_; }

    // (mu / sigma^2)(x - mu / 2)
    static double llr_increment(double x, double mu, double sigma2);

private:
    double mu_;
    double sigma2_;
    std::vector<double> stats_;
};

struct SubspaceOptions {
    std::size_t w = 20;
    double d = 1.0;
    // Estimate delays with the joint waveform/delay loop; otherwise `fixed`
    // (all zero when empty) aligns the streams.
    bool estimate_delays = false;
    DelayProfile fixed;
    sync::JointOptions joint;
    // Ticks between delay re-estimations; 0 means once per window (w).
    std::size_t cadence = 0;
    linalg::PowerIterationOptions power{.tol = 1e-10, .max_iter = std::nullopt, .check_gap = false, .accelerate = true, .start = {}};
};

/// Subspace-CUSUM over aligned frames. The statistic for tick t uses the
/// leading singular vector of the aligned frames t+1..t+w, so it becomes
/// available only once those samples (and any delay margin) have arrived.
/// Ticks whose aligned samples or estimates cannot be formed are skipped
/// and logged in gaps().
class SubspaceCusum final : public Detector {
public:
    explicit SubspaceCusum(SubspaceOptions options);

    std::string_view name() const override {
        return options_.estimate_delays ? "async-subspace" : "subspace";
    }
    std::size_t lookahead() const override { return options_.w; }
    double drift() const override { return options_.d; }
    void push(const MultiSensorFrame& frame, std::vector<StatisticPoint>& out) override;
    void finish(std::vector<StatisticPoint>& out) override;

    std::span<const Gap> gaps() const override { return gaps_; }
    std::span<const DelayLogEntry> delay_log() const override { return delay_log_; }
    const CusumState& state() const { return state_; }

private:
    void evaluate(Tick t, std::vector<StatisticPoint>& out);
    Tick margin() const;

    SubspaceOptions options_;
    std::optional<SampleStore> store_;
    std::optional<Tick> next_t_;
    std::optional<DelayProfile> delays_;
    Tick next_estimate_t_ = 0;
    std::vector<MultiSensorFrame> window_;
    linalg::PowerIterationOptions power_;
    std::vector<double> last_u_;
    CusumState state_;
    std::vector<Gap> gaps_;
    std::vector<DelayLogEntry> delay_log_;
};

enum class DetectorKind { KnownSubspace, Subspace, AsyncSubspace, OneShot };

std::string_view to_string(DetectorKind kind);
// Accepts the names produced by to_string; throws ValidationError otherwise.
DetectorKind parse_detector_kind(std::string_view name);

struct DetectorConfig {
    DetectorKind kind = DetectorKind::AsyncSubspace;
    std::size_t w = 20;
    int tau_max = 0;
    int delta = 1;
    int n_max = 10;
    std::size_t cadence = 0;
    double d = 1.0;
    double sigma2 = 1.0;
    double rho = 1.0;
    double mu = 0.0;
    std::vector<double> u;  // known-subspace only
    std::size_t reference = 0;
    linalg::PowerIterationOptions power{.tol = 1e-10, .max_iter = std::nullopt, .check_gap = false, .accelerate = true, .start = {}};

    void validate() const;
};

std::unique_ptr<Detector> make_detector(const DetectorConfig& config);

struct RunOptions {
    double b = 0.0;
    bool stop_at_alarm = true;
    bool keep_trajectory = true;
};

struct StoppingReport {
    std::string detector;
    double b = 0.0;
    double d = 0.0;
    std::size_t w = 0;
    std::optional<Tick> crossed_at;
    std::optional<Tick> reported_at;
    std::vector<StatisticPoint> trajectory;
    std::vector<Gap> gaps;
    std::vector<DelayLogEntry> delay_log;

    bool alarmed() const noexcept { return crossed_at.has_value(); }
};

using FrameSource = std::function<std::optional<MultiSensorFrame>()>;

// Drives a detector until the first tick with S >= b (or the end of the
// stream when stop_at_alarm is false or no alarm occurs). Running out of
// data without an alarm is a normal outcome.
StoppingReport run_detector(Detector& detector, const FrameSource& source, const RunOptions& options);
StoppingReport run_detector(Detector& detector, const SensorTable& table, const RunOptions& options);

FrameSource table_source(const SensorTable& table);

// One-shot baseline over k scalar streams.
StoppingReport one_shot_detector(const SensorTable& streams, double mu, double sigma2, double b);

struct AsyncParams {
    std::size_t w = 200;
    int tau_max = 100;
    int delta = 1;
    int n_max = 10;
    std::size_t cadence = 0;
    double d = 1.0;
    double b = 0.0;
    bool stop_at_alarm = true;
};

// Delay estimation per window, alignment, subspace estimation and the
// Subspace-CUSUM recursion; the report carries the delay history.
StoppingReport async_pipeline(const SensorTable& streams, const AsyncParams& params);

/// Admissible drift interval sigma^2 < d < sigma^2 [1 + rho (1 - (1+rho)(k-1)/(w rho^2))].
struct DriftBounds {
    double lower = 0.0;
    double upper = 0.0;
    bool valid = false;

    double midpoint() const noexcept { return 0.5 * (lower + upper); }
};

DriftBounds drift_bounds(double sigma2, double rho, std::size_t k, std::size_t w);

// Expected squared projection (u_hat^T x~_t)^2 before the change.
double prechange_increment_mean(double sigma2);
// ... and after it, at a tick where s^2(t) / E0 = energy_ratio.
double postchange_increment_mean(double sigma2, double rho, std::size_t k, std::size_t w,
                                 double energy_ratio = 1.0);

// factor * mean(prechange); throws ValidationError on an empty series.
double calibrate_drift(std::span<const double> prechange, double factor = 1.5);

// Squared projections (u_hat^T x~_t)^2 over the first `prefix` ticks of a
// table, using the same alignment path as async_pipeline.
std::vector<double> projection_series(const SensorTable& table, std::size_t prefix,
                                      const SubspaceOptions& options);

// CSV `detector,crossed_at,reported_at,b,d`, plus seconds columns when a
// sampling rate is given. Empty cells mean no alarm.
void write_report_csv(std::ostream& out, const StoppingReport& report,
                      std::optional<double> rate_hz = std::nullopt);
void write_trajectory_csv(std::ostream& out, const StoppingReport& report);
void write_delay_log_csv(std::ostream& out, const StoppingReport& report);

}  // namespace asyncdet::detect
