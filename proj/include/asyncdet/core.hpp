#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace asyncdet {

// Integer sample index. Streams start at tick 1; tick 0 is "before the data".
using Tick = std::int64_t;

// One time tick of k sensor readings.
struct MultiSensorFrame {
    Tick t = 0;
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
};

// Throws ValidationError when any reading is NaN or infinite.
void require_finite(const MultiSensorFrame& frame);

/// Sliding store that releases the frame for logical time t only once the
/// w frames t+1..t+w have been absorbed. After a release, lookahead() holds
/// exactly those w frames, so an estimate built from it never sees frame t.
///
/// Frames must arrive with consecutive ticks and a fixed dimension k >= 2;
/// gaps, duplicates and reordering are rejected with StreamOrderError.
class LookaheadBuffer {
public:
    explicit LookaheadBuffer(std::size_t window);

    // Absorbs `frame` and returns the frame at logical time (frame.t - w) if
    // it has become available.
    std::optional<MultiSensorFrame> release_ready(MultiSensorFrame frame);

    // Frames newer than the last released one, oldest first.
    std::span<const MultiSensorFrame> lookahead() const noexcept { return frames_; }

    std::size_t window() const noexcept { return window_; }
    std::optional<Tick> emitted_t() const noexcept { return emitted_t_; }
    std::optional<Tick> newest_t() const noexcept { return newest_t_; }
    std::size_t absorbed() const noexcept { return absorbed_; }
    std::size_t emitted() const noexcept { return emitted_; }

private:
    std::size_t window_;
    std::size_t dimension_ = 0;
    std::vector<MultiSensorFrame> frames_;  // ring would save the shift; w is small
    std::optional<Tick> emitted_t_;
    std::optional<Tick> newest_t_;
    std::size_t absorbed_ = 0;
    std::size_t emitted_ = 0;
};

// Per-sensor random access to a contiguous range of ticks. Used wherever
// samples are needed at sensor-specific shifts (alignment, delay estimation).
class SampleStore {
public:
    explicit SampleStore(std::size_t sensors);

    // streams[i][j] is sensor i at tick first + j. All streams equally long.
    static SampleStore from_streams(const std::vector<std::vector<double>>& streams,
                                    Tick first = 1);

    void append(const MultiSensorFrame& frame);
    void discard_before(Tick t);

    // Throws InsufficientLookaheadError outside [first_tick, last_tick].
    double at(std::size_t sensor, Tick t) const;

    bool contains(Tick t) const noexcept { return !empty() && t >= first_ && t <= last_tick(); }
    bool empty() const noexcept { return samples_.empty() || samples_.front().empty(); }
    std::size_t sensors() const noexcept { return samples_.size(); }
    Tick first_tick() const noexcept { return first_; }
    Tick last_tick() const noexcept;

    // Samples of one sensor over [first, first + length).
    std::vector<double> window(std::size_t sensor, Tick first, std::size_t length) const;

private:
    std::vector<std::deque<double>> samples_;
    Tick first_ = 1;
};

/// Relative delays of every sensor with respect to a reference sensor,
/// in ticks: sensor i's signal lags the reference by tau_hat[i].
struct DelayProfile {
    std::vector<int> tau_hat;
    int tau_max = 0;
    int iterations = 0;
    bool converged = true;
    std::size_t reference = 0;

    static DelayProfile zero(std::size_t sensors, int tau_max = 0);

    int min_delay() const;
    int max_delay() const;

    bool operator==(const DelayProfile&) const = default;
};

// Checks reference entry is zero and every entry lies in [-tau_max, tau_max].
void validate(const DelayProfile& delays);

// x~_t: component i is x_i(t + tau_hat[i]).
MultiSensorFrame align_frames(const SampleStore& store, Tick t, const DelayProfile& delays);

// Centers by the mean and divides by the largest absolute centered value.
// When `prefix` is set the statistics come from the first `prefix` samples
// only and are then applied to the whole record.
std::vector<double> normalize_stream(std::span<const double> raw,
                                     std::optional<std::size_t> prefix = std::nullopt);

/// Causal source signal indexed by lag since onset. Lag 1 is the first
/// post-onset tick; every lag <= 0 evaluates to exactly 0, so a sensor is
/// pure noise up to and including its onset tick.
class Waveform {
public:
    using Function = std::function<double(Tick)>;

    Waveform();  // the unit step
    explicit Waveform(Function f);

    static Waveform step(double level = 1.0);
    // One period of a sine, then silence.
    static Waveform sine_cycle(Tick period, double amplitude = 1.0);
    // s(m) = values[m - 1] for 1 <= m <= values.size(), else 0.
    static Waveform tabulated(std::vector<double> values);

    double operator()(Tick lag) const { return lag <= 0 ? 0.0 : f_(lag); }

    // Mean of s^2 over lags 1..count.
    double mean_energy(Tick count) const;

private:
    Function f_;
};

// Ground-truth generator parameters: x_i(t) = alpha_i s(t - onset_i) + e_i(t).
struct ScenarioModel {
    std::size_t k = 2;
    double sigma2 = 1.0;
    std::vector<double> alpha;
    Waveform waveform;
    std::vector<Tick> onsets;

    // min_i onset_i
    Tick change_point() const;

    void validate() const;
};

/// Spiked-model summary of a scenario after alignment: post-change frames
/// have covariance sigma^2 I + theta(t) u u^T with u = alpha / |alpha|.
struct SpikedStats {
    std::vector<double> u;
    double theta_t = 0.0;
    double rho = 0.0;
    double e0 = 0.0;

    // e0 is the long-run average signal energy; theta is evaluated at `lag`.
    static SpikedStats from_scenario(const ScenarioModel& model, double e0, Tick lag = 1);
};

}  // namespace asyncdet
