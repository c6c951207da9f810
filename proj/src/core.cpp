#include "asyncdet/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "asyncdet/errors.hpp"

namespace asyncdet {

void require_finite(const MultiSensorFrame& frame) {
    for (double v : frame.values) {
        if (!std::isfinite(v)) {
            throw ValidationError("non-finite reading at tick " + std::to_string(frame.t));
        }
    }
}

// ---------------------------------------------------------------------------
// LookaheadBuffer

LookaheadBuffer::LookaheadBuffer(std::size_t window) : window_(window) {
    frames_.reserve(window + 1);
}

std::optional<MultiSensorFrame> LookaheadBuffer::release_ready(MultiSensorFrame frame) {
    if (newest_t_ && frame.t != *newest_t_ + 1) {
        throw StreamOrderError("expected tick " + std::to_string(*newest_t_ + 1) + ", got " +
                               std::to_string(frame.t));
    }
    if (dimension_ == 0) {
        if (frame.size() < 2) {
            throw DimensionMismatchError("frames need at least 2 sensors");
        }
        dimension_ = frame.size();
    } else if (frame.size() != dimension_) {
        throw DimensionMismatchError("frame dimension changed from " + std::to_string(dimension_) +
                                     " to " + std::to_string(frame.size()));
    }
    require_finite(frame);

    newest_t_ = frame.t;
    ++absorbed_;
    frames_.push_back(std::move(frame));
    if (frames_.size() <= window_) {
        return std::nullopt;
    }
    MultiSensorFrame ready = std::move(frames_.front());
    frames_.erase(frames_.begin());
    emitted_t_ = ready.t;
    ++emitted_;
    return ready;
}

// ---------------------------------------------------------------------------
// SampleStore

SampleStore::SampleStore(std::size_t sensors) : samples_(sensors) {}

SampleStore SampleStore::from_streams(const std::vector<std::vector<double>>& streams, Tick first) {
    SampleStore store(streams.size());
    store.first_ = first;
    for (std::size_t i = 0; i < streams.size(); ++i) {
        if (streams[i].size() != streams.front().size()) {
            throw DimensionMismatchError("streams differ in length");
        }
        store.samples_[i].assign(streams[i].begin(), streams[i].end());
    }
    return store;
}

Tick SampleStore::last_tick() const noexcept {
    if (samples_.empty()) {
        return first_ - 1;
    }
    return first_ + static_cast<Tick>(samples_.front().size()) - 1;
}

void SampleStore::append(const MultiSensorFrame& frame) {
    if (frame.size() != samples_.size()) {
        throw DimensionMismatchError("frame has " + std::to_string(frame.size()) +
                                     " values, store has " + std::to_string(samples_.size()) +
                                     " sensors");
    }
    if (empty()) {
        first_ = frame.t;
    } else if (frame.t != last_tick() + 1) {
        throw StreamOrderError("expected tick " + std::to_string(last_tick() + 1) + ", got " +
                               std::to_string(frame.t));
    }
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        samples_[i].push_back(frame.values[i]);
    }
}

void SampleStore::discard_before(Tick t) {
    if (empty() || t <= first_) {
        return;
    }
    const auto drop = static_cast<std::size_t>(std::min(t, last_tick() + 1) - first_);
    for (auto& s : samples_) {
        s.erase(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(drop));
    }
    first_ += static_cast<Tick>(drop);
}

double SampleStore::at(std::size_t sensor, Tick t) const {
    if (sensor >= samples_.size()) {
        throw DimensionMismatchError("sensor index " + std::to_string(sensor) + " out of range");
    }
    if (!contains(t)) {
        throw InsufficientLookaheadError("tick " + std::to_string(t) + " outside buffered range [" +
                                         std::to_string(first_) + ", " +
                                         std::to_string(last_tick()) + "]");
    }
    return samples_[sensor][static_cast<std::size_t>(t - first_)];
}

std::vector<double> SampleStore::window(std::size_t sensor, Tick first, std::size_t length) const {
    std::vector<double> out(length);
    if (length == 0) {
        return out;
    }
    // Validate both ends once; the loop below is then unchecked.
    at(sensor, first);
    at(sensor, first + static_cast<Tick>(length) - 1);
    const auto& s = samples_[sensor];
    auto begin = s.begin() + static_cast<std::ptrdiff_t>(first - first_);
    std::copy(begin, begin + static_cast<std::ptrdiff_t>(length), out.begin());
    return out;
}

// ---------------------------------------------------------------------------
// DelayProfile and alignment

DelayProfile DelayProfile::zero(std::size_t sensors, int tau_max) {
    DelayProfile p;
    p.tau_hat.assign(sensors, 0);
    p.tau_max = tau_max;
    return p;
}

int DelayProfile::min_delay() const {
    return tau_hat.empty() ? 0 : *std::min_element(tau_hat.begin(), tau_hat.end());
}

int DelayProfile::max_delay() const {
    return tau_hat.empty() ? 0 : *std::max_element(tau_hat.begin(), tau_hat.end());
}

void validate(const DelayProfile& delays) {
    if (delays.tau_max < 0) {
        throw ValidationError("tau_max must be nonnegative");
    }
    if (delays.reference >= delays.tau_hat.size()) {
        throw ValidationError("reference sensor out of range");
    }
    if (delays.tau_hat[delays.reference] != 0) {
        throw ValidationError("reference sensor must have zero delay");
    }
    for (int d : delays.tau_hat) {
        if (d < -delays.tau_max || d > delays.tau_max) {
            throw ValidationError("delay " + std::to_string(d) + " outside [-" +
                                  std::to_string(delays.tau_max) + ", " +
                                  std::to_string(delays.tau_max) + "]");
        }
    }
}

MultiSensorFrame align_frames(const SampleStore& store, Tick t, const DelayProfile& delays) {
    if (delays.tau_hat.size() != store.sensors()) {
        throw DimensionMismatchError("delay profile has " + std::to_string(delays.tau_hat.size()) +
                                     " entries for " + std::to_string(store.sensors()) +
                                     " sensors");
    }
    MultiSensorFrame out{t, std::vector<double>(store.sensors())};
    for (std::size_t i = 0; i < store.sensors(); ++i) {
        out.values[i] = store.at(i, t + delays.tau_hat[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Normalization

std::vector<double> normalize_stream(std::span<const double> raw, std::optional<std::size_t> prefix) {
    if (raw.empty()) {
        throw ValidationError("cannot normalize an empty series");
    }
    for (double v : raw) {
        if (!std::isfinite(v)) {
            throw ValidationError("cannot normalize a series with non-finite values");
        }
    }
    std::span<const double> stats = raw;
    if (prefix) {
        if (*prefix == 0 || *prefix > raw.size()) {
            throw ValidationError("normalization prefix must be in [1, series length]");
        }
        stats = raw.first(*prefix);
    }

    const double mean = std::accumulate(stats.begin(), stats.end(), 0.0) /
                        static_cast<double>(stats.size());
    double scale = 0.0;
    for (double v : stats) {
        scale = std::max(scale, std::abs(v - mean));
    }
    if (scale == 0.0) {
        throw DegenerateInputError("series is constant; nothing to scale after centering");
    }

    std::vector<double> out(raw.size());
    std::transform(raw.begin(), raw.end(), out.begin(),
                   [&](double v) { return (v - mean) / scale; });
    return out;
}

// ---------------------------------------------------------------------------
// Waveform

Waveform::Waveform() : Waveform(step()) {}

Waveform::Waveform(Function f) : f_(std::move(f)) {
    if (!f_) {
        throw ValidationError("waveform function is empty");
    }
}

Waveform Waveform::step(double level) {
    return Waveform(Function([level](Tick) { return level; }));
}

Waveform Waveform::sine_cycle(Tick period, double amplitude) {
    if (period < 2) {
        throw ValidationError("sine period must be at least 2 ticks");
    }
    return Waveform(Function([period, amplitude](Tick lag) {
        if (lag > period) {
            return 0.0;
        }
        const double phase = 2.0 * std::numbers::pi * static_cast<double>(lag - 1) /
                             static_cast<double>(period);
        return amplitude * std::sin(phase);
    }));
}

Waveform Waveform::tabulated(std::vector<double> values) {
    return Waveform(Function([v = std::move(values)](Tick lag) {
        const auto idx = static_cast<std::size_t>(lag - 1);
        return idx < v.size() ? v[idx] : 0.0;
    }));
}

double Waveform::mean_energy(Tick count) const {
    if (count <= 0) {
        throw ValidationError("energy average needs a positive lag count");
    }
    double sum = 0.0;
    for (Tick m = 1; m <= count; ++m) {
        const double s = (*this)(m);
        sum += s * s;
    }
    return sum / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// ScenarioModel

Tick ScenarioModel::change_point() const {
    if (onsets.empty()) {
        throw ValidationError("scenario has no onsets");
    }
    return *std::min_element(onsets.begin(), onsets.end());
}

void ScenarioModel::validate() const {
    if (k < 1) {
        throw ValidationError("scenario needs at least one sensor");
    }
    if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) {
        throw ValidationError("sigma2 must be finite and nonnegative");
    }
    if (alpha.size() != k) {
        throw DimensionMismatchError("alpha has " + std::to_string(alpha.size()) +
                                     " entries for k = " + std::to_string(k));
    }
    if (onsets.size() != k) {
        throw DimensionMismatchError("onsets has " + std::to_string(onsets.size()) +
                                     " entries for k = " + std::to_string(k));
    }
    for (double a : alpha) {
        if (!std::isfinite(a)) {
            throw ValidationError("alpha entries must be finite");
        }
    }
}

SpikedStats SpikedStats::from_scenario(const ScenarioModel& model, double e0, Tick lag) {
    model.validate();
    if (!(model.sigma2 > 0.0)) {
        throw ValidationError("spiked statistics need sigma2 > 0");
    }
    const double norm2 = std::inner_product(model.alpha.begin(), model.alpha.end(),
                                            model.alpha.begin(), 0.0);
    if (norm2 == 0.0) {
        throw DegenerateInputError("alpha is the zero vector; subspace undefined");
    }
    const double norm = std::sqrt(norm2);
    SpikedStats out;
    out.u.resize(model.k);
    std::transform(model.alpha.begin(), model.alpha.end(), out.u.begin(),
                   [norm](double a) { return a / norm; });
    const double s = model.waveform(lag);
    out.theta_t = s * s * norm2;
    out.e0 = e0;
    out.rho = e0 * norm2 / model.sigma2;
    return out;
}

}  // namespace asyncdet
