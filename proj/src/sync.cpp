#include "asyncdet/sync.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "asyncdet/errors.hpp"

namespace asyncdet::sync {
namespace {

double shifted_correlation(std::span<const double> sensor, Tick sensor_origin,
                           const WaveformEstimate& tmpl, int z) {
    // Template index for sensor sample j is (sensor_origin + j - z) - tmpl.origin_t.
    const Tick offset = sensor_origin - z - tmpl.origin_t;
    const Tick n_sensor = static_cast<Tick>(sensor.size());
    const Tick n_tmpl = static_cast<Tick>(tmpl.s_hat.size());
    const Tick lo = std::max<Tick>(0, -offset);
    const Tick hi = std::min<Tick>(n_sensor, n_tmpl - offset);
    double acc = 0.0;
    for (Tick j = lo; j < hi; ++j) {
        acc += sensor[static_cast<std::size_t>(j)] * tmpl.s_hat[static_cast<std::size_t>(j + offset)];
    }
    return acc;
}

}  // namespace

DelayEstimate ml_delay(std::span<const double> sensor, Tick sensor_origin,
                       const WaveformEstimate& tmpl, int tau_max) {
    if (sensor.empty()) {
        throw ValidationError("delay estimation needs a window of at least one sample");
    }
    if (tau_max < 0) {
        throw ValidationError("tau_max must be nonnegative");
    }
    DelayEstimate best;
    double best_abs = 0.0;
    // Visiting 0, -1, +1, -2, +2, ... and replacing only on a strict
    // improvement implements the tie-break.
    for (int m = 0; m <= 2 * tau_max; ++m) {
        const int z = (m % 2 == 0) ? m / 2 : -(m + 1) / 2;
        const double c = shifted_correlation(sensor, sensor_origin, tmpl, z);
        if (std::abs(c) > best_abs) {
            best_abs = std::abs(c);
            best.delay = z;
            best.correlation = c;
        }
    }
    best.zero_correlation = (best_abs == 0.0);
    return best;
}

JointEstimate joint_estimate(const SampleStore& store, Tick window_start, std::size_t w,
                             const JointOptions& options) {
    const std::size_t k = store.sensors();
    if (k < 2) {
        throw ValidationError("joint estimation needs at least 2 sensors");
    }
    if (w < 2) {
        throw ValidationError("joint estimation needs a window of at least 2 ticks");
    }
    if (options.delta < 0) {
        throw ValidationError("delta must be nonnegative");
    }
    if (options.n_max < 1) {
        throw ValidationError("n_max must be at least 1");
    }
    if (options.tau_max < 0) {
        throw ValidationError("tau_max must be nonnegative");
    }
    if (options.reference >= k) {
        throw ValidationError("reference sensor out of range");
    }

    std::vector<std::vector<double>> raw(k);
    for (std::size_t i = 0; i < k; ++i) {
        raw[i] = store.window(i, window_start, w);
    }

    JointEstimate est;
    est.waveform = WaveformEstimate{raw[options.reference], window_start};
    est.delays = DelayProfile::zero(k, options.tau_max);
    est.delays.reference = options.reference;
    est.delays.converged = false;

    std::vector<int> previous(k, 0);
    std::vector<MultiSensorFrame> aligned(w);
    int n = 1;
    bool first = true;
    while (true) {
        int change = 0;
        for (std::size_t i = 0; i < k; ++i) {
            change = std::max(change, std::abs(est.delays.tau_hat[i] - previous[i]));
        }
        if (!first && change < options.delta) {
            est.delays.converged = true;
            break;
        }
        if (n > options.n_max) {
            break;
        }
        first = false;
        ++n;
        previous = est.delays.tau_hat;

        for (std::size_t i = 0; i < k; ++i) {
            if (i == options.reference) {
                continue;
            }
            est.delays.tau_hat[i] = ml_delay(raw[i], window_start, est.waveform, options.tau_max).delay;
        }
        for (std::size_t j = 0; j < w; ++j) {
            aligned[j] = align_frames(store, window_start + static_cast<Tick>(j), est.delays);
        }
        est.u_hat = linalg::top_singular_vector(aligned, options.power).u;
        for (std::size_t j = 0; j < w; ++j) {
            est.waveform.s_hat[j] = linalg::dot(est.u_hat, aligned[j].values);
        }
    }
    est.delays.iterations = n - 1;
    return est;
}

}  // namespace asyncdet::sync
