#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "asyncdet/core.hpp"
#include "asyncdet/linalg.hpp"

namespace asyncdet::sync {

// Reconstructed source waveform over an analysis window; identifiable only
// up to scale and sign.
struct WaveformEstimate {
    std::vector<double> s_hat;
    Tick origin_t = 1;  // tick of s_hat[0]

    // Zero outside the window.
    double operator()(Tick t) const {
        const Tick i = t - origin_t;
        return (i >= 0 && i < static_cast<Tick>(s_hat.size())) ? s_hat[static_cast<std::size_t>(i)]
                                                               : 0.0;
    }
};

struct DelayEstimate {
    int delay = 0;
    double correlation = 0.0;  // signed correlation at the chosen shift
    bool zero_correlation = false;
};

/// Maximum-likelihood integer delay of one sensor against a template:
///   argmax_{|z| <= tau_max} | sum_j x(j) s_hat(j - z) |
/// with j running over the sensor window [origin, origin + sensor.size()).
/// Template samples outside its own window count as zero. Ties go to the
/// smallest |z|, then the smallest z.
DelayEstimate ml_delay(std::span<const double> sensor, Tick sensor_origin,
                       const WaveformEstimate& tmpl, int tau_max);

struct JointOptions {
    int delta = 1;
    int n_max = 10;
    int tau_max = 0;
    std::size_t reference = 0;
    linalg::PowerIterationOptions power{.tol = 1e-10, .max_iter = std::nullopt, .check_gap = false, .accelerate = true, .start = {}};
};

struct JointEstimate {
    DelayProfile delays;
    WaveformEstimate waveform;
    std::vector<double> u_hat;
};

/// Alternates delay estimation against the current waveform estimate with
/// re-alignment, subspace re-estimation and waveform reconstruction, over
/// the window [window_start, window_start + w). Starts from the reference
/// sensor's own samples and zero delays; stops once no delay moves by
/// delta or more, or after n_max passes (converged records which).
///
/// The store must hold every sample x_i(j + tau_i) the passes touch;
/// InsufficientLookaheadError propagates otherwise.
JointEstimate joint_estimate(const SampleStore& store, Tick window_start, std::size_t w,
                             const JointOptions& options);

}  // namespace asyncdet::sync
