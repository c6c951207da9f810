#include "asyncdet/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "asyncdet/errors.hpp"

namespace asyncdet::detect {
namespace {

void require_unit(std::span<const double> u) {
    if (u.empty() || std::abs(linalg::norm(u) - 1.0) > 1e-9) {
        throw ValidationError("subspace vector must have unit norm");
    }
}

void require_dimension(const MultiSensorFrame& frame, std::size_t k) {
    if (frame.size() != k) {
        throw DimensionMismatchError("frame at tick " + std::to_string(frame.t) + " has " +
                                     std::to_string(frame.size()) + " values, expected " +
                                     std::to_string(k));
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Recursions

CusumState cusum_update(CusumState state, Tick t, double gain) {
    state.S = std::max(state.S, 0.0) + gain;
    state.t = t;
    if (!state.crossed_at && state.S >= state.b) {
        state.crossed_at = t;
        state.reported_at = t + static_cast<Tick>(state.w);
    }
    return state;
}

double known_subspace_offset(double sigma2, double rho) {
    if (!(sigma2 > 0.0) || !(rho > 0.0)) {
        throw ValidationError("known-subspace CUSUM needs sigma2 > 0 and rho > 0");
    }
    return sigma2 * (1.0 + 1.0 / rho) * std::log1p(rho);
}

CusumState cusum_step_known_u(CusumState state, const MultiSensorFrame& frame,
                              std::span<const double> u, double sigma2, double rho) {
    require_unit(u);
    require_dimension(frame, u.size());
    const double offset = known_subspace_offset(sigma2, rho);
    const double p = linalg::dot(u, frame.values);
    return cusum_update(std::move(state), frame.t, p * p - offset);
}

CusumState subspace_cusum_step(CusumState state, const MultiSensorFrame& frame,
                               const SubspaceEstimate& estimate) {
    if (estimate.window_first <= frame.t || estimate.window_last < estimate.window_first) {
        throw ContractViolationError(
            "subspace estimate for tick " + std::to_string(frame.t) + " uses window [" +
            std::to_string(estimate.window_first) + ", " + std::to_string(estimate.window_last) +
            "], which is not strictly in its future");
    }
    require_dimension(frame, estimate.u.size());
    const double p = linalg::dot(estimate.u, frame.values);
    const double gain = p * p - state.d;
    return cusum_update(std::move(state), frame.t, gain);
}

// ---------------------------------------------------------------------------
// KnownSubspaceCusum

KnownSubspaceCusum::KnownSubspaceCusum(std::vector<double> u, double sigma2, double rho)
    : u_(std::move(u)), sigma2_(sigma2), rho_(rho), offset_(known_subspace_offset(sigma2, rho)) {
    require_unit(u_);
    state_.d = offset_;
}

void KnownSubspaceCusum::push(const MultiSensorFrame& frame, std::vector<StatisticPoint>& out) {
    require_finite(frame);
    const double before = std::max(state_.S, 0.0);
    state_ = cusum_step_known_u(std::move(state_), frame, u_, sigma2_, rho_);
    out.push_back({frame.t, state_.S - before, state_.S});
}

// ---------------------------------------------------------------------------
// OneShotCusum

OneShotCusum::OneShotCusum(double mu, double sigma2) : mu_(mu), sigma2_(sigma2) {
    if (mu == 0.0 || !std::isfinite(mu)) {
        throw ValidationError("one-shot CUSUM needs a finite, nonzero mu");
    }
    if (!(sigma2 > 0.0)) {
        throw ValidationError("one-shot CUSUM needs sigma2 > 0");
    }
}

double OneShotCusum::llr_increment(double x, double mu, double sigma2) {
    return (mu / sigma2) * (x - mu / 2.0);
}

void OneShotCusum::push(const MultiSensorFrame& frame, std::vector<StatisticPoint>& out) {
    if (stats_.empty()) {
        if (frame.size() == 0) {
            throw DimensionMismatchError("frame has no readings");
        }
        stats_.assign(frame.size(), 0.0);
    }
    require_dimension(frame, stats_.size());
    require_finite(frame);
    StatisticPoint p{frame.t, 0.0, -std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < stats_.size(); ++i) {
        const double gain = llr_increment(frame.values[i], mu_, sigma2_);
        stats_[i] = std::max(stats_[i], 0.0) + gain;
        if (stats_[i] > p.S) {
            p.S = stats_[i];
            p.increment = gain;
        }
    }
    out.push_back(p);
}

// ---------------------------------------------------------------------------
// SubspaceCusum

SubspaceCusum::SubspaceCusum(SubspaceOptions options) : options_(std::move(options)) {
    if (options_.w < 1) {
        throw ValidationError("Subspace-CUSUM needs a window of at least 1 tick");
    }
    if (!std::isfinite(options_.d)) {
        throw ValidationError("drift must be finite");
    }
    power_ = options_.power;
    if (options_.cadence == 0) {
        options_.cadence = options_.w;
    }
    if (options_.estimate_delays && options_.w < 2) {
        throw ValidationError("delay estimation needs a window of at least 2 ticks");
    }
    if (!options_.estimate_delays && !options_.fixed.tau_hat.empty()) {
        validate(options_.fixed);
    }
    state_.d = options_.d;
    state_.w = options_.w;
    window_.resize(options_.w);
}

Tick SubspaceCusum::margin() const {
    const Tick w = static_cast<Tick>(options_.w);
    if (options_.estimate_delays) {
        const Tick tau = options_.joint.tau_max;
        return static_cast<Tick>(options_.cadence) + 3 * tau + w - 1;
    }
    return w + std::max(0, options_.fixed.max_delay());
}

void SubspaceCusum::push(const MultiSensorFrame& frame, std::vector<StatisticPoint>& out) {
    if (!store_) {
        if (frame.size() < 2) {
            throw DimensionMismatchError("Subspace-CUSUM needs at least 2 sensors");
        }
        store_.emplace(frame.size());
        if (!options_.estimate_delays) {
            if (options_.fixed.tau_hat.empty()) {
                options_.fixed = DelayProfile::zero(frame.size());
            } else if (options_.fixed.tau_hat.size() != frame.size()) {
                throw DimensionMismatchError("fixed delay profile does not match sensor count");
            }
            delays_ = options_.fixed;
        }
        next_t_ = frame.t;
        next_estimate_t_ = frame.t;
    }
    require_finite(frame);
    store_->append(frame);

    const Tick lower = options_.estimate_delays ? options_.joint.tau_max
                                                : std::max(0, -options_.fixed.min_delay());
    while (store_->last_tick() >= *next_t_ + margin()) {
        evaluate(*next_t_, out);
        ++*next_t_;
    }
    store_->discard_before(*next_t_ - lower);
}

void SubspaceCusum::finish(std::vector<StatisticPoint>& out) {
    if (!store_) {
        return;
    }
    while (*next_t_ + static_cast<Tick>(options_.w) <= store_->last_tick()) {
        evaluate(*next_t_, out);
        ++*next_t_;
    }
}

void SubspaceCusum::evaluate(Tick t, std::vector<StatisticPoint>& out) {
    try {
        if (options_.estimate_delays && (!delays_ || t >= next_estimate_t_)) {
            // Delays for ticks t..t+cadence-1 come from a window whose shifted
            // samples all lie past t+cadence-1+tau_max, so no aligned frame
            // x~_t in the block took part in choosing them.
            const Tick start = t + static_cast<Tick>(options_.cadence) + 2 * options_.joint.tau_max;
            auto est = sync::joint_estimate(*store_, start, options_.w, options_.joint);
            delays_ = std::move(est.delays);
            delay_log_.push_back({start - 1, *delays_});
            next_estimate_t_ = t + static_cast<Tick>(options_.cadence);
        }
        const MultiSensorFrame current = align_frames(*store_, t, *delays_);
        for (std::size_t j = 0; j < options_.w; ++j) {
            window_[j] = align_frames(*store_, t + 1 + static_cast<Tick>(j), *delays_);
        }
        // consecutive windows share w-1 frames; start from the last estimate
        power_.start = std::move(last_u_);
        auto sv = linalg::top_singular_vector(window_, power_);
        last_u_ = sv.u;
        SubspaceEstimate est{std::move(sv.u), t + 1, t + static_cast<Tick>(options_.w)};
        const double before = std::max(state_.S, 0.0);
        state_ = subspace_cusum_step(std::move(state_), current, est);
        out.push_back({t, state_.S - before, state_.S});
    } catch (const InsufficientLookaheadError& e) {
        gaps_.push_back({t, e.what()});
    } catch (const DegenerateInputError& e) {
        gaps_.push_back({t, e.what()});
    }
}

// ---------------------------------------------------------------------------
// Configuration

std::string_view to_string(DetectorKind kind) {
    switch (kind) {
        case DetectorKind::KnownSubspace: return "known-subspace";
        case DetectorKind::Subspace: return "subspace";
        case DetectorKind::AsyncSubspace: return "async-subspace";
        case DetectorKind::OneShot: return "oneshot";
    }
    return "unknown";
}

DetectorKind parse_detector_kind(std::string_view name) {
    for (auto kind : {DetectorKind::KnownSubspace, DetectorKind::Subspace,
                      DetectorKind::AsyncSubspace, DetectorKind::OneShot}) {
        if (to_string(kind) == name) {
            return kind;
        }
    }
    throw ValidationError("unknown detector '" + std::string(name) +
                          "' (known-subspace, subspace, async-subspace, oneshot)");
}

void DetectorConfig::validate() const {
    switch (kind) {
        case DetectorKind::KnownSubspace:
            require_unit(u);
            known_subspace_offset(sigma2, rho);
            break;
        case DetectorKind::OneShot:
            if (mu == 0.0 || !std::isfinite(mu)) {
                throw ValidationError("one-shot detector needs a finite, nonzero mu");
            }
            if (!(sigma2 > 0.0)) {
                throw ValidationError("one-shot detector needs sigma2 > 0");
            }
            break;
        case DetectorKind::Subspace:
        case DetectorKind::AsyncSubspace:
            if (w < 1 || (kind == DetectorKind::AsyncSubspace && w < 2)) {
                throw ValidationError("window w too short for this detector");
            }
            if (tau_max < 0 || delta < 0 || n_max < 1) {
                throw ValidationError("need tau_max >= 0, delta >= 0, n_max >= 1");
            }
            if (!std::isfinite(d)) {
                throw ValidationError("drift must be finite");
            }
            break;
    }
}

std::unique_ptr<Detector> make_detector(const DetectorConfig& config) {
    config.validate();
    switch (config.kind) {
        case DetectorKind::KnownSubspace:
            return std::make_unique<KnownSubspaceCusum>(config.u, config.sigma2, config.rho);
        case DetectorKind::OneShot:
            return std::make_unique<OneShotCusum>(config.mu, config.sigma2);
        case DetectorKind::Subspace:
        case DetectorKind::AsyncSubspace: {
            SubspaceOptions o;
            o.w = config.w;
            o.d = config.d;
            o.estimate_delays = config.kind == DetectorKind::AsyncSubspace;
            o.joint.delta = config.delta;
            o.joint.n_max = config.n_max;
            o.joint.tau_max = config.tau_max;
            o.joint.reference = config.reference;
            o.cadence = config.cadence;
            o.power = config.power;
            return std::make_unique<SubspaceCusum>(std::move(o));
        }
    }
    throw ValidationError("unknown detector kind");
}

// ---------------------------------------------------------------------------
// Driving a detector

FrameSource table_source(const SensorTable& table) {
    return [&table, j = std::size_t{0}]() mutable -> std::optional<MultiSensorFrame> {
        if (j >= table.length()) {
            return std::nullopt;
        }
        MultiSensorFrame f{table.first_tick + static_cast<Tick>(j), std::vector<double>(table.sensors())};
        for (std::size_t i = 0; i < table.sensors(); ++i) {
            f.values[i] = table.streams[i][j];
        }
        ++j;
        return f;
    };
}

StoppingReport run_detector(Detector& detector, const FrameSource& source, const RunOptions& options) {
    if (std::isnan(options.b)) {
        throw ValidationError("threshold b is NaN");
    }
    StoppingReport report;
    report.detector = std::string(detector.name());
    report.b = options.b;
    report.d = detector.drift();
    report.w = detector.lookahead();

    std::vector<StatisticPoint> points;
    bool stopped = false;
    auto consume = [&] {
        for (const auto& p : points) {
            if (options.keep_trajectory) {
                report.trajectory.push_back(p);
            }
            if (!report.crossed_at && p.S >= options.b) {
                report.crossed_at = p.t;
                report.reported_at = p.t + static_cast<Tick>(report.w);
                if (options.stop_at_alarm) {
                    stopped = true;
                    break;
                }
            }
        }
        points.clear();
    };

    while (!stopped) {
        auto frame = source();
        if (!frame) {
            detector.finish(points);
            consume();
            break;
        }
        detector.push(*frame, points);
        consume();
    }
    report.gaps.assign(detector.gaps().begin(), detector.gaps().end());
    report.delay_log.assign(detector.delay_log().begin(), detector.delay_log().end());
    return report;
}

StoppingReport run_detector(Detector& detector, const SensorTable& table, const RunOptions& options) {
    return run_detector(detector, table_source(table), options);
}

StoppingReport one_shot_detector(const SensorTable& streams, double mu, double sigma2, double b) {
    OneShotCusum det(mu, sigma2);
    return run_detector(det, streams, RunOptions{.b = b});
}

StoppingReport async_pipeline(const SensorTable& streams, const AsyncParams& params) {
    SubspaceOptions o;
    o.w = params.w;
    o.d = params.d;
    o.estimate_delays = true;
    o.joint.delta = params.delta;
    o.joint.n_max = params.n_max;
    o.joint.tau_max = params.tau_max;
    o.cadence = params.cadence;
    SubspaceCusum det(std::move(o));
    return run_detector(det, streams, RunOptions{.b = params.b, .stop_at_alarm = params.stop_at_alarm});
}

// ---------------------------------------------------------------------------
// Drift theory and calibration

DriftBounds drift_bounds(double sigma2, double rho, std::size_t k, std::size_t w) {
    if (!(sigma2 > 0.0) || !(rho > 0.0)) {
        throw ValidationError("drift bounds need sigma2 > 0 and rho > 0");
    }
    if (k < 2 || w < 1) {
        throw ValidationError("drift bounds need k >= 2 and w >= 1");
    }
    DriftBounds out;
    out.lower = prechange_increment_mean(sigma2);
    out.upper = postchange_increment_mean(sigma2, rho, k, w, 1.0);
    out.valid = out.upper > out.lower;
    return out;
}

double prechange_increment_mean(double sigma2) { return sigma2; }

double postchange_increment_mean(double sigma2, double rho, std::size_t k, std::size_t w,
                                 double energy_ratio) {
    const double kk = static_cast<double>(k);
    const double ww = static_cast<double>(w);
    const double error_energy = (1.0 + rho) * (kk - 1.0) / (ww * rho * rho);
    return sigma2 * (1.0 + energy_ratio * rho * (1.0 - error_energy));
}

double calibrate_drift(std::span<const double> prechange, double factor) {
    if (prechange.empty()) {
        throw ValidationError("drift calibration needs at least one increment");
    }
    if (!std::isfinite(factor)) {
        throw ValidationError("calibration factor must be finite");
    }
    const double mean = std::accumulate(prechange.begin(), prechange.end(), 0.0) /
                        static_cast<double>(prechange.size());
    return factor * mean;
}

std::vector<double> projection_series(const SensorTable& table, std::size_t prefix,
                                      const SubspaceOptions& options) {
    if (prefix > table.length()) {
        throw ValidationError("calibration prefix of " + std::to_string(prefix) +
                              " ticks exceeds the record length " + std::to_string(table.length()));
    }
    if (prefix <= options.w) {
        throw ValidationError("calibration prefix of " + std::to_string(prefix) +
                              " ticks is too short for one window of w = " +
                              std::to_string(options.w));
    }
    SubspaceOptions o = options;
    o.d = 0.0;
    SubspaceCusum det(std::move(o));
    SensorTable head{table.first_tick, {}};
    for (const auto& s : table.streams) {
        head.streams.emplace_back(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(prefix));
    }
    auto report = run_detector(det, head, RunOptions{.b = std::numeric_limits<double>::infinity(),
                                                      .stop_at_alarm = false});
    std::vector<double> out;
    out.reserve(report.trajectory.size());
    for (const auto& p : report.trajectory) {
        out.push_back(p.increment);
    }
    if (out.empty()) {
        throw ValidationError("no tick in the calibration prefix could be evaluated");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Output

void write_report_csv(std::ostream& out, const StoppingReport& report, std::optional<double> rate_hz) {
    out << "detector,crossed_at,reported_at,b,d";
    if (rate_hz) {
        out << ",crossed_at_s,reported_at_s";
    }
    out << '\n';
    auto tick = [](const std::optional<Tick>& t) { return t ? std::to_string(*t) : std::string(); };
    out << report.detector << ',' << tick(report.crossed_at) << ',' << tick(report.reported_at) << ','
        << format_number(report.b) << ',' << format_number(report.d);
    if (rate_hz) {
        auto secs = [&](const std::optional<Tick>& t) {
            return t ? format_number(static_cast<double>(*t) / *rate_hz) : std::string();
        };
        out << ',' << secs(report.crossed_at) << ',' << secs(report.reported_at);
    }
    out << '\n';
}

void write_trajectory_csv(std::ostream& out, const StoppingReport& report) {
    out << "t,S\n";
    for (const auto& p : report.trajectory) {
        out << p.t << ',' << format_number(p.S) << '\n';
    }
}

void write_delay_log_csv(std::ostream& out, const StoppingReport& report) {
    out << 't';
    const std::size_t k = report.delay_log.empty() ? 0 : report.delay_log.front().delays.tau_hat.size();
    for (std::size_t i = 0; i < k; ++i) {
        out << ",tau_" << (i + 1);
    }
    out << ",iterations,converged\n";
    for (const auto& e : report.delay_log) {
        out << e.t;
        for (int d : e.delays.tau_hat) {
            out << ',' << d;
        }
        out << ',' << e.delays.iterations << ',' << (e.delays.converged ? 1 : 0) << '\n';
    }
}

}  // namespace asyncdet::detect
