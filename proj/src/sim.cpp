#include "asyncdet/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>

#include "asyncdet/errors.hpp"

namespace asyncdet::sim {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// NormalRng

double NormalRng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double NormalRng::normal() {
    if (spare_) {
        const double z = *spare_;
        spare_.reset();
        return z;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    return u * f;
}

std::int64_t NormalRng::integer(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) {
        throw ValidationError("empty integer range");
    }
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) {
        return static_cast<std::int64_t>(engine_());
    }
    // Rejection keeps the draw exactly uniform.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t x = 0;
    do {
        x = engine_();
    } while (x >= limit);
    return lo + static_cast<std::int64_t>(x % span);
}

// ---------------------------------------------------------------------------
// Episodes

EpisodeStream::EpisodeStream(ScenarioModel model, Tick horizon, std::uint64_t seed)
    : model_(std::move(model)), horizon_(horizon), rng_(seed) {
    model_.validate();
    if (horizon < 1) {
        throw ValidationError("horizon must be at least 1 tick");
    }
    sigma_ = std::sqrt(model_.sigma2);
}

std::optional<MultiSensorFrame> EpisodeStream::next() {
    if (t_ >= horizon_) {
        return std::nullopt;
    }
    ++t_;
    MultiSensorFrame f{t_, std::vector<double>(model_.k)};
    for (std::size_t i = 0; i < model_.k; ++i) {
        // Draw even when sigma is zero so the noise sequence does not depend on it.
        const double e = sigma_ * rng_.normal();
        f.values[i] = model_.alpha[i] * model_.waveform(t_ - model_.onsets[i]) + e;
    }
    return f;
}

SensorTable generate_episode(const ScenarioModel& model, Tick horizon, std::uint64_t seed) {
    EpisodeStream stream(model, horizon, seed);
    SensorTable table;
    table.first_tick = 1;
    table.streams.assign(model.k, {});
    for (auto& s : table.streams) {
        s.reserve(static_cast<std::size_t>(horizon));
    }
    while (auto f = stream.next()) {
        for (std::size_t i = 0; i < model.k; ++i) {
            table.streams[i].push_back(f->values[i]);
        }
    }
    return table;
}

ScenarioModel Scenario::draw(std::uint64_t trial_seed) const {
    ScenarioModel m = model;
    if (!random_delay_max) {
        return m;
    }
    if (*random_delay_max < 0) {
        throw ValidationError("random delay bound must be nonnegative");
    }
    const Tick change = m.change_point();
    NormalRng rng(mix_seed(trial_seed, 0xde1a7));
    for (auto& onset : m.onsets) {
        onset = change + rng.integer(0, *random_delay_max);
    }
    const Tick shift = *std::min_element(m.onsets.begin(), m.onsets.end()) - change;
    for (auto& onset : m.onsets) {
        onset -= shift;
    }
    return m;
}

Scenario pure_noise(std::size_t k, double sigma2) {
    Scenario s;
    s.model.k = k;
    s.model.sigma2 = sigma2;
    s.model.alpha.assign(k, 0.0);
    s.model.onsets.assign(k, std::numeric_limits<Tick>::max() / 2);
    return s;
}

Scenario mean_shift(std::size_t k, double sigma2, double mu, Tick change, int delay_max) {
    Scenario s;
    s.model.k = k;
    s.model.sigma2 = sigma2;
    s.model.alpha.assign(k, mu);
    s.model.waveform = Waveform::step();
    s.model.onsets.assign(k, change);
    if (delay_max > 0) {
        s.random_delay_max = delay_max;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Trials

namespace {

bool is_pure_noise(const ScenarioModel& m, Tick horizon) {
    return std::all_of(m.alpha.begin(), m.alpha.end(), [](double a) { return a == 0.0; }) ||
           m.change_point() >= horizon;
}

TrialLog run_one(const DetectorFactory& factory, const Scenario& scenario,
                 std::span<const double> b_grid, const MonteCarloOptions& options, std::size_t trial) {
    const std::uint64_t seed = mix_seed(options.seed, trial);
    const ScenarioModel model = scenario.draw(seed);
    auto detector = factory();

    TrialLog log;
    log.lookahead = detector->lookahead();
    if (!is_pure_noise(model, options.horizon)) {
        log.change_point = model.change_point();
    }
    log.reported.assign(b_grid.size(), std::nullopt);
    const double b_max = *std::max_element(b_grid.begin(), b_grid.end());

    EpisodeStream stream(model, options.horizon, seed);
    std::vector<detect::StatisticPoint> points;
    std::size_t pending = b_grid.size();
    const auto w = static_cast<Tick>(log.lookahead);
    bool done = false;
    while (!done) {
        auto frame = stream.next();
        if (!frame) {
            break;
        }
        detector->push(*frame, points);
        for (const auto& p : points) {
            if (options.keep_trajectories) {
                log.trajectory.push_back(p);
            }
            for (std::size_t j = 0; j < b_grid.size(); ++j) {
                if (!log.reported[j] && p.S >= b_grid[j]) {
                    log.reported[j] = p.t + w;
                    --pending;
                }
            }
            if (pending == 0 && p.S >= b_max) {
                done = true;
                break;
            }
        }
        points.clear();
    }
    return log;
}

}  // namespace

std::vector<TrialLog> run_trials(const DetectorFactory& factory, const Scenario& scenario,
                                 std::span<const double> b_grid, const MonteCarloOptions& options) {
    if (options.trials < 1) {
        throw ValidationError("need at least one trial");
    }
    if (b_grid.empty()) {
        throw ValidationError("threshold grid is empty");
    }
    if (options.horizon < 1) {
        throw ValidationError("horizon must be at least 1 tick");
    }
    scenario.model.validate();

    std::vector<TrialLog> logs(options.trials);
    unsigned threads = options.threads ? options.threads : std::thread::hardware_concurrency();
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(options.trials)));

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto worker = [&] {
        while (!failed) {
            const std::size_t n = next.fetch_add(1);
            if (n >= options.trials) {
                return;
            }
            try {
                logs[n] = run_one(factory, scenario, b_grid, options, n);
            } catch (...) {
                if (!failed.exchange(true)) {
                    failure = std::current_exception();
                }
                return;
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned i = 0; i < threads; ++i) {
            pool.emplace_back(worker);
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    return logs;
}

std::vector<TrialResult> trial_results(std::span<const TrialLog> logs, std::size_t b_index,
                                       const std::string& detector_id) {
    std::vector<TrialResult> out;
    out.reserve(logs.size());
    for (const auto& log : logs) {
        TrialResult r;
        r.detector_id = detector_id;
        r.stopped_at = log.reported.at(b_index);
        r.change_point = log.change_point;
        r.false_alarm = r.stopped_at && (!r.change_point || *r.stopped_at <= *r.change_point);
        out.push_back(std::move(r));
    }
    return out;
}

namespace {

std::pair<double, double> mean_and_se(std::span<const double> xs) {
    const auto n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    if (xs.size() < 2) {
        return {mean, 0.0};
    }
    double ss = 0.0;
    for (double x : xs) {
        ss += (x - mean) * (x - mean);
    }
    return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace

ArlEstimate summarize_arl(std::span<const TrialLog> logs, std::size_t b_index, double b, Tick horizon) {
    ArlEstimate est;
    est.b = b;
    est.trials = logs.size();
    std::vector<double> stops;
    std::size_t censored = 0;
    for (const auto& log : logs) {
        const auto& r = log.reported.at(b_index);
        if (r) {
            stops.push_back(static_cast<double>(*r));
        } else {
            stops.push_back(static_cast<double>(horizon));
            ++censored;
        }
    }
    if (stops.empty()) {
        return est;
    }
    std::tie(est.mean, est.se) = mean_and_se(stops);
    est.censored_frac = static_cast<double>(censored) / static_cast<double>(logs.size());
    est.unreliable = est.censored_frac > 0.5;
    return est;
}

EddEstimate summarize_edd(std::span<const TrialLog> logs, std::size_t b_index, double b, Tick horizon) {
    EddEstimate est;
    est.b = b;
    std::vector<double> delays;
    std::size_t censored = 0;
    for (const auto& log : logs) {
        const Tick change = log.change_point.value_or(0);
        const auto& r = log.reported.at(b_index);
        if (r && *r <= change) {
            ++est.false_alarms;
            continue;
        }
        if (r) {
            delays.push_back(static_cast<double>(*r - change));
        } else {
            delays.push_back(static_cast<double>(horizon - change));
            ++censored;
        }
    }
    est.trials_used = delays.size();
    if (delays.empty()) {
        return est;
    }
    std::tie(est.mean, est.se) = mean_and_se(delays);
    est.censored_frac = static_cast<double>(censored) / static_cast<double>(delays.size());
    return est;
}

std::vector<ArlEstimate> estimate_arl(const DetectorFactory& factory, const Scenario& noise,
                                      std::span<const double> b_grid, const MonteCarloOptions& options) {
    const auto logs = run_trials(factory, noise, b_grid, options);
    std::vector<ArlEstimate> out;
    for (std::size_t j = 0; j < b_grid.size(); ++j) {
        out.push_back(summarize_arl(logs, j, b_grid[j], options.horizon));
    }
    return out;
}

ArlEstimate estimate_arl(const DetectorFactory& factory, const Scenario& noise, double b,
                         const MonteCarloOptions& options) {
    const double grid[] = {b};
    return estimate_arl(factory, noise, grid, options).front();
}

std::vector<EddEstimate> estimate_edd(const DetectorFactory& factory, const Scenario& change,
                                      std::span<const double> b_grid, const MonteCarloOptions& options) {
    const auto logs = run_trials(factory, change, b_grid, options);
    std::vector<EddEstimate> out;
    for (std::size_t j = 0; j < b_grid.size(); ++j) {
        out.push_back(summarize_edd(logs, j, b_grid[j], options.horizon));
    }
    return out;
}

EddEstimate estimate_edd(const DetectorFactory& factory, const Scenario& change, double b,
                         const MonteCarloOptions& options) {
    const double grid[] = {b};
    return estimate_edd(factory, change, grid, options).front();
}

// ---------------------------------------------------------------------------
// Operating curves

std::vector<CurvePoint> operating_curve(const DetectorFactory& factory, const std::string& detector_id,
                                        const Scenario& noise, const Scenario& change,
                                        std::span<const double> b_grid, const CurveOptions& options) {
    if (b_grid.empty()) {
        throw ValidationError("threshold grid is empty");
    }
    if (!std::is_sorted(b_grid.begin(), b_grid.end()) ||
        std::adjacent_find(b_grid.begin(), b_grid.end()) != b_grid.end()) {
        throw ValidationError("threshold grid must be strictly increasing");
    }
    const auto arl = estimate_arl(factory, noise, b_grid, options.arl);
    const auto edd = estimate_edd(factory, change, b_grid, options.edd);
    std::vector<CurvePoint> curve;
    for (std::size_t j = 0; j < b_grid.size(); ++j) {
        CurvePoint p;
        p.detector = detector_id;
        p.b = b_grid[j];
        p.arl = arl[j].mean;
        p.arl_se = arl[j].se;
        p.edd = edd[j].mean;
        p.edd_se = edd[j].se;
        p.censored_frac = std::max(arl[j].censored_frac, edd[j].censored_frac);
        p.unreliable = arl[j].unreliable || edd[j].censored_frac > 0.5;
        curve.push_back(std::move(p));
    }
    return curve;
}

void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve, bool header) {
    if (header) {
        out << "detector,b,arl,arl_se,edd,edd_se,censored_frac\n";
    }
    for (const auto& p : curve) {
        out << p.detector << ',' << format_number(p.b) << ',' << format_number(p.arl) << ','
            << format_number(p.arl_se) << ',' << format_number(p.edd) << ','
            << format_number(p.edd_se) << ',' << format_number(p.censored_frac) << '\n';
    }
}

std::optional<double> edd_at_arl(std::span<const CurvePoint> curve, double arl) {
    if (curve.empty() || !(arl > 0.0)) {
        return std::nullopt;
    }
    std::vector<CurvePoint> sorted(curve.begin(), curve.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const CurvePoint& a, const CurvePoint& b) { return a.arl < b.arl; });
    if (arl < sorted.front().arl || arl > sorted.back().arl) {
        return std::nullopt;
    }
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        const auto& lo = sorted[i - 1];
        const auto& hi = sorted[i];
        if (arl <= hi.arl) {
            if (hi.arl == lo.arl) {
                return 0.5 * (lo.edd + hi.edd);
            }
            const double f = (std::log(arl) - std::log(lo.arl)) / (std::log(hi.arl) - std::log(lo.arl));
            return lo.edd + f * (hi.edd - lo.edd);
        }
    }
    return sorted.front().edd;  // single point equal to arl
}

// ---------------------------------------------------------------------------
// Comparison preset

double mean_projection(const detect::DetectorConfig& config, const Scenario& scenario, Tick ticks,
                       Tick skip, std::uint64_t seed) {
    detect::DetectorConfig c = config;
    c.d = 0.0;
    auto detector = detect::make_detector(c);
    EpisodeStream stream(scenario.draw(seed), ticks + skip + static_cast<Tick>(c.w) + c.tau_max, seed);
    std::vector<detect::StatisticPoint> points;
    double sum = 0.0;
    Tick n = 0;
    while (auto f = stream.next()) {
        detector->push(*f, points);
        for (const auto& p : points) {
            if (p.t > skip && n < ticks) {
                sum += p.increment;
                ++n;
            }
        }
        points.clear();
    }
    if (n == 0) {
        throw ValidationError("no projections collected");
    }
    return sum / static_cast<double>(n);
}

detect::DetectorConfig subspace_config(const ComparisonPreset& preset, detect::DetectorKind kind, double d) {
    detect::DetectorConfig c;
    c.kind = kind;
    c.w = preset.w;
    c.tau_max = preset.tau_max;
    c.d = d;
    c.sigma2 = preset.sigma2;
    return c;
}

detect::DetectorConfig one_shot_config(const ComparisonPreset& preset) {
    detect::DetectorConfig c;
    c.kind = detect::DetectorKind::OneShot;
    c.mu = preset.mu;
    c.sigma2 = preset.sigma2;
    return c;
}

DriftChoice choose_drift(const ComparisonPreset& preset, detect::DetectorKind kind, Tick ticks,
                         std::uint64_t seed) {
    DriftChoice out;
    const auto bounds = detect::drift_bounds(preset.sigma2, preset.rho(), preset.k, preset.w);
    if (bounds.valid) {
        out.d = bounds.midpoint();
        out.from_bounds = true;
        return out;
    }
    const auto config = subspace_config(preset, kind, 0.0);
    out.prechange_mean = mean_projection(config, pure_noise(preset.k, preset.sigma2), ticks, 0,
                                         mix_seed(seed, 1));
    // Change at tick 0; every sensor is past its onset after tau_max ticks.
    out.postchange_mean = mean_projection(
        config, mean_shift(preset.k, preset.sigma2, preset.mu, 0, preset.tau_max), ticks,
        preset.tau_max, mix_seed(seed, 2));
    out.d = 0.5 * (out.prechange_mean + out.postchange_mean);
    return out;
}

}  // namespace asyncdet::sim
