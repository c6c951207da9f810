#include <algorithm>
#include <cmath>
#include <sstream>

#include "asyncdet/errors.hpp"
#include "asyncdet/sim.hpp"
#include "doctest.h"

using namespace asyncdet;
using namespace asyncdet::sim;

namespace {

DetectorFactory one_shot_factory(double mu, double sigma2) {
    return [=] { return std::make_unique<detect::OneShotCusum>(mu, sigma2); };
}

DetectorFactory subspace_factory(detect::DetectorKind kind, std::size_t w, int tau_max, double d) {
    detect::DetectorConfig cfg;
    cfg.kind = kind;
    cfg.w = w;
    cfg.tau_max = tau_max;
    cfg.d = d;
    return [cfg] { return detect::make_detector(cfg); };
}

}  // namespace

TEST_CASE("generate_episode noiseless step example") {
    ScenarioModel m;
    m.k = 2;
    m.sigma2 = 0.0;
    m.alpha = {1, 2};
    m.onsets = {3, 5};
    const auto table = generate_episode(m, 6, 1);
    CHECK(table.first_tick == 1);
    CHECK(table.streams[0] == std::vector<double>{0, 0, 0, 1, 1, 1});
    CHECK(table.streams[1] == std::vector<double>{0, 0, 0, 0, 0, 2});
}

TEST_CASE("generation is a pure function of the seed") {
    const auto sc = mean_shift(4, 1.0, 0.3, 20, 5);
    const auto m = sc.draw(9);
    const auto a = generate_episode(m, 200, 42);
    const auto b = generate_episode(m, 200, 42);
    const auto c = generate_episode(m, 200, 43);
    CHECK(a.streams == b.streams);
    CHECK(a.streams != c.streams);

    EpisodeStream stream(m, 200, 42);
    for (std::size_t j = 0; j < 200; ++j) {
        const auto f = stream.next();
        REQUIRE(f);
        CHECK(f->t == static_cast<Tick>(j + 1));
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(f->values[i] == a.streams[i][j]);
        }
    }
    CHECK_FALSE(stream.next());
}

TEST_CASE("NormalRng moments and integer range") {
    NormalRng rng(5);
    const int n = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (int j = 0; j < n; ++j) {
        const double x = rng.normal();
        sum += x;
        sum2 += x * x;
    }
    CHECK(std::abs(sum / n) < 4.0 / std::sqrt(double(n)));
    CHECK(std::abs(sum2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));

    std::vector<int> counts(5, 0);
    for (int j = 0; j < 50000; ++j) {
        const auto v = rng.integer(-2, 2);
        REQUIRE(v >= -2);
        REQUIRE(v <= 2);
        ++counts[static_cast<std::size_t>(v + 2)];
    }
    for (int c : counts) {
        CHECK(std::abs(c - 10000) < 500);
    }
    CHECK(mix_seed(1, 0) != mix_seed(1, 1));
    CHECK(mix_seed(1, 7) == mix_seed(1, 7));
}

TEST_CASE("random onsets respect the delay bound") {
    const auto sc = mean_shift(10, 1.0, 0.1, 100, 20);
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto m = sc.draw(s);
        CHECK(m.change_point() == 100);
        for (auto onset : m.onsets) {
            CHECK(onset >= 100);
            CHECK(onset <= 120);
        }
        CHECK(m.alpha == std::vector<double>(10, 0.1));
    }
    // the mean-shift model: x ~ N(mu, sigma2) after each sensor's onset
    auto noiseless = mean_shift(3, 0.0, 0.7, 5, 0).draw(1);
    const auto table = generate_episode(noiseless, 8, 1);
    CHECK(table.streams[2] == std::vector<double>{0, 0, 0, 0, 0, 0.7, 0.7, 0.7});
}

TEST_CASE("ARL and EDD degenerate thresholds") {
    MonteCarloOptions opts;
    opts.trials = 20;
    opts.horizon = 100;
    opts.seed = 3;
    SUBCASE("b = -1 alarms immediately") {
        const auto est = estimate_arl(one_shot_factory(0.5, 1.0), pure_noise(3, 1.0), -1.0, opts);
        CHECK(est.mean == 1.0);
        CHECK(est.se == 0.0);
        CHECK_FALSE(est.unreliable);
    }
    SUBCASE("huge b with a short horizon is censored") {
        const auto est = estimate_arl(one_shot_factory(0.5, 1.0), pure_noise(3, 1.0), 1e9, opts);
        CHECK(est.censored_frac == 1.0);
        CHECK(est.unreliable);
        CHECK(est.mean == 100.0);
    }
    SUBCASE("deterministic +1 increments") {
        // x = 1 after the change at tick 0; (mu / sigma2)(x - mu / 2) = 1.
        Scenario sc;
        sc.model.k = 2;
        sc.model.sigma2 = 0.0;
        sc.model.alpha = {1, 1};
        sc.model.onsets = {0, 0};
        const auto est = estimate_edd(one_shot_factory(1.0, 0.5), sc, 5.0, opts);
        CHECK(est.mean == 5.0);
        CHECK(est.false_alarms == 0);
        CHECK(est.trials_used == 20);
    }
}

TEST_CASE("stronger shifts are detected sooner") {
    MonteCarloOptions opts;
    opts.trials = 200;
    opts.horizon = 5000;
    opts.seed = 8;
    const auto f = one_shot_factory(0.25, 1.0);
    const auto strong = estimate_edd(f, mean_shift(5, 1.0, 0.25, 0, 0), 5.0, opts);
    const auto weak = estimate_edd(f, mean_shift(5, 1.0, 0.1, 0, 0), 5.0, opts);
    CHECK(strong.mean < weak.mean);
}

TEST_CASE("trial logs replay against the kept trajectories") {
    MonteCarloOptions opts;
    opts.trials = 30;
    opts.horizon = 400;
    opts.seed = 12;
    opts.keep_trajectories = true;
    const std::vector<double> grid{0.5, 2.0, 5.0, 12.0};
    const auto logs = run_trials(subspace_factory(detect::DetectorKind::Subspace, 8, 0, 1.3),
                                 mean_shift(6, 1.0, 0.5, 150, 0), grid, opts);
    REQUIRE(logs.size() == 30);
    for (const auto& log : logs) {
        CHECK(log.lookahead == 8);
        for (std::size_t j = 0; j < grid.size(); ++j) {
            std::optional<Tick> expect;
            for (const auto& p : log.trajectory) {
                if (p.S >= grid[j]) {
                    expect = p.t + 8;
                    break;
                }
            }
            CHECK(log.reported[j] == expect);
            if (j > 0 && log.reported[j] && log.reported[j - 1]) {
                CHECK(*log.reported[j] >= *log.reported[j - 1]);
            }
        }
    }
}

TEST_CASE("Monte Carlo results do not depend on the thread count") {
    const std::vector<double> grid{1.0, 4.0};
    MonteCarloOptions opts;
    opts.trials = 40;
    opts.horizon = 300;
    opts.seed = 77;
    opts.threads = 1;
    const auto f = subspace_factory(detect::DetectorKind::AsyncSubspace, 10, 2, 1.5);
    const auto sc = mean_shift(4, 1.0, 0.4, 100, 2);
    const auto a = run_trials(f, sc, grid, opts);
    opts.threads = 4;
    const auto b = run_trials(f, sc, grid, opts);
    REQUIRE(a.size() == b.size());
    for (std::size_t n = 0; n < a.size(); ++n) {
        CHECK(a[n].reported == b[n].reported);
        CHECK(a[n].change_point == b[n].change_point);
    }
}

TEST_CASE("operating curve") {
    const std::vector<double> grid{1.0, 3.0, 6.0, 10.0};
    CurveOptions opts;
    opts.arl.trials = 60;
    opts.arl.horizon = 3000;
    opts.arl.seed = 1;
    opts.edd = opts.arl;
    opts.edd.seed = 2;
    const auto f = one_shot_factory(0.5, 1.0);
    const auto curve = operating_curve(f, "oneshot", pure_noise(4, 1.0), mean_shift(4, 1.0, 0.5, 0, 0),
                                       grid, opts);
    REQUIRE(curve.size() == 4);
    for (std::size_t j = 1; j < curve.size(); ++j) {
        CHECK(curve[j].arl >= curve[j - 1].arl);
        CHECK(curve[j].edd >= curve[j - 1].edd);
    }
    std::ostringstream out;
    write_curve_csv(out, curve);
    CHECK(out.str().rfind("detector,b,arl,arl_se,edd,edd_se,censored_frac\noneshot,1,", 0) == 0);

    CHECK_THROWS_AS(operating_curve(f, "x", pure_noise(4, 1.0), mean_shift(4, 1.0, 0.5, 0, 0),
                                    std::vector<double>{}, opts),
                    ValidationError);
    CHECK_THROWS_AS(operating_curve(f, "x", pure_noise(4, 1.0), mean_shift(4, 1.0, 0.5, 0, 0),
                                    std::vector<double>{2.0, 1.0}, opts),
                    ValidationError);
}

TEST_CASE("EDD interpolation at a matched ARL") {
    std::vector<CurvePoint> curve(3);
    curve[0].arl = 100;
    curve[0].edd = 10;
    curve[1].arl = 1000;
    curve[1].edd = 20;
    curve[2].arl = 10000;
    curve[2].edd = 40;
    CHECK(*edd_at_arl(curve, 1000) == doctest::Approx(20));
    CHECK(*edd_at_arl(curve, std::sqrt(1000.0 * 10000.0)) == doctest::Approx(30));
    CHECK_FALSE(edd_at_arl(curve, 50));
    CHECK_FALSE(edd_at_arl(curve, 20000));
}

TEST_CASE("async detector calibrated to a target ARL") {
    // Calibrate b on one set of seeds, check the ARL on a fresh set.
    const auto f = subspace_factory(detect::DetectorKind::AsyncSubspace, 10, 2, 1.5);
    const auto noise = pure_noise(3, 1.0);
    std::vector<double> grid;
    for (double b = 10.0; b <= 24.0; b += 1.0) {
        grid.push_back(b);
    }
    MonteCarloOptions opts;
    opts.trials = 400;
    opts.horizon = 20000;
    opts.seed = 100;
    const auto sweep = estimate_arl(f, noise, grid, opts);
    const double target = 300.0;
    std::optional<double> b_star;
    for (std::size_t j = 1; j < sweep.size(); ++j) {
        if (sweep[j - 1].mean <= target && sweep[j].mean >= target) {
            const double x0 = std::log(sweep[j - 1].mean), x1 = std::log(sweep[j].mean);
            const double frac = (std::log(target) - x0) / (x1 - x0);
            b_star = grid[j - 1] + frac * (grid[j] - grid[j - 1]);
            break;
        }
    }
    REQUIRE(b_star);
    opts.seed = 200;
    const auto check = estimate_arl(f, noise, *b_star, opts);
    CHECK_FALSE(check.unreliable);
    CHECK(std::abs(check.mean - target) <= 0.2 * target);
}

TEST_CASE("drift choice for the comparison preset") {
    ComparisonPreset p;
    p.mu = 0.25;
    CHECK(p.rho() == doctest::Approx(3.125));
    CHECK_FALSE(detect::drift_bounds(1.0, p.rho(), p.k, p.w).valid);
    const auto choice = choose_drift(p, detect::DetectorKind::Subspace, 3000, 5);
    CHECK_FALSE(choice.from_bounds);
    CHECK(choice.prechange_mean < choice.d);
    CHECK(choice.d < choice.postchange_mean);
    CHECK(choice.d == doctest::Approx(0.5 * (choice.prechange_mean + choice.postchange_mean)));

    ComparisonPreset q;
    q.k = 3;
    q.mu = 1.0;
    const auto wide = choose_drift(q, detect::DetectorKind::Subspace, 100, 5);
    CHECK(wide.from_bounds);
    CHECK(wide.d == doctest::Approx(detect::drift_bounds(1.0, 3.0, 3, 20).midpoint()));
}
