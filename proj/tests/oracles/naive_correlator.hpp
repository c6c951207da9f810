#pragma once

// Brute-force delay scan used to check sync::ml_delay. Works on absolute
// tick indices with explicit bounds checks instead of range arithmetic.

#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

struct ScanResult {
    int delay;
    std::vector<double> correlations;  // index z + tau_max
};

// x and s both start at tick `origin`; s is zero outside its samples.
inline ScanResult naive_delay_scan(const std::vector<double>& x, const std::vector<double>& s,
                                   std::int64_t origin, int tau_max) {
    ScanResult r{0, {}};
    for (int z = -tau_max; z <= tau_max; ++z) {
        double c = 0.0;
        for (std::int64_t j = origin; j < origin + static_cast<std::int64_t>(x.size()); ++j) {
            const std::int64_t idx = j - z - origin;
            const double sv = (idx >= 0 && idx < static_cast<std::int64_t>(s.size()))
                                  ? s[static_cast<std::size_t>(idx)]
                                  : 0.0;
            c += x[static_cast<std::size_t>(j - origin)] * sv;
        }
        r.correlations.push_back(c);
    }
    // Largest |c|; ties by smallest |z| then smallest z.
    double best = -1.0;
    for (int z = -tau_max; z <= tau_max; ++z) {
        const double a = std::abs(r.correlations[static_cast<std::size_t>(z + tau_max)]);
        const bool better = a > best ||
                            (a == best && (std::abs(z) < std::abs(r.delay) ||
                                           (std::abs(z) == std::abs(r.delay) && z < r.delay)));
        if (better) {
            best = a;
            r.delay = z;
        }
    }
    if (best == 0.0) {
        r.delay = 0;
    }
    return r;
}

}  // namespace oracle
