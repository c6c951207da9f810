#include "asyncdet/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "asyncdet/errors.hpp"

namespace asyncdet::linalg {
namespace {

std::vector<double> start_vector(std::size_t k) {
    std::vector<double> v(k, 1.0);
    v[0] += 1e-3;
    const double n = norm(v);
    for (double& x : v) {
        x /= n;
    }
    return v;
}

std::vector<double> initial_vector(std::size_t k, const PowerIterationOptions& options) {
    if (options.start.size() == k) {
        std::vector<double> v = options.start;
        const double n = norm(v);
        if (n > 0.0 && std::isfinite(n)) {
            for (double& x : v) {
                x /= n;
            }
            return v;
        }
    }
    return start_vector(k);
}

// Power iteration on a symmetric PSD operator given only through `apply`.
template <typename Apply>
SingularVector power_iterate(std::size_t k, Apply&& apply, double frobenius,
                             const PowerIterationOptions& options, std::vector<double> v) {
    if (k == 0) {
        throw DimensionMismatchError("empty matrix");
    }
    if (!(frobenius > 0.0)) {
        throw DegenerateInputError("zero matrix has no leading singular vector");
    }
    if (!(options.tol > 0.0)) {
        throw ValidationError("power iteration tolerance must be positive");
    }
    const int max_iter = options.max_iter.value_or(default_max_iter(k, options.tol));
    if (max_iter < 1) {
        throw ValidationError("max_iter must be at least 1");
    }
    const double bound = options.tol * frobenius;

    if (v.size() != k) {
        v = start_vector(k);
    }
    std::vector<double> y(k);
    double lambda = 0.0;
    double residual = 0.0;
    int iterations = 0;
    auto iterate = [&] {
        for (int it = 1; it <= max_iter; ++it) {
            ++iterations;
            apply(v, y);
            lambda = dot(v, y);
            residual = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                const double r = y[i] - lambda * v[i];
                residual += r * r;
            }
            residual = std::sqrt(residual);
            if (residual <= bound) {
                return true;
            }
            const double ny = norm(y);
            if (ny == 0.0) {
                throw NonConvergenceError("iterate fell into the null space", residual, iterations);
            }
            for (std::size_t i = 0; i < k; ++i) {
                v[i] = y[i] / ny;
            }
        }
        return false;
    };

    bool converged = iterate();
    bool accelerated = false;
    if (!converged && options.accelerate) {
        accelerated = true;
        // Dense P = Sigma / |Sigma|_F, then P <- P^2 / |P^2|_F until it settles.
        std::vector<double> p(k * k), e(k, 0.0), col(k);
        for (std::size_t j = 0; j < k; ++j) {
            e[j] = 1.0;
            apply(e, col);
            e[j] = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                p[i * k + j] = col[i];
            }
        }
        std::vector<double> q(k * k);
        for (int m = 0; m < 64; ++m) {
            for (std::size_t i = 0; i < k; ++i) {
                for (std::size_t j = 0; j < k; ++j) {
                    double acc = 0.0;
                    for (std::size_t l = 0; l < k; ++l) {
                        acc += p[i * k + l] * p[l * k + j];
                    }
                    q[i * k + j] = acc;
                }
            }
            const double nq = norm(q);
            double change = 0.0;
            for (std::size_t i = 0; i < k * k; ++i) {
                q[i] /= nq;
                change += (q[i] - p[i]) * (q[i] - p[i]);
            }
            p.swap(q);
            if (std::sqrt(change) <= 1e-15) {
                break;
            }
        }
        for (std::size_t i = 0; i < k; ++i) {
            y[i] = std::inner_product(p.begin() + i * k, p.begin() + (i + 1) * k, v.begin(), 0.0);
        }
        const double ny = norm(y);
        if (ny > 0.0) {
            for (std::size_t i = 0; i < k; ++i) {
                v[i] = y[i] / ny;
            }
        }
        converged = iterate();
    }
    if (!converged) {
        throw NonConvergenceError("power iteration did not converge in " +
                                      std::to_string(iterations) + " iterations (residual " +
                                      std::to_string(residual) + ")",
                                  residual, iterations);
    }

    SingularVector out;
    canonicalize_sign(v);
    out.u = std::move(v);
    out.value = lambda;
    out.residual = residual;
    out.scale = frobenius;
    out.iterations = iterations;
    out.accelerated = accelerated;

    if (options.check_gap && k > 1) {
        // Rayleigh quotient of the iteration restricted to u's complement.
        std::vector<double> q = start_vector(k);
        auto project = [&](std::vector<double>& x) {
            const double c = dot(x, out.u);
            for (std::size_t i = 0; i < k; ++i) {
                x[i] -= c * out.u[i];
            }
        };
        project(q);
        if (norm(q) < 1e-8) {
            const auto j = static_cast<std::size_t>(
                std::min_element(out.u.begin(), out.u.end(),
                                 [](double a, double b) { return std::abs(a) < std::abs(b); }) -
                out.u.begin());
            std::fill(q.begin(), q.end(), 0.0);
            q[j] = 1.0;
            project(q);
        }
        double mu = 0.0;
        for (int j = 0; j < max_iter; ++j) {
            const double nq = norm(q);
            if (nq == 0.0) {
                mu = 0.0;
                break;
            }
            for (double& x : q) {
                x /= nq;
            }
            apply(q, y);
            project(y);
            mu = dot(q, y);
            double r = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                r += (y[i] - mu * q[i]) * (y[i] - mu * q[i]);
            }
            if (std::sqrt(r) <= bound) {
                break;
            }
            q.swap(y);
        }
        out.second_value = mu;
        out.gap_degenerate = (lambda - mu) <= options.tol * frobenius;
    }
    return out;
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

void canonicalize_sign(std::span<double> v) {
    if (v.empty()) {
        return;
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (std::abs(v[i]) > std::abs(v[best])) {
            best = i;
        }
    }
    if (v[best] < 0.0) {
        for (double& x : v) {
            x = -x;
        }
    }
}

int default_max_iter(std::size_t k, double tol) {
    return static_cast<int>(std::ceil(10.0 * static_cast<double>(k) * std::log(1.0 / tol)));
}

double CovarianceWindow::frobenius_norm() const {
    return std::sqrt(std::inner_product(matrix.begin(), matrix.end(), matrix.begin(), 0.0));
}

double CovarianceWindow::trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        t += (*this)(i, i);
    }
    return t;
}

CovarianceWindow sample_covariance(std::span<const MultiSensorFrame> frames) {
    if (frames.empty()) {
        throw ValidationError("sample covariance of an empty window");
    }
    CovarianceWindow cov;
    cov.k = frames.front().size();
    cov.w = frames.size();
    if (cov.k == 0) {
        throw DimensionMismatchError("frames have no readings");
    }
    cov.matrix.assign(cov.k * cov.k, 0.0);
    for (const auto& f : frames) {
        if (f.size() != cov.k) {
            throw DimensionMismatchError("frame at tick " + std::to_string(f.t) + " has " +
                                         std::to_string(f.size()) + " values, expected " +
                                         std::to_string(cov.k));
        }
        for (std::size_t i = 0; i < cov.k; ++i) {
            const double xi = f.values[i];
            for (std::size_t j = i; j < cov.k; ++j) {
                cov(i, j) += xi * f.values[j];
            }
        }
    }
    for (std::size_t i = 0; i < cov.k; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            cov(i, j) = cov(j, i);
        }
    }
    return cov;
}

SingularVector top_singular_vector(const CovarianceWindow& cov, const PowerIterationOptions& options) {
    if (cov.matrix.size() != cov.k * cov.k) {
        throw DimensionMismatchError("covariance storage does not match its dimension");
    }
    const std::size_t k = cov.k;
    auto apply = [&](std::span<const double> v, std::span<double> y) {
        for (std::size_t i = 0; i < k; ++i) {
            const double* row = cov.matrix.data() + i * k;
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                acc += row[j] * v[j];
            }
            y[i] = acc;
        }
    };
    return power_iterate(k, apply, cov.frobenius_norm(), options, initial_vector(k, options));
}

SingularVector top_singular_vector(std::span<const MultiSensorFrame> frames,
                                   const PowerIterationOptions& options) {
    if (frames.empty()) {
        throw ValidationError("subspace estimate from an empty window");
    }
    const std::size_t k = frames.front().size();
    const std::size_t w = frames.size();
    if (w >= k) {
        return top_singular_vector(sample_covariance(frames), options);
    }

    std::vector<double> x(w * k);
    for (std::size_t a = 0; a < w; ++a) {
        if (frames[a].size() != k) {
            throw DimensionMismatchError("frame at tick " + std::to_string(frames[a].t) +
                                         " has the wrong dimension");
        }
        std::copy(frames[a].values.begin(), frames[a].values.end(), x.begin() + a * k);
    }
    auto row = [&](std::size_t a) { return std::span<const double>(x.data() + a * k, k); };

    // G = X X^T has the nonzero spectrum of Sigma = X^T X, and iterating on G
    // from X u0 yields the Sigma iterates X^T G^n X u0 at w x w cost.
    std::vector<double> gram(w * w);
    double frob2 = 0.0;
    for (std::size_t a = 0; a < w; ++a) {
        for (std::size_t b = a; b < w; ++b) {
            const double g = dot(row(a), row(b));
            gram[a * w + b] = g;
            gram[b * w + a] = g;
            frob2 += (a == b ? 1.0 : 2.0) * g * g;
        }
    }
    const double frobenius = std::sqrt(frob2);
    if (!(frobenius > 0.0)) {
        throw DegenerateInputError("zero matrix has no leading singular vector");
    }

    std::vector<double> xv(w);
    auto apply_sigma = [&](std::span<const double> v, std::span<double> y) {
        for (std::size_t a = 0; a < w; ++a) {
            xv[a] = dot(row(a), v);
        }
        std::fill(y.begin(), y.end(), 0.0);
        for (std::size_t a = 0; a < w; ++a) {
            const double* r = x.data() + a * k;
            for (std::size_t j = 0; j < k; ++j) {
                y[j] += r[j] * xv[a];
            }
        }
    };
    auto apply_gram = [&](std::span<const double> v, std::span<double> y) {
        for (std::size_t a = 0; a < w; ++a) {
            y[a] = std::inner_product(gram.begin() + a * w, gram.begin() + (a + 1) * w, v.begin(), 0.0);
        }
    };

    const std::vector<double> u0 = initial_vector(k, options);
    std::vector<double> g0(w);
    for (std::size_t a = 0; a < w; ++a) {
        g0[a] = dot(row(a), u0);
    }
    const double n0 = norm(g0);
    if (n0 == 0.0) {
        return power_iterate(k, apply_sigma, frobenius, options, u0);
    }
    for (double& v : g0) {
        v /= n0;
    }
    const SingularVector inner = power_iterate(w, apply_gram, frobenius, options, std::move(g0));

    std::vector<double> u(k, 0.0);
    for (std::size_t a = 0; a < w; ++a) {
        const double c = inner.u[a];
        for (std::size_t j = 0; j < k; ++j) {
            u[j] += c * x[a * k + j];
        }
    }
    const double nu = norm(u);
    for (double& v : u) {
        v /= nu;
    }
    std::vector<double> su(k);
    apply_sigma(u, su);
    const double lambda = dot(u, su);
    double residual = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        residual += (su[j] - lambda * u[j]) * (su[j] - lambda * u[j]);
    }
    residual = std::sqrt(residual);
    if (residual > options.tol * frobenius) {
        // Finish on Sigma itself; rarely needs more than a few steps.
        SingularVector out = power_iterate(k, apply_sigma, frobenius, options, std::move(u));
        out.iterations += inner.iterations;
        out.accelerated = out.accelerated || inner.accelerated;
        return out;
    }

    SingularVector out;
    canonicalize_sign(u);
    out.u = std::move(u);
    out.value = lambda;
    out.residual = residual;
    out.scale = frobenius;
    out.iterations = inner.iterations;
    out.accelerated = inner.accelerated;
    out.gap_degenerate = inner.gap_degenerate;
    out.second_value = inner.second_value;
    return out;
}

}  // namespace asyncdet::linalg
