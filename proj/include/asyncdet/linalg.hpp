#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "asyncdet/core.hpp"

namespace asyncdet::linalg {

/// Unnormalized sample covariance sum_j x_j x_j^T over a window of frames.
/// Stored dense row-major; always exactly symmetric.
struct CovarianceWindow {
    std::size_t k = 0;
    std::size_t w = 0;
    std::vector<double> matrix;

    double operator()(std::size_t i, std::size_t j) const { return matrix[i * k + j]; }
    double& operator()(std::size_t i, std::size_t j) { return matrix[i * k + j]; }

    double frobenius_norm() const;
    double trace() const;
};

CovarianceWindow sample_covariance(std::span<const MultiSensorFrame> frames);

struct PowerIterationOptions {
    double tol = 1e-10;
    // Defaults to ceil(10 k ln(1/tol)).
    std::optional<int> max_iter;
    // Estimate the second Ritz value after convergence to flag a degenerate
    // spectral gap. Costs roughly one more iteration run.
    bool check_gap = true;
    // If max_iter runs out, restart once from the iterate multiplied by
    // Sigma^(2^m) (repeated squaring of the dense matrix), which separates
    // nearly tied leading eigenvalues that plain iteration resolves slowly.
    bool accelerate = false;
    // Start vector; the fixed all-ones start when empty or of the wrong size.
    std::vector<double> start;
};

int default_max_iter(std::size_t k, double tol);

struct SingularVector {
    std::vector<double> u;      // unit norm, largest-magnitude entry positive
    double value = 0.0;         // Rayleigh quotient u^T Sigma u
    double residual = 0.0;      // |Sigma u - value u|
    double scale = 0.0;         // |Sigma|_F
    int iterations = 0;
    bool accelerated = false;
    bool gap_degenerate = false;
    std::optional<double> second_value;  // set when check_gap ran
};

// Leading eigenvector of a symmetric nonnegative-definite matrix by power
// iteration from a fixed start vector. Throws DegenerateInputError for a
// zero matrix and NonConvergenceError (carrying the residual) when the
// residual bound |Sigma u - (u^T Sigma u) u| <= tol |Sigma|_F is not met.
SingularVector top_singular_vector(const CovarianceWindow& cov,
                                   const PowerIterationOptions& options = {});

// Same result as top_singular_vector(sample_covariance(frames)) up to
// rounding. When the window is shorter than k the iteration runs on the
// w x w Gram matrix X X^T and maps back through X^T; the residual bound is
// still checked against Sigma.
SingularVector top_singular_vector(std::span<const MultiSensorFrame> frames,
                                   const PowerIterationOptions& options = {});

// Flip sign so the largest-magnitude entry (lowest index on ties) is positive.
void canonicalize_sign(std::span<double> v);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);

}  // namespace asyncdet::linalg
