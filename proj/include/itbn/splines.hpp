#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "itbn/errors.hpp"

namespace itbn {

// Penalized spline in the truncated power basis:
//   beta(u) = sum_{j=0}^{d} c_j u^j + sum_{k=1}^{kappa} c_{d+k} (u - knot_k)_+^d
struct SplineSpec {
    int degree = 0;
    std::vector<double> knots;
    Eigen::VectorXd coefficients; // length degree + knots.size() + 1

    int basis_size() const { return degree + static_cast<int>(knots.size()) + 1; }

    void check() const {
        if (degree < 0) throw_usage("spline degree must be nonnegative");
        for (std::size_t i = 1; i < knots.size(); ++i)
            if (!(knots[i] > knots[i - 1]))
                throw_data("spline knots must be strictly increasing");
        if (coefficients.size() != basis_size())
            throw_data("spline coefficient length " + std::to_string(coefficients.size()) +
                       " does not match basis size " + std::to_string(basis_size()));
    }

    static SplineSpec constant(double value) {
        SplineSpec s;
        s.coefficients = Eigen::VectorXd::Constant(1, value);
        return s;
    }
};

// (u - knot)_+^d with the boundary u = knot on the zero branch. The zero
// branch is exactly 0. Degree 0 steps to 1 past the knot.
inline double truncated_power(double u, double knot, int degree) {
    if (degree < 0) throw_usage("spline degree must be nonnegative");
    if (u <= knot) return 0.0;
    if (degree == 0) return 1.0;
    double base = u - knot;
    double result = base;
    for (int j = 1; j < degree; ++j) result *= base;
    return result;
}

// Basis vector [1, u, ..., u^d, (u - knot_1)_+^d, ..., (u - knot_k)_+^d].
inline Eigen::RowVectorXd design_row(int degree, std::span<const double> knots, double u) {
    if (degree < 0) throw_usage("spline degree must be nonnegative");
    Eigen::RowVectorXd row(degree + static_cast<int>(knots.size()) + 1);
    double power = 1.0;
    row(0) = 1.0;
    for (int j = 1; j <= degree; ++j) {
        power *= u;
        row(j) = power;
    }
    for (std::size_t k = 0; k < knots.size(); ++k)
        row(degree + 1 + static_cast<int>(k)) = truncated_power(u, knots[k], degree);
    return row;
}

// Ordered accumulation; exactly the dot product of design_row with the
// coefficients.
inline double eval_coefficient(const SplineSpec& spec, double u) {
    spec.check();
    const Eigen::RowVectorXd row = design_row(spec.degree, spec.knots, u);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < row.size(); ++i) sum += row(i) * spec.coefficients(i);
    return sum;
}

// Knots at the k/(count+1)-th quantiles of the samples, using the
// linear-interpolation convention: quantile q sits at position 1 + q(N-1) of
// the sorted sample (1-based).
inline std::vector<double> choose_knots(std::vector<double> samples, int count) {
    if (count < 0) throw_usage("knot count must be nonnegative");
    if (count == 0) return {};
    if (samples.size() < 2) throw_data("need at least 2 samples to place knots");
    std::sort(samples.begin(), samples.end());
    std::size_t distinct = 1;
    for (std::size_t i = 1; i < samples.size(); ++i)
        if (samples[i] != samples[i - 1]) ++distinct;
    if (static_cast<std::size_t>(count) >= distinct)
        throw_data("degenerate knots: requested " + std::to_string(count) +
                   " knots from " + std::to_string(distinct) +
                   " distinct samples; use fewer knots");
    const std::size_t n = samples.size();
    std::vector<double> knots(static_cast<std::size_t>(count));
    for (int k = 1; k <= count; ++k) {
        const double q = static_cast<double>(k) / (count + 1);
        const double pos = q * static_cast<double>(n - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const double frac = pos - static_cast<double>(lo);
        const std::size_t hi = std::min(lo + 1, n - 1);
        knots[static_cast<std::size_t>(k - 1)] =
            samples[lo] + frac * (samples[hi] - samples[lo]);
    }
    for (std::size_t i = 1; i < knots.size(); ++i)
        if (!(knots[i] > knots[i - 1]))
            throw_data("degenerate knots (duplicate quantiles); use fewer knots");
    return knots;
}

// Ridge penalty on the knot coefficients only: diag(0,...,0, lambda,...,lambda).
inline Eigen::MatrixXd penalty_matrix(int degree, int knot_count, double lambda) {
    if (degree < 0 || knot_count < 0) throw_usage("invalid penalty dimensions");
    if (lambda < 0.0) throw_usage("penalty weight must be nonnegative");
    const int size = degree + knot_count + 1;
    Eigen::MatrixXd penalty = Eigen::MatrixXd::Zero(size, size);
    for (int k = 0; k < knot_count; ++k) penalty(degree + 1 + k, degree + 1 + k) = lambda;
    return penalty;
}

} // namespace itbn
