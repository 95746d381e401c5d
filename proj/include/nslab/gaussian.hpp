#pragma once

#include <vector>

#include "nslab/rng.hpp"

namespace nslab {

// Dimension n and correlation rho of the pair (X,Y) with E[X_i Y_j] = rho 1_{i=j}.
struct CorrelatedGaussianModel {
    int n = 1;
    double rho = 0.0;

    void validate() const;
};

struct QuadratureRule {
    enum class Kind { GaussHermiteProbabilist, TruncatedTrapezoid };
    std::vector<double> nodes;
    std::vector<double> weights;
    Kind kind = Kind::GaussHermiteProbabilist;
    double truncation_radius = 0.0;
};

double std_normal_pdf(double z);

// Phi(z), absolute error below 1e-14.
double std_normal_cdf(double z);

// Inverse of Phi on (0,1).
double std_normal_quantile(double p);

// P(X <= h, Y <= k) for a standard bivariate normal with correlation rho.
// h, k may be +-infinity sentinels. Absolute error <= 1e-10.
double bivariate_normal_cdf(double h, double k, double rho);

// Probabilists' Gauss-Hermite rule: exact for polynomials up to degree
// 2*order-1 against the standard Gaussian weight. Supported up to order 200.
QuadratureRule gauss_hermite_rule(int order);

// Uniform nodes on [-radius, radius] with Gaussian-density trapezoid weights.
QuadratureRule trapezoid_rule(double radius, int points);

// X standard Gaussian, Y = rho*X + sqrt(1-rho^2)*Z.
void sample_correlated_pair(const CorrelatedGaussianModel& model, Rng& rng,
                            std::vector<double>& x, std::vector<double>& y);

} // namespace nslab
