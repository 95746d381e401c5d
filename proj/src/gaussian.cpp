#include "nslab/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "nslab/quad.hpp"

namespace nslab {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488016887242097;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

} // namespace

void CorrelatedGaussianModel::validate() const {
    if (n < 1) throw std::invalid_argument("CorrelatedGaussianModel: n must be >= 1");
    if (!(rho > -1.0 && rho < 1.0))
        throw std::domain_error("CorrelatedGaussianModel: rho must lie in (-1,1)");
}

double std_normal_pdf(double z) {
    return kInvSqrt2Pi * std::exp(-0.5 * z * z);
}

double std_normal_cdf(double z) {
    if (!std::isfinite(z)) {
        if (std::isnan(z)) throw std::domain_error("std_normal_cdf: non-finite input");
        return z > 0 ? 1.0 : 0.0;
    }
    return 0.5 * std::erfc(-z / kSqrt2);
}

double std_normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("std_normal_quantile: p must lie in (0,1)");
    // Acklam's rational approximation, then one Halley step against erfc.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    for (int it = 0; it < 2; ++it) {
        const double e = std_normal_cdf(x) - p;
        const double u = e / std_normal_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

double bivariate_normal_cdf(double h, double k, double rho) {
    if (std::isnan(h) || std::isnan(k))
        throw std::domain_error("bivariate_normal_cdf: NaN input");
    if (!(rho > -1.0 && rho < 1.0))
        throw std::domain_error("bivariate_normal_cdf: |rho| must be < 1");
    if (h == -std::numeric_limits<double>::infinity() ||
        k == -std::numeric_limits<double>::infinity())
        return 0.0;
    if (h == std::numeric_limits<double>::infinity()) return std_normal_cdf(k);
    if (k == std::numeric_limits<double>::infinity()) return std_normal_cdf(h);
    if (rho == 0.0) return std_normal_cdf(h) * std_normal_cdf(k);

    // Reduce the defining integral to one dimension and integrate adaptively.
    const double s = std::sqrt(1.0 - rho * rho);
    auto integrand = [&](double x) {
        return std_normal_pdf(x) * std_normal_cdf((k - rho * x) / s);
    };
    // Mass outside [-13,13] is below 1e-38.
    const double v = integrate_gk(integrand, -13.0, std::min(h, 13.0), 1e-13);
    return std::clamp(v, 0.0, 1.0);
}

namespace {

// Symmetric tridiagonal QL with implicit shifts, tracking the first row of
// the eigenvector matrix (Golub-Welsch weights).
void tridiag_eigen(std::vector<double>& d, std::vector<double>& e, std::vector<double>& z) {
    const int n = static_cast<int>(d.size());
    e.push_back(0.0);
    for (int l = 0; l < n; ++l) {
        int iter = 0;
        int m;
        do {
            for (m = l; m < n - 1; ++m) {
                const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
                if (std::abs(e[m]) <= 1e-16 * dd) break;
            }
            if (m != l) {
                if (iter++ == 60) throw std::runtime_error("tridiag_eigen: no convergence");
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::hypot(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
                double s = 1.0, c = 1.0, p = 0.0;
                for (int i = m - 1; i >= l; --i) {
                    double f = s * e[i];
                    const double bb = c * e[i];
                    r = std::hypot(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * bb;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - bb;
                    f = z[i + 1];
                    z[i + 1] = s * z[i] + c * f;
                    z[i] = c * z[i] - s * f;
                }
                if (r == 0.0 && m - 1 >= l) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }
}

} // namespace

QuadratureRule gauss_hermite_rule(int order) {
    if (order < 1) throw std::invalid_argument("gauss_hermite_rule: order must be >= 1");
    if (order > 200) throw std::invalid_argument("gauss_hermite_rule: order > 200 unsupported");
    std::vector<double> d(order, 0.0);
    std::vector<double> e(order - 1);
    for (int i = 1; i < order; ++i) e[i - 1] = std::sqrt(static_cast<double>(i));
    std::vector<double> z(order, 0.0);
    z[0] = 1.0;
    tridiag_eigen(d, e, z);

    std::vector<int> idx(order);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return d[a] < d[b]; });

    QuadratureRule rule;
    rule.kind = QuadratureRule::Kind::GaussHermiteProbabilist;
    rule.nodes.reserve(order);
    rule.weights.reserve(order);
    for (int i : idx) {
        rule.nodes.push_back(d[i]);
        rule.weights.push_back(z[i] * z[i]);
    }
    // Symmetrize: nodes come in +- pairs, the middle node (odd order) is 0.
    for (int i = 0, j = order - 1; i < j; ++i, --j) {
        const double m = 0.5 * (rule.nodes[j] - rule.nodes[i]);
        rule.nodes[i] = -m;
        rule.nodes[j] = m;
        const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
        rule.weights[i] = w;
        rule.weights[j] = w;
    }
    if (order % 2 == 1) rule.nodes[order / 2] = 0.0;
    return rule;
}

QuadratureRule trapezoid_rule(double radius, int points) {
    if (points < 2) throw std::invalid_argument("trapezoid_rule: need >= 2 points");
    if (!(radius > 0.0)) throw std::invalid_argument("trapezoid_rule: radius must be > 0");
    QuadratureRule rule;
    rule.kind = QuadratureRule::Kind::TruncatedTrapezoid;
    rule.truncation_radius = radius;
    const double h = 2.0 * radius / (points - 1);
    rule.nodes.resize(points);
    rule.weights.resize(points);
    for (int i = 0; i < points; ++i) {
        const double x = -radius + i * h;
        rule.nodes[i] = x;
        const double w = (i == 0 || i == points - 1) ? 0.5 * h : h;
        rule.weights[i] = w * std_normal_pdf(x);
    }
    return rule;
}

void sample_correlated_pair(const CorrelatedGaussianModel& model, Rng& rng,
                            std::vector<double>& x, std::vector<double>& y) {
    model.validate();
    x.resize(model.n);
    y.resize(model.n);
    const double s = std::sqrt(1.0 - model.rho * model.rho);
    for (int i = 0; i < model.n; ++i) {
        x[i] = rng.normal();
        y[i] = model.rho * x[i] + s * rng.normal();
    }
}

} // namespace nslab
