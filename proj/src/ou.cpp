#include "nslab/ou.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "nslab/quad.hpp"

namespace nslab {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;
constexpr double kParallelTol = 1e-10;

void check_rho_open(double rho) {
    if (!(rho > -1.0 && rho < 1.0)) throw std::domain_error("rho must lie in (-1,1)");
}

// gamma_2 of the intersection of half-planes, outer quadrature over the
// first constraint's normal coordinate.
double gamma2_halfplanes(const std::vector<ConeCell2D::HalfPlane>& hp) {
    if (hp.empty()) return 1.0;
    if (hp.size() == 1) return std_normal_cdf(hp[0].b);

    const Vec2 e{-hp[0].u[0], -hp[0].u[1]};
    const Vec2 f = perp2(e);
    double s_lo = -hp[0].b;
    double s_hi = std::numeric_limits<double>::infinity();

    struct Affine {
        double slope, icept;
    };
    std::vector<Affine> uppers, lowers;
    for (std::size_t m = 1; m < hp.size(); ++m) {
        const double ce = dot2(hp[m].u, e);
        const double cf = dot2(hp[m].u, f);
        const double b = hp[m].b;
        if (std::abs(cf) < 1e-13) {
            if (ce > 1e-13)
                s_hi = std::min(s_hi, b / ce);
            else if (ce < -1e-13)
                s_lo = std::max(s_lo, b / ce);
            else if (b < 0.0)
                return 0.0;
        } else if (cf > 0.0) {
            uppers.push_back({-ce / cf, b / cf});
        } else {
            lowers.push_back({-ce / cf, b / cf});
        }
    }

    const double a = std::max(s_lo, -10.0);
    const double bnd = std::min(s_hi, 10.0);
    if (!(a < bnd)) return 0.0;

    auto integrand = [&](double s) {
        double up = 40.0, lo = -40.0;
        for (const Affine& u : uppers) up = std::min(up, u.slope * s + u.icept);
        for (const Affine& l : lowers) lo = std::max(lo, l.slope * s + l.icept);
        if (up <= lo) return 0.0;
        return std_normal_pdf(s) * (std_normal_cdf(up) - std_normal_cdf(lo));
    };
    return integrate_gk(integrand, a, bnd, 2e-11);
}

} // namespace

ConeCell2D ConeCell2D::from_flat_cell(const FlatPartition& p, int i) {
    p.validate();
    if (p.n != 2) throw std::invalid_argument("ConeCell2D: partition must have n=2");
    if (i < 0 || i >= p.k) throw std::invalid_argument("ConeCell2D: cell index out of range");
    ConeCell2D cell;
    for (int j = 0; j < p.k; ++j) {
        if (j == i) continue;
        Vec2 u{p.directions[j][0] - p.directions[i][0], p.directions[j][1] - p.directions[i][1]};
        const double nn = std::sqrt(dot2(u, u));
        u = {u[0] / nn, u[1] / nn};
        const double b = p.shift[0] * u[0] + p.shift[1] * u[1];
        cell.constraints.push_back({u, b});
    }
    cell.validate();
    return cell;
}

void ConeCell2D::validate() const {
    if (constraints.size() > 3)
        throw std::invalid_argument("ConeCell2D: at most 3 constraints supported");
    for (const HalfPlane& h : constraints) {
        const double nn = std::sqrt(dot2(h.u, h.u));
        if (std::abs(nn - 1.0) > 1e-12)
            throw std::invalid_argument("ConeCell2D: constraint normals must be unit");
    }
    cached_measure = gamma2_halfplanes(constraints);
    if (cached_measure < 1e-12)
        throw std::domain_error("ConeCell2D: cell has empty interior");
}

double gamma2_measure(const ConeCell2D& cell) {
    return gamma2_halfplanes(cell.constraints);
}

double t_rho_halfspace(double a_offset, const Vec2& u, double rho, const Vec2& x) {
    check_rho_open(rho);
    const double sigma = std::sqrt(1.0 - rho * rho);
    return std_normal_cdf((a_offset - rho * dot2(x, u)) / sigma);
}

double t_rho_cone2d(const ConeCell2D& cell, double rho, const Vec2& x) {
    check_rho_open(rho);
    if (cell.cached_measure < 0.0) cell.validate();
    if (!std::isfinite(x[0]) || !std::isfinite(x[1]))
        throw std::domain_error("t_rho_cone2d: non-finite point");
    if (rho == 0.0) return cell.cached_measure; // T_0 f = integral of f
    const double sigma = std::sqrt(1.0 - rho * rho);
    std::vector<ConeCell2D::HalfPlane> shifted = cell.constraints;
    for (auto& h : shifted) h.b = (h.b - rho * dot2(x, h.u)) / sigma;
    return gamma2_halfplanes(shifted);
}

LineRestriction make_line_restriction(const FlatPartition& p, int i, int j) {
    auto f = facet_frame(p, i, j);
    if (!f) throw std::domain_error("make_line_restriction: cells share no facet");
    LineRestriction lr;
    lr.c = f->c;
    lr.N = f->N;
    lr.w = {f->lambda * f->dir[0], f->lambda * f->dir[1]};
    lr.i = i;
    lr.j = j;
    lr.t_min = f->t_min();
    return lr;
}

double line_difference(const FlatPartition& p, const LineRestriction& lr, double rho, double t) {
    if (p.n != 2) throw std::invalid_argument("line_difference: n=2 required");
    check_rho_open(rho);
    if (rho == 0.0) throw std::domain_error("line_difference: rho must be nonzero");
    const ConeCell2D ci = ConeCell2D::from_flat_cell(p, lr.i);
    const ConeCell2D cj = ConeCell2D::from_flat_cell(p, lr.j);
    const Vec2 x{lr.c * lr.N[0] + t * lr.w[0], lr.c * lr.N[1] + t * lr.w[1]};
    return t_rho_cone2d(ci, rho, x) - t_rho_cone2d(cj, rho, x);
}

double limit_at_infinity(double c, double rho) {
    if (!(rho > 0.0 && rho < 1.0))
        throw std::domain_error("limit_at_infinity: rho must lie in (0,1) for this orientation");
    if (c == 0.0) return 0.0;
    const double arg = std::abs(c) * (1.0 - rho) / std::sqrt(1.0 - rho * rho);
    const double sgn = c > 0.0 ? 1.0 : -1.0;
    return 2.0 * sgn * (std_normal_cdf(arg) - 0.5);
}

namespace {

// Reduction of T_rho 1_cell(cN + zw) to an outer real integral with an inner
// Phi whose argument is affine in (s, z).
struct ComplexLineSetup {
    enum class Kind { Constant, InnerOnly, OuterInner } kind;
    double const_value = 0.0;
    double s_lo = 0.0, s_hi = 10.0;
    // inner Phi lower limit ell(s,z) = A*s + B + C*z (region is r >= ell)
    double A = 0.0, B = 0.0, C = 0.0;
    // InnerOnly: value is Phi(beta - D*z)
    double beta = 0.0, D = 0.0;
};

ComplexLineSetup make_setup(const ConeCell2D& cell, double rho, const LineRestriction& lr) {
    check_rho_open(rho);
    if (rho == 0.0) throw std::domain_error("complex_line_eval: rho must be nonzero");
    if (cell.cached_measure < 0.0) cell.validate();
    const double sigma = std::sqrt(1.0 - rho * rho);
    const double wn = std::sqrt(dot2(lr.w, lr.w));

    std::vector<std::size_t> parallel, oblique;
    for (std::size_t m = 0; m < cell.constraints.size(); ++m) {
        if (std::abs(dot2(lr.w, cell.constraints[m].u)) <= kParallelTol * wn)
            parallel.push_back(m);
        else
            oblique.push_back(m);
    }

    auto beta_of = [&](std::size_t m) {
        const auto& h = cell.constraints[m];
        return (h.b - rho * lr.c * dot2(lr.N, h.u)) / sigma;
    };
    auto slope_of = [&](std::size_t m) {
        return rho * dot2(lr.w, cell.constraints[m].u) / sigma;
    };

    ComplexLineSetup setup;
    if (oblique.empty()) {
        std::vector<ConeCell2D::HalfPlane> shifted;
        for (std::size_t m : parallel)
            shifted.push_back({cell.constraints[m].u, beta_of(m)});
        setup.kind = ComplexLineSetup::Kind::Constant;
        setup.const_value = gamma2_halfplanes(shifted);
        return setup;
    }
    if (oblique.size() > 1)
        throw std::domain_error(
            "complex_line_eval: line must be parallel to all but one cell edge");

    const std::size_t m1 = oblique.front();
    if (parallel.empty()) {
        setup.kind = ComplexLineSetup::Kind::InnerOnly;
        setup.beta = beta_of(m1);
        setup.D = slope_of(m1);
        return setup;
    }

    // Outer axis from the first parallel constraint.
    const std::size_t m0 = parallel.front();
    const Vec2 e{-cell.constraints[m0].u[0], -cell.constraints[m0].u[1]};
    Vec2 f = perp2(e);
    double s_lo = -beta_of(m0);
    double s_hi = std::numeric_limits<double>::infinity();
    for (std::size_t idx = 1; idx < parallel.size(); ++idx) {
        const std::size_t m = parallel[idx];
        const double ce = dot2(cell.constraints[m].u, e);
        const double bb = beta_of(m);
        if (ce > 0.0)
            s_hi = std::min(s_hi, bb / ce);
        else if (ce < 0.0)
            s_lo = std::max(s_lo, bb / ce);
    }
    double cf = dot2(cell.constraints[m1].u, f);
    if (cf > 0.0) {
        f = {-f[0], -f[1]};
        cf = -cf;
    }
    const double ce = dot2(cell.constraints[m1].u, e);
    setup.kind = ComplexLineSetup::Kind::OuterInner;
    setup.s_lo = std::max(s_lo, -10.0);
    setup.s_hi = std::min(s_hi, 10.0);
    setup.A = -ce / cf;
    setup.B = beta_of(m1) / cf;
    setup.C = -slope_of(m1) / cf; // ell = (beta - D z - ce s)/cf
    return setup;
}

// Integral of the standard normal density from 0 to zeta along the two-leg
// contour: real axis to Re(zeta), then vertically.
std::complex<double> contour_gauss_integral(std::complex<double> zeta) {
    const double a = zeta.real();
    const double b = zeta.imag();
    std::complex<double> g(std_normal_cdf(a) - 0.5, 0.0);
    if (std::abs(b) < 1e-300) return g;
    if (std::abs(b) > 8.0)
        throw std::domain_error("complex_line_eval: imaginary leg outside accuracy window");
    const int panels = std::max(1, static_cast<int>(std::ceil(std::abs(b) / 0.5)));
    const GLRule& rule = gauss_legendre(24);
    const std::complex<double> iunit(0.0, 1.0);
    std::complex<double> acc(0.0, 0.0);
    for (int p = 0; p < panels; ++p) {
        const double u0 = b * p / panels;
        const double u1 = b * (p + 1) / panels;
        const double mid = 0.5 * (u0 + u1);
        const double hw = 0.5 * (u1 - u0);
        for (int q = 0; q < 24; ++q) {
            const double u = mid + hw * rule.nodes[q];
            const std::complex<double> arg(a, u);
            acc += rule.weights[q] * hw * std::exp(-0.5 * arg * arg);
        }
    }
    return g + iunit * kInvSqrt2Pi * acc;
}

std::complex<double> phi_inner(std::complex<double> ell) {
    // P(r >= ell) = 1/2 - integral_0^ell
    return std::complex<double>(0.5, 0.0) - contour_gauss_integral(ell);
}

} // namespace

std::complex<double> complex_line_eval(const ConeCell2D& cell, double rho,
                                       const LineRestriction& lr, std::complex<double> z) {
    if (std::abs(z.imag()) > 3.0)
        throw std::domain_error("complex_line_eval: |Im z| <= 3 required");
    const ComplexLineSetup setup = make_setup(cell, rho, lr);
    switch (setup.kind) {
        case ComplexLineSetup::Kind::Constant:
            return {setup.const_value, 0.0};
        case ComplexLineSetup::Kind::InnerOnly: {
            const std::complex<double> arg = setup.beta - setup.D * z;
            return std::complex<double>(0.5, 0.0) + contour_gauss_integral(arg);
        }
        case ComplexLineSetup::Kind::OuterInner:
            break;
    }
    const double lo = setup.s_lo;
    const double hi = setup.s_hi;
    if (!(lo < hi)) return {0.0, 0.0};
    const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / 0.5)));
    const GLRule& rule = gauss_legendre(20);
    std::complex<double> acc(0.0, 0.0);
    for (int p = 0; p < panels; ++p) {
        const double a = lo + (hi - lo) * p / panels;
        const double b = lo + (hi - lo) * (p + 1) / panels;
        const double mid = 0.5 * (a + b);
        const double hw = 0.5 * (b - a);
        for (int q = 0; q < 20; ++q) {
            const double s = mid + hw * rule.nodes[q];
            const std::complex<double> ell = setup.A * s + setup.B + setup.C * z;
            acc += rule.weights[q] * hw * std_normal_pdf(s) * phi_inner(ell);
        }
    }
    return acc;
}

double complex_growth_coefficient(const ConeCell2D& cell, double rho, const LineRestriction& lr) {
    const ComplexLineSetup setup = make_setup(cell, rho, lr);
    double coeff = 0.0;
    switch (setup.kind) {
        case ComplexLineSetup::Kind::Constant:
            coeff = 0.0;
            break;
        case ComplexLineSetup::Kind::InnerOnly:
            coeff = std::abs(setup.D);
            break;
        case ComplexLineSetup::Kind::OuterInner:
            coeff = std::abs(setup.C);
            break;
    }
    // The bound uses the same constant in the prefactor and the exponent, so
    // it must dominate both |C| and C^2.
    return std::max(coeff, coeff * coeff);
}

} // namespace nslab
