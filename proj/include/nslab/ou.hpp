#pragma once

#include <complex>
#include <optional>
#include <vector>

#include "nslab/partition.hpp"

namespace nslab {

// Intersection of up to three half-planes {<x,u> <= b} with unit normals.
struct ConeCell2D {
    struct HalfPlane {
        Vec2 u{1.0, 0.0};
        double b = 0.0;
    };
    std::vector<HalfPlane> constraints;
    mutable double cached_measure = -1.0;

    // Cell i of a 2D flat partition as an explicit half-plane intersection.
    static ConeCell2D from_flat_cell(const FlatPartition& p, int i);

    void validate() const; // throws on empty interior
};

// gamma_2 measure of the cell, absolute error ~1e-10.
double gamma2_measure(const ConeCell2D& cell);

// T_rho applied to the indicator of {<z,u> <= a}: Phi((a - rho<x,u>)/sqrt(1-rho^2)).
double t_rho_halfspace(double a_offset, const Vec2& u, double rho, const Vec2& x);

// T_rho 1_cell(x) by outer 1D quadrature of the inner Phi expression.
double t_rho_cone2d(const ConeCell2D& cell, double rho, const Vec2& x);

// Facet line {c*N + t*w} of Assumption-style geometry: A_i on the <x,N> <= c side.
struct LineRestriction {
    double c = 0.0;
    Vec2 N{};
    Vec2 w{};
    int i = 0, j = 1;
    double t_min = 0.0; // facet (shared boundary) is {c*N + t*w : t >= t_min}
};

// Throws std::domain_error when the pair shares no facet.
LineRestriction make_line_restriction(const FlatPartition& p, int i, int j);

// T_rho(1_{A_i} - 1_{A_j}) at cN + tw.
double line_difference(const FlatPartition& p, const LineRestriction& lr, double rho, double t);

// t -> +inf limit of the facet line difference for rho in (0,1):
// 2 sign(c) (Phi(|c|(1-rho)/sqrt(1-rho^2)) - 1/2).
double limit_at_infinity(double c, double rho);

// Holomorphic extension of t -> T_rho 1_cell(cN + tw) evaluated via the
// two-leg contour for the inner integral. |Im z| <= 3.
std::complex<double> complex_line_eval(const ConeCell2D& cell, double rho,
                                       const LineRestriction& lr, std::complex<double> z);

// Coefficient c' of the growth bound |f(z)| <= 1 + c'|Im z| exp(c' (Im z)^2 / 2).
double complex_growth_coefficient(const ConeCell2D& cell, double rho, const LineRestriction& lr);

} // namespace nslab
