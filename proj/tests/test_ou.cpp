#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <stdexcept>

#include "nslab/ou.hpp"
#include "nslab/rng.hpp"

using namespace nslab;

namespace {

// Conditional Monte Carlo oracle for T_rho 1_cell(x): sample the partner
// point Y ~ N(rho x, (1-rho^2) I) directly.
double t_rho_mc(const ConeCell2D& cell, double rho, const Vec2& x, long long N, RngStream s) {
    Rng rng(s);
    const double sigma = std::sqrt(1.0 - rho * rho);
    long long hits = 0;
    for (long long q = 0; q < N; ++q) {
        const Vec2 y{rho * x[0] + sigma * rng.normal(), rho * x[1] + sigma * rng.normal()};
        bool in = true;
        for (const auto& h : cell.constraints)
            if (dot2(y, h.u) > h.b) {
                in = false;
                break;
            }
        if (in) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(N);
}

ConeCell2D make_cell(std::vector<ConeCell2D::HalfPlane> hp) {
    ConeCell2D c;
    c.constraints = std::move(hp);
    c.validate();
    return c;
}

FlatPartition collinear_tips() {
    FlatPartition p;
    p.n = 2;
    p.k = 3;
    p.shift = {0.0, 0.0};
    p.directions = {{0.0, 1.0}, {1.0, 2.0}, {2.0, 3.0}};
    return p;
}

} // namespace

TEST_CASE("halfspace heat value matches the conditional sampler") {
    Rng gen(RngStream{31, 0});
    for (int c = 0; c < 6; ++c) {
        const double ang = 2.0 * M_PI * gen.uniform();
        const Vec2 u{std::cos(ang), std::sin(ang)};
        const double a = -1.5 + 3.0 * gen.uniform();
        const double rho = -0.9 + 1.8 * gen.uniform();
        const Vec2 x{gen.normal(), gen.normal()};
        const double exact = t_rho_halfspace(a, u, rho, x);
        const long long N = 200000;
        Rng rng(RngStream{31, static_cast<std::uint64_t>(c + 1)});
        const double sigma = std::sqrt(1.0 - rho * rho);
        long long hits = 0;
        for (long long q = 0; q < N; ++q) {
            const Vec2 y{rho * x[0] + sigma * rng.normal(), rho * x[1] + sigma * rng.normal()};
            if (dot2(y, u) <= a) ++hits;
        }
        const double mc = static_cast<double>(hits) / N;
        const double se = std::sqrt(std::max(mc * (1.0 - mc), 1e-9) / N);
        CHECK(std::abs(exact - mc) <= 4.0 * se);
        // complement identity
        CHECK(std::abs(exact + t_rho_halfspace(-a, Vec2{-u[0], -u[1]}, rho, x) - 1.0) <= 1e-10);
    }
    CHECK_THROWS_AS(t_rho_halfspace(0.0, {1.0, 0.0}, 1.0, {0.0, 0.0}), std::domain_error);
}

TEST_CASE("cone heat values form a partition of unity over the cells") {
    for (double sx : {0.0, 0.35})
        for (double rho : {0.5, -0.3}) {
            FlatPartition p = make_standard_simplex({2, {}});
            p.shift = {sx, -0.5 * sx};
            ConeCell2D cells[3] = {ConeCell2D::from_flat_cell(p, 0),
                                   ConeCell2D::from_flat_cell(p, 1),
                                   ConeCell2D::from_flat_cell(p, 2)};
            Rng rng(RngStream{32, 0});
            for (int s = 0; s < 100; ++s) {
                const Vec2 x{rng.normal(), rng.normal()};
                double total = 0.0;
                for (const auto& cell : cells) total += t_rho_cone2d(cell, rho, x);
                CHECK(std::abs(total - 1.0) <= 1e-6);
            }
        }
}

TEST_CASE("dropping a constraint can only increase the heat value") {
    Rng gen(RngStream{33, 0});
    for (int c = 0; c < 100; ++c) {
        const double a1 = 2.0 * M_PI * gen.uniform();
        double a2 = a1 + 0.3 + 2.4 * gen.uniform(); // avoid near-opposite normals
        const ConeCell2D big = make_cell({{{std::cos(a1), std::sin(a1)}, 0.5}});
        const ConeCell2D small =
            make_cell({{{std::cos(a1), std::sin(a1)}, 0.5}, {{std::cos(a2), std::sin(a2)}, 0.8}});
        const double rho = -0.8 + 1.6 * gen.uniform();
        const Vec2 x{gen.normal(), gen.normal()};
        CHECK(t_rho_cone2d(small, rho, x) <= t_rho_cone2d(big, rho, x) + 1e-10);
        CHECK(gamma2_measure(small) <= gamma2_measure(big) + 1e-10);
    }
}

TEST_CASE("single-constraint cone reduces to the halfspace formula") {
    Rng gen(RngStream{34, 0});
    for (int c = 0; c < 50; ++c) {
        const double ang = 2.0 * M_PI * gen.uniform();
        const Vec2 u{std::cos(ang), std::sin(ang)};
        const double b = -1.0 + 2.0 * gen.uniform();
        const ConeCell2D cell = make_cell({{u, b}});
        const double rho = -0.9 + 1.8 * gen.uniform();
        const Vec2 x{gen.normal(), gen.normal()};
        CHECK(std::abs(t_rho_cone2d(cell, rho, x) - t_rho_halfspace(b, u, rho, x)) <= 1e-8);
    }
}

TEST_CASE("heat value at the origin of a centered cone is its measure") {
    const FlatPartition p = make_standard_simplex({2, {}});
    const ConeCell2D cell = ConeCell2D::from_flat_cell(p, 1);
    for (double rho : {-0.7, -0.2, 0.0, 0.4, 0.9})
        CHECK(std::abs(t_rho_cone2d(cell, rho, {0.0, 0.0}) - gamma2_measure(cell)) <= 1e-8);
    // the centered simplex cell is a 120-degree sector of measure 1/3
    CHECK(std::abs(gamma2_measure(cell) - 1.0 / 3.0) <= 1e-6);
}

TEST_CASE("cone measures match closed forms and monte carlo") {
    CHECK(std::abs(gamma2_measure(make_cell({{{1.0, 0.0}, 0.8}})) - std_normal_cdf(0.8)) <= 1e-10);
    const ConeCell2D quadrant = make_cell({{{1.0, 0.0}, 0.0}, {{0.0, 1.0}, 0.0}});
    CHECK(std::abs(gamma2_measure(quadrant) - 0.25) <= 1e-9);
    FlatPartition p = make_standard_simplex({2, {}});
    p.shift = {0.3, -0.6};
    double total = 0.0;
    for (int i = 0; i < 3; ++i) {
        const ConeCell2D cell = ConeCell2D::from_flat_cell(p, i);
        const double m = gamma2_measure(cell);
        total += m;
        Rng rng(RngStream{35, static_cast<std::uint64_t>(i)});
        long long hits = 0;
        const long long N = 400000;
        for (long long s = 0; s < N; ++s) {
            const Vec x = {rng.normal(), rng.normal()};
            if (p.classify(x) == i) ++hits;
        }
        const double mc = static_cast<double>(hits) / N;
        CHECK(std::abs(m - mc) <= 4.0 * std::sqrt(mc * (1.0 - mc) / N));
    }
    CHECK(std::abs(total - 1.0) <= 1e-8);
}

TEST_CASE("cone validation rejects degenerate cells") {
    ConeCell2D empty;
    empty.constraints = {{{1.0, 0.0}, -1.0}, {{-1.0, 0.0}, -1.0}};
    CHECK_THROWS_AS(empty.validate(), std::domain_error);
    ConeCell2D many;
    many.constraints = {{{1.0, 0.0}, 0.0},
                        {{0.0, 1.0}, 0.0},
                        {{-1.0, 0.0}, 5.0},
                        {{0.0, -1.0}, 5.0}};
    CHECK_THROWS_AS(many.validate(), std::invalid_argument);
    ConeCell2D scaled;
    scaled.constraints = {{{2.0, 0.0}, 0.0}};
    CHECK_THROWS_AS(scaled.validate(), std::invalid_argument);
    const ConeCell2D ok = make_cell({{{1.0, 0.0}, 0.0}});
    CHECK_THROWS_AS(t_rho_cone2d(ok, 0.5, {std::nan(""), 0.0}), std::domain_error);
    CHECK_THROWS_AS(t_rho_cone2d(ok, -1.0, {0.0, 0.0}), std::domain_error);
}

TEST_CASE("two-constraint heat values match the conditional sampler") {
    Rng gen(RngStream{36, 0});
    for (int c = 0; c < 5; ++c) {
        const double a1 = 2.0 * M_PI * gen.uniform();
        const double a2 = a1 + 0.5 + 2.0 * gen.uniform();
        const ConeCell2D cell = make_cell(
            {{{std::cos(a1), std::sin(a1)}, 0.4}, {{std::cos(a2), std::sin(a2)}, -0.2}});
        const double rho = -0.8 + 1.6 * gen.uniform();
        const Vec2 x{gen.normal(), gen.normal()};
        const double exact = t_rho_cone2d(cell, rho, x);
        const double mc = t_rho_mc(cell, rho, x, 200000, RngStream{36, static_cast<std::uint64_t>(c + 1)});
        const double se = std::sqrt(std::max(mc * (1.0 - mc), 1e-9) / 200000.0);
        CHECK(std::abs(exact - mc) <= 4.0 * se);
    }
}

TEST_CASE("line restriction rays stay on the shared boundary") {
    FlatPartition p = make_standard_simplex({2, {}});
    p.shift = {0.2, 0.1};
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j) {
            const LineRestriction lr = make_line_restriction(p, i, j);
            for (double t : {1.0, 2.0, 5.0, 10.0}) {
                if (t < lr.t_min) continue;
                const Vec2 on{lr.c * lr.N[0] + t * lr.w[0], lr.c * lr.N[1] + t * lr.w[1]};
                const Vec just_i = {on[0] - 1e-7 * lr.N[0], on[1] - 1e-7 * lr.N[1]};
                const Vec just_j = {on[0] + 1e-7 * lr.N[0], on[1] + 1e-7 * lr.N[1]};
                CHECK(p.classify(just_i) == i);
                CHECK(p.classify(just_j) == j);
            }
        }
    CHECK_THROWS_AS(make_line_restriction(collinear_tips(), 0, 2), std::domain_error);
}

TEST_CASE("line difference vanishes on symmetric facets and approaches the limit") {
    const FlatPartition centered = make_standard_simplex({2, {}});
    const LineRestriction lr0 = make_line_restriction(centered, 0, 1);
    for (double t : {0.5, 1.0, 3.0, 8.0})
        CHECK(std::abs(line_difference(centered, lr0, 0.5, t)) <= 1e-9);

    FlatPartition p = make_standard_simplex({2, {}});
    p.shift = {-0.8, 0.3};
    for (double rho : {0.3, 0.6}) {
        const LineRestriction lr = make_line_restriction(p, 0, 2);
        const double tail = line_difference(p, lr, rho, 45.0);
        CHECK(std::abs(tail - limit_at_infinity(lr.c, rho)) <= 1e-4);
    }
    CHECK(limit_at_infinity(0.0, 0.5) == 0.0);
    CHECK(limit_at_infinity(1.0, 0.5) ==
          doctest::Approx(2.0 * (std_normal_cdf(0.5 / std::sqrt(0.75)) - 0.5)).epsilon(1e-12));
    CHECK_THROWS_AS(limit_at_infinity(1.0, -0.5), std::domain_error);
    CHECK_THROWS_AS(limit_at_infinity(1.0, 0.0), std::domain_error);
    CHECK_THROWS_AS(limit_at_infinity(1.0, 1.0), std::domain_error);
}

TEST_CASE("holomorphic line extension agrees with the real evaluation") {
    FlatPartition p = make_standard_simplex({2, {}});
    p.shift = {0.4, -0.2};
    const LineRestriction lr = make_line_restriction(p, 0, 1);
    const ConeCell2D cell = ConeCell2D::from_flat_cell(p, 0);
    for (double rho : {0.4, -0.6})
        for (double t : {-2.0, 0.3, 4.0}) {
            const Vec2 x{lr.c * lr.N[0] + t * lr.w[0], lr.c * lr.N[1] + t * lr.w[1]};
            const std::complex<double> f = complex_line_eval(cell, rho, lr, {t, 0.0});
            CHECK(std::abs(f.real() - t_rho_cone2d(cell, rho, x)) <= 1e-8);
            CHECK(std::abs(f.imag()) <= 1e-10);
        }
    CHECK_THROWS_AS(complex_line_eval(cell, 0.4, lr, {0.0, 3.5}), std::domain_error);
}

TEST_CASE("line extension satisfies the cauchy-riemann equations and growth bound") {
    FlatPartition p = make_standard_simplex({2, {}});
    p.shift = {0.4, -0.2};
    const LineRestriction lr = make_line_restriction(p, 1, 2);
    const ConeCell2D cell = ConeCell2D::from_flat_cell(p, 1);
    const double rho = 0.5;
    const double cprime = complex_growth_coefficient(cell, rho, lr);
    Rng gen(RngStream{37, 0});
    const double h = 1e-4;
    for (int s = 0; s < 20; ++s) {
        const std::complex<double> z(-3.0 + 6.0 * gen.uniform(), -2.0 + 4.0 * gen.uniform());
        auto f = [&](std::complex<double> w) { return complex_line_eval(cell, rho, lr, w); };
        const std::complex<double> dre = (f(z + h) - f(z - h)) / (2.0 * h);
        const std::complex<double> dim =
            (f(z + std::complex<double>(0.0, h)) - f(z - std::complex<double>(0.0, h))) /
            (2.0 * h);
        // Cauchy-Riemann: d/dx f = -i d/dy f
        CHECK(std::abs(dre - std::complex<double>(0.0, -1.0) * dim) <= 1e-5);
        const double bound =
            1.0 + cprime * std::abs(z.imag()) * std::exp(0.5 * cprime * z.imag() * z.imag());
        CHECK(std::abs(f(z)) <= bound + 1e-9);
    }
}
