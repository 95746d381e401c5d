#pragma once

#include <functional>
#include <vector>

namespace nslab {

struct GLRule {
    std::vector<double> nodes;   // on [-1,1]
    std::vector<double> weights;
};

// Gauss-Legendre nodes/weights on [-1,1], cached per order.
const GLRule& gauss_legendre(int n);

// Integrate f over [a,b] with an n-point Gauss-Legendre rule.
double integrate_gl(const std::function<double(double)>& f, double a, double b, int n);

// Adaptive Gauss-Kronrod (G7,K15) on [a,b] to absolute tolerance tol.
double integrate_gk(const std::function<double(double)>& f, double a, double b,
                    double tol, int max_depth = 48);

} // namespace nslab
