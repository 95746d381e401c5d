#include "nslab/quad.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace nslab {

namespace {

GLRule compute_gauss_legendre(int n) {
    GLRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        // Chebyshev-based initial guess, Newton on P_n.
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int j = 2; j <= n; ++j) {
                const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            pp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        const double w = 2.0 / ((1.0 - x * x) * pp * pp);
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    return rule;
}

// Kronrod 15 / Gauss 7 pair (nodes on [-1,1], symmetric).
constexpr double kXgk[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
    0.586087235467691, 0.405845151377397, 0.207784955007898, 0.000000000000000};
constexpr double kWgk[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728};
constexpr double kWg[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469};

void gk15(const std::function<double(double)>& f, double a, double b,
          double& result, double& err) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double resg = fc * kWg[3];
    double resk = fc * kWgk[7];
    for (int j = 0; j < 7; ++j) {
        const double x = h * kXgk[j];
        const double fsum = f(c - x) + f(c + x);
        resk += kWgk[j] * fsum;
        if (j % 2 == 1) resg += kWg[j / 2] * fsum;
    }
    result = resk * h;
    err = std::abs((resk - resg) * h);
}

double gk_adaptive(const std::function<double(double)>& f, double a, double b,
                   double tol, int depth) {
    double result = 0.0, err = 0.0;
    gk15(f, a, b, result, err);
    if (err <= tol || depth <= 0) return result;
    const double c = 0.5 * (a + b);
    return gk_adaptive(f, a, c, 0.5 * tol, depth - 1) +
           gk_adaptive(f, c, b, 0.5 * tol, depth - 1);
}

} // namespace

const GLRule& gauss_legendre(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
    static std::map<int, GLRule> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, compute_gauss_legendre(n)).first;
    return it->second;
}

double integrate_gl(const std::function<double(double)>& f, double a, double b, int n) {
    const GLRule& rule = gauss_legendre(n);
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += rule.weights[i] * f(c + h * rule.nodes[i]);
    return sum * h;
}

double integrate_gk(const std::function<double(double)>& f, double a, double b,
                    double tol, int max_depth) {
    if (!(a < b)) return 0.0;
    return gk_adaptive(f, a, b, tol, max_depth);
}

} // namespace nslab
