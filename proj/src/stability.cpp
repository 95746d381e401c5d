#include "nslab/stability.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <limits>
#include <stdexcept>

#include "nslab/quad.hpp"
#include "nslab/util.hpp"

namespace nslab {

namespace {

constexpr double kTwoPiInv = 0.15915494309189533576888376337251;
constexpr int kBlocks = 64;

void check_samples(long long samples) {
    if (samples < 1000) throw std::invalid_argument("stability: samples must be >= 1000");
}

// Shared MC kernel so every estimator consumes the identical (X, Y) stream
// for a given RngStream: block b uses substream(b), pairs are drawn in
// order, and the reduction is over the fixed block order.
template <typename PerPair>
void run_pair_blocks(const CorrelatedGaussianModel& model, long long samples, RngStream stream,
                     PerPair&& per_pair) {
    const int n = model.n;
    auto run_block = [&](int b) {
        const long long lo = samples * b / kBlocks;
        const long long hi = samples * (b + 1) / kBlocks;
        Rng rng(stream.substream(static_cast<std::uint64_t>(b)));
        Vec x(n), y(n);
        for (long long s = lo; s < hi; ++s) {
            sample_correlated_pair(model, rng, x, y);
            per_pair(b, x, y);
        }
    };
    const int workers = worker_count();
    std::vector<std::future<void>> futs;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w) {
        futs.push_back(std::async(std::launch::async, [&]() {
            int b;
            while ((b = next.fetch_add(1)) < kBlocks) run_block(b);
        }));
    }
    for (auto& f : futs) f.get();
}

} // namespace

nlohmann::json estimate_to_json(const StabilityEstimate& e) {
    return {{"value", e.value},
            {"std_error", e.std_error},
            {"method", e.method},
            {"samples_or_order", e.samples_or_order},
            {"seed", {{"seed", e.seed.seed}, {"stream_id", e.seed.stream_id}}},
            {"partition_digest", e.partition_digest}};
}

StabilityEstimate stability_mc(const AnyPartition& p, const CorrelatedGaussianModel& model,
                               long long samples, RngStream stream) {
    model.validate();
    check_samples(samples);
    std::vector<long long> agree(kBlocks, 0);
    run_pair_blocks(model, samples, stream, [&](int b, const Vec& x, const Vec& y) {
        if (classify_any(p, x) == classify_any(p, y)) ++agree[b];
    });
    long long total = 0;
    for (long long a : agree) total += a;
    StabilityEstimate est;
    est.value = static_cast<double>(total) / static_cast<double>(samples);
    est.std_error = std::sqrt(est.value * (1.0 - est.value) / static_cast<double>(samples));
    est.method = "mc";
    est.samples_or_order = samples;
    est.seed = stream;
    est.partition_digest = partition_digest(p);
    return est;
}

PairedStability stability_mc_paired(const AnyPartition& base, const AnyPartition& alt,
                                    const CorrelatedGaussianModel& model, long long samples,
                                    RngStream stream) {
    model.validate();
    check_samples(samples);
    std::vector<long long> agree_base(kBlocks, 0), agree_alt(kBlocks, 0);
    std::vector<long long> dsum(kBlocks, 0), d2sum(kBlocks, 0);
    run_pair_blocks(model, samples, stream, [&](int b, const Vec& x, const Vec& y) {
        const int da = classify_any(base, x) == classify_any(base, y) ? 1 : 0;
        const int db = classify_any(alt, x) == classify_any(alt, y) ? 1 : 0;
        agree_base[b] += da;
        agree_alt[b] += db;
        const int d = db - da;
        dsum[b] += d;
        d2sum[b] += d * d; // |d| <= 1, so d^2 = |d|
    });
    long long ta = 0, tb = 0, td = 0, td2 = 0;
    for (int b = 0; b < kBlocks; ++b) {
        ta += agree_base[b];
        tb += agree_alt[b];
        td += dsum[b];
        td2 += d2sum[b];
    }
    const double ns = static_cast<double>(samples);
    auto fill = [&](long long count, const AnyPartition& p) {
        StabilityEstimate e;
        e.value = static_cast<double>(count) / ns;
        e.std_error = std::sqrt(e.value * (1.0 - e.value) / ns);
        e.method = "mc";
        e.samples_or_order = samples;
        e.seed = stream;
        e.partition_digest = partition_digest(p);
        return e;
    };
    PairedStability out;
    out.base = fill(ta, base);
    out.alt = fill(tb, alt);
    out.diff = static_cast<double>(td) / ns;
    const double m2 = static_cast<double>(td2) / ns;
    out.diff_se = std::sqrt(std::max(0.0, m2 - out.diff * out.diff) / ns);
    return out;
}

namespace {

// P(Y in patch band) for Y ~ N(rho*X, (1-rho^2) I), in facet coordinates.
double band_probability(const FacetFrame& f, const BumpPatch& patch, double rho, const Vec2& x,
                        const GLRule& rule) {
    const double sigma = std::sqrt(1.0 - rho * rho);
    const double mu_dir = rho * dot2(x, f.dir);
    const double mu_s = rho * (dot2(x, f.N)) - f.c;
    const double reach = 6.5 * sigma;

    const double tl = (patch.center_t - patch.half_width) * f.lambda;
    const double th = (patch.center_t + patch.half_width) * f.lambda;
    if (mu_dir < tl - reach || mu_dir > th + reach) return 0.0;
    const double s_lo_all = patch.sign > 0 ? 0.0 : -patch.height;
    const double s_hi_all = patch.sign > 0 ? patch.height : 0.0;
    if (mu_s < s_lo_all - reach || mu_s > s_hi_all + reach) return 0.0;

    const double mid = patch.center_t;
    const double hw = patch.half_width;
    double acc = 0.0;
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        const double t = mid + hw * rule.nodes[q];
        const double top = patch.height * bump_profile((t - mid) / hw);
        const double s_lo = patch.sign > 0 ? 0.0 : -top;
        const double s_hi = patch.sign > 0 ? top : 0.0;
        const double inner = std_normal_cdf((s_hi - mu_s) / sigma) -
                             std_normal_cdf((s_lo - mu_s) / sigma);
        acc += rule.weights[q] * hw * (f.lambda / sigma) *
               std_normal_pdf((t * f.lambda - mu_dir) / sigma) * inner;
    }
    return acc;
}

} // namespace

DiffEstimate stability_diff_conditional(const PerturbedPartition& alt,
                                        const CorrelatedGaussianModel& model, long long samples,
                                        RngStream stream) {
    model.validate();
    check_samples(samples);
    if (model.n != 2) throw std::invalid_argument("stability_diff_conditional: n=2 required");
    const FlatPartition& base = alt.base;

    std::vector<ConeCell2D> cones;
    cones.reserve(base.k);
    for (int i = 0; i < base.k; ++i) cones.push_back(ConeCell2D::from_flat_cell(base, i));

    // patch m moves band mass from cell minus_label to cell plus_label
    std::vector<int> plus_label(alt.patches.size()), minus_label(alt.patches.size());
    for (std::size_t m = 0; m < alt.patches.size(); ++m) {
        const BumpPatch& p = alt.patches[m];
        plus_label[m] = p.sign > 0 ? p.facet_i : p.facet_j;
        minus_label[m] = p.sign > 0 ? p.facet_j : p.facet_i;
    }

    const GLRule& rule = gauss_legendre(24);
    std::vector<double> dsum(kBlocks, 0.0), d2sum(kBlocks, 0.0);
    auto run_block = [&](int b) {
        const long long lo = samples * b / kBlocks;
        const long long hi = samples * (b + 1) / kBlocks;
        Rng rng(stream.substream(static_cast<std::uint64_t>(b)));
        Vec x(2);
        double sum = 0.0, sum2 = 0.0;
        for (long long s = lo; s < hi; ++s) {
            x[0] = rng.normal();
            x[1] = rng.normal();
            const int la = base.classify(x);
            const int lb = alt.classify(x);
            const Vec2 x2{x[0], x[1]};
            double d = 0.0;
            if (lb != la)
                d = t_rho_cone2d(cones[lb], model.rho, x2) -
                    t_rho_cone2d(cones[la], model.rho, x2);
            for (std::size_t m = 0; m < alt.patches.size(); ++m) {
                if (lb == plus_label[m])
                    d += band_probability(alt.frames[m], alt.patches[m], model.rho, x2, rule);
                else if (lb == minus_label[m])
                    d -= band_probability(alt.frames[m], alt.patches[m], model.rho, x2, rule);
            }
            sum += d;
            sum2 += d * d;
        }
        dsum[b] = sum;
        d2sum[b] = sum2;
    };
    const int workers = worker_count();
    std::vector<std::future<void>> futs;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w) {
        futs.push_back(std::async(std::launch::async, [&]() {
            int b;
            while ((b = next.fetch_add(1)) < kBlocks) run_block(b);
        }));
    }
    for (auto& f : futs) f.get();

    double td = 0.0, td2 = 0.0;
    for (int b = 0; b < kBlocks; ++b) {
        td += dsum[b];
        td2 += d2sum[b];
    }
    DiffEstimate out;
    out.samples = samples;
    out.seed = stream;
    out.diff = td / static_cast<double>(samples);
    const double m2 = td2 / static_cast<double>(samples);
    out.diff_se = std::sqrt(std::max(0.0, m2 - out.diff * out.diff) /
                            static_cast<double>(samples));
    return out;
}

namespace {

// Integrate fn against gamma_2 over a half-plane intersection. The outer
// axis follows the first constraint's normal; inner bounds are affine in
// the outer coordinate, with panel breaks wherever the active bound can
// change so every panel sees a smooth integrand.
double integrate_over_cone(const ConeCell2D& cell, int order,
                           const std::function<double(const Vec2&)>& fn) {
    const double R = 8.5; // gamma_2 mass beyond radius 8.5 is < 1e-16
    Vec2 e{1.0, 0.0};
    double s_lo = -R, s_hi = R;
    struct Affine {
        double slope, icept;
    };
    std::vector<Affine> uppers, lowers;
    if (!cell.constraints.empty()) {
        e = {-cell.constraints[0].u[0], -cell.constraints[0].u[1]};
        s_lo = std::max(-cell.constraints[0].b, -R);
    }
    const Vec2 fdir = perp2(e);
    for (std::size_t m = 1; m < cell.constraints.size(); ++m) {
        const double ce = dot2(cell.constraints[m].u, e);
        const double cf = dot2(cell.constraints[m].u, fdir);
        const double b = cell.constraints[m].b;
        if (std::abs(cf) < 1e-13) {
            if (ce > 1e-13)
                s_hi = std::min(s_hi, b / ce);
            else if (ce < -1e-13)
                s_lo = std::max(s_lo, b / ce);
        } else if (cf > 0.0) {
            uppers.push_back({-ce / cf, b / cf});
        } else {
            lowers.push_back({-ce / cf, b / cf});
        }
    }
    if (!(s_lo < s_hi)) return 0.0;

    // Break the outer interval where two candidate bounds cross.
    std::vector<Affine> all = uppers;
    all.insert(all.end(), lowers.begin(), lowers.end());
    all.push_back({0.0, R});
    all.push_back({0.0, -R});
    std::vector<double> breaks{s_lo, s_hi};
    for (std::size_t a = 0; a < all.size(); ++a)
        for (std::size_t b = a + 1; b < all.size(); ++b) {
            const double ds = all[a].slope - all[b].slope;
            if (std::abs(ds) < 1e-13) continue;
            const double s = (all[b].icept - all[a].icept) / ds;
            if (s > s_lo && s < s_hi) breaks.push_back(s);
        }
    std::sort(breaks.begin(), breaks.end());

    const GLRule& rule = gauss_legendre(order);
    double total = 0.0;
    for (std::size_t pnl = 0; pnl + 1 < breaks.size(); ++pnl) {
        const double a = breaks[pnl], b = breaks[pnl + 1];
        if (b - a < 1e-14) continue;
        const double mid = 0.5 * (a + b), hw = 0.5 * (b - a);
        for (int qs = 0; qs < order; ++qs) {
            const double s = mid + hw * rule.nodes[qs];
            double up = R, lo = -R;
            for (const Affine& u : uppers) up = std::min(up, u.slope * s + u.icept);
            for (const Affine& l : lowers) lo = std::max(lo, l.slope * s + l.icept);
            if (up <= lo) continue;
            const double rmid = 0.5 * (lo + up), rhw = 0.5 * (up - lo);
            double inner = 0.0;
            for (int qr = 0; qr < order; ++qr) {
                const double r = rmid + rhw * rule.nodes[qr];
                const Vec2 x{s * e[0] + r * fdir[0], s * e[1] + r * fdir[1]};
                inner += rule.weights[qr] * std_normal_pdf(r) * fn(x);
            }
            total += rule.weights[qs] * hw * std_normal_pdf(s) * rhw * inner;
        }
    }
    return total;
}

} // namespace

StabilityEstimate stability_quadrature(const FlatPartition& p,
                                       const CorrelatedGaussianModel& model, int order) {
    p.validate();
    model.validate();
    if (p.n != 2) throw std::invalid_argument("stability_quadrature: n=2 required");
    if (model.rho == 0.0)
        throw std::invalid_argument("stability_quadrature: rho must be nonzero");
    if (order < 4 || order > 400)
        throw std::invalid_argument("stability_quadrature: order out of range [4,400]");
    double value = 0.0;
    for (int i = 0; i < p.k; ++i) {
        const ConeCell2D cell = ConeCell2D::from_flat_cell(p, i);
        value += integrate_over_cone(
            cell, order, [&](const Vec2& x) { return t_rho_cone2d(cell, model.rho, x); });
    }
    StabilityEstimate est;
    est.value = std::clamp(value, 0.0, 1.0);
    est.std_error = 0.0;
    est.method = "quadrature";
    est.samples_or_order = order;
    est.partition_digest = partition_digest(AnyPartition{p});
    return est;
}

StabilityEstimate stability_quadrature(const AnyPartition& p,
                                       const CorrelatedGaussianModel& model, int order) {
    if (const auto* flat = std::get_if<FlatPartition>(&p))
        return stability_quadrature(*flat, model, order);
    throw std::runtime_error(
        "stability_quadrature: unsupported partition kind (use the MC path)");
}

namespace {

struct BandSegment {
    double lo, hi; // thresholds on <x, direction>, -inf / +inf at the ends
    int label;
};

std::vector<BandSegment> band_segments(const BandPartition& bp) {
    std::vector<BandSegment> segs;
    const double inf = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < bp.labels.size(); ++s) {
        BandSegment seg;
        seg.lo = s == 0 ? -inf : bp.cuts[s - 1];
        seg.hi = s == bp.labels.size() - 1 ? inf : bp.cuts[s];
        seg.label = bp.labels[s];
        segs.push_back(seg);
    }
    return segs;
}

// P(a1 < X <= a2, b1 < Y <= b2) for standard bivariate normal, corr r.
double rect_prob(double a1, double a2, double b1, double b2, double r) {
    auto cdf = [&](double h, double k) {
        if (std::isinf(h) && h < 0.0) return 0.0;
        if (std::isinf(k) && k < 0.0) return 0.0;
        return bivariate_normal_cdf(h, k, r);
    };
    return cdf(a2, b2) - cdf(a1, b2) - cdf(a2, b1) + cdf(a1, b1);
}

} // namespace

StabilityEstimate stability_bilinear(const AnyPartition& pa, const AnyPartition& pb,
                                     const CorrelatedGaussianModel& model, BilinearMethod method,
                                     long long samples, RngStream stream) {
    model.validate();
    if (partition_dim(pa) != partition_dim(pb) || partition_dim(pa) != model.n)
        throw std::invalid_argument("stability_bilinear: dimension mismatch");
    if (cell_count(pa) != cell_count(pb))
        throw std::invalid_argument("stability_bilinear: cell count mismatch");

    const auto* ba = std::get_if<BandPartition>(&pa);
    const auto* bb = std::get_if<BandPartition>(&pb);
    const double ddot = (ba && bb) ? dot2(ba->direction, bb->direction) : 0.0;
    const bool parallel_bands = ba && bb && std::abs(std::abs(ddot) - 1.0) < 1e-12;

    if (method == BilinearMethod::ClosedForm && !parallel_bands)
        throw std::invalid_argument(
            "stability_bilinear: closed form requires parallel band partitions");

    if (parallel_bands && method != BilinearMethod::MonteCarlo) {
        const double r = model.rho * ddot;
        double value = 0.0;
        for (const BandSegment& sa : band_segments(*ba))
            for (const BandSegment& sb : band_segments(*bb))
                if (sa.label == sb.label)
                    value += rect_prob(sa.lo, sa.hi, sb.lo, sb.hi, r);
        StabilityEstimate est;
        est.value = std::clamp(value, 0.0, 1.0);
        est.std_error = 0.0;
        est.method = "closed-form";
        est.samples_or_order = 0;
        est.partition_digest = partition_digest(pa) + ":" + partition_digest(pb);
        return est;
    }

    check_samples(samples);
    std::vector<long long> agree(kBlocks, 0);
    run_pair_blocks(model, samples, stream, [&](int b, const Vec& x, const Vec& y) {
        if (classify_any(pa, x) == classify_any(pb, y)) ++agree[b];
    });
    long long total = 0;
    for (long long a : agree) total += a;
    StabilityEstimate est;
    est.value = static_cast<double>(total) / static_cast<double>(samples);
    est.std_error = std::sqrt(est.value * (1.0 - est.value) / static_cast<double>(samples));
    est.method = "mc";
    est.samples_or_order = samples;
    est.seed = stream;
    est.partition_digest = partition_digest(pa) + ":" + partition_digest(pb);
    return est;
}

double patch_line_volume(const LineRestriction& lr, const BumpPatch& patch) {
    const double lambda = std::sqrt(dot2(lr.w, lr.w));
    auto integrand = [&](double t) {
        const double u = (t - patch.center_t) / patch.half_width;
        const double tl = t * lambda;
        return patch.height * bump_profile(u) * kTwoPiInv *
               std::exp(-0.5 * (lr.c * lr.c + tl * tl)) * lambda;
    };
    return integrate_gl(integrand, patch.center_t - patch.half_width,
                        patch.center_t + patch.half_width, 160);
}

double first_variation(const FlatPartition& p, const LineRestriction& lr, const BumpPatch& phi1,
                       const BumpPatch& phi2, double rho) {
    p.validate();
    if (p.n != 2) throw std::invalid_argument("first_variation: n=2 required");
    if (!(rho > -1.0 && rho < 1.0) || rho == 0.0)
        throw std::invalid_argument("first_variation: rho must lie in (-1,0) or (0,1)");
    if (phi1.half_width <= 0.0 || phi2.half_width <= 0.0)
        throw std::invalid_argument("first_variation: patch widths must be positive");
    if (std::abs(phi1.center_t - phi2.center_t) < phi1.half_width + phi2.half_width)
        throw std::domain_error("first_variation: patch supports overlap");
    const double v1 = patch_line_volume(lr, phi1);
    const double v2 = patch_line_volume(lr, phi2);
    if (std::abs(v1 - v2) > 1e-8)
        throw std::domain_error("first_variation: patch line volumes are not matched");

    const double lambda = std::sqrt(dot2(lr.w, lr.w));
    auto support_integral = [&](const BumpPatch& patch, double patch_sign) {
        auto integrand = [&](double t) {
            const double u = (t - patch.center_t) / patch.half_width;
            const double tl = t * lambda;
            const double density = kTwoPiInv * std::exp(-0.5 * (lr.c * lr.c + tl * tl));
            return line_difference(p, lr, rho, t) * patch_sign * patch.height * bump_profile(u) *
                   density * lambda;
        };
        return integrate_gl(integrand, patch.center_t - patch.half_width,
                            patch.center_t + patch.half_width, 96);
    };
    return 2.0 * (support_integral(phi1, +1.0) + support_integral(phi2, -1.0));
}

} // namespace nslab
