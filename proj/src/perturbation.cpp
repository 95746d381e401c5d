#include "nslab/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nslab {

namespace {

constexpr int kGridPoints = 513;
constexpr double kGridRange = 50.0;
constexpr double kSpreadFloor = 1e-7;
// Witness points must leave room for a patch inside the facet and carry
// non-negligible Gaussian mass, or the CRN comparison cannot resolve them.
constexpr double kWitnessMargin = 0.5;
constexpr double kWitnessRadius = 6.0;
// Patch half-width; wide enough that the matched transfer carries the mass
// a 1e7-sample CRN comparison can resolve.
constexpr double kPatchHalfWidth = 0.45;

} // namespace

FacetWitness find_improving_facet(const FlatPartition& p, double rho) {
    p.validate();
    if (p.n != 2 || p.k != 3)
        throw std::invalid_argument("find_improving_facet: n=2, k=3 required");
    if (!(rho > -1.0 && rho < 1.0) || rho == 0.0)
        throw std::invalid_argument("find_improving_facet: rho must be nonzero in (-1,1)");

    FacetWitness best;
    bool any_facet = false;
    for (int i = 0; i < p.k; ++i) {
        for (int j = i + 1; j < p.k; ++j) {
            auto frame = facet_frame(p, i, j);
            if (!frame) continue;
            any_facet = true;
            const LineRestriction lr = make_line_restriction(p, i, j);
            const double lambda = std::sqrt(dot2(lr.w, lr.w));

            std::vector<double> ts(kGridPoints), hs(kGridPoints);
            for (int g = 0; g < kGridPoints; ++g) {
                ts[g] = -kGridRange + 2.0 * kGridRange * g / (kGridPoints - 1);
                hs[g] = line_difference(p, lr, rho, ts[g]);
            }
            const double spread = *std::max_element(hs.begin(), hs.end()) -
                                  *std::min_element(hs.begin(), hs.end());
            if (spread <= best.spread) continue;

            // Witness candidates must lie inside the facet with room for a
            // patch, and within the bulk of the Gaussian mass.
            double radius = kWitnessRadius;
            std::vector<int> window;
            for (int pass = 0; pass < 2 && window.empty(); ++pass, radius = 2.0 * kGridRange) {
                for (int g = 0; g < kGridPoints; ++g) {
                    if (ts[g] < lr.t_min + kWitnessMargin) continue;
                    const double tl = ts[g] * lambda;
                    if (lr.c * lr.c + tl * tl > radius * radius) continue;
                    window.push_back(g);
                }
            }
            if (window.size() < 2) continue;
            auto density = [&](int g) {
                const double tl = ts[g] * lambda;
                return std::exp(-0.5 * (lr.c * lr.c + tl * tl));
            };
            // Proxy for the achievable CRN significance of a patch pair:
            // the gain scales like (h1 - h2)^{3/2} and the matched volume
            // like the harmonic mean of the endpoint densities.
            int g1 = -1, g2 = -1;
            double best_score = 0.0;
            for (int ga : window)
                for (int gb : window) {
                    const double dh = hs[ga] - hs[gb];
                    if (dh <= 0.0) continue;
                    const double da = density(ga), db = density(gb);
                    const double score = dh * std::sqrt(dh) * std::sqrt(da * db / (da + db));
                    if (score > best_score) {
                        best_score = score;
                        g1 = ga;
                        g2 = gb;
                    }
                }
            if (g1 < 0) continue;
            best.lr = lr;
            best.t1 = ts[g1];
            best.t2 = ts[g2];
            best.spread = spread;
        }
    }
    if (!any_facet) throw std::domain_error("find_improving_facet: no facet-adjacent pairs");
    best.found = best.spread > kSpreadFloor;
    return best;
}

PerturbedPartition build_perturbation(const FlatPartition& p, const LineRestriction& lr,
                                      double t1, double t2, double delta) {
    if (t1 == t2) throw std::invalid_argument("build_perturbation: t1 != t2 required");
    if (!(delta > 0.0)) throw std::invalid_argument("build_perturbation: delta must be positive");
    auto frame = facet_frame(p, lr.i, lr.j);
    if (!frame) throw std::domain_error("build_perturbation: cells share no facet");

    // Fit both supports inside the facet and keep them disjoint.
    double width = std::min({kPatchHalfWidth, 0.5 * std::abs(t1 - t2) - 1e-9,
                             t1 - lr.t_min, t2 - lr.t_min});
    if (width < 1e-3)
        throw std::domain_error("build_perturbation: witness points too close for patches");

    BumpPatch p1;
    p1.facet_i = lr.i;
    p1.facet_j = lr.j;
    p1.center_t = t1;
    p1.half_width = width;
    p1.height = delta;
    p1.sign = +1;

    BumpPatch p2 = p1;
    p2.center_t = t2;
    p2.sign = -1;

    const double target = patch_area(*frame, p1);
    auto area_at = [&](double h) {
        p2.height = h;
        return patch_area(*frame, p2);
    };
    double hi = delta;
    for (int it = 0; it < 80 && area_at(hi) < target; ++it) hi *= 2.0;
    double lo = 0.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (area_at(mid) < target)
            lo = mid;
        else
            hi = mid;
        if (std::abs(area_at(mid) - target) <= 1e-10) break;
    }
    p2.height = 0.5 * (lo + hi);
    if (std::abs(area_at(p2.height) - target) > 1e-8)
        throw std::runtime_error("build_perturbation: area matching failed to converge");

    return PerturbedPartition::create(p, {p1, p2});
}

nlohmann::json report_to_json(const ImproveReport& r) {
    nlohmann::json trials = nlohmann::json::array();
    for (const ImproveTrial& t : r.trials) {
        trials.push_back({{"facet", {t.facet_i, t.facet_j}},
                          {"t1", t.t1},
                          {"t2", t.t2},
                          {"delta", t.delta},
                          {"value", t.value},
                          {"std_error", t.std_error},
                          {"diff", t.diff}});
    }
    nlohmann::json j = {{"input_digest", r.input_digest},
                        {"rho", r.rho},
                        {"trials", trials},
                        {"best_index", r.best_index},
                        {"seed", {{"seed", r.seed.seed}, {"stream_id", r.seed.stream_id}}},
                        {"improved", r.improved}};
    if (!r.message.empty()) j["message"] = r.message;
    return j;
}

std::pair<AnyPartition, ImproveReport> improve(const FlatPartition& p, double rho, int budget,
                                               long long samples, RngStream stream) {
    if (budget < 1) throw std::invalid_argument("improve: budget must be >= 1");
    ImproveReport report;
    report.input_digest = partition_digest(AnyPartition{p});
    report.rho = rho;
    report.seed = stream;

    const FacetWitness w = find_improving_facet(p, rho);
    if (!w.found) {
        report.message = "no improving direction detected";
        return {AnyPartition{p}, report};
    }

    // For rho < 0 the objective is -S_rho: swap the patch roles so the
    // normal displacement points where the line difference is smaller.
    double t1 = w.t1, t2 = w.t2;
    if (rho < 0.0) std::swap(t1, t2);

    const CorrelatedGaussianModel model{p.n, rho};
    const double deltas[] = {0.005, 0.01, 0.02, 0.04, 0.08};
    const int ntrials = std::min<int>(budget, 5);

    const StabilityEstimate base_est =
        stability_mc(AnyPartition{p}, model, samples, stream.substream(999));

    std::vector<AnyPartition> candidates;
    double best_obj = -1.0;
    for (int trial = 0; trial < ntrials; ++trial) {
        const double delta = deltas[trial];
        PerturbedPartition cand = build_perturbation(p, w.lr, t1, t2, delta);
        const DiffEstimate cmp = stability_diff_conditional(
            cand, model, samples, stream.substream(1000 + static_cast<std::uint64_t>(trial)));
        ImproveTrial t;
        t.facet_i = w.lr.i;
        t.facet_j = w.lr.j;
        t.t1 = t1;
        t.t2 = t2;
        t.delta = delta;
        t.value = base_est.value + cmp.diff;
        t.std_error = cmp.diff_se;
        t.diff = cmp.diff;
        report.trials.push_back(t);
        candidates.push_back(AnyPartition{std::move(cand)});
        const double obj = rho > 0.0 ? cmp.diff : -cmp.diff;
        if (obj > best_obj) {
            best_obj = obj;
            report.best_index = trial;
        }
    }
    report.improved = best_obj > 0.0;
    return {candidates[report.best_index], report};
}

} // namespace nslab
