#pragma once

#include <string>

#include <json.hpp>

#include "nslab/ou.hpp"
#include "nslab/partition.hpp"

namespace nslab {

struct StabilityEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::string method;              // mc | quadrature | closed-form
    long long samples_or_order = 0;
    RngStream seed{};
    std::string partition_digest;
};

nlohmann::json estimate_to_json(const StabilityEstimate& e);

// Fraction of correlated pairs landing in the same cell.
StabilityEstimate stability_mc(const AnyPartition& p, const CorrelatedGaussianModel& model,
                               long long samples, RngStream stream);

// Common-random-numbers comparison: both partitions see the identical
// (X, Y) stream, and the difference is estimated from the per-pair
// agreement indicator difference d in {-1, 0, +1}.
struct PairedStability {
    StabilityEstimate base;
    StabilityEstimate alt;
    double diff = 0.0;     // alt - base
    double diff_se = 0.0;
};

PairedStability stability_mc_paired(const AnyPartition& base, const AnyPartition& alt,
                                    const CorrelatedGaussianModel& model, long long samples,
                                    RngStream stream);

// Conditional (Rao-Blackwellized) CRN difference S(alt) - S(alt.base):
// for each sampled X the partner point is integrated out analytically, so
// the per-sample difference is the agreement-probability change, which is
// O(h) on the patch bands instead of +-1. Unbiased; far smaller variance
// than the indicator comparison for small perturbations.
struct DiffEstimate {
    double diff = 0.0;
    double diff_se = 0.0;
    long long samples = 0;
    RngStream seed{};
};

DiffEstimate stability_diff_conditional(const PerturbedPartition& alt,
                                        const CorrelatedGaussianModel& model, long long samples,
                                        RngStream stream);

// Deterministic evaluation of sum_i integral 1_{A_i} T_rho 1_{A_i} dgamma_2
// with cell-conforming nested Gauss-Legendre quadrature (order points per
// axis). Requires n=2 and rho != 0.
StabilityEstimate stability_quadrature(const FlatPartition& p,
                                       const CorrelatedGaussianModel& model, int order);

// AnyPartition dispatch; non-flat inputs are rejected (use the MC path).
StabilityEstimate stability_quadrature(const AnyPartition& p,
                                       const CorrelatedGaussianModel& model, int order);

enum class BilinearMethod { Auto, ClosedForm, MonteCarlo };

// sum_i integral 1_{A_i} T_rho 1_{B_i} dgamma_n. The closed form applies
// when both partitions are band partitions with parallel directions; it
// reduces each term to bivariate normal CDF rectangle sums.
StabilityEstimate stability_bilinear(const AnyPartition& pa, const AnyPartition& pb,
                                     const CorrelatedGaussianModel& model, BilinearMethod method,
                                     long long samples, RngStream stream);

// Gaussian line integral of a bump patch along its facet,
// integral phi(t) gamma_2(point(t)) lambda dt (first-order volume transfer).
double patch_line_volume(const LineRestriction& lr, const BumpPatch& patch);

// Boundary-integral derivative of S_rho under the normal displacement
// (phi1 - phi2) N along the facet: 2 integral h(t) (phi1 - phi2)(t) dgamma.
// Patches must have disjoint supports and matching line volumes (<= 1e-8).
double first_variation(const FlatPartition& p, const LineRestriction& lr, const BumpPatch& phi1,
                       const BumpPatch& phi2, double rho);

} // namespace nslab
