#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nslab/stability.hpp"

namespace nslab {

// Facet scan result: the facet with the largest spread of the line
// difference h(t) = T_rho(1_{A_i} - 1_{A_j}) along it, plus grid points
// witnessing h(t1) > h(t2).
struct FacetWitness {
    LineRestriction lr;
    double t1 = 0.0;
    double t2 = 0.0;
    double spread = 0.0; // max h - min h over the scan grid
    bool found = false;  // false when spread <= 1e-7 on every facet
};

FacetWitness find_improving_facet(const FlatPartition& p, double rho);

// Volume-preserving two-patch perturbation: +1 patch at t1, -1 patch at t2,
// second height bisected so the transferred Gaussian areas match <= 1e-8.
PerturbedPartition build_perturbation(const FlatPartition& p, const LineRestriction& lr,
                                      double t1, double t2, double delta);

struct ImproveTrial {
    int facet_i = 0, facet_j = 1;
    double t1 = 0.0, t2 = 0.0;
    double delta = 0.0;
    double value = 0.0;     // S_rho of the candidate
    double std_error = 0.0; // SE of the CRN difference vs the input
    double diff = 0.0;      // candidate minus input, common random numbers
};

struct ImproveReport {
    std::string input_digest;
    double rho = 0.0;
    std::vector<ImproveTrial> trials;
    int best_index = -1;
    RngStream seed{};
    bool improved = false;
    std::string message;
};

nlohmann::json report_to_json(const ImproveReport& r);

// Line-search over a step-size menu at the best witness facet; the signed
// objective is +S_rho for rho > 0 and -S_rho for rho < 0. budget caps the
// number of (facet, delta) trials.
std::pair<AnyPartition, ImproveReport> improve(const FlatPartition& p, double rho, int budget,
                                               long long samples, RngStream stream);

} // namespace nslab
