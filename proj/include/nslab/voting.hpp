#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "nslab/partition.hpp"
#include "nslab/rng.hpp"

namespace nslab {

// Vote distribution q = (1/3 + alpha/sqrt(n), 1/3 + beta/sqrt(n), rest).
struct BiasedMeasure {
    long long n = 1;
    double alpha = 0.0;
    double beta = 0.0;

    [[nodiscard]] std::array<double, 3> q() const;
    void validate() const;
};

// Coordinatewise pair law: values agree with probability rho and are
// otherwise independent draws from the base measure.
struct CorrelatedPairLaw {
    BiasedMeasure base;
    double rho = 0.5;

    void validate() const;
    // table[a][b] = P(x = a+1, y = b+1) for one coordinate.
    [[nodiscard]] std::array<std::array<double, 3>, 3> table() const;
};

// Strict-count winner over symbols {1,2,3}; ties go to the lowest index.
int plurality(const std::vector<int>& votes);

void sample_word(const BiasedMeasure& q, Rng& rng, std::vector<int>& x);
void sample_pair(const CorrelatedPairLaw& law, Rng& rng, std::vector<int>& x,
                 std::vector<int>& y);

// Axis-parallel grid labeling of [-radius, radius]^2; out-of-range points
// clamp to the boundary cell. labels are row-major: index = row*resolution
// + col, where col indexes the first coordinate and row the second, both
// from -radius upward. Label values are in {1,2,3}.
struct RectanglePartition {
    double radius = 8.0;
    int resolution = 16;
    std::vector<int> labels;

    void validate() const;
    [[nodiscard]] int label_at(double u, double v) const;
};

nlohmann::json rectangles_to_json(const RectanglePartition& r);
RectanglePartition rectangles_from_json(const nlohmann::json& j);

// Whitening of the pair statistic X_i = (N_i - n/3)/sqrt(n), i = 1,2, whose
// exact covariance under the uniform measure is [[2/9,-1/9],[-1/9,2/9]].
struct StatisticEmbedding {
    long long n = 1;

    // Row-major Sigma^{-1/2} = [[3+s,3-s],[3-s,3+s]]/2 with s = sqrt(3).
    static std::array<double, 4> whitening_matrix();
    static std::array<double, 4> whitening_inverse(); // Sigma^{1/2}

    // Whitened (X_1, X_2) from vote counts; exact up to one final division.
    [[nodiscard]] std::array<double, 2> statistic(const std::array<long long, 3>& counts) const;
};

// Gaussian limit of plurality in whitened coordinates under bias (alpha,
// beta): a flat partition with standard-simplex angles and shift
// -Sigma^{-1/2}(alpha, beta).
FlatPartition plurality_limit_partition(double alpha, double beta);

struct VotingFunction {
    enum class Kind { Plurality, Rectangle } kind = Kind::Plurality;
    long long n = 1;
    RectanglePartition rect;             // Rectangle only
    std::array<double, 2> offset{0.0, 0.0}; // subtracted from the whitened statistic

    [[nodiscard]] int evaluate(const std::vector<int>& votes) const;
    [[nodiscard]] int label_from_counts(const std::array<long long, 3>& counts) const;
};

struct DiscreteEstimate {
    double value = 0.0;
    double std_error = 0.0;
    long long samples = 0;
    std::string method; // mc | exact
};

// P[f(x) = f(y)] under the pair law, Monte Carlo over joint coordinate
// counts (both function kinds depend on the word only through its counts).
DiscreteEstimate discrete_stability(const VotingFunction& f, const CorrelatedPairLaw& law,
                                    long long samples, RngStream stream);

// Paired estimate of P[fb agrees] - P[fa agrees] on identical vote pairs.
struct DiscretePaired {
    DiscreteEstimate a, b;
    double diff = 0.0;
    double diff_se = 0.0;
};
DiscretePaired discrete_stability_paired(const VotingFunction& fa, const VotingFunction& fb,
                                         const CorrelatedPairLaw& law, long long samples,
                                         RngStream stream);

// Exact 9^n-pair enumeration; unsupported for n > 8.
DiscreteEstimate discrete_stability_exact(const VotingFunction& f, const CorrelatedPairLaw& law);

// Per-label output frequencies P[f = i], same MC machinery.
std::array<double, 3> label_frequencies(const VotingFunction& f, const BiasedMeasure& q,
                                        long long samples, RngStream stream);

enum class InfluenceMethod { Exact, MonteCarlo };

// P[f changes when coordinate i is resampled]; exact only for n <= 8.
double influence(const VotingFunction& f, const BiasedMeasure& q, int coord,
                 InfluenceMethod method, long long samples, RngStream stream);

// The rectangle-based competitor: word -> label of the whitened count
// statistic, offset by `offset` before the grid lookup.
VotingFunction build_competitor(const RectanglePartition& rects, long long n,
                                std::array<double, 2> offset = {0.0, 0.0});

// Grid labeling of a planar partition by classify at cell centers.
RectanglePartition rectangle_approximate(const AnyPartition& p, int resolution, double radius);

// Compact replay format: u64 n, u64 count, then 2 bits per symbol, each
// word zero-padded to a byte boundary.
void write_vote_stream(std::ostream& os, long long n,
                       const std::vector<std::vector<int>>& words);
std::vector<std::vector<int>> read_vote_stream(std::istream& is, long long& n);

} // namespace nslab
