#pragma once

#include <array>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "nslab/gaussian.hpp"
#include "nslab/rng.hpp"

namespace nslab {

using Vec = std::vector<double>;
using Vec2 = std::array<double, 2>;

inline double dot2(const Vec2& a, const Vec2& b) { return a[0] * b[0] + a[1] * b[1]; }
inline Vec2 perp2(const Vec2& a) { return {-a[1], a[0]}; }

// Argmax cells of <x - shift, y_i>.
struct FlatPartition {
    int n = 0;
    int k = 0;
    Vec shift;
    std::vector<Vec> directions;

    void validate() const;
    [[nodiscard]] int classify(const Vec& x) const;
};

struct StandardSimplexSpec {
    int n = 1;
    Vec shift; // empty means origin
};

// k = n+1 unit directions with pairwise inner product -1/(k-1).
FlatPartition make_standard_simplex(const StandardSimplexSpec& spec);

// Smooth compactly supported bump, exp(1 - 1/(1-u^2)) on (-1,1).
double bump_profile(double u);

// One membership-swapping region on the facet between cells i and j.
// sign +1 transfers mass from A_j to A_i, -1 the other way.
struct BumpPatch {
    int facet_i = 0;
    int facet_j = 1;
    double center_t = 0.0;
    double half_width = 0.25;
    double height = 0.0;
    int sign = +1;
    std::string profile = "bump";
};

// Local coordinates of the facet between cells i and j of a 2D flat
// partition: the facet line is {c*N + t*w} with w = lambda*dir, and the
// convention A_i subset of {<x,N> <= c}.
struct FacetFrame {
    int i = 0, j = 1;
    Vec2 N{};       // unit normal, A_i on the <= c side
    double c = 0.0; // line offset
    Vec2 dir{};     // unit facet direction
    double lambda = 1.0;
    double t_vertex = 0.0; // dir-coordinate of the partition vertex
    bool has_vertex = false;

    [[nodiscard]] Vec2 point(double t) const {
        return {c * N[0] + t * lambda * dir[0], c * N[1] + t * lambda * dir[1]};
    }
    [[nodiscard]] double t_of(const Vec2& x) const { return dot2(x, dir) / lambda; }
    [[nodiscard]] double s_of(const Vec2& x) const { return dot2(x, N) - c; }
    // Smallest t whose point lies on the actual facet (the shared boundary).
    [[nodiscard]] double t_min() const;
};

// Facet geometry for n=2 partitions with k <= 3 cells. Returns nullopt when
// the pair does not share a positive-length facet.
std::optional<FacetFrame> facet_frame(const FlatPartition& p, int i, int j);

struct PerturbedPartition {
    FlatPartition base;
    std::vector<BumpPatch> patches;
    std::vector<FacetFrame> frames; // parallel to patches

    static PerturbedPartition create(FlatPartition base, std::vector<BumpPatch> patches);
    [[nodiscard]] int classify(const Vec& x) const;
};

// Gaussian area swept by a patch (always positive; sign gives direction).
double patch_area(const FacetFrame& f, const BumpPatch& patch);

// Cells cut by parallel lines orthogonal to a unit direction; labels may
// repeat so unions of bands can carry one label.
struct BandPartition {
    Vec2 direction{1.0, 0.0};
    std::vector<double> cuts;   // strictly increasing
    std::vector<int> labels;    // size cuts.size()+1, values in {0..k-1}
    int k = 0;

    void validate() const;
    [[nodiscard]] int classify(const Vec& x) const;
    [[nodiscard]] std::vector<double> volumes() const;
};

using AnyPartition = std::variant<FlatPartition, PerturbedPartition, BandPartition>;

int classify_any(const AnyPartition& p, const Vec& x);
int cell_count(const AnyPartition& p);
int partition_dim(const AnyPartition& p);

struct VolumeEstimate {
    std::vector<double> volumes;
    std::vector<double> std_errors;
    long long samples = 0;
};

VolumeEstimate estimate_volumes(const AnyPartition& p, const CorrelatedGaussianModel& model,
                                long long samples, RngStream stream);

// gamma_n of {<x,u> <= a} for unit u.
double halfspace_volume(double a_offset);

nlohmann::json partition_to_json(const AnyPartition& p);
AnyPartition partition_from_json(const nlohmann::json& j);
std::string partition_digest(const AnyPartition& p);

} // namespace nslab
