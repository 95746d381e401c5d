#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nslab/partition.hpp"
#include "nslab/rng.hpp"

using namespace nslab;

namespace {

FlatPartition shifted_simplex(double sx, double sy) {
    FlatPartition p = make_standard_simplex({2, {}});
    p.shift = {sx, sy};
    return p;
}

} // namespace

TEST_CASE("standard simplex directions are unit with equal pairwise angles") {
    for (int n : {1, 2, 3, 5}) {
        const FlatPartition p = make_standard_simplex({n, {}});
        REQUIRE(p.k == n + 1);
        for (int i = 0; i < p.k; ++i) {
            double nrm = 0.0;
            for (double v : p.directions[i]) nrm += v * v;
            CHECK(std::abs(nrm - 1.0) <= 1e-12);
            for (int j = i + 1; j < p.k; ++j) {
                double ip = 0.0;
                for (int d = 0; d < n; ++d) ip += p.directions[i][d] * p.directions[j][d];
                CHECK(std::abs(ip + 1.0 / n) <= 1e-12);
            }
        }
        CHECK_NOTHROW(p.validate());
    }
    CHECK_THROWS_AS(make_standard_simplex({0, {}}), std::invalid_argument);
}

TEST_CASE("classify is scale covariant for centered partitions") {
    const FlatPartition p = make_standard_simplex({2, {}});
    Rng rng(RngStream{21, 0});
    for (int s = 0; s < 10000; ++s) {
        const Vec x = {rng.normal(), rng.normal()};
        const double lam = 0.01 + 10.0 * rng.uniform();
        CHECK(p.classify(x) == p.classify({lam * x[0], lam * x[1]}));
    }
}

TEST_CASE("classify commutes with shifting") {
    const FlatPartition centered = make_standard_simplex({2, {}});
    const FlatPartition shifted = shifted_simplex(0.4, -0.9);
    Rng rng(RngStream{22, 0});
    for (int s = 0; s < 10000; ++s) {
        const Vec x = {rng.normal(), rng.normal()};
        CHECK(shifted.classify(x) == centered.classify({x[0] - 0.4, x[1] + 0.9}));
    }
}

TEST_CASE("permuting directions permutes labels") {
    FlatPartition p = shifted_simplex(0.1, 0.2);
    FlatPartition q = p;
    std::swap(q.directions[0], q.directions[2]); // permutation (0 2)
    const int perm[3] = {2, 1, 0};
    Rng rng(RngStream{23, 0});
    for (int s = 0; s < 10000; ++s) {
        const Vec x = {rng.normal(), rng.normal()};
        CHECK(q.classify(x) == perm[p.classify(x)]);
    }
}

TEST_CASE("ties go to the lowest index and are rare under the gaussian") {
    FlatPartition two;
    two.n = 2;
    two.k = 2;
    two.shift = {0.0, 0.0};
    two.directions = {{0.0, 1.0}, {0.0, -1.0}};
    CHECK(two.classify({3.7, 0.0}) == 0); // exact tie
    const FlatPartition p = make_standard_simplex({2, {}});
    Rng rng(RngStream{24, 0});
    long long near_ties = 0;
    for (long long s = 0; s < 1000000; ++s) {
        const Vec x = {rng.normal(), rng.normal()};
        double best = -1e300, second = -1e300;
        for (int i = 0; i < p.k; ++i) {
            const double v = x[0] * p.directions[i][0] + x[1] * p.directions[i][1];
            if (v > best) {
                second = best;
                best = v;
            } else if (v > second) {
                second = v;
            }
        }
        if (best - second <= 1e-9) ++near_ties;
    }
    CHECK(near_ties <= 10); // frequency <= 1e-5
}

TEST_CASE("validation rejects degenerate direction sets") {
    FlatPartition p;
    p.n = 2;
    p.k = 2;
    p.shift = {0.0, 0.0};
    p.directions = {{1.0, 0.0}, {2.0, 0.0}}; // positive multiple
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.directions = {{1.0, 0.0}, {0.0, 0.0}};
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.directions = {{1.0, 0.0}};
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.k = 4; // k > n+1
    p.directions = {{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}, {0.0, -1.0}};
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("bump profile is a smooth compactly supported bump") {
    CHECK(bump_profile(0.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(bump_profile(1.0) == 0.0);
    CHECK(bump_profile(-1.0) == 0.0);
    CHECK(bump_profile(1.5) == 0.0);
    CHECK(bump_profile(-7.0) == 0.0);
    for (int g = 1; g < 50; ++g) {
        const double u = g / 50.0;
        CHECK(bump_profile(u) > 0.0);
        CHECK(bump_profile(u) == bump_profile(-u));
        CHECK(bump_profile(u) < bump_profile((g - 1) / 50.0)); // decreasing on (0,1)
    }
}

TEST_CASE("facet frame coordinates are consistent with classification") {
    const FlatPartition p = shifted_simplex(0.15, -0.1);
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j) {
            auto f = facet_frame(p, i, j);
            REQUIRE(f.has_value());
            CHECK(std::abs(dot2(f->N, f->N) - 1.0) <= 1e-12);
            CHECK(std::abs(dot2(f->dir, f->dir) - 1.0) <= 1e-12);
            CHECK(std::abs(dot2(f->N, f->dir)) <= 1e-12);
            for (double t : {f->t_min() + 0.2, f->t_min() + 1.0, f->t_min() + 4.0}) {
                const Vec2 on = f->point(t);
                CHECK(f->t_of(on) == doctest::Approx(t).epsilon(1e-10));
                CHECK(std::abs(f->s_of(on)) <= 1e-12);
                // A_i on the s <= 0 side, A_j on the s >= 0 side
                const Vec in_i = {on[0] - 1e-6 * f->N[0], on[1] - 1e-6 * f->N[1]};
                const Vec in_j = {on[0] + 1e-6 * f->N[0], on[1] + 1e-6 * f->N[1]};
                CHECK(p.classify(in_i) == i);
                CHECK(p.classify(in_j) == j);
            }
        }
    CHECK_THROWS_AS(facet_frame(p, 0, 3), std::invalid_argument);
}

TEST_CASE("perturbed partition swaps membership exactly on the patch band") {
    const FlatPartition base = shifted_simplex(0.0, 0.0);
    BumpPatch patch;
    patch.facet_i = 0;
    patch.facet_j = 1;
    patch.center_t = 1.2;
    patch.half_width = 0.4;
    patch.height = 0.3;
    patch.sign = +1;
    const PerturbedPartition pert = PerturbedPartition::create(base, {patch});
    REQUIRE(pert.frames.size() == 1);
    const FacetFrame& f = pert.frames[0];
    Rng rng(RngStream{25, 0});
    long long flipped = 0;
    const long long N = 400000;
    for (long long s = 0; s < N; ++s) {
        const Vec x = {rng.normal(), rng.normal()};
        const int lb = base.classify(x), lp = pert.classify(x);
        if (lb == lp) continue;
        ++flipped;
        // every flip is a j -> i transfer inside the band
        CHECK(lb == 1);
        CHECK(lp == 0);
        const Vec2 x2 = {x[0], x[1]};
        const double u = (f.t_of(x2) - patch.center_t) / patch.half_width;
        CHECK(std::abs(u) < 1.0);
        const double sv = f.s_of(x2);
        CHECK(sv >= 0.0);
        CHECK(sv <= patch.height * bump_profile(u) + 1e-12);
    }
    const double area = patch_area(f, patch);
    const double se = std::sqrt(area * (1.0 - area) / N);
    CHECK(std::abs(static_cast<double>(flipped) / N - area) <= 4.0 * se);
}

TEST_CASE("patch validation rejects bad supports") {
    const FlatPartition base = shifted_simplex(0.0, 0.0);
    BumpPatch patch{0, 1, 1.0, 0.4, 0.3, +1, "bump"};
    CHECK_NOTHROW(PerturbedPartition::create(base, {patch}));
    BumpPatch off = patch;
    off.center_t = -0.2; // support crosses the vertex
    CHECK_THROWS_AS(PerturbedPartition::create(base, {off}), std::invalid_argument);
    BumpPatch bad = patch;
    bad.height = -0.1;
    CHECK_THROWS_AS(PerturbedPartition::create(base, {bad}), std::invalid_argument);
    bad = patch;
    bad.sign = 0;
    CHECK_THROWS_AS(PerturbedPartition::create(base, {bad}), std::invalid_argument);
    BumpPatch other = patch;
    other.center_t = 1.5; // overlaps [0.6, 1.4]
    CHECK_THROWS_AS(PerturbedPartition::create(base, {patch, other}), std::invalid_argument);
    other.center_t = 2.0; // disjoint
    CHECK_NOTHROW(PerturbedPartition::create(base, {patch, other}));
}

TEST_CASE("band partition volumes match normal cdf differences") {
    BandPartition b;
    b.direction = {0.6, 0.8};
    b.cuts = {-0.7, 0.3, 1.1};
    b.labels = {0, 1, 0, 2};
    b.k = 3;
    CHECK_NOTHROW(b.validate());
    const std::vector<double> v = b.volumes();
    REQUIRE(v.size() == 3);
    CHECK(v[0] == doctest::Approx(std_normal_cdf(-0.7) + std_normal_cdf(1.1) -
                                  std_normal_cdf(0.3)).epsilon(1e-12));
    CHECK(v[1] == doctest::Approx(std_normal_cdf(0.3) - std_normal_cdf(-0.7)).epsilon(1e-12));
    CHECK(v[2] == doctest::Approx(1.0 - std_normal_cdf(1.1)).epsilon(1e-12));
    CHECK(v[0] + v[1] + v[2] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b.classify({-2.0, 0.0}) == 0);
    CHECK(b.classify({0.0, 0.0}) == 1);
    CHECK(b.classify({1.0, 0.0}) == 0);
    CHECK(b.classify({2.0, 2.0}) == 2);

    BandPartition bad = b;
    bad.cuts = {0.3, 0.3, 1.1};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = b;
    bad.labels = {0, 1, 0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = b;
    bad.direction = {1.0, 1.0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("volume estimates agree with exact band volumes") {
    BandPartition b;
    b.direction = {1.0, 0.0};
    b.cuts = {-0.4, 0.9};
    b.labels = {0, 1, 2};
    b.k = 3;
    const long long N = 2000000;
    const VolumeEstimate est = estimate_volumes(AnyPartition{b}, {2, 0.0}, N, RngStream{26, 0});
    const std::vector<double> v = b.volumes();
    REQUIRE(est.volumes.size() == 3);
    CHECK(est.samples == N);
    for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(est.volumes[i] - v[i]) <= 4.0 * est.std_errors[i]);
        CHECK(est.std_errors[i] <= 1e-3);
    }
    CHECK_THROWS_AS(estimate_volumes(AnyPartition{b}, {2, 0.0}, 100, RngStream{26, 1}),
                    std::invalid_argument);
    CHECK(halfspace_volume(0.0) == 0.5);
    CHECK(halfspace_volume(1.3) == doctest::Approx(std_normal_cdf(1.3)).epsilon(1e-14));
    CHECK_THROWS_AS(halfspace_volume(std::nan("")), std::domain_error);
}

TEST_CASE("json round trip preserves every partition kind and its digest") {
    const FlatPartition flat = shifted_simplex(0.25, -0.5);
    BumpPatch patch{0, 2, 1.4, 0.3, 0.2, -1, "bump"};
    const PerturbedPartition pert = PerturbedPartition::create(flat, {patch});
    BandPartition band;
    band.direction = {0.0, 1.0};
    band.cuts = {0.1};
    band.labels = {1, 0};
    band.k = 2;

    for (const AnyPartition& p :
         {AnyPartition{flat}, AnyPartition{pert}, AnyPartition{band}}) {
        const nlohmann::json j = partition_to_json(p);
        const AnyPartition back = partition_from_json(j);
        CHECK(partition_to_json(back) == j);
        CHECK(partition_digest(back) == partition_digest(p));
        Rng rng(RngStream{27, 0});
        for (int s = 0; s < 2000; ++s) {
            const Vec x = {rng.normal(), rng.normal()};
            CHECK(classify_any(back, x) == classify_any(p, x));
        }
    }
    const nlohmann::json jf = partition_to_json(AnyPartition{flat});
    CHECK(jf.contains("n"));
    CHECK(jf.contains("k"));
    CHECK(jf.contains("shift"));
    CHECK(jf.contains("directions"));
    const nlohmann::json jp = partition_to_json(AnyPartition{pert});
    CHECK(jp.contains("patches"));
    // digest is sensitive to content
    FlatPartition other = flat;
    other.shift[0] += 1e-9;
    CHECK(partition_digest(AnyPartition{other}) != partition_digest(AnyPartition{flat}));
    CHECK(cell_count(AnyPartition{flat}) == 3);
    CHECK(cell_count(AnyPartition{band}) == 2);
    CHECK(partition_dim(AnyPartition{flat}) == 2);
}
