#include "nslab/partition.hpp"

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

double norm(const Vec& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace

void FlatPartition::validate() const {
    if (n < 1) throw std::invalid_argument("FlatPartition: n must be >= 1");
    if (k < 1 || k > n + 1) throw std::invalid_argument("FlatPartition: need 1 <= k <= n+1");
    if (static_cast<int>(shift.size()) != n)
        throw std::invalid_argument("FlatPartition: shift dimension mismatch");
    if (static_cast<int>(directions.size()) != k)
        throw std::invalid_argument("FlatPartition: need k direction vectors");
    for (const Vec& d : directions) {
        if (static_cast<int>(d.size()) != n)
            throw std::invalid_argument("FlatPartition: direction dimension mismatch");
        if (norm(d) < 1e-14)
            throw std::invalid_argument("FlatPartition: zero direction vector");
    }
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) {
            const double ni = norm(directions[i]), nj = norm(directions[j]);
            double diff = 0.0;
            for (int m = 0; m < n; ++m) {
                const double d = directions[i][m] / ni - directions[j][m] / nj;
                diff += d * d;
            }
            if (std::sqrt(diff) < 1e-12)
                throw std::invalid_argument(
                    "FlatPartition: directions must not be positive multiples of each other");
        }
    }
}

int FlatPartition::classify(const Vec& x) const {
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < k; ++i) {
        double s = 0.0;
        for (int m = 0; m < n; ++m) s += (x[m] - shift[m]) * directions[i][m];
        if (s > best_score) {
            best_score = s;
            best = i;
        }
    }
    return best;
}

namespace {

std::vector<Vec> simplex_directions(int n) {
    if (n == 1) return {{1.0}, {-1.0}};
    std::vector<Vec> prev = simplex_directions(n - 1);
    std::vector<Vec> out;
    out.reserve(n + 1);
    Vec first(n, 0.0);
    first[0] = 1.0;
    out.push_back(first);
    const double a = -1.0 / n;
    const double scale = std::sqrt(1.0 - a * a);
    for (const Vec& v : prev) {
        Vec d(n);
        d[0] = a;
        for (int m = 0; m < n - 1; ++m) d[m + 1] = scale * v[m];
        out.push_back(d);
    }
    return out;
}

} // namespace

FlatPartition make_standard_simplex(const StandardSimplexSpec& spec) {
    if (spec.n < 1) throw std::invalid_argument("make_standard_simplex: n must be >= 1");
    FlatPartition p;
    p.n = spec.n;
    p.k = spec.n + 1;
    p.shift = spec.shift.empty() ? Vec(spec.n, 0.0) : spec.shift;
    if (static_cast<int>(p.shift.size()) != spec.n)
        throw std::invalid_argument("make_standard_simplex: shift dimension mismatch");
    p.directions = simplex_directions(spec.n);
    p.validate();
    return p;
}

double bump_profile(double u) {
    if (std::abs(u) >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - u * u));
}

double FacetFrame::t_min() const {
    if (!has_vertex) return -std::numeric_limits<double>::infinity();
    return t_vertex / lambda;
}

std::optional<FacetFrame> facet_frame(const FlatPartition& p, int i, int j) {
    p.validate();
    if (p.n != 2) throw std::invalid_argument("facet_frame: only n=2 supported");
    if (p.k > 3) throw std::invalid_argument("facet_frame: only k <= 3 supported");
    if (i == j || i < 0 || j < 0 || i >= p.k || j >= p.k)
        throw std::invalid_argument("facet_frame: bad cell pair");

    const Vec& yi = p.directions[i];
    const Vec& yj = p.directions[j];
    Vec2 nvec{yj[0] - yi[0], yj[1] - yi[1]};
    const double nn = std::sqrt(dot2(nvec, nvec));
    if (nn < 1e-14) return std::nullopt;
    nvec = {nvec[0] / nn, nvec[1] / nn};

    FacetFrame f;
    f.i = i;
    f.j = j;
    f.N = nvec;
    f.c = p.shift[0] * nvec[0] + p.shift[1] * nvec[1];
    f.dir = perp2(nvec);
    f.lambda = 1.0;
    if (p.k == 3) {
        const int q = 3 - i - j;
        const Vec& yp = p.directions[q];
        const Vec2 rel{yi[0] - yp[0], yi[1] - yp[1]};
        const double g = dot2(f.dir, rel);
        if (std::abs(g) < 1e-12) return std::nullopt; // degenerate: no shared facet
        if (g < 0.0) f.dir = {-f.dir[0], -f.dir[1]};
        f.has_vertex = true;
        f.t_vertex = p.shift[0] * f.dir[0] + p.shift[1] * f.dir[1];
        f.lambda = std::max(1.0, f.t_vertex);
    }
    return f;
}

PerturbedPartition PerturbedPartition::create(FlatPartition base, std::vector<BumpPatch> patches) {
    base.validate();
    PerturbedPartition p;
    p.base = std::move(base);
    p.patches = std::move(patches);
    p.frames.reserve(p.patches.size());
    for (const BumpPatch& patch : p.patches) {
        if (!(patch.height > 0.0) || !(patch.half_width > 0.0))
            throw std::invalid_argument("BumpPatch: height and half_width must be positive");
        if (patch.sign != 1 && patch.sign != -1)
            throw std::invalid_argument("BumpPatch: sign must be +1 or -1");
        auto f = facet_frame(p.base, patch.facet_i, patch.facet_j);
        if (!f) throw std::invalid_argument("BumpPatch: cells do not share a facet");
        if (patch.center_t - patch.half_width < f->t_min())
            throw std::invalid_argument("BumpPatch: support leaves the facet");
        p.frames.push_back(*f);
    }
    for (std::size_t a = 0; a < p.patches.size(); ++a) {
        for (std::size_t b = a + 1; b < p.patches.size(); ++b) {
            const BumpPatch& pa = p.patches[a];
            const BumpPatch& pb = p.patches[b];
            const bool same_facet =
                (std::min(pa.facet_i, pa.facet_j) == std::min(pb.facet_i, pb.facet_j)) &&
                (std::max(pa.facet_i, pa.facet_j) == std::max(pb.facet_i, pb.facet_j));
            if (same_facet &&
                std::abs(pa.center_t - pb.center_t) < pa.half_width + pb.half_width)
                throw std::invalid_argument("BumpPatch: overlapping supports on one facet");
        }
    }
    return p;
}

int PerturbedPartition::classify(const Vec& x) const {
    int label = base.classify(x);
    const Vec2 x2{x[0], x[1]};
    for (std::size_t m = 0; m < patches.size(); ++m) {
        const BumpPatch& patch = patches[m];
        const FacetFrame& f = frames[m];
        if (label != f.i && label != f.j) continue;
        const double u = (f.t_of(x2) - patch.center_t) / patch.half_width;
        if (std::abs(u) >= 1.0) continue;
        const double s = f.s_of(x2);
        const double top = patch.height * bump_profile(u);
        if (patch.sign > 0) {
            // carve [0, top] on the A_j side over to A_i
            if (s >= 0.0 && s <= top) label = f.i;
        } else {
            if (s <= 0.0 && s >= -top) label = f.j;
        }
    }
    return label;
}

double patch_area(const FacetFrame& f, const BumpPatch& patch) {
    const double inv_sqrt2pi = 0.39894228040143267794;
    auto integrand = [&](double t) {
        const double u = (t - patch.center_t) / patch.half_width;
        const double top = patch.height * bump_profile(u);
        double band;
        if (patch.sign > 0)
            band = std_normal_cdf(f.c + top) - std_normal_cdf(f.c);
        else
            band = std_normal_cdf(f.c) - std_normal_cdf(f.c - top);
        const double tl = t * f.lambda;
        return f.lambda * inv_sqrt2pi * std::exp(-0.5 * tl * tl) * band;
    };
    return integrate_gl(integrand, patch.center_t - patch.half_width,
                        patch.center_t + patch.half_width, 200);
}

void BandPartition::validate() const {
    if (cuts.empty()) throw std::invalid_argument("BandPartition: need at least one cut");
    for (std::size_t i = 1; i < cuts.size(); ++i)
        if (!(cuts[i] > cuts[i - 1]))
            throw std::invalid_argument("BandPartition: cuts must be strictly increasing");
    if (labels.size() != cuts.size() + 1)
        throw std::invalid_argument("BandPartition: need cuts.size()+1 labels");
    for (int l : labels)
        if (l < 0 || l >= k) throw std::invalid_argument("BandPartition: label out of range");
    const double dn = std::sqrt(dot2(direction, direction));
    if (std::abs(dn - 1.0) > 1e-12)
        throw std::invalid_argument("BandPartition: direction must be unit");
}

int BandPartition::classify(const Vec& x) const {
    const double v = x[0] * direction[0] + x[1] * direction[1];
    const auto it = std::upper_bound(cuts.begin(), cuts.end(), v);
    return labels[static_cast<std::size_t>(it - cuts.begin())];
}

std::vector<double> BandPartition::volumes() const {
    std::vector<double> vols(k, 0.0);
    double prev = 0.0; // CDF at -inf
    for (std::size_t b = 0; b <= cuts.size(); ++b) {
        const double cur = (b < cuts.size()) ? std_normal_cdf(cuts[b]) : 1.0;
        vols[labels[b]] += cur - prev;
        prev = cur;
    }
    return vols;
}

int classify_any(const AnyPartition& p, const Vec& x) {
    return std::visit([&](const auto& q) { return q.classify(x); }, p);
}

int cell_count(const AnyPartition& p) {
    return std::visit(
        [](const auto& q) -> int {
            using T = std::decay_t<decltype(q)>;
            if constexpr (std::is_same_v<T, FlatPartition>)
                return q.k;
            else if constexpr (std::is_same_v<T, PerturbedPartition>)
                return q.base.k;
            else
                return q.k;
        },
        p);
}

int partition_dim(const AnyPartition& p) {
    return std::visit(
        [](const auto& q) -> int {
            using T = std::decay_t<decltype(q)>;
            if constexpr (std::is_same_v<T, FlatPartition>)
                return q.n;
            else if constexpr (std::is_same_v<T, PerturbedPartition>)
                return q.base.n;
            else
                return 2;
        },
        p);
}

VolumeEstimate estimate_volumes(const AnyPartition& p, const CorrelatedGaussianModel& model,
                                long long samples, RngStream stream) {
    model.validate();
    if (samples < 1000) throw std::invalid_argument("estimate_volumes: samples must be >= 1000");
    const int k = cell_count(p);
    const int n = model.n;
    const int nblocks = 64;

    auto run_block = [&](int b) {
        const long long lo = samples * b / nblocks;
        const long long hi = samples * (b + 1) / nblocks;
        Rng rng(stream.substream(static_cast<std::uint64_t>(b)));
        std::vector<long long> counts(k, 0);
        Vec x(n);
        for (long long s = lo; s < hi; ++s) {
            for (int m = 0; m < n; ++m) x[m] = rng.normal();
            ++counts[classify_any(p, x)];
        }
        return counts;
    };

    std::vector<std::vector<long long>> block_counts(nblocks);
    const int workers = worker_count();
    std::vector<std::future<void>> futs;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w) {
        futs.push_back(std::async(std::launch::async, [&]() {
            int b;
            while ((b = next.fetch_add(1)) < nblocks) block_counts[b] = run_block(b);
        }));
    }
    for (auto& f : futs) f.get();

    std::vector<long long> total(k, 0);
    for (const auto& bc : block_counts)
        for (int i = 0; i < k; ++i) total[i] += bc[i];

    VolumeEstimate est;
    est.samples = samples;
    est.volumes.resize(k);
    est.std_errors.resize(k);
    for (int i = 0; i < k; ++i) {
        const double a = static_cast<double>(total[i]) / static_cast<double>(samples);
        est.volumes[i] = a;
        est.std_errors[i] = std::sqrt(a * (1.0 - a) / static_cast<double>(samples));
    }
    return est;
}

double halfspace_volume(double a_offset) {
    if (std::isnan(a_offset)) throw std::domain_error("halfspace_volume: NaN offset");
    return std_normal_cdf(a_offset);
}

namespace {

nlohmann::json patch_to_json(const BumpPatch& b) {
    return {{"facet", {b.facet_i, b.facet_j}}, {"center_t", b.center_t},
            {"half_width", b.half_width},      {"height", b.height},
            {"sign", b.sign},                  {"profile", b.profile}};
}

BumpPatch patch_from_json(const nlohmann::json& j) {
    BumpPatch b;
    b.facet_i = j.at("facet").at(0).get<int>();
    b.facet_j = j.at("facet").at(1).get<int>();
    b.center_t = j.at("center_t").get<double>();
    b.half_width = j.at("half_width").get<double>();
    b.height = j.at("height").get<double>();
    b.sign = j.at("sign").get<int>();
    b.profile = j.value("profile", std::string("bump"));
    return b;
}

} // namespace

nlohmann::json partition_to_json(const AnyPartition& p) {
    return std::visit(
        [](const auto& q) -> nlohmann::json {
            using T = std::decay_t<decltype(q)>;
            if constexpr (std::is_same_v<T, FlatPartition>) {
                return {{"n", q.n}, {"k", q.k}, {"shift", q.shift},
                        {"directions", q.directions}, {"patches", nlohmann::json::array()}};
            } else if constexpr (std::is_same_v<T, PerturbedPartition>) {
                nlohmann::json patches = nlohmann::json::array();
                for (const BumpPatch& b : q.patches) patches.push_back(patch_to_json(b));
                return {{"n", q.base.n}, {"k", q.base.k}, {"shift", q.base.shift},
                        {"directions", q.base.directions}, {"patches", patches}};
            } else {
                return {{"type", "bands"},
                        {"direction", q.direction},
                        {"cuts", q.cuts},
                        {"labels", q.labels},
                        {"k", q.k}};
            }
        },
        p);
}

AnyPartition partition_from_json(const nlohmann::json& j) {
    if (j.contains("type") && j.at("type") == "bands") {
        BandPartition b;
        b.direction = {j.at("direction").at(0).get<double>(), j.at("direction").at(1).get<double>()};
        b.cuts = j.at("cuts").get<std::vector<double>>();
        b.labels = j.at("labels").get<std::vector<int>>();
        b.k = j.at("k").get<int>();
        b.validate();
        return b;
    }
    FlatPartition p;
    p.n = j.at("n").get<int>();
    p.k = j.at("k").get<int>();
    p.shift = j.at("shift").get<Vec>();
    p.directions = j.at("directions").get<std::vector<Vec>>();
    p.validate();
    if (j.contains("patches") && !j.at("patches").empty()) {
        std::vector<BumpPatch> patches;
        for (const auto& pj : j.at("patches")) patches.push_back(patch_from_json(pj));
        return PerturbedPartition::create(std::move(p), std::move(patches));
    }
    return p;
}

std::string partition_digest(const AnyPartition& p) {
    return fnv1a64_hex(partition_to_json(p).dump());
}

} // namespace nslab
