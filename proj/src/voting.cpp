#include "nslab/voting.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>

#include "nslab/util.hpp"

namespace nslab {

namespace {

constexpr int kBlocks = 64;
constexpr double kSqrt3 = 1.7320508075688772935274463415059;

void check_symbol(int s) {
    if (s < 1 || s > 3) throw std::domain_error("vote symbol must be 1, 2 or 3");
}

// Joint coordinate counts M[a*3+b] = #{j : (x_j, y_j) = (a+1, b+1)} drawn
// by conditional binomials, so one sample costs O(1) in n.
std::array<long long, 9> sample_joint_counts(const std::array<std::array<double, 3>, 3>& tab,
                                             long long n, Rng& rng) {
    std::array<long long, 9> m{};
    RngEngine eng{&rng};
    long long remaining = n;
    double psum = 1.0;
    for (int c = 0; c < 9 && remaining > 0; ++c) {
        const double p = tab[c / 3][c % 3];
        if (c == 8) {
            m[c] = remaining;
            break;
        }
        const double cond = std::clamp(p / psum, 0.0, 1.0);
        std::binomial_distribution<long long> bin(remaining, cond);
        m[c] = bin(eng);
        remaining -= m[c];
        psum -= p;
    }
    return m;
}

std::array<long long, 3> sample_counts(const std::array<double, 3>& q, long long n, Rng& rng) {
    std::array<long long, 3> c{};
    RngEngine eng{&rng};
    std::binomial_distribution<long long> b1(n, q[0]);
    c[0] = b1(eng);
    const double cond = std::clamp(q[1] / (1.0 - q[0]), 0.0, 1.0);
    std::binomial_distribution<long long> b2(n - c[0], cond);
    c[1] = b2(eng);
    c[2] = n - c[0] - c[1];
    return c;
}

template <typename PerSample>
void run_blocks(long long samples, RngStream stream, PerSample&& per_sample) {
    auto run_block = [&](int b) {
        const long long lo = samples * b / kBlocks;
        const long long hi = samples * (b + 1) / kBlocks;
        Rng rng(stream.substream(static_cast<std::uint64_t>(b)));
        for (long long s = lo; s < hi; ++s) per_sample(b, rng);
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

std::array<double, 3> BiasedMeasure::q() const {
    const double inv = 1.0 / std::sqrt(static_cast<double>(n));
    const double q1 = 1.0 / 3.0 + alpha * inv;
    const double q2 = 1.0 / 3.0 + beta * inv;
    return {q1, q2, 1.0 - q1 - q2};
}

void BiasedMeasure::validate() const {
    if (n < 1) throw std::invalid_argument("BiasedMeasure: n must be >= 1");
    const auto p = q();
    for (double v : p)
        if (!(v > 0.0 && v < 1.0))
            throw std::invalid_argument("BiasedMeasure: probabilities must lie in (0,1)");
}

void CorrelatedPairLaw::validate() const {
    base.validate();
    if (!(rho > 0.0 && rho < 1.0))
        throw std::invalid_argument("CorrelatedPairLaw: rho must lie in (0,1)");
}

std::array<std::array<double, 3>, 3> CorrelatedPairLaw::table() const {
    validate();
    const auto q = base.q();
    std::array<std::array<double, 3>, 3> tab{};
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            // group the product so the table is symmetric to the last bit
            tab[a][b] = rho * (a == b ? q[a] : 0.0) + (1.0 - rho) * (q[a] * q[b]);
    return tab;
}

int plurality(const std::vector<int>& votes) {
    if (votes.empty()) throw std::invalid_argument("plurality: empty word");
    std::array<long long, 3> counts{};
    for (int v : votes) {
        check_symbol(v);
        ++counts[v - 1];
    }
    int best = 0;
    for (int i = 1; i < 3; ++i)
        if (counts[i] > counts[best]) best = i;
    return best + 1;
}

void sample_word(const BiasedMeasure& q, Rng& rng, std::vector<int>& x) {
    const auto p = q.q();
    x.resize(static_cast<std::size_t>(q.n));
    for (auto& s : x) {
        const double u = rng.uniform();
        s = u < p[0] ? 1 : (u < p[0] + p[1] ? 2 : 3);
    }
}

void sample_pair(const CorrelatedPairLaw& law, Rng& rng, std::vector<int>& x,
                 std::vector<int>& y) {
    law.validate();
    const auto p = law.base.q();
    const auto n = static_cast<std::size_t>(law.base.n);
    x.resize(n);
    y.resize(n);
    auto draw = [&]() {
        const double u = rng.uniform();
        return u < p[0] ? 1 : (u < p[0] + p[1] ? 2 : 3);
    };
    for (std::size_t j = 0; j < n; ++j) {
        x[j] = draw();
        y[j] = rng.uniform() < law.rho ? x[j] : draw();
    }
}

void RectanglePartition::validate() const {
    if (!(radius > 0.0)) throw std::invalid_argument("RectanglePartition: radius must be > 0");
    if (resolution < 1) throw std::invalid_argument("RectanglePartition: resolution must be >= 1");
    if (labels.size() != static_cast<std::size_t>(resolution) * resolution)
        throw std::invalid_argument("RectanglePartition: labels must hold resolution^2 entries");
    for (int l : labels) check_symbol(l);
}

int RectanglePartition::label_at(double u, double v) const {
    const double cellw = 2.0 * radius / resolution;
    auto idx = [&](double t) {
        const int i = static_cast<int>(std::floor((t + radius) / cellw));
        return std::clamp(i, 0, resolution - 1);
    };
    return labels[static_cast<std::size_t>(idx(v)) * resolution + idx(u)];
}

nlohmann::json rectangles_to_json(const RectanglePartition& r) {
    return {{"radius", r.radius}, {"resolution", r.resolution}, {"labels", r.labels}};
}

RectanglePartition rectangles_from_json(const nlohmann::json& j) {
    RectanglePartition r;
    r.radius = j.at("radius").get<double>();
    r.resolution = j.at("resolution").get<int>();
    r.labels = j.at("labels").get<std::vector<int>>();
    r.validate();
    return r;
}

std::array<double, 4> StatisticEmbedding::whitening_matrix() {
    return {(3.0 + kSqrt3) / 2.0, (3.0 - kSqrt3) / 2.0, (3.0 - kSqrt3) / 2.0,
            (3.0 + kSqrt3) / 2.0};
}

std::array<double, 4> StatisticEmbedding::whitening_inverse() {
    const double a = (1.0 / 3.0 + 1.0 / kSqrt3) / 2.0;
    const double b = (1.0 / 3.0 - 1.0 / kSqrt3) / 2.0;
    return {a, b, b, a};
}

std::array<double, 2> StatisticEmbedding::statistic(const std::array<long long, 3>& counts) const {
    // X_i = (N_i - n/3)/sqrt(n) = (3 N_i - n) / (3 sqrt(n)); the numerator
    // stays in integer arithmetic.
    const double denom = 3.0 * std::sqrt(static_cast<double>(n));
    const double x1 = static_cast<double>(3 * counts[0] - n) / denom;
    const double x2 = static_cast<double>(3 * counts[1] - n) / denom;
    const auto m = whitening_matrix();
    return {m[0] * x1 + m[1] * x2, m[2] * x1 + m[3] * x2};
}

FlatPartition plurality_limit_partition(double alpha, double beta) {
    const auto sqm = StatisticEmbedding::whitening_inverse(); // Sigma^{1/2}
    auto dir_of = [&](double v1, double v2) {
        Vec d{sqm[0] * v1 + sqm[1] * v2, sqm[2] * v1 + sqm[3] * v2};
        const double nn = std::sqrt(d[0] * d[0] + d[1] * d[1]);
        return Vec{d[0] / nn, d[1] / nn};
    };
    const auto w = StatisticEmbedding::whitening_matrix();
    FlatPartition p;
    p.n = 2;
    p.k = 3;
    p.shift = {-(w[0] * alpha + w[1] * beta), -(w[2] * alpha + w[3] * beta)};
    p.directions = {dir_of(1.0, 0.0), dir_of(0.0, 1.0), dir_of(-1.0, -1.0)};
    p.validate();
    return p;
}

int VotingFunction::label_from_counts(const std::array<long long, 3>& counts) const {
    if (kind == Kind::Plurality) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (counts[i] > counts[best]) best = i;
        return best + 1;
    }
    const StatisticEmbedding emb{n};
    const auto wst = emb.statistic(counts);
    return rect.label_at(wst[0] - offset[0], wst[1] - offset[1]);
}

int VotingFunction::evaluate(const std::vector<int>& votes) const {
    if (static_cast<long long>(votes.size()) != n)
        throw std::invalid_argument("VotingFunction: word length mismatch");
    std::array<long long, 3> counts{};
    for (int v : votes) {
        check_symbol(v);
        ++counts[v - 1];
    }
    return label_from_counts(counts);
}

DiscreteEstimate discrete_stability(const VotingFunction& f, const CorrelatedPairLaw& law,
                                    long long samples, RngStream stream) {
    law.validate();
    if (samples < 1000) throw std::invalid_argument("discrete_stability: samples must be >= 1000");
    if (f.n != law.base.n) throw std::invalid_argument("discrete_stability: n mismatch");
    const auto tab = law.table();
    const long long n = law.base.n;
    std::vector<long long> agree(kBlocks, 0);
    run_blocks(samples, stream, [&](int b, Rng& rng) {
        const auto m = sample_joint_counts(tab, n, rng);
        std::array<long long, 3> cx{}, cy{};
        for (int c = 0; c < 9; ++c) {
            cx[c / 3] += m[c];
            cy[c % 3] += m[c];
        }
        if (f.label_from_counts(cx) == f.label_from_counts(cy)) ++agree[b];
    });
    long long total = 0;
    for (long long a : agree) total += a;
    DiscreteEstimate est;
    est.value = static_cast<double>(total) / static_cast<double>(samples);
    est.std_error = std::sqrt(est.value * (1.0 - est.value) / static_cast<double>(samples));
    est.samples = samples;
    est.method = "mc";
    return est;
}

DiscretePaired discrete_stability_paired(const VotingFunction& fa, const VotingFunction& fb,
                                         const CorrelatedPairLaw& law, long long samples,
                                         RngStream stream) {
    law.validate();
    if (samples < 1000) throw std::invalid_argument("discrete_stability: samples must be >= 1000");
    if (fa.n != law.base.n || fb.n != law.base.n)
        throw std::invalid_argument("discrete_stability: n mismatch");
    const auto tab = law.table();
    const long long n = law.base.n;
    std::vector<long long> agree_a(kBlocks, 0), agree_b(kBlocks, 0), dsum(kBlocks, 0),
        d2sum(kBlocks, 0);
    run_blocks(samples, stream, [&](int b, Rng& rng) {
        const auto m = sample_joint_counts(tab, n, rng);
        std::array<long long, 3> cx{}, cy{};
        for (int c = 0; c < 9; ++c) {
            cx[c / 3] += m[c];
            cy[c % 3] += m[c];
        }
        const int da = fa.label_from_counts(cx) == fa.label_from_counts(cy) ? 1 : 0;
        const int db = fb.label_from_counts(cx) == fb.label_from_counts(cy) ? 1 : 0;
        agree_a[b] += da;
        agree_b[b] += db;
        dsum[b] += db - da;
        d2sum[b] += (db - da) * (db - da);
    });
    long long ta = 0, tb = 0, td = 0, td2 = 0;
    for (int b = 0; b < kBlocks; ++b) {
        ta += agree_a[b];
        tb += agree_b[b];
        td += dsum[b];
        td2 += d2sum[b];
    }
    const double ns = static_cast<double>(samples);
    auto fill = [&](long long count) {
        DiscreteEstimate e;
        e.value = static_cast<double>(count) / ns;
        e.std_error = std::sqrt(e.value * (1.0 - e.value) / ns);
        e.samples = samples;
        e.method = "mc";
        return e;
    };
    DiscretePaired out;
    out.a = fill(ta);
    out.b = fill(tb);
    out.diff = static_cast<double>(td) / ns;
    const double m2 = static_cast<double>(td2) / ns;
    out.diff_se = std::sqrt(std::max(0.0, m2 - out.diff * out.diff) / ns);
    return out;
}

namespace {

long long ipow(long long b, int e) {
    long long r = 1;
    while (e-- > 0) r *= b;
    return r;
}

std::vector<int> word_labels(const VotingFunction& f, int n) {
    const long long total = ipow(3, n);
    std::vector<int> labels(static_cast<std::size_t>(total));
    for (long long code = 0; code < total; ++code) {
        std::array<long long, 3> counts{};
        long long c = code;
        for (int j = 0; j < n; ++j) {
            ++counts[c % 3];
            c /= 3;
        }
        labels[static_cast<std::size_t>(code)] = f.label_from_counts(counts);
    }
    return labels;
}

} // namespace

DiscreteEstimate discrete_stability_exact(const VotingFunction& f, const CorrelatedPairLaw& law) {
    law.validate();
    if (f.n != law.base.n) throw std::invalid_argument("discrete_stability_exact: n mismatch");
    if (law.base.n > 8)
        throw std::runtime_error("discrete_stability_exact: unsupported for n > 8");
    const int n = static_cast<int>(law.base.n);
    const auto tab = law.table();
    const auto labels = word_labels(f, n);
    const long long total = ipow(3, n);
    double value = 0.0;
    for (long long cx = 0; cx < total; ++cx) {
        std::array<int, 8> xd{};
        long long c = cx;
        for (int j = 0; j < n; ++j) {
            xd[j] = static_cast<int>(c % 3);
            c /= 3;
        }
        const int lx = labels[static_cast<std::size_t>(cx)];
        for (long long cy = 0; cy < total; ++cy) {
            if (labels[static_cast<std::size_t>(cy)] != lx) continue;
            double p = 1.0;
            long long d = cy;
            for (int j = 0; j < n; ++j) {
                p *= tab[xd[j]][d % 3];
                d /= 3;
            }
            value += p;
        }
    }
    DiscreteEstimate est;
    est.value = value;
    est.std_error = 0.0;
    est.samples = total * total;
    est.method = "exact";
    return est;
}

std::array<double, 3> label_frequencies(const VotingFunction& f, const BiasedMeasure& q,
                                        long long samples, RngStream stream) {
    q.validate();
    if (samples < 1000) throw std::invalid_argument("label_frequencies: samples must be >= 1000");
    const auto p = q.q();
    std::vector<std::array<long long, 3>> hits(kBlocks, {0, 0, 0});
    run_blocks(samples, stream, [&](int b, Rng& rng) {
        const auto counts = sample_counts(p, q.n, rng);
        ++hits[b][f.label_from_counts(counts) - 1];
    });
    std::array<double, 3> freq{};
    for (int b = 0; b < kBlocks; ++b)
        for (int i = 0; i < 3; ++i) freq[i] += static_cast<double>(hits[b][i]);
    for (double& v : freq) v /= static_cast<double>(samples);
    return freq;
}

double influence(const VotingFunction& f, const BiasedMeasure& q, int coord,
                 InfluenceMethod method, long long samples, RngStream stream) {
    q.validate();
    if (coord < 0 || coord >= q.n) throw std::domain_error("influence: coordinate out of range");
    const auto p = q.q();
    const long long n = q.n;

    if (method == InfluenceMethod::Exact) {
        if (n > 8) throw std::runtime_error("influence: exact method unsupported for n > 8");
        const int ni = static_cast<int>(n);
        const long long total = ipow(3, ni);
        double value = 0.0;
        for (long long code = 0; code < total; ++code) {
            std::array<long long, 3> counts{};
            long long c = code;
            double px = 1.0;
            int xi = 0;
            for (int j = 0; j < ni; ++j) {
                const int d = static_cast<int>(c % 3);
                if (j == coord) xi = d;
                ++counts[d];
                px *= p[d];
                c /= 3;
            }
            const int before = f.label_from_counts(counts);
            for (int b = 0; b < 3; ++b) {
                if (b == xi) continue;
                auto mod = counts;
                --mod[xi];
                ++mod[b];
                if (f.label_from_counts(mod) != before) value += px * p[b];
            }
        }
        return value;
    }

    if (samples < 1000) throw std::invalid_argument("influence: samples must be >= 1000");
    std::vector<long long> flips(kBlocks, 0);
    run_blocks(samples, stream, [&](int b, Rng& rng) {
        auto counts = sample_counts(p, n, rng);
        // Conditioned on the counts, the coordinate's symbol is a in
        // proportion N_a : the word is exchangeable.
        const double u = rng.uniform() * static_cast<double>(n);
        int a = 0;
        if (u >= static_cast<double>(counts[0])) a = u < static_cast<double>(counts[0] + counts[1]) ? 1 : 2;
        const double v = rng.uniform();
        const int nb = v < p[0] ? 0 : (v < p[0] + p[1] ? 1 : 2);
        if (a == nb) return;
        const int before = f.label_from_counts(counts);
        --counts[a];
        ++counts[nb];
        if (f.label_from_counts(counts) != before) ++flips[b];
    });
    long long total = 0;
    for (long long v : flips) total += v;
    return static_cast<double>(total) / static_cast<double>(samples);
}

VotingFunction build_competitor(const RectanglePartition& rects, long long n,
                                std::array<double, 2> offset) {
    rects.validate();
    if (n < 1) throw std::invalid_argument("build_competitor: n must be >= 1");
    VotingFunction f;
    f.kind = VotingFunction::Kind::Rectangle;
    f.n = n;
    f.rect = rects;
    f.offset = offset;
    return f;
}

RectanglePartition rectangle_approximate(const AnyPartition& p, int resolution, double radius) {
    if (partition_dim(p) != 2)
        throw std::invalid_argument("rectangle_approximate: n=2 partition required");
    if (resolution < 16) throw std::invalid_argument("rectangle_approximate: resolution >= 16");
    if (!(radius > 0.0)) throw std::invalid_argument("rectangle_approximate: radius must be > 0");
    RectanglePartition r;
    r.radius = radius;
    r.resolution = resolution;
    r.labels.resize(static_cast<std::size_t>(resolution) * resolution);
    const double cellw = 2.0 * radius / resolution;
    for (int row = 0; row < resolution; ++row) {
        const double v = -radius + (row + 0.5) * cellw;
        for (int col = 0; col < resolution; ++col) {
            const double u = -radius + (col + 0.5) * cellw;
            r.labels[static_cast<std::size_t>(row) * resolution + col] =
                classify_any(p, Vec{u, v}) + 1;
        }
    }
    return r;
}

namespace {

void put_u64(std::ostream& os, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(buf, 8);
}

std::uint64_t get_u64(std::istream& is) {
    char buf[8];
    is.read(buf, 8);
    if (!is) throw std::runtime_error("vote stream: truncated header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return v;
}

} // namespace

void write_vote_stream(std::ostream& os, long long n,
                       const std::vector<std::vector<int>>& words) {
    put_u64(os, static_cast<std::uint64_t>(n));
    put_u64(os, static_cast<std::uint64_t>(words.size()));
    const std::size_t bytes = (static_cast<std::size_t>(n) * 2 + 7) / 8;
    std::vector<char> buf(bytes);
    for (const auto& w : words) {
        if (static_cast<long long>(w.size()) != n)
            throw std::invalid_argument("vote stream: word length mismatch");
        std::fill(buf.begin(), buf.end(), 0);
        for (long long j = 0; j < n; ++j) {
            check_symbol(w[j]);
            const unsigned val = static_cast<unsigned>(w[j] - 1);
            buf[j / 4] |= static_cast<char>(val << (2 * (j % 4)));
        }
        os.write(buf.data(), static_cast<std::streamsize>(bytes));
    }
}

std::vector<std::vector<int>> read_vote_stream(std::istream& is, long long& n) {
    n = static_cast<long long>(get_u64(is));
    const auto count = static_cast<long long>(get_u64(is));
    if (n < 1 || count < 0) throw std::runtime_error("vote stream: invalid header");
    const std::size_t bytes = (static_cast<std::size_t>(n) * 2 + 7) / 8;
    std::vector<char> buf(bytes);
    std::vector<std::vector<int>> words;
    words.reserve(static_cast<std::size_t>(count));
    for (long long w = 0; w < count; ++w) {
        is.read(buf.data(), static_cast<std::streamsize>(bytes));
        if (!is) throw std::runtime_error("vote stream: truncated payload");
        std::vector<int> word(static_cast<std::size_t>(n));
        for (long long j = 0; j < n; ++j) {
            const unsigned val =
                (static_cast<unsigned char>(buf[j / 4]) >> (2 * (j % 4))) & 0x3u;
            if (val > 2) throw std::runtime_error("vote stream: invalid symbol");
            word[static_cast<std::size_t>(j)] = static_cast<int>(val) + 1;
        }
        words.push_back(std::move(word));
    }
    return words;
}

} // namespace nslab
