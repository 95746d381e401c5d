#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nslab/gaussian.hpp"
#include "nslab/ou.hpp"
#include "nslab/partition.hpp"
#include "nslab/perturbation.hpp"
#include "nslab/stability.hpp"
#include "nslab/util.hpp"
#include "nslab/voting.hpp"

using nlohmann::json;
using namespace nslab;

namespace {

constexpr const char* kVersion = "nslab 0.1.0";

struct ConfigError {
    std::string message;
};

// Parse JSON text, reporting line/column on failure.
json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
        byte = std::min(byte, text.size());
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i < byte; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::ostringstream os;
        os << origin << ":" << line << ":" << col << ": " << e.what();
        throw ConfigError{os.str()};
    }
}

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError{"cannot open config file: " + path};
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_json_text(buf.str(), path);
}

// A partition config entry is either an inline JSON object or a file path.
AnyPartition partition_from_config(const json& entry) {
    if (entry.is_string()) {
        const json j = load_config_file(entry.get<std::string>());
        return partition_from_json(j);
    }
    return partition_from_json(entry);
}

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// The digest covers everything that must reproduce bit-exactly; the
// timestamp deliberately stays outside it.
json make_record(const std::string& command, const json& config, const json& results) {
    const json digest_input = {{"command", command}, {"config", config}, {"results", results}};
    return json{{"command", command},
                {"config", config},
                {"results", results},
                {"version", kVersion},
                {"digest", fnv1a64_hex(digest_input.dump())},
                {"timestamp", timestamp_utc()}};
}

// Shared output plumbing: summary lines go to stdout; the record (or CSV
// payload) goes to --out when given, otherwise follows on stdout.
struct Emitter {
    std::string out_path;
    std::string format = "json";

    void emit(const json& record, const std::string& csv_payload = "") const {
        const std::string payload =
            (format == "csv" && !csv_payload.empty()) ? csv_payload : record.dump(2) + "\n";
        if (!out_path.empty()) {
            std::ofstream out(out_path);
            if (!out) throw ConfigError{"cannot open output file: " + out_path};
            out << payload;
        } else {
            std::cout << payload;
        }
    }
};

// Merged view over defaults, a config file, and explicit flags.
class Settings {
public:
    Settings(json defaults, const std::string& config_path) : merged_(std::move(defaults)) {
        if (!config_path.empty()) {
            const json file = load_config_file(config_path);
            if (!file.is_object()) throw ConfigError{"config root must be a JSON object"};
            for (auto it = file.begin(); it != file.end(); ++it) merged_[it.key()] = it.value();
        }
    }

    void override_with(const std::string& key, const json& value) { merged_[key] = value; }

    template <typename T>
    [[nodiscard]] T get(const std::string& key) const {
        try {
            return merged_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError{"config field '" + key + "': " + e.what()};
        }
    }

    [[nodiscard]] const json& raw(const std::string& key) const { return merged_.at(key); }
    [[nodiscard]] bool has(const std::string& key) const { return merged_.contains(key); }
    [[nodiscard]] const json& resolved() const { return merged_; }

private:
    json merged_;
};

void check_rho_range(double rho) {
    if (!(rho > -1.0 && rho < 1.0)) throw ConfigError{"rho must lie in (-1, 1)"};
}

json default_simplex_json() {
    return partition_to_json(AnyPartition{make_standard_simplex({2, {}})});
}

json shifted_simplex_json(double scale) {
    auto simp = make_standard_simplex({2, {}});
    simp.shift = {scale * simp.directions[0][0], scale * simp.directions[0][1]};
    return partition_to_json(AnyPartition{simp});
}

// ---------------------------------------------------------------- stability

int cmd_stability(const Settings& s, const Emitter& emit) {
    const AnyPartition p = partition_from_config(s.raw("partition"));
    const double rho = s.get<double>("rho");
    check_rho_range(rho);
    const long long samples = s.get<long long>("samples");
    const RngStream stream{s.get<std::uint64_t>("seed"), 0};
    const CorrelatedGaussianModel model{partition_dim(p), rho};

    const StabilityEstimate mc = stability_mc(p, model, samples, stream);
    json results = {{"mc", estimate_to_json(mc)}};
    std::cout << "S_rho = " << mc.value << " +- " << mc.std_error << " (mc, " << samples
              << " samples)\n";
    if (std::holds_alternative<FlatPartition>(p) && partition_dim(p) == 2 && rho != 0.0) {
        const StabilityEstimate q = stability_quadrature(p, model, s.get<int>("order"));
        results["quadrature"] = estimate_to_json(q);
        std::cout << "S_rho = " << q.value << " (quadrature, order " << s.get<int>("order")
                  << ")\n";
    }
    emit.emit(make_record("stability", s.resolved(), results));
    return 0;
}

// ------------------------------------------------------------------- limits

int cmd_limits(const Settings& s, const Emitter& emit) {
    const AnyPartition any = partition_from_config(s.raw("partition"));
    if (!std::holds_alternative<FlatPartition>(any))
        throw ConfigError{"limits requires a flat partition"};
    const FlatPartition& p = std::get<FlatPartition>(any);
    const double rho = s.get<double>("rho");
    check_rho_range(rho);
    const int i = s.get<int>("i");
    const int j = s.get<int>("j");
    const double t_max = s.get<double>("t_max");
    const int points = s.get<int>("points");
    if (points < 2) throw ConfigError{"points must be >= 2"};

    const LineRestriction lr = make_line_restriction(p, i, j);
    json grid = json::array();
    std::ostringstream csv;
    csv << "t,value\n";
    for (int g = 0; g < points; ++g) {
        const double t = -t_max + 2.0 * t_max * g / (points - 1);
        const double v = line_difference(p, lr, rho, t);
        grid.push_back({t, v});
        csv << t << "," << v << "\n";
    }
    const double plateau_plus = line_difference(p, lr, rho, t_max);
    const double plateau_minus = line_difference(p, lr, rho, -t_max);
    // Magnitude of the nonzero plateau; for rho < 0 it sits at t -> -inf
    // and uses the signed rho in the (1 - rho) factor.
    const double closed_form =
        lr.c == 0.0 ? 0.0
                    : 2.0 * (std_normal_cdf(std::abs(lr.c) * (1.0 - rho) /
                                            std::sqrt(1.0 - rho * rho)) -
                             0.5);
    json results = {{"c", lr.c},
                    {"t_min", lr.t_min},
                    {"plateau_plus", plateau_plus},
                    {"plateau_minus", plateau_minus},
                    {"closed_form_magnitude", std::abs(closed_form)},
                    {"carrier", rho > 0.0 ? "+inf" : "-inf"},
                    {"grid", grid}};
    std::cout << "c = " << lr.c << ", plateau(+" << t_max << ") = " << plateau_plus
              << ", plateau(-" << t_max << ") = " << plateau_minus
              << ", closed form magnitude = " << std::abs(closed_form) << "\n";
    emit.emit(make_record("limits", s.resolved(), results), csv.str());
    return 0;
}

// ------------------------------------------------------------------ improve

int cmd_improve(const Settings& s, const Emitter& emit) {
    const AnyPartition any = partition_from_config(s.raw("partition"));
    if (!std::holds_alternative<FlatPartition>(any))
        throw ConfigError{"improve requires a flat partition"};
    const FlatPartition& p = std::get<FlatPartition>(any);
    const double rho = s.get<double>("rho");
    check_rho_range(rho);
    const long long samples = s.get<long long>("samples");
    const int budget = s.get<int>("budget");
    const RngStream stream{s.get<std::uint64_t>("seed"), 0};

    const CorrelatedGaussianModel model{p.n, rho};
    const StabilityEstimate baseline = stability_mc(AnyPartition{p}, model, samples,
                                                    stream.substream(999));
    auto [best, report] = improve(p, rho, budget, samples, stream);

    json results = {{"baseline", estimate_to_json(baseline)},
                    {"report", report_to_json(report)},
                    {"perturbed_partition", partition_to_json(best)}};
    std::cout << "baseline S_rho = " << baseline.value << " +- " << baseline.std_error << "\n";
    if (report.trials.empty()) {
        std::cout << report.message << "\n";
    } else {
        const ImproveTrial& t = report.trials[static_cast<std::size_t>(report.best_index)];
        std::cout << "best perturbed S_rho = " << t.value << " (delta = " << t.delta
                  << "), margin = " << t.diff / t.std_error << " SE\n";
    }
    emit.emit(make_record("improve", s.resolved(), results));
    return 0;
}

// ---------------------------------------------------------------- plurality

// Band rearrangement with the plurality limit's exact cell volumes: the
// largest cell first, the smallest in the middle, the remaining one last.
// At strongly unbalanced volumes this beats the simplex-type partition by a
// margin the discrete comparison can resolve.
BandPartition competitor_band(const FlatPartition& plim) {
    std::array<double, 3> v{};
    for (int i = 0; i < 3; ++i)
        v[static_cast<std::size_t>(i)] = gamma2_measure(ConeCell2D::from_flat_cell(plim, i));
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return v[static_cast<std::size_t>(a)] > v[static_cast<std::size_t>(b)];
    });
    // order = {largest, middle, smallest}; band layout largest, smallest, middle
    BandPartition band;
    band.direction = {1.0, 0.0};
    const double m0 = v[static_cast<std::size_t>(order[0])];
    const double m1 = v[static_cast<std::size_t>(order[2])];
    band.cuts = {std_normal_quantile(m0), std_normal_quantile(m0 + m1)};
    band.labels = {order[0], order[2], order[1]};
    band.k = 3;
    return band;
}

int cmd_plurality(const Settings& s, const Emitter& emit) {
    const double alpha = s.get<double>("alpha");
    const double beta = s.get<double>("beta");
    const double rho = s.get<double>("rho");
    check_rho_range(rho);
    const long long n = s.get<long long>("n");
    const long long samples = s.get<long long>("samples");
    const RngStream stream{s.get<std::uint64_t>("seed"), 0};

    if (alpha == 0.0 && beta == 0.0)
        std::cerr << "warning: the unbalanced-vote hypothesis requires (alpha, beta) != (0, 0)\n";

    const FlatPartition plim = plurality_limit_partition(alpha, beta);
    RectanglePartition rect;
    if (s.has("competitor") && !s.raw("competitor").is_null()) {
        const json& entry = s.raw("competitor");
        rect = rectangles_from_json(entry.is_string()
                                        ? load_config_file(entry.get<std::string>())
                                        : entry);
    } else {
        rect = rectangle_approximate(AnyPartition{competitor_band(plim)}, s.get<int>("resolution"),
                                     s.get<double>("radius"));
    }
    const VotingFunction comp = build_competitor(rect, n, {-plim.shift[0], -plim.shift[1]});
    VotingFunction plur;
    plur.kind = VotingFunction::Kind::Plurality;
    plur.n = n;

    const CorrelatedPairLaw law{{n, alpha, beta}, rho};
    const DiscretePaired cmp = discrete_stability_paired(plur, comp, law, samples, stream);
    const auto fp = label_frequencies(plur, law.base, samples / 4 + 1, stream.substream(1));
    const auto fc = label_frequencies(comp, law.base, samples / 4 + 1, stream.substream(2));

    json results = {{"plurality", {{"value", cmp.a.value}, {"std_error", cmp.a.std_error}}},
                    {"competitor", {{"value", cmp.b.value}, {"std_error", cmp.b.std_error}}},
                    {"diff", cmp.diff},
                    {"diff_se", cmp.diff_se},
                    {"plurality_frequencies", fp},
                    {"competitor_frequencies", fc}};
    if (n <= 8) {
        const DiscreteEstimate ex = discrete_stability_exact(plur, law);
        results["plurality_exact"] = ex.value;
    }
    std::cout << "plurality S = " << cmp.a.value << " +- " << cmp.a.std_error << "\n";
    std::cout << "competitor S = " << cmp.b.value << " +- " << cmp.b.std_error << "\n";
    std::cout << "gap = " << cmp.diff << " +- " << cmp.diff_se << " ("
              << (cmp.diff_se > 0 ? cmp.diff / cmp.diff_se : 0.0) << " SE)\n";
    std::cout << "frequencies: plurality [" << fp[0] << ", " << fp[1] << ", " << fp[2]
              << "], competitor [" << fc[0] << ", " << fc[1] << ", " << fc[2] << "]\n";
    emit.emit(make_record("plurality", s.resolved(), results));
    return 0;
}

// ----------------------------------------------------------------- bilinear

int cmd_bilinear(const Settings& s, const Emitter& emit) {
    const double rho = s.get<double>("rho");
    check_rho_range(rho);
    const long long samples = s.get<long long>("samples");
    const int challengers = s.get<int>("challengers");
    const RngStream stream{s.get<std::uint64_t>("seed"), 0};

    const std::vector<double> va = s.get<std::vector<double>>("volumes_a");
    const std::vector<double> vb = s.get<std::vector<double>>("volumes_b");
    auto close = [](const std::vector<double>& x, std::initializer_list<double> y) {
        if (x.size() != y.size()) return false;
        auto it = y.begin();
        for (double v : x)
            if (std::abs(v - *it++) > 1e-9) return false;
        return true;
    };
    if (!close(va, {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}) || !close(vb, {0.5, 0.0, 0.5}))
        throw ConfigError{
            "the optimum mode requires volumes_a = (1/3,1/3,1/3) and volumes_b = (1/2,0,1/2)"};

    const double third = std_normal_quantile(1.0 / 3.0);
    BandPartition a;
    a.direction = {1.0, 0.0};
    a.cuts = {third, -third};
    a.labels = {0, 1, 2};
    a.k = 3;
    BandPartition b;
    b.direction = {1.0, 0.0};
    b.cuts = {0.0};
    b.labels = {0, 2};
    b.k = 3;

    const CorrelatedGaussianModel model{2, rho};
    const StabilityEstimate closed = stability_bilinear(AnyPartition{a}, AnyPartition{b}, model,
                                                        BilinearMethod::ClosedForm, 0, stream);
    const StabilityEstimate mc = stability_bilinear(AnyPartition{a}, AnyPartition{b}, model,
                                                    BilinearMethod::MonteCarlo, samples, stream);
    json results = {{"closed_form", closed.value},
                    {"mc", estimate_to_json(mc)},
                    {"challengers", json::array()}};
    std::cout << "optimum closed form = " << closed.value << ", mc = " << mc.value << " +- "
              << mc.std_error << "\n";

    double worst_excess_se = -1e9;
    Rng gen(stream.substream(77));
    for (int c = 0; c < challengers; ++c) {
        auto rot = [&](BandPartition base, double angle, std::vector<int> labels) {
            base.direction = {std::cos(angle), std::sin(angle)};
            base.labels = std::move(labels);
            return base;
        };
        std::array<int, 3> pa{0, 1, 2};
        std::swap(pa[gen.next_u64() % 3], pa[gen.next_u64() % 3]);
        const BandPartition ca =
            rot(a, 2.0 * M_PI * gen.uniform(), {pa[0], pa[1], pa[2]});
        const int top = gen.next_u64() % 2 ? 0 : 2;
        const BandPartition cb = rot(b, 2.0 * M_PI * gen.uniform(), {top, 2 - top});
        const StabilityEstimate est =
            stability_bilinear(AnyPartition{ca}, AnyPartition{cb}, model,
                               BilinearMethod::MonteCarlo, samples,
                               stream.substream(100 + static_cast<std::uint64_t>(c)));
        const double excess_se =
            est.std_error > 0 ? (est.value - closed.value) / est.std_error : 0.0;
        worst_excess_se = std::max(worst_excess_se, excess_se);
        results["challengers"].push_back(
            {{"value", est.value}, {"std_error", est.std_error}, {"excess_se", excess_se}});
    }
    if (challengers > 0) {
        results["max_excess_se"] = worst_excess_se;
        std::cout << "max challenger excess = " << worst_excess_se << " SE over " << challengers
                  << " pairs\n";
    }
    emit.emit(make_record("bilinear", s.resolved(), results));
    return 0;
}

// ------------------------------------------------------------------ volumes

int cmd_volumes(const Settings& s, const Emitter& emit) {
    const AnyPartition p = partition_from_config(s.raw("partition"));
    const long long samples = s.get<long long>("samples");
    const RngStream stream{s.get<std::uint64_t>("seed"), 0};
    const CorrelatedGaussianModel model{partition_dim(p), 0.0};

    const VolumeEstimate est = estimate_volumes(p, model, samples, stream);
    json results = {{"volumes", est.volumes}, {"std_errors", est.std_errors}};
    std::ostringstream csv;
    csv << "cell,volume,std_error\n";
    for (std::size_t i = 0; i < est.volumes.size(); ++i) {
        std::cout << "cell " << i << ": " << est.volumes[i] << " +- " << est.std_errors[i] << "\n";
        csv << i << "," << est.volumes[i] << "," << est.std_errors[i] << "\n";
    }
    if (std::holds_alternative<FlatPartition>(p) && partition_dim(p) == 2) {
        const FlatPartition& fp = std::get<FlatPartition>(p);
        std::vector<double> exact;
        for (int i = 0; i < fp.k; ++i)
            exact.push_back(gamma2_measure(ConeCell2D::from_flat_cell(fp, i)));
        results["exact"] = exact;
    }
    emit.emit(make_record("volumes", s.resolved(), results), csv.str());
    return 0;
}

struct CommonFlags {
    std::string config_path;
    std::string out_path;
    std::string format = "json";
    std::uint64_t seed = 0;
    long long samples = 0;
    double rho = 0.0;
    bool seed_set = false, samples_set = false, rho_set = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file");
    cmd->add_option("--out", f.out_path, "output path for the run record");
    cmd->add_option("--format", f.format, "output format")
        ->check(CLI::IsMember({"json", "csv"}));
    cmd->add_option("--seed", f.seed, "RNG seed")->each([&](const std::string&) {
        f.seed_set = true;
    });
    cmd->add_option("--samples", f.samples, "Monte Carlo sample count")
        ->each([&](const std::string&) { f.samples_set = true; });
    cmd->add_option("--rho", f.rho, "noise correlation")->each([&](const std::string&) {
        f.rho_set = true;
    });
}

Settings resolve(const json& defaults, const CommonFlags& f) {
    Settings s(defaults, f.config_path);
    if (f.seed_set) s.override_with("seed", f.seed);
    if (f.samples_set) s.override_with("samples", f.samples);
    if (f.rho_set) s.override_with("rho", f.rho);
    return s;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian partition noise-stability lab"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    CommonFlags flags[6];
    CLI::App* sub[6];
    const char* names[6] = {"stability", "limits", "improve", "plurality", "bilinear", "volumes"};
    const char* descs[6] = {"estimate the noise stability of a partition",
                            "facet line differences and their t -> +-inf plateaus",
                            "search for a stability-improving boundary perturbation",
                            "compare plurality with a rectangle competitor",
                            "bilinear stability optimum and challengers",
                            "Gaussian cell volumes"};
    for (int i = 0; i < 6; ++i) {
        sub[i] = app.add_subcommand(names[i], descs[i]);
        add_common(sub[i], flags[i]);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sub[0]->parsed()) {
            Settings s = resolve({{"partition", default_simplex_json()},
                                  {"rho", 0.5},
                                  {"samples", 1000000},
                                  {"order", 64},
                                  {"seed", 1}},
                                 flags[0]);
            return cmd_stability(s, {flags[0].out_path, flags[0].format});
        }
        if (sub[1]->parsed()) {
            Settings s = resolve({{"partition", shifted_simplex_json(-1.0)},
                                  {"rho", 0.5},
                                  {"i", 0},
                                  {"j", 1},
                                  {"t_max", 50.0},
                                  {"points", 201},
                                  {"samples", 0},
                                  {"seed", 1}},
                                 flags[1]);
            return cmd_limits(s, {flags[1].out_path, flags[1].format});
        }
        if (sub[2]->parsed()) {
            Settings s = resolve({{"partition", shifted_simplex_json(-0.27)},
                                  {"rho", 0.5},
                                  {"samples", 400000},
                                  {"budget", 5},
                                  {"seed", 1}},
                                 flags[2]);
            return cmd_improve(s, {flags[2].out_path, flags[2].format});
        }
        if (sub[3]->parsed()) {
            Settings s = resolve({{"alpha", 1.0},
                                  {"beta", 0.0},
                                  {"rho", 0.5},
                                  {"n", 10000},
                                  {"samples", 4000000},
                                  {"resolution", 2048},
                                  {"radius", 8.0},
                                  {"seed", 1}},
                                 flags[3]);
            return cmd_plurality(s, {flags[3].out_path, flags[3].format});
        }
        if (sub[4]->parsed()) {
            Settings s = resolve({{"rho", 0.5},
                                  {"samples", 1000000},
                                  {"challengers", 0},
                                  {"volumes_a", {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}},
                                  {"volumes_b", {0.5, 0.0, 0.5}},
                                  {"seed", 1}},
                                 flags[4]);
            return cmd_bilinear(s, {flags[4].out_path, flags[4].format});
        }
        Settings s = resolve({{"partition", default_simplex_json()},
                              {"samples", 1000000},
                              {"seed", 1}},
                             flags[5]);
        return cmd_volumes(s, {flags[5].out_path, flags[5].format});
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.message << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "precondition error: " << e.what() << "\n";
        return 3;
    } catch (const std::runtime_error& e) {
        std::cerr << "precondition error: " << e.what() << "\n";
        return 3;
    }
}
