#ifndef MCPARAREAL_EXPERIMENT_HPP
#define MCPARAREAL_EXPERIMENT_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "convergence.hpp"
#include "coupling.hpp"
#include "errors.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "moment_models.hpp"
#include "parareal.hpp"
#include "particles.hpp"

namespace mcparareal::experiment {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kVersion = "1.0.0";

using json = nlohmann::ordered_json;

struct ExperimentConfig {
    int schema_version = kSchemaVersion;
    std::string id = "experiment";
    std::string problem;

    PerturbedOUSpec ou;
    PlaneRotatorSpec rotator;
    BurgersSpec burgers;
    DoubleWellSpec well;

    std::string initial_kind = "normal";
    double initial_mean = 0.0;
    double initial_variance = 1.0;

    std::size_t N = 10;
    int K = -1; // -1: K = N
    double T0 = 1.0;
    double dt = 0.01;
    std::size_t P = 10000;
    std::size_t replicates = 1;
    std::uint64_t seed = 1;
    NoiseMode noise = NoiseMode::frozen;
    double stop_tolerance = 0.0;
    CorrectionBase correction = CorrectionBase::macro;

    std::string coarse;
    bool gibbs = false;
    IntegratorConfig integrator;

    std::vector<std::pair<int, std::size_t>> histogram;
    bool literal_variance_denominator = false;
    std::size_t floor_replicas = 2;

    std::vector<std::size_t> sweep_N;

    std::size_t compare_P = 100000;
    double compare_T = 2.0;
    std::size_t compare_samples = 200;

    int iterations() const { return K < 0 ? static_cast<int>(N) : K; }
    std::size_t steps_per_slice() const { return static_cast<std::size_t>(std::llround(T0 / dt)); }
};

// ---------------------------------------------------------------- parsing

namespace detail {

/// Source lines of TOML keys, for diagnostics.
using LineMap = std::map<std::string, long>;

inline json toml_to_json(const toml::node& node, const std::string& path, LineMap& lines) {
    lines[path] = static_cast<long>(node.source().begin.line);
    if (const auto* t = node.as_table()) {
        json out = json::object();
        for (const auto& [k, v] : *t) {
            const std::string key(k.str());
            out[key] = toml_to_json(v, path.empty() ? key : path + "." + key, lines);
        }
        return out;
    }
    if (const auto* a = node.as_array()) {
        json out = json::array();
        std::size_t i = 0;
        for (const auto& v : *a) {
            out.push_back(toml_to_json(v, path + "[" + std::to_string(i++) + "]", lines));
        }
        return out;
    }
    if (const auto* v = node.as_integer()) {
        return v->get();
    }
    if (const auto* v = node.as_floating_point()) {
        return v->get();
    }
    if (const auto* v = node.as_boolean()) {
        return v->get();
    }
    if (const auto* v = node.as_string()) {
        return v->get();
    }
    throw ConfigError(path + ": unsupported TOML value type");
}

class Reader {
public:
    Reader(const json& root, const LineMap* lines) : root_(root), lines_(lines) {}

    [[noreturn]] void fail(const std::string& path, const std::string& msg) const {
        std::string where = path;
        if (lines_) {
            if (auto it = lines_->find(path); it != lines_->end()) {
                where = "line " + std::to_string(it->second) + ", field " + path;
            }
        } else {
            where = "field " + path;
        }
        throw ConfigError(where + ": " + msg);
    }

    const json* find(const std::string& path) const {
        const json* node = &root_;
        std::size_t start = 0;
        while (start <= path.size()) {
            const auto dot = path.find('.', start);
            const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (!node->is_object() || !node->contains(part)) {
                return nullptr;
            }
            node = &(*node)[part];
            if (dot == std::string::npos) {
                break;
            }
            start = dot + 1;
        }
        used_.push_back(path);
        return node;
    }

    double number(const std::string& path, double fallback) const {
        const json* v = find(path);
        if (!v) {
            return fallback;
        }
        if (!v->is_number()) {
            fail(path, "expected a number");
        }
        const double d = v->get<double>();
        if (!std::isfinite(d)) {
            fail(path, "must be finite");
        }
        return d;
    }

    long long integer(const std::string& path, long long fallback) const {
        const json* v = find(path);
        if (!v) {
            return fallback;
        }
        if (!v->is_number_integer()) {
            fail(path, "expected an integer");
        }
        return v->get<long long>();
    }

    std::uint64_t unsigned_integer(const std::string& path, std::uint64_t fallback) const {
        const json* v = find(path);
        if (!v) {
            return fallback;
        }
        if (v->is_number_unsigned()) {
            return v->get<std::uint64_t>();
        }
        if (!v->is_number_integer() || v->get<long long>() < 0) {
            fail(path, "expected a non-negative integer");
        }
        return static_cast<std::uint64_t>(v->get<long long>());
    }

    std::size_t count(const std::string& path, std::size_t fallback, std::size_t minimum) const {
        const long long v = integer(path, static_cast<long long>(fallback));
        if (v < static_cast<long long>(minimum)) {
            fail(path, "must be at least " + std::to_string(minimum));
        }
        return static_cast<std::size_t>(v);
    }

    bool boolean(const std::string& path, bool fallback) const {
        const json* v = find(path);
        if (!v) {
            return fallback;
        }
        if (!v->is_boolean()) {
            fail(path, "expected true or false");
        }
        return v->get<bool>();
    }

    std::string string(const std::string& path, const std::string& fallback) const {
        const json* v = find(path);
        if (!v) {
            return fallback;
        }
        if (!v->is_string()) {
            fail(path, "expected a string");
        }
        return v->get<std::string>();
    }

    /// Rejects keys that were never looked up (typos).
    void check_unused() const {
        check_unused_in(root_, "");
    }

private:
    void check_unused_in(const json& node, const std::string& prefix) const {
        for (auto it = node.begin(); it != node.end(); ++it) {
            const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
            if (it->is_object()) {
                check_unused_in(*it, path);
            } else if (std::find(used_.begin(), used_.end(), path) == used_.end()) {
                fail(path, "unknown key");
            }
        }
    }

    const json& root_;
    const LineMap* lines_;
    mutable std::vector<std::string> used_;
};

inline double positive(const Reader& r, const std::string& path, double fallback) {
    const double v = r.number(path, fallback);
    if (!(v > 0.0)) {
        r.fail(path, "must be positive");
    }
    return v;
}

inline ExperimentConfig config_from_json(const json& root, const LineMap* lines) {
    if (!root.is_object()) {
        throw ConfigError("configuration must be a table");
    }
    const Reader r(root, lines);
    ExperimentConfig c;
    c.schema_version = static_cast<int>(r.integer("schema_version", -1));
    if (c.schema_version != kSchemaVersion) {
        r.fail("schema_version", "expected schema_version = " + std::to_string(kSchemaVersion));
    }
    c.id = r.string("id", c.id);
    c.problem = r.string("problem", "");
    if (c.problem == "perturbed-ou") {
        c.ou.a = r.number("model.a", c.ou.a);
        c.ou.a_E = r.number("model.a_E", c.ou.a_E);
        c.ou.B = r.number("model.B", c.ou.B);
        c.ou.eps_M = r.number("model.eps_M", c.ou.eps_M);
        c.ou.eps_V = r.number("model.eps_V", c.ou.eps_V);
    } else if (c.problem == "plane-rotator") {
        c.rotator.K = r.number("model.K", c.rotator.K);
        c.rotator.kBT = r.number("model.kBT", c.rotator.kBT);
        if (c.rotator.kBT < 0.0) {
            r.fail("model.kBT", "must be non-negative");
        }
        c.rotator.wrap = r.boolean("model.wrap", c.rotator.wrap);
    } else if (c.problem == "burgers") {
        c.burgers.sigma = positive(r, "model.sigma", c.burgers.sigma);
    } else if (c.problem == "double-well") {
        c.well.alpha = positive(r, "model.alpha", c.well.alpha);
        c.well.gamma = r.number("model.gamma", c.well.gamma);
        c.well.beta = r.number("model.beta", c.well.beta);
        c.well.J = r.number("model.J", c.well.J);
        c.well.sigma = positive(r, "model.sigma", c.well.sigma);
        c.well.m0 = r.number("model.m0", c.well.m0);
    } else {
        r.fail("problem", "expected one of perturbed-ou, plane-rotator, burgers, double-well");
    }

    c.initial_kind = r.string("initial.kind", c.initial_kind);
    if (c.initial_kind != "dirac" && c.initial_kind != "normal") {
        r.fail("initial.kind", "expected dirac or normal");
    }
    c.initial_mean = r.number("initial.mean", c.initial_mean);
    c.initial_variance = r.number("initial.variance", c.initial_kind == "dirac" ? 0.0 : c.initial_variance);
    if (c.initial_variance < 0.0) {
        r.fail("initial.variance", "must be non-negative");
    }

    c.N = r.count("parareal.N", c.N, 1);
    c.K = static_cast<int>(r.integer("parareal.K", c.K));
    if (c.K < -1 || c.K > static_cast<int>(c.N)) {
        r.fail("parareal.K", "must satisfy 0 <= K <= N");
    }
    c.T0 = positive(r, "parareal.T0", c.T0);
    c.dt = positive(r, "parareal.dt", c.dt);
    const double steps = c.T0 / c.dt;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps) || std::round(steps) < 1.0) {
        r.fail("parareal.dt", "must divide T0 into a whole number of steps");
    }
    c.P = r.count("parareal.P", c.P, 2);
    c.replicates = r.count("parareal.replicates", c.replicates, 1);
    c.seed = r.unsigned_integer("parareal.seed", c.seed);
    const std::string noise = r.string("parareal.noise", "frozen");
    if (noise == "frozen") {
        c.noise = NoiseMode::frozen;
    } else if (noise == "fresh") {
        c.noise = NoiseMode::fresh;
    } else {
        r.fail("parareal.noise", "expected frozen or fresh");
    }
    const std::string correction = r.string("parareal.correction", "macro");
    if (correction == "macro") {
        c.correction = CorrectionBase::macro;
    } else if (correction == "restriction") {
        c.correction = CorrectionBase::restriction;
    } else {
        r.fail("parareal.correction", "expected macro or restriction");
    }
    c.stop_tolerance = r.number("parareal.stop_tolerance", c.stop_tolerance);
    if (c.stop_tolerance < 0.0) {
        r.fail("parareal.stop_tolerance", "must be non-negative");
    }

    const std::string default_coarse = c.problem == "double-well" ? "multimodal" : "first-order";
    c.coarse = r.string("coarse.variant", default_coarse);
    if (c.coarse != "first-order" && c.coarse != "taylor" && c.coarse != "multimodal") {
        r.fail("coarse.variant", "expected first-order, taylor or multimodal");
    }
    if (c.coarse == "multimodal" && c.problem != "double-well") {
        r.fail("coarse.variant", "multimodal closure requires the double-well problem");
    }
    if (c.coarse == "taylor" && c.problem == "burgers") {
        r.fail("coarse.variant", "taylor enrichment is not available for burgers");
    }
    c.gibbs = r.boolean("coarse.gibbs", c.gibbs);
    c.integrator.rel_tol = positive(r, "coarse.rel_tol", c.integrator.rel_tol);
    c.integrator.abs_tol = positive(r, "coarse.abs_tol", c.integrator.abs_tol);
    if (const json* ms = r.find("coarse.max_step")) {
        if (!ms->is_number() || !(ms->get<double>() > 0.0)) {
            r.fail("coarse.max_step", "must be a positive number");
        }
        c.integrator.max_step = ms->get<double>();
    }

    if (const json* h = r.find("output.histogram")) {
        if (!h->is_array()) {
            r.fail("output.histogram", "expected a list of [k, n] pairs");
        }
        for (const auto& pair : *h) {
            if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() || !pair[1].is_number_integer()) {
                r.fail("output.histogram", "expected a list of [k, n] pairs");
            }
            const long long k = pair[0].get<long long>();
            const long long n = pair[1].get<long long>();
            if (k < 0 || k > c.iterations() || n < 0 || n > static_cast<long long>(c.N)) {
                r.fail("output.histogram", "pair [" + std::to_string(k) + ", " + std::to_string(n) + "] out of range");
            }
            c.histogram.emplace_back(static_cast<int>(k), static_cast<std::size_t>(n));
        }
    }
    c.literal_variance_denominator = r.boolean("output.literal_variance_denominator", false);
    c.floor_replicas = r.count("output.floor_replicas", c.floor_replicas, 2);

    if (const json* s = r.find("sweep.N")) {
        if (!s->is_array() || s->empty()) {
            r.fail("sweep.N", "expected a non-empty list of integers");
        }
        for (const auto& v : *s) {
            if (!v.is_number_integer() || v.get<long long>() < 1) {
                r.fail("sweep.N", "entries must be integers >= 1");
            }
            c.sweep_N.push_back(static_cast<std::size_t>(v.get<long long>()));
        }
    }

    c.compare_P = r.count("compare.P", c.compare_P, 2);
    c.compare_T = positive(r, "compare.T", c.compare_T);
    c.compare_samples = r.count("compare.samples", c.compare_samples, 1);
    r.check_unused();
    return c;
}

} // namespace detail

/// Parses TOML text; errors carry the source line.
inline ExperimentConfig parse_toml(std::string_view text, std::string_view source = "config") {
    toml::table table;
    try {
        table = toml::parse(text, source);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "line " << e.source().begin.line << ": " << e.description();
        throw ConfigError(msg.str());
    }
    detail::LineMap lines;
    const json root = detail::toml_to_json(table, "", lines);
    return detail::config_from_json(root, &lines);
}

inline ExperimentConfig parse_json(const json& root) {
    // meta.json keeps the resolved configuration under "config"
    if (root.is_object() && root.contains("config") && root.contains("outputs")) {
        return detail::config_from_json(root["config"], nullptr);
    }
    return detail::config_from_json(root, nullptr);
}

/// Loads a TOML file, or the resolved configuration stored in a meta.json.
inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot read config file " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    if (path.extension() == ".json") {
        json root;
        try {
            root = json::parse(buf.str());
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("invalid JSON: ") + e.what());
        }
        return parse_json(root);
    }
    return parse_toml(buf.str(), path.string());
}

/// Fully resolved configuration; parse_json(to_json(c)) reproduces c.
inline json to_json(const ExperimentConfig& c) {
    json j;
    j["schema_version"] = c.schema_version;
    j["id"] = c.id;
    j["problem"] = c.problem;
    json m = json::object();
    if (c.problem == "perturbed-ou") {
        m = {{"a", c.ou.a}, {"a_E", c.ou.a_E}, {"B", c.ou.B}, {"eps_M", c.ou.eps_M}, {"eps_V", c.ou.eps_V}};
    } else if (c.problem == "plane-rotator") {
        m = {{"K", c.rotator.K}, {"kBT", c.rotator.kBT}, {"wrap", c.rotator.wrap}};
    } else if (c.problem == "burgers") {
        m = {{"sigma", c.burgers.sigma}};
    } else if (c.problem == "double-well") {
        m = {{"alpha", c.well.alpha}, {"gamma", c.well.gamma}, {"beta", c.well.beta},
             {"J", c.well.J},         {"sigma", c.well.sigma}, {"m0", c.well.m0}};
    }
    j["model"] = m;
    j["initial"] = {{"kind", c.initial_kind}, {"mean", c.initial_mean}, {"variance", c.initial_variance}};
    j["parareal"] = {{"N", c.N},
                     {"K", c.iterations()},
                     {"T0", c.T0},
                     {"dt", c.dt},
                     {"P", c.P},
                     {"replicates", c.replicates},
                     {"seed", c.seed},
                     {"noise", to_string(c.noise)},
                     {"stop_tolerance", c.stop_tolerance},
                     {"correction", to_string(c.correction)}};
    json coarse = {{"variant", c.coarse},
                   {"gibbs", c.gibbs},
                   {"rel_tol", c.integrator.rel_tol},
                   {"abs_tol", c.integrator.abs_tol}};
    if (std::isfinite(c.integrator.max_step)) {
        coarse["max_step"] = c.integrator.max_step;
    }
    j["coarse"] = coarse;
    json hist = json::array();
    for (const auto& [k, n] : c.histogram) {
        hist.push_back(json::array({k, n}));
    }
    j["output"] = {{"histogram", hist},
                   {"literal_variance_denominator", c.literal_variance_denominator},
                   {"floor_replicas", c.floor_replicas}};
    if (!c.sweep_N.empty()) {
        j["sweep"] = {{"N", c.sweep_N}};
    }
    j["compare"] = {{"P", c.compare_P}, {"T", c.compare_T}, {"samples", c.compare_samples}};
    return j;
}

// ---------------------------------------------------------------- problem assembly

struct Problem {
    McKeanVlasovModel model;
    InitialDistribution initial;
    RegionPartition partition;
    MomentODE coarse;
};

inline MomentODE coarse_model(const ExperimentConfig& c, const McKeanVlasovModel& model, const std::string& variant,
                              const RegionPartition& partition) {
    if (variant == "multimodal") {
        return multimodal_rhs(model, c.well, partition, c.gibbs);
    }
    if (c.problem == "perturbed-ou") {
        return perturbed_ou_rhs(c.ou); // the Taylor term vanishes for a linear f
    }
    if (c.problem == "burgers") {
        return burgers_rhs(c.burgers);
    }
    return variant == "taylor" ? taylor_enriched_rhs(model) : unimodal_rhs(model);
}

inline Problem build_problem(const ExperimentConfig& c) {
    Problem p;
    if (c.problem == "perturbed-ou") {
        p.model = make_perturbed_ou(c.ou);
    } else if (c.problem == "plane-rotator") {
        p.model = make_plane_rotator(c.rotator);
    } else if (c.problem == "burgers") {
        p.model = make_burgers(c.burgers);
    } else if (c.problem == "double-well") {
        p.model = make_double_well(c.well);
    } else {
        throw ConfigError("unknown problem " + c.problem);
    }
    p.initial = c.initial_kind == "dirac" || c.initial_variance == 0.0
                    ? InitialDistribution::dirac(c.initial_mean)
                    : InitialDistribution::normal(c.initial_mean, c.initial_variance);
    if (c.coarse == "multimodal") {
        try {
            p.partition = double_well_partition(c.well);
        } catch (const InvalidPartition& e) {
            throw ConfigError(std::string("field model: ") + e.what());
        }
    }
    p.coarse = coarse_model(c, p.model, c.coarse, p.partition);
    return p;
}

inline std::uint64_t replicate_seed(std::uint64_t seed, std::size_t r) { return mix_seed(seed + r); }

inline PararealConfig parareal_config(const ExperimentConfig& c, const Problem& p, std::uint64_t seed,
                                      std::size_t workers) {
    PararealConfig pc;
    pc.N = c.N;
    pc.K = c.iterations();
    pc.T0 = c.T0;
    pc.fine = {c.dt, c.steps_per_slice()};
    pc.P = c.P;
    pc.noise = {seed, c.noise};
    pc.partition = p.partition;
    pc.coarse = p.coarse;
    pc.integrator = c.integrator;
    pc.workers = workers;
    pc.stop_tolerance = c.stop_tolerance;
    pc.correction = c.correction;
    return pc;
}

/// Non-fatal configuration remarks, e.g. the bias/statistical balance P ~ N^2.
inline std::vector<std::string> lint(const ExperimentConfig& c) {
    std::vector<std::string> w;
    const double steps = static_cast<double>(c.N * c.steps_per_slice());
    if (static_cast<double>(c.P) < steps * steps / 100.0) {
        w.push_back("P = " + std::to_string(c.P) +
                    " is small against the squared total step count; statistical error will dominate the bias");
    }
    if (static_cast<double>(c.P) > 100.0 * steps * steps) {
        w.push_back("P = " + std::to_string(c.P) +
                    " is large against the squared total step count; time discretisation bias will dominate");
    }
    if (c.iterations() < static_cast<int>(c.N)) {
        w.push_back("K < N: the reference iterate is not the converged fine solution");
    }
    return w;
}

// ---------------------------------------------------------------- CSV

class Csv {
public:
    explicit Csv(const std::vector<std::string>& header) { row(header); }

    template <typename... Fields>
    void add(const Fields&... fields) {
        bool first = true;
        ((out_ << (first ? "" : ","), out_ << cell(fields), first = false), ...);
        out_ << "\r\n";
    }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            out_ << (i ? "," : "") << quote(fields[i]);
        }
        out_ << "\r\n";
    }

    std::string str() const { return out_.str(); }

    static std::string number(double v) {
        if (std::isnan(v)) {
            return "nan";
        }
        if (std::isinf(v)) {
            return v > 0 ? "inf" : "-inf";
        }
        char buf[64];
        const auto res = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, res.ptr);
    }

private:
    static std::string quote(const std::string& s) {
        if (s.find_first_of(",\"\r\n") == std::string::npos) {
            return s;
        }
        std::string q = "\"";
        for (char ch : s) {
            q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        }
        return q + "\"";
    }
    static std::string cell(const std::string& s) { return quote(s); }
    static std::string cell(const char* s) { return quote(s); }
    static std::string cell(double v) { return number(v); }
    static std::string cell(bool v) { return v ? "true" : "false"; }
    template <typename Int>
        requires std::is_integral_v<Int>
    static std::string cell(Int v) {
        return std::to_string(v);
    }
    static std::string cell(const std::optional<double>& v) { return v ? number(*v) : std::string(); }

    std::ostringstream out_;
};

// ---------------------------------------------------------------- commands

struct Artifacts {
    std::map<std::string, std::string> files; // CSV name -> contents
    json meta;
};

namespace detail {

inline json timing_summary(const TimingLedger& t) {
    return {{"coarse_mean_s", TimingLedger::mean(t.coarse)},
            {"fine_mean_s", TimingLedger::mean(t.fine)},
            {"restriction_mean_s", TimingLedger::mean(t.restriction)},
            {"matching_mean_s", TimingLedger::mean(t.matching)}};
}

struct Histogram {
    double lo = 0.0;
    double width = 1.0;
    std::size_t bins = 1;
};

/// Freedman-Diaconis width from the reference ensemble, covering [lo, hi].
inline Histogram freedman_diaconis(const ParticleEnsemble& reference, double lo, double hi) {
    std::vector<double> x = reference.positions;
    std::sort(x.begin(), x.end());
    auto quantile = [&x](double q) {
        const double pos = q * static_cast<double>(x.size() - 1);
        const auto i = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(i);
        return i + 1 < x.size() ? x[i] + frac * (x[i + 1] - x[i]) : x[i];
    };
    const double iqr = quantile(0.75) - quantile(0.25);
    Histogram h;
    h.lo = lo;
    const double range = hi - lo;
    double width = 2.0 * iqr / std::cbrt(static_cast<double>(x.size()));
    if (!(width > 0.0)) {
        width = range > 0.0 ? range / 10.0 : 1.0;
    }
    h.bins = range > 0.0 ? static_cast<std::size_t>(std::ceil(range / width)) : 1;
    h.bins = std::clamp<std::size_t>(h.bins, 1, 2000);
    h.width = range > 0.0 ? std::max(width, range / static_cast<double>(h.bins)) : width;
    return h;
}

struct ReplicateResult {
    std::vector<ErrorReport> errors; // per k
    std::vector<ParticleEnsemble> reference; // n = 0..N
};

} // namespace detail

/// Micro-macro Parareal over all replicates: iterates.csv, errors.csv,
/// histogram.csv and meta.json.
inline Artifacts cmd_run(const ExperimentConfig& c, std::size_t workers) {
    const Problem problem = build_problem(c);
    const int K = c.iterations();
    const std::string noise = to_string(c.noise);

    Csv iterates({"experiment_id", "replicate", "k", "n", "t", "region", "macro_mean", "macro_variance",
                  "macro_fraction", "micro_mean", "micro_variance", "micro_fraction", "noise_mode"});
    Csv errors({"experiment_id", "replicate", "k", "E_mean", "E_var", "E_wass", "statistical_floor", "floor_mean",
                "floor_var", "noise_mode"});
    Csv histogram({"experiment_id", "replicate", "k", "n", "bin", "bin_left", "bin_right", "count"});

    struct IterRow {
        std::size_t r;
        int k;
        std::size_t n;
        MacroState macro;
        MacroState micro;
    };
    std::vector<IterRow> rows;
    std::vector<detail::ReplicateResult> results(c.replicates);
    json replicate_meta = json::array();
    std::vector<std::string> warnings = lint(c);

    auto hist_pairs = c.histogram;
    if (hist_pairs.empty()) {
        for (int k = 0; k <= K; ++k) {
            hist_pairs.emplace_back(k, c.N);
        }
    }
    std::vector<std::pair<std::pair<int, std::size_t>, ParticleEnsemble>> hist_ensembles;
    int reached = K;

    for (std::size_t r = 0; r < c.replicates; ++r) {
        const std::uint64_t seed = replicate_seed(c.seed, r);
        const PararealConfig pc = parareal_config(c, problem, seed, workers);
        const PararealTrace trace = run_micro_macro(pc, problem.model, problem.initial);
        const int last = trace.last_iteration();
        reached = std::min(reached, last);
        for (int k = 0; k <= last; ++k) {
            for (std::size_t n = 0; n <= c.N; ++n) {
                rows.push_back({r, k, n, trace.macro[k][n], trace.micro_stats[k][n]});
            }
            ErrorOptions opts;
            opts.literal_variance_denominator = c.literal_variance_denominator;
            results[r].errors.push_back(relative_errors(trace, k, opts));
        }
        for (std::size_t n = 0; n <= c.N; ++n) {
            results[r].reference.push_back(trace.ensemble(last, n));
        }
        if (r == 0) {
            for (const auto& kn : hist_pairs) {
                if (kn.first <= last) {
                    hist_ensembles.emplace_back(kn, trace.ensemble(kn.first, kn.second));
                }
            }
        }
        for (const auto& w : trace.warnings) {
            warnings.push_back("replicate " + std::to_string(r) + ": " + w);
        }
        replicate_meta.push_back({{"replicate", r},
                                  {"seed", seed},
                                  {"iterations", last},
                                  {"stopped_early", trace.stopped_early},
                                  {"fraction_gaps", trace.fraction_diagnostics.size()},
                                  {"timing", detail::timing_summary(trace.timing)}});
    }

    // Statistical floor: the error measures between independent fine solutions.
    std::vector<std::vector<ParticleEnsemble>> fine_replicas;
    const bool reuse = c.replicates >= 2 && c.noise == NoiseMode::frozen && K == static_cast<int>(c.N) &&
                       reached == K;
    if (reuse) {
        for (auto& res : results) {
            fine_replicas.push_back(res.reference);
        }
    } else {
        const std::size_t count = std::max<std::size_t>(c.floor_replicas, c.replicates >= 2 ? c.replicates : 0);
        for (std::size_t j = 0; j < count; ++j) {
            const std::uint64_t seed = j < c.replicates && c.replicates >= 2 ? replicate_seed(c.seed, j)
                                                                             : replicate_seed(c.seed, 1000003 + j);
            const PararealConfig pc = parareal_config(c, problem, seed, workers);
            fine_replicas.push_back(run_sequential_fine(pc, problem.model, problem.initial));
        }
    }
    const ErrorReport floor = trajectory_floor(fine_replicas, c.literal_variance_denominator);

    std::stable_sort(rows.begin(), rows.end(), [](const IterRow& a, const IterRow& b) {
        return std::tie(a.k, a.n, a.r) < std::tie(b.k, b.n, b.r);
    });
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.macro.size(); ++i) {
            const auto& M = row.macro.regions[i];
            const auto& m = row.micro.regions[i];
            iterates.add(c.id, row.r, row.k, row.n, c.T0 * static_cast<double>(row.n), i, M.mean, M.variance,
                         M.fraction, m.mean, m.variance, m.fraction, noise);
        }
    }
    for (int k = 0; k <= reached; ++k) {
        for (std::size_t r = 0; r < c.replicates; ++r) {
            const auto& e = results[r].errors[k];
            errors.add(c.id, r, k, e.e_mean, e.e_var, e.e_wass, floor.e_wass, floor.e_mean, floor.e_var, noise);
        }
    }

    std::map<std::size_t, detail::Histogram> binning;
    for (const auto& [kn, ens] : hist_ensembles) {
        if (binning.contains(kn.second)) {
            continue;
        }
        double lo = INFINITY;
        double hi = -INFINITY;
        for (const auto& [kn2, e2] : hist_ensembles) {
            if (kn2.second == kn.second) {
                const auto [mn, mx] = std::minmax_element(e2.positions.begin(), e2.positions.end());
                lo = std::min(lo, *mn);
                hi = std::max(hi, *mx);
            }
        }
        binning[kn.second] = detail::freedman_diaconis(results[0].reference[kn.second], lo, hi);
    }
    for (const auto& [kn, ens] : hist_ensembles) {
        const auto& h = binning[kn.second];
        std::vector<std::size_t> counts(h.bins, 0);
        for (double x : ens.positions) {
            auto b = static_cast<long long>(std::floor((x - h.lo) / h.width));
            b = std::clamp<long long>(b, 0, static_cast<long long>(h.bins) - 1);
            counts[static_cast<std::size_t>(b)]++;
        }
        for (std::size_t b = 0; b < h.bins; ++b) {
            histogram.add(c.id, 0, kn.first, kn.second, b, h.lo + h.width * static_cast<double>(b),
                          h.lo + h.width * static_cast<double>(b + 1), counts[b]);
        }
    }

    Artifacts a;
    a.files["iterates.csv"] = iterates.str();
    a.files["errors.csv"] = errors.str();
    a.files["histogram.csv"] = histogram.str();
    a.meta = {{"schema_version", kSchemaVersion},
              {"version", kVersion},
              {"command", "run"},
              {"config", to_json(c)},
              {"workers", workers},
              {"replicates", replicate_meta},
              {"statistical_floor", {{"E_mean", floor.e_mean}, {"E_var", floor.e_var}, {"E_wass", floor.e_wass}}},
              {"warnings", warnings},
              {"outputs", {"iterates.csv", "errors.csv", "histogram.csv"}}};
    return a;
}

/// Weak scaling: one run per N with T = N T0; scaling.csv holds the
/// sqrt(N)-normalised error norms per k.
inline Artifacts cmd_sweep_n(const ExperimentConfig& base, std::size_t workers) {
    if (base.sweep_N.empty()) {
        throw ConfigError("field sweep.N: required for sweep-n");
    }
    Csv scaling({"experiment_id", "N", "replicate", "k", "E_mean", "E_var", "E_wass", "mean_error_norm",
                 "variance_error_norm", "wasserstein_error_norm", "noise_mode"});
    json runs = json::array();
    for (std::size_t N : base.sweep_N) {
        ExperimentConfig c = base;
        c.N = N;
        c.K = base.K < 0 ? -1 : std::min(base.K, static_cast<int>(N));
        const Problem problem = build_problem(c);
        for (std::size_t r = 0; r < c.replicates; ++r) {
            const std::uint64_t seed = replicate_seed(c.seed, r);
            const PararealTrace trace =
                run_micro_macro(parareal_config(c, problem, seed, workers), problem.model, problem.initial);
            for (int k = 0; k <= trace.last_iteration(); ++k) {
                ErrorOptions opts;
                opts.literal_variance_denominator = c.literal_variance_denominator;
                const auto e = relative_errors(trace, k, opts);
                scaling.add(c.id, N, r, k, e.e_mean, e.e_var, e.e_wass, e.mean_error_norm, e.variance_error_norm,
                            e.wasserstein_error_norm, to_string(c.noise));
            }
            runs.push_back({{"N", N}, {"replicate", r}, {"seed", seed}, {"timing", detail::timing_summary(trace.timing)}});
        }
    }
    Artifacts a;
    a.files["scaling.csv"] = scaling.str();
    a.meta = {{"schema_version", kSchemaVersion}, {"version", kVersion},       {"command", "sweep-n"},
              {"config", to_json(base)},          {"workers", workers},        {"runs", runs},
              {"warnings", lint(base)},           {"outputs", {"scaling.csv"}}};
    return a;
}

struct BoundRow {
    std::string moment;
    int k = 0;
    double observed = 0.0;
    double superlinear = 0.0;
    std::optional<double> linear;
};

/// Noise-free classical Parareal on the exact and perturbed OU moment maps,
/// with both convergence bounds.
inline std::vector<BoundRow> ou_bounds(const ExperimentConfig& c) {
    if (c.problem != "perturbed-ou") {
        throw ConfigError("field problem: bounds requires perturbed-ou");
    }
    const auto [mean_pair, var_pair] = ou_propagator_multipliers(c.ou, c.T0);
    std::vector<BoundRow> rows;
    const int N = static_cast<int>(c.N);
    const int K = c.iterations();
    for (const auto& [name, pair, u0] : {std::tuple{std::string("mean"), mean_pair, c.initial_mean},
                                          std::tuple{std::string("variance"), var_pair, c.initial_variance}}) {
        auto coarse = [&pair](std::size_t, double u) { return pair.G * u + pair.g; };
        auto fine = [&pair](std::size_t, double u) { return pair.F * u + pair.f; };
        const auto tr = run_classical(c.N, K, u0, coarse, fine);
        auto max_err = [&](int k) {
            double e = 0.0;
            for (int n = 1; n <= N; ++n) {
                e = std::max(e, std::abs(tr.fine_solution[n] - tr.iterates[k][n]));
            }
            return e;
        };
        const double e0 = max_err(0);
        for (int k = 0; k <= K; ++k) {
            BoundRow row{name, k, max_err(k), superlinear_bound(pair, N, k, e0), std::nullopt};
            try {
                row.linear = linear_bound(pair, N, k, e0);
            } catch (const BoundInapplicable&) {
            }
            rows.push_back(row);
        }
    }
    return rows;
}

inline Artifacts cmd_bounds(const ExperimentConfig& c) {
    Csv csv({"experiment_id", "moment", "k", "observed_error", "superlinear_bound", "linear_bound",
             "linear_applicable"});
    for (const auto& row : ou_bounds(c)) {
        csv.add(c.id, row.moment, row.k, row.observed, row.superlinear, row.linear, row.linear.has_value());
    }
    Artifacts a;
    a.files["bounds.csv"] = csv.str();
    a.meta = {{"schema_version", kSchemaVersion}, {"version", kVersion}, {"command", "bounds"},
              {"config", to_json(c)},             {"warnings", json::array()}, {"outputs", {"bounds.csv"}}};
    return a;
}

struct MomentComparison {
    std::vector<double> t;
    std::vector<double> mc_mean;
    std::vector<double> mc_variance;
    /// Per variant ("first-order", "taylor"); missing entries after a failure.
    std::map<std::string, std::vector<std::optional<Moments>>> models;
    std::map<std::string, std::string> failures;

    /// Trapezoidal time average of |M_model - M_MC|; empty if the model failed.
    std::optional<double> mean_error(const std::string& variant) const {
        const auto& v = models.at(variant);
        double acc = 0.0;
        for (std::size_t j = 0; j < t.size(); ++j) {
            if (!v[j]) {
                return std::nullopt;
            }
        }
        for (std::size_t j = 1; j < t.size(); ++j) {
            const double a = std::abs(v[j - 1]->mean - mc_mean[j - 1]);
            const double b = std::abs(v[j]->mean - mc_mean[j]);
            acc += 0.5 * (a + b) * (t[j] - t[j - 1]);
        }
        return acc / (t.back() - t.front());
    }
};

/// Moment ODE trajectories (first-order and, where defined, Taylor-enriched)
/// against a Monte Carlo reference with compare.P particles on [0, compare.T].
inline MomentComparison compare_moments(const ExperimentConfig& c, std::size_t workers = 1) {
    (void)workers;
    const Problem problem = build_problem(c);
    const double interval = c.compare_T / static_cast<double>(c.compare_samples);
    const double steps = interval / c.dt;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps) || std::round(steps) < 1.0) {
        throw ConfigError("field compare.samples: compare.T / samples must be a multiple of parareal.dt");
    }
    const StepConfig step{c.dt, static_cast<std::size_t>(std::llround(steps))};
    const NoisePlan plan{c.seed, NoiseMode::frozen};

    MomentComparison out;
    ParticleEnsemble ens = sample_initial(problem.initial, c.compare_P, c.seed);
    out.t.push_back(0.0);
    out.mc_mean.push_back(empirical_mean(ens));
    out.mc_variance.push_back(empirical_variance(ens));
    for (std::size_t j = 0; j < c.compare_samples; ++j) {
        ens = propagate_fine(problem.model, ens, j, interval * static_cast<double>(j), step, plan, -1);
        out.t.push_back(interval * static_cast<double>(j + 1));
        out.mc_mean.push_back(empirical_mean(ens));
        out.mc_variance.push_back(empirical_variance(ens));
    }

    std::vector<std::string> variants{"first-order"};
    if (c.problem != "burgers") {
        variants.push_back("taylor");
    }
    for (const auto& v : variants) {
        auto& traj = out.models[v];
        traj.assign(out.t.size(), std::nullopt);
        const MomentODE ode = coarse_model(c, problem.model, v, RegionPartition::single());
        MacroState s = MacroState::unimodal(out.mc_mean[0], out.mc_variance[0]);
        traj[0] = Moments{s.regions[0].mean, s.regions[0].variance};
        try {
            for (std::size_t j = 1; j < out.t.size(); ++j) {
                s = integrate_macro(ode, s, out.t[j - 1], out.t[j], c.integrator);
                traj[j] = Moments{s.regions[0].mean, s.regions[0].variance};
            }
        } catch (const Error& e) {
            out.failures[v] = e.what();
        }
    }
    return out;
}

inline Artifacts cmd_compare_moment(const ExperimentConfig& c, std::size_t workers) {
    const MomentComparison cmp = compare_moments(c, workers);
    std::vector<std::string> header{"experiment_id", "t", "mc_mean", "mc_variance"};
    for (const auto& [v, traj] : cmp.models) {
        header.push_back(v + "_mean");
        header.push_back(v + "_variance");
    }
    Csv csv(header);
    for (std::size_t j = 0; j < cmp.t.size(); ++j) {
        std::vector<std::string> row{c.id, Csv::number(cmp.t[j]), Csv::number(cmp.mc_mean[j]),
                                     Csv::number(cmp.mc_variance[j])};
        for (const auto& [v, traj] : cmp.models) {
            row.push_back(traj[j] ? Csv::number(traj[j]->mean) : "");
            row.push_back(traj[j] ? Csv::number(traj[j]->variance) : "");
        }
        csv.row(row);
    }
    json summary = json::object();
    for (const auto& [v, traj] : cmp.models) {
        const auto e = cmp.mean_error(v);
        summary[v] = {{"time_averaged_mean_error", e ? json(*e) : json(nullptr)},
                      {"failure", cmp.failures.contains(v) ? json(cmp.failures.at(v)) : json(nullptr)}};
    }
    Artifacts a;
    a.files["moment_vs_mc.csv"] = csv.str();
    a.meta = {{"schema_version", kSchemaVersion}, {"version", kVersion}, {"command", "compare-moment"},
              {"config", to_json(c)},             {"summary", summary},  {"warnings", json::array()},
              {"outputs", {"moment_vs_mc.csv"}}};
    return a;
}

inline void write_artifacts(const Artifacts& a, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [name, content] : a.files) {
        std::ofstream out(dir / name, std::ios::binary);
        out << content;
        if (!out) {
            throw std::runtime_error("cannot write " + (dir / name).string());
        }
    }
    std::ofstream meta(dir / "meta.json", std::ios::binary);
    meta << a.meta.dump(2) << "\n";
}

} // namespace mcparareal::experiment

#endif
