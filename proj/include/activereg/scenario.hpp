#pragma once

// Scenario configuration: a flat sectioned key = value format, its canonical
// serialization and digest, and the construction of a SimulationScenario.
//
//   seed = 7
//   [design]      n, family, degree, pieces, Q, density, csv
//   [truth]       coefficients = "1:0.5, 9:0.15" | csv
//   [noise]       kind, sigma2
//   [models]      m1 = 1-8, m2 = 1-4,7 ...
//   [schemes]     k1 = constant(0.5) | proportional(0.25) | thresholded(0.25, 0.5) | file(p.csv); reference_model
//   [penalty]     delta, gamma, r, d_of_r, alpha, C_bias, c_lemma5, bias_proxy
//   [iterative]   n0, model, B, T, delta0_override, delta_scale, log_horizon, estimate_sigma2,
//                 dim_schedule, pairs, savings_ratio, savings_level
//   [validation]  replications, aux_draws, model

#include <activereg/batch.hpp>
#include <activereg/csv.hpp>
#include <activereg/design.hpp>
#include <activereg/error.hpp>
#include <activereg/estimator.hpp>
#include <activereg/iterative.hpp>
#include <activereg/penalties.hpp>
#include <activereg/rng.hpp>
#include <activereg/validation.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace activereg {

struct ScenarioConfig {
    std::uint64_t seed = 1;

    // [design]
    std::size_t n = 256;
    std::string family = "trigonometric";
    int degree = 1;
    int pieces = 1;
    double Q = 1.0;
    std::string density = "uniform";
    std::string design_csv;

    // [truth]
    std::vector<std::pair<int, double>> truth_coefficients;
    std::string truth_csv;

    // [noise]
    std::string noise_kind = "gaussian";
    double sigma2 = 0.25;

    // [models]
    std::vector<std::vector<int>> models;

    // [schemes]
    std::vector<std::string> schemes;
    std::size_t reference_model = 1;

    // [penalty]
    double delta = 0.1;
    double gamma = 0.2;
    double r = 2.0;
    double d_of_r = 1.0;
    double alpha = 1.0;
    std::optional<double> C_bias;
    double c_lemma5 = 1.0;
    std::optional<double> bias_proxy;

    // [iterative]
    std::size_t n0 = 0;
    std::size_t iterative_model = 1;
    double B = 2.0;
    std::optional<std::size_t> T;
    std::optional<double> delta0_override;
    double delta_scale = 1.0;
    std::string log_horizon = "n";
    bool estimate_sigma2 = false;
    std::vector<std::size_t> dim_schedule;
    std::size_t pairs = 4;
    double savings_ratio = 0.8;
    double savings_level = 0.9;

    // [validation]
    std::size_t replications = 1000;
    std::size_t aux_draws = 200;
    std::size_t validation_model = 1;

    friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

// ---------------------------------------------------------------------------
// Value syntax

/// A generator call such as "thresholded(0.25, 0.5)".
struct GeneratorCall {
    std::string name;
    std::vector<std::string> args;
};

inline std::optional<GeneratorCall> parse_call(const std::string& s) {
    const auto open = s.find('(');
    if (open == std::string::npos || s.empty() || s.back() != ')') return std::nullopt;
    GeneratorCall c;
    c.name = detail::trim(s.substr(0, open));
    const std::string inner = s.substr(open + 1, s.size() - open - 2);
    if (!detail::trim(inner).empty()) c.args = detail::split(inner, ',');
    return c;
}

/// "1-4, 7, 9-10" -> {1, 2, 3, 4, 7, 9, 10}.
inline std::optional<std::vector<int>> parse_index_list(const std::string& s) {
    std::vector<int> out;
    for (const std::string& part : detail::split(s, ',')) {
        if (part.empty()) return std::nullopt;
        const auto dash = part.find('-');
        try {
            std::size_t used = 0;
            if (dash == std::string::npos) {
                const int v = std::stoi(part, &used);
                if (used != part.size()) return std::nullopt;
                out.push_back(v);
            } else {
                const std::string a = detail::trim(part.substr(0, dash)), b = detail::trim(part.substr(dash + 1));
                std::size_t ua = 0, ub = 0;
                const int lo = std::stoi(a, &ua), hi = std::stoi(b, &ub);
                if (ua != a.size() || ub != b.size() || hi < lo) return std::nullopt;
                for (int v = lo; v <= hi; ++v) out.push_back(v);
            }
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }
    return out;
}

inline std::string format_index_list(const std::vector<int>& v) {
    std::string out;
    std::size_t i = 0;
    while (i < v.size()) {
        std::size_t j = i;
        while (j + 1 < v.size() && v[j + 1] == v[j] + 1) ++j;
        if (!out.empty()) out += ", ";
        out += std::to_string(v[i]);
        if (j > i) out += "-" + std::to_string(v[j]);
        i = j + 1;
    }
    return out;
}

namespace detail {

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

struct RawEntry {
    std::string value;
    int line = 0;
};

using RawConfig = std::map<std::string, std::map<std::string, RawEntry>>;

inline RawConfig parse_raw(const std::string& text) {
    static const std::set<std::string> sections = {"",       "design",  "truth",     "noise",
                                                   "models", "schemes", "penalty",   "iterative",
                                                   "validation"};
    RawConfig raw;
    std::string section;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ParseError(lineno, "malformed section header");
            section = lower(trim(t.substr(1, t.size() - 2)));
            if (!sections.count(section)) throw ParseError(lineno, "unknown section [" + section + "]");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ParseError(lineno, "expected key = value");
        const std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ParseError(lineno, "empty key");
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        auto& sec = raw[section];
        if (sec.count(key)) throw ParseError(lineno, "duplicate key '" + key + "'");
        sec[key] = {value, lineno};
    }
    return raw;
}

class Reader {
public:
    Reader(const RawConfig& raw, std::string section) : section_(std::move(section)) {
        if (auto it = raw.find(section_); it != raw.end()) entries_ = it->second;
    }

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    const RawEntry* take(const std::string& key) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return nullptr;
        used_.insert(key);
        return &it->second;
    }

    void number(const std::string& key, double& out) {
        if (const RawEntry* e = take(key)) out = to_double(*e, key);
    }
    void optional_number(const std::string& key, std::optional<double>& out) {
        if (const RawEntry* e = take(key)) {
            if (lower(e->value) == "auto" || lower(e->value) == "none") out.reset();
            else out = to_double(*e, key);
        }
    }
    template <class I>
    void integer(const std::string& key, I& out) {
        if (const RawEntry* e = take(key)) out = static_cast<I>(to_uint(*e, key));
    }
    void optional_integer(const std::string& key, std::optional<std::size_t>& out) {
        if (const RawEntry* e = take(key)) {
            if (lower(e->value) == "none") out.reset();
            else out = static_cast<std::size_t>(to_uint(*e, key));
        }
    }
    void text(const std::string& key, std::string& out) {
        if (const RawEntry* e = take(key)) out = e->value;
    }
    void boolean(const std::string& key, bool& out) {
        if (const RawEntry* e = take(key)) {
            const std::string v = lower(e->value);
            if (v == "true" || v == "1" || v == "yes") out = true;
            else if (v == "false" || v == "0" || v == "no") out = false;
            else throw ParseError(e->line, key + ": expected true or false");
        }
    }

    /// Keys not consumed are errors.
    void finish() const {
        for (const auto& [k, e] : entries_)
            if (!used_.count(k))
                throw ParseError(e.line, "unknown key '" + k + "'" +
                                             (section_.empty() ? "" : " in [" + section_ + "]"));
    }

    const std::map<std::string, RawEntry>& entries() const { return entries_; }
    void mark(const std::string& key) { used_.insert(key); }

    static double to_double(const RawEntry& e, const std::string& key) {
        double v;
        if (!parse_double(e.value, v)) throw ParseError(e.line, key + ": expected a number, got '" + e.value + "'");
        return v;
    }
    static std::uint64_t to_uint(const RawEntry& e, const std::string& key) {
        if (e.value.empty() || e.value.find_first_not_of("0123456789") != std::string::npos)
            throw ParseError(e.line, key + ": expected a nonnegative integer, got '" + e.value + "'");
        try {
            return std::stoull(e.value);
        } catch (const std::exception&) {
            throw ParseError(e.line, key + ": integer out of range");
        }
    }

private:
    std::string section_;
    std::map<std::string, RawEntry> entries_;
    std::set<std::string> used_;
};

/// Keys named prefix1, prefix2, ... in order; gaps are errors.
inline std::vector<std::pair<std::string, RawEntry>> numbered(Reader& r, const std::string& prefix) {
    std::vector<std::pair<std::size_t, std::pair<std::string, RawEntry>>> found;
    for (const auto& [k, e] : r.entries()) {
        if (k.size() <= prefix.size() || k.compare(0, prefix.size(), prefix) != 0) continue;
        const std::string num = k.substr(prefix.size());
        if (num.find_first_not_of("0123456789") != std::string::npos) continue;
        found.push_back({std::stoul(num), {k, e}});
    }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::pair<std::string, RawEntry>> out;
    for (std::size_t i = 0; i < found.size(); ++i) {
        if (found[i].first != i + 1)
            throw ParseError(found[i].second.second.line, prefix + " keys must be numbered consecutively from 1");
        r.mark(found[i].second.first);
        out.push_back(found[i].second);
    }
    return out;
}

inline std::string fmt(double v) { return format_double(v); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Validation of the parsed values

inline void validate_config(const ScenarioConfig& c) {
    static const std::set<std::string> families = {"trigonometric", "histogram", "piecewise-polynomial", "polynomial"};
    if (c.n < 2) throw ValidationError("design.n", ">= 2");
    if (!families.count(c.family))
        throw ValidationError("design.family", "one of trigonometric, histogram, piecewise-polynomial, polynomial");
    if (c.degree < 0) throw ValidationError("design.degree", ">= 0");
    if (c.pieces < 1) throw ValidationError("design.pieces", ">= 1");
    if (!(c.Q > 0)) throw ValidationError("design.Q", "> 0");
    if (c.density != "uniform") {
        const auto call = parse_call(c.density);
        double a;
        if (!call || call->name != "linear" || call->args.size() != 1 || !detail::parse_double(call->args[0], a) ||
            !(std::abs(a) < 1.0))
            throw ValidationError("design.density", "uniform or linear(a) with |a| < 1");
    }
    if (!c.truth_coefficients.empty() && !c.truth_csv.empty())
        throw ValidationError("truth", "either coefficients or csv, not both");
    if (c.noise_kind != "gaussian" && c.noise_kind != "bounded")
        throw ValidationError("noise.kind", "gaussian or bounded");
    if (!(c.sigma2 >= 0)) throw ValidationError("noise.sigma2", ">= 0");
    if (c.models.empty()) throw ValidationError("models", "at least one model");
    for (const auto& m : c.models)
        if (m.empty()) throw ValidationError("models", "nonempty index sets");
    if (c.schemes.empty()) throw ValidationError("schemes", "at least one scheme");
    for (const auto& s : c.schemes) {
        const auto call = parse_call(s);
        if (!call) throw ValidationError("schemes", "generator call such as constant(0.5), got '" + s + "'");
        auto num = [&](std::size_t i) {
            double v;
            if (i >= call->args.size() || !detail::parse_double(call->args[i], v) || !(v > 0 && v <= 1))
                throw ValidationError("schemes", "probabilities in (0,1] in '" + s + "'");
            return v;
        };
        if (call->name == "constant" || call->name == "proportional") {
            if (call->args.size() != 1) throw ValidationError("schemes", "one argument in '" + s + "'");
            num(0);
        } else if (call->name == "thresholded") {
            if (call->args.size() != 2) throw ValidationError("schemes", "two arguments in '" + s + "'");
            if (num(0) > num(1)) throw ValidationError("schemes", "thresholded(lo, hi) with lo <= hi");
        } else if (call->name == "file") {
            if (call->args.size() != 1 || call->args[0].empty()) throw ValidationError("schemes", "file(path)");
        } else {
            throw ValidationError("schemes", "constant, proportional, thresholded or file, got '" + call->name + "'");
        }
    }
    if (c.reference_model < 1 || c.reference_model > c.models.size())
        throw ValidationError("schemes.reference_model", "an existing model index");
    if (!(c.delta > 0 && c.delta < 1)) throw ValidationError("delta", "in (0,1)");
    if (!(c.gamma > 0 && c.gamma < 1)) throw ValidationError("gamma", "in (0,1)");
    if (!(c.r > 1)) throw ValidationError("r", "> 1");
    if (!(c.d_of_r > 0)) throw ValidationError("d_of_r", "> 0");
    if (!(c.alpha > 0)) throw ValidationError("alpha", "> 0");
    if (c.C_bias && !(*c.C_bias >= 0)) throw ValidationError("C_bias", ">= 0");
    if (!(c.c_lemma5 >= 0)) throw ValidationError("c_lemma5", ">= 0");
    if (c.bias_proxy && !(*c.bias_proxy >= 0)) throw ValidationError("bias_proxy", ">= 0");
    if (c.iterative_model < 1 || c.iterative_model > c.models.size())
        throw ValidationError("iterative.model", "an existing model index");
    if (!(c.B >= 0)) throw ValidationError("iterative.B", ">= 0");
    if (!(c.delta_scale >= 0)) throw ValidationError("iterative.delta_scale", ">= 0");
    if (c.delta0_override && !(*c.delta0_override >= 0)) throw ValidationError("iterative.delta0_override", ">= 0");
    if (c.log_horizon != "n" && c.log_horizon != "T") throw ValidationError("iterative.log_horizon", "n or T");
    if (c.log_horizon == "T" && !c.T) throw ValidationError("iterative.log_horizon", "T requires iterative.T");
    if (c.n0 > 0 && c.T && c.n0 + *c.T > c.n) throw ValidationError("iterative.T", "n0 + T <= n");
    if (!(c.savings_ratio > 0 && c.savings_ratio <= 1)) throw ValidationError("iterative.savings_ratio", "in (0,1]");
    if (!(c.savings_level > 0 && c.savings_level <= 1)) throw ValidationError("iterative.savings_level", "in (0,1]");
    if (c.replications < 1) throw ValidationError("validation.replications", ">= 1");
    if (c.aux_draws < 1) throw ValidationError("validation.aux_draws", ">= 1");
    if (c.validation_model < 1 || c.validation_model > c.models.size())
        throw ValidationError("validation.model", "an existing model index");
}

// ---------------------------------------------------------------------------
// Parse and serialize

inline ScenarioConfig parse_config(const std::string& text) {
    const detail::RawConfig raw = detail::parse_raw(text);
    ScenarioConfig c;

    detail::Reader top(raw, "");
    top.integer("seed", c.seed);
    top.finish();

    detail::Reader d(raw, "design");
    d.integer("n", c.n);
    d.text("family", c.family);
    {
        std::size_t deg = static_cast<std::size_t>(c.degree), pcs = static_cast<std::size_t>(c.pieces);
        d.integer("degree", deg);
        d.integer("pieces", pcs);
        c.degree = static_cast<int>(deg);
        c.pieces = static_cast<int>(pcs);
    }
    d.number("Q", c.Q);
    d.text("density", c.density);
    d.text("csv", c.design_csv);
    d.finish();

    detail::Reader t(raw, "truth");
    if (const auto* e = t.take("coefficients")) {
        for (const std::string& part : detail::split(e->value, ',')) {
            const auto colon = part.find(':');
            double v;
            if (colon == std::string::npos || !detail::parse_double(detail::trim(part.substr(colon + 1)), v))
                throw ParseError(e->line, "coefficients: expected index:value pairs");
            const auto idx = parse_index_list(detail::trim(part.substr(0, colon)));
            if (!idx || idx->size() != 1) throw ParseError(e->line, "coefficients: bad index '" + part + "'");
            c.truth_coefficients.emplace_back(idx->front(), v);
        }
    }
    t.text("csv", c.truth_csv);
    t.finish();

    detail::Reader nz(raw, "noise");
    nz.text("kind", c.noise_kind);
    nz.number("sigma2", c.sigma2);
    nz.finish();

    detail::Reader m(raw, "models");
    for (const auto& [key, e] : detail::numbered(m, "m")) {
        const auto idx = parse_index_list(e.value);
        if (!idx) throw ParseError(e.line, key + ": expected an index list such as 1-8");
        c.models.push_back(*idx);
    }
    m.finish();

    detail::Reader s(raw, "schemes");
    for (const auto& [key, e] : detail::numbered(s, "k")) c.schemes.push_back(e.value);
    s.integer("reference_model", c.reference_model);
    s.finish();

    detail::Reader p(raw, "penalty");
    p.number("delta", c.delta);
    p.number("gamma", c.gamma);
    p.number("r", c.r);
    p.number("d_of_r", c.d_of_r);
    p.number("alpha", c.alpha);
    p.optional_number("C_bias", c.C_bias);
    p.number("c_lemma5", c.c_lemma5);
    p.optional_number("bias_proxy", c.bias_proxy);
    p.finish();

    detail::Reader it(raw, "iterative");
    it.integer("n0", c.n0);
    it.integer("model", c.iterative_model);
    it.number("B", c.B);
    it.optional_integer("T", c.T);
    it.optional_number("delta0_override", c.delta0_override);
    it.number("delta_scale", c.delta_scale);
    it.text("log_horizon", c.log_horizon);
    it.boolean("estimate_sigma2", c.estimate_sigma2);
    if (const auto* e = it.take("dim_schedule")) {
        for (const std::string& part : detail::split(e->value, ',')) {
            detail::RawEntry pe{part, e->line};
            c.dim_schedule.push_back(static_cast<std::size_t>(detail::Reader::to_uint(pe, "dim_schedule")));
        }
    }
    it.integer("pairs", c.pairs);
    it.number("savings_ratio", c.savings_ratio);
    it.number("savings_level", c.savings_level);
    it.finish();

    detail::Reader v(raw, "validation");
    v.integer("replications", c.replications);
    v.integer("aux_draws", c.aux_draws);
    v.integer("model", c.validation_model);
    v.finish();

    validate_config(c);
    return c;
}

/// Canonical form: fixed section and key order, every field written, unset
/// optional fields omitted, numbers with 17 significant digits.
inline std::string serialize_config(const ScenarioConfig& c) {
    std::ostringstream o;
    using detail::fmt;
    o << "seed = " << c.seed << "\n";
    o << "\n[design]\n";
    o << "n = " << c.n << "\nfamily = " << c.family << "\ndegree = " << c.degree << "\npieces = " << c.pieces
      << "\nQ = " << fmt(c.Q) << "\ndensity = " << c.density << "\n";
    if (!c.design_csv.empty()) o << "csv = " << c.design_csv << "\n";
    o << "\n[truth]\n";
    if (!c.truth_coefficients.empty()) {
        o << "coefficients = ";
        for (std::size_t i = 0; i < c.truth_coefficients.size(); ++i)
            o << (i ? ", " : "") << c.truth_coefficients[i].first << ":" << fmt(c.truth_coefficients[i].second);
        o << "\n";
    }
    if (!c.truth_csv.empty()) o << "csv = " << c.truth_csv << "\n";
    o << "\n[noise]\nkind = " << c.noise_kind << "\nsigma2 = " << fmt(c.sigma2) << "\n";
    o << "\n[models]\n";
    for (std::size_t i = 0; i < c.models.size(); ++i) o << "m" << i + 1 << " = " << format_index_list(c.models[i]) << "\n";
    o << "\n[schemes]\n";
    for (std::size_t i = 0; i < c.schemes.size(); ++i) o << "k" << i + 1 << " = " << c.schemes[i] << "\n";
    o << "reference_model = " << c.reference_model << "\n";
    o << "\n[penalty]\n";
    o << "delta = " << fmt(c.delta) << "\ngamma = " << fmt(c.gamma) << "\nr = " << fmt(c.r)
      << "\nd_of_r = " << fmt(c.d_of_r) << "\nalpha = " << fmt(c.alpha) << "\n";
    if (c.C_bias) o << "C_bias = " << fmt(*c.C_bias) << "\n";
    o << "c_lemma5 = " << fmt(c.c_lemma5) << "\n";
    if (c.bias_proxy) o << "bias_proxy = " << fmt(*c.bias_proxy) << "\n";
    o << "\n[iterative]\n";
    o << "n0 = " << c.n0 << "\nmodel = " << c.iterative_model << "\nB = " << fmt(c.B) << "\n";
    if (c.T) o << "T = " << *c.T << "\n";
    if (c.delta0_override) o << "delta0_override = " << fmt(*c.delta0_override) << "\n";
    o << "delta_scale = " << fmt(c.delta_scale) << "\nlog_horizon = " << c.log_horizon
      << "\nestimate_sigma2 = " << (c.estimate_sigma2 ? "true" : "false") << "\n";
    if (!c.dim_schedule.empty()) {
        o << "dim_schedule = ";
        for (std::size_t i = 0; i < c.dim_schedule.size(); ++i) o << (i ? ", " : "") << c.dim_schedule[i];
        o << "\n";
    }
    o << "pairs = " << c.pairs << "\nsavings_ratio = " << fmt(c.savings_ratio)
      << "\nsavings_level = " << fmt(c.savings_level) << "\n";
    o << "\n[validation]\n";
    o << "replications = " << c.replications << "\naux_draws = " << c.aux_draws << "\nmodel = " << c.validation_model
      << "\n";
    return o.str();
}

/// 16 hex digits of FNV-1a over the canonical serialization.
inline std::string config_digest(const ScenarioConfig& c) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(detail::fnv1a(serialize_config(c))));
    return buf;
}

// ---------------------------------------------------------------------------
// Construction

struct BuiltScenario {
    SimulationScenario sim;
    bool has_truth = false;
    Vec y_data;  ///< observed responses in data mode
    double kraft_sum = 0.0;
};

inline BasisFamily basis_from(const ScenarioConfig& c) {
    if (c.family == "trigonometric") return BasisFamily::trigonometric();
    if (c.family == "histogram") return BasisFamily::histogram(c.pieces);
    if (c.family == "piecewise-polynomial") return BasisFamily::piecewise_polynomial(c.degree, c.pieces);
    if (c.family == "polynomial") return BasisFamily::polynomial();
    throw UnsupportedFamily("unknown basis family " + c.family);
}

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

inline double median(Vec v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Probabilities for one scheme generator. `proxy` is the pointwise size of
/// the reference model's residual.
inline SamplingScheme make_scheme(int k, const std::string& spec, std::span<const double> proxy,
                                  const std::filesystem::path& base) {
    const auto call = parse_call(spec);
    if (!call) throw ValidationError("schemes", "generator call");
    const std::size_t n = proxy.size();
    auto arg = [&](std::size_t i) {
        double v = 0;
        detail::parse_double(call->args[i], v);
        return v;
    };
    if (call->name == "constant") return SamplingScheme::make(k, Vec(n, arg(0)), arg(0), spec);
    if (call->name == "proportional") {
        const double floor = arg(0);
        const double top = proxy.empty() ? 0.0 : *std::max_element(proxy.begin(), proxy.end());
        Vec p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = top > 0.0 ? std::max(floor, proxy[i] / top) : 1.0;
        return SamplingScheme::make(k, std::move(p), floor, spec);
    }
    if (call->name == "thresholded") {
        const double lo = arg(0), hi = arg(1);
        const double med = detail::median(Vec(proxy.begin(), proxy.end()));
        Vec p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = proxy[i] >= med ? hi : lo;
        return SamplingScheme::make(k, std::move(p), lo, spec);
    }
    if (call->name == "file") {
        const CsvTable t = read_csv(detail::resolve(base, call->args[0]));
        const Vec* col = t.column("p");
        if (!col) throw ValidationError("schemes", "column 'p' in " + call->args[0]);
        if (col->size() != n) throw ValidationError("schemes", "one probability per design point in " + call->args[0]);
        return SamplingScheme::make(k, *col, std::nullopt, spec);
    }
    throw ValidationError("schemes", "known generator");
}

/// Resolves files relative to `base`, evaluates the truth, checks the design
/// conditions and the Kraft sum, and assembles the scenario.
inline BuiltScenario build_scenario(const ScenarioConfig& c, const std::filesystem::path& base = ".") {
    validate_config(c);
    BuiltScenario out;
    SimulationScenario& sc = out.sim;

    DesignSpec design = DesignSpec::equispaced(c.n, basis_from(c), c.Q);
    std::optional<CsvTable> table;
    if (!c.design_csv.empty()) {
        table = read_csv(detail::resolve(base, c.design_csv));
        const Vec* t = table->column("t");
        if (!t) throw ValidationError("design.csv", "a 't' column");
        if (t->size() != c.n) throw ValidationError("design.n", "equal to the number of CSV rows");
        design.points = *t;
        if (const Vec* q = table->column("q")) design.q_values = *q;
    }
    if (c.density != "uniform" && !(table && table->column("q"))) {
        double a = 0;
        detail::parse_double(parse_call(c.density)->args[0], a);
        for (std::size_t i = 0; i < design.size(); ++i) design.q_values[i] = 1.0 + a * (2.0 * design.points[i] - 1.0);
    }
    design.validate();
    sc.design = design;

    std::vector<Model> models;
    for (const auto& idx : c.models) models.push_back(Model::on(design, idx));
    for (const Model& m : models) check_conditions(design, m);
    sc.models = prepare_models(design, models);

    if (!c.truth_coefficients.empty()) {
        std::vector<int> idx;
        Vec coef;
        for (const auto& [j, v] : c.truth_coefficients) {
            if (!design.basis.valid_index(j)) throw ValidationError("truth.coefficients", "valid basis indices");
            idx.push_back(j);
            coef.push_back(v);
        }
        sc.x0 = evaluate_expansion(design, idx, coef);
        out.has_truth = true;
    } else if (!c.truth_csv.empty()) {
        const CsvTable t = read_csv(detail::resolve(base, c.truth_csv));
        const Vec* x = t.column("x0");
        if (!x || x->size() != c.n) throw ValidationError("truth.csv", "an 'x0' column with n rows");
        sc.x0 = *x;
        out.has_truth = true;
    }
    if (table)
        if (const Vec* y = table->column("y")) out.y_data = *y;
    if (!out.has_truth && out.y_data.empty())
        throw ValidationError("truth", "coefficients, csv, or a 'y' column in design.csv");

    sc.noise = {c.sigma2, c.noise_kind == "gaussian" ? NoiseKind::gaussian : NoiseKind::bounded_symmetric};

    // Reference residual for the scheme generators and the bias quantities.
    const std::size_t ref = c.reference_model - 1;
    Vec proxy(design.size());
    if (out.has_truth) {
        for (const FittedModel& fm : sc.models) sc.projections.push_back(project_q(fm.g, design.q_values, sc.x0));
        for (std::size_t i = 0; i < proxy.size(); ++i) proxy[i] = std::abs(sc.x0[i] - sc.projections[ref][i]);
    } else {
        const Vec fit = project_q(sc.models[ref].g, design.q_values, out.y_data);
        for (std::size_t i = 0; i < proxy.size(); ++i) proxy[i] = std::abs(out.y_data[i] - fit[i]);
    }

    PenaltyConfig& p = sc.pcfg;
    p.delta = c.delta;
    p.gamma = c.gamma;
    p.r_moment = c.r;
    p.d_of_r = c.d_of_r;
    p.sigma2 = c.sigma2;
    p.Q = c.Q;
    p.alpha = c.alpha;
    p.c_lemma5 = c.c_lemma5;
    if (c.C_bias) {
        p.C_bias = *c.C_bias;
    } else if (out.has_truth) {
        double cb = 0.0;
        for (const Vec& xm : sc.projections)
            for (std::size_t i = 0; i < xm.size(); ++i) cb = std::max(cb, std::abs(sc.x0[i] - xm[i]));
        p.C_bias = cb;
    } else {
        throw ValidationError("penalty.C_bias", "set explicitly when the truth is unknown");
    }
    for (std::size_t m = 0; m < sc.models.size(); ++m) {
        if (c.bias_proxy) p.bias_proxy[m] = *c.bias_proxy;
        else if (out.has_truth) p.bias_proxy[m] = empirical_norm_sq(difference(sc.x0, sc.projections[m]), design.q_values);
        else p.bias_proxy[m] = p.C_bias * p.C_bias;
    }
    p.validate();

    for (std::size_t k = 0; k < c.schemes.size(); ++k)
        sc.collection.schemes.push_back(make_scheme(static_cast<int>(k) + 1, c.schemes[k], proxy, base));
    sc.collection.validate(design.size());

    sc.kraft = default_kraft(p);
    std::vector<std::size_t> dims;
    for (const FittedModel& fm : sc.models) dims.push_back(fm.model.dim());
    out.kraft_sum = check_kraft(sc.kraft, dims, static_cast<int>(sc.collection.size()));

    IterativeConfig& ic = sc.icfg;
    ic.n0 = c.n0;
    ic.m0 = sc.models[c.iterative_model - 1].model;
    ic.B_au = c.B;
    ic.T = c.T;
    ic.dim_schedule = c.dim_schedule;
    ic.delta0_override = c.delta0_override;
    ic.delta_scale = c.delta_scale;
    ic.log_horizon_T = c.log_horizon == "T";
    ic.estimate_sigma2 = c.estimate_sigma2;
    if (ic.n0 > 0) ic.validate(design.size());

    sc.reference_model = c.validation_model - 1;
    sc.aux_draws = c.aux_draws;
    sc.l8_pairs = c.pairs;
    sc.label_savings_ratio = c.savings_ratio;
    sc.label_savings_level = c.savings_level;
    return out;
}

}  // namespace activereg
