#pragma once

// Subcommand dispatch for the command-line tool. Every output file is written
// to a temporary name and renamed into place. Deterministic outputs never
// contain timings; those go to run_report.json only.

#include <activereg/batch.hpp>
#include <activereg/csv.hpp>
#include <activereg/error.hpp>
#include <activereg/iterative.hpp>
#include <activereg/parallel.hpp>
#include <activereg/penalties.hpp>
#include <activereg/scenario.hpp>
#include <activereg/validation.hpp>

#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace activereg {

inline constexpr const char* kVersion = "1.0.0";

struct CommandOptions {
    std::string command;
    std::filesystem::path config_path;
    std::filesystem::path out_dir = ".";
    unsigned workers = default_workers();
    std::string bound = "all";
    bool per_rep_csv = false;
    std::optional<std::size_t> replications;
};

struct RunReport {
    std::string command;
    std::string config_digest;
    std::vector<std::string> outputs;
    double wall_seconds = 0.0;
    std::map<std::string, std::string> versions;
};

using Json = nlohmann::ordered_json;

/// Writes `content` to `dir/name` through a temporary file and a rename.
inline std::filesystem::path write_atomic(const std::filesystem::path& dir, const std::string& name,
                                          const std::string& content) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    const std::filesystem::path final_path = dir / name;
    const std::filesystem::path tmp = dir / ("." + name + ".tmp");
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write " + tmp.string());
        f << content;
        f.flush();
        if (!f) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, final_path, ec);
    if (ec) throw IoError("cannot rename to " + final_path.string() + ": " + ec.message());
    return final_path;
}

/// Reads and validates the config; ACTIVEREG_SEED replaces the seed when set.
inline ScenarioConfig load_config(const std::filesystem::path& path) {
    ScenarioConfig c = parse_config(read_text(path));
    if (const char* env = std::getenv("ACTIVEREG_SEED"); env && *env) {
        const std::string s(env);
        if (s.find_first_not_of("0123456789") != std::string::npos)
            throw ValidationError("ACTIVEREG_SEED", "unsigned 64-bit integer");
        try {
            c.seed = std::stoull(s);
        } catch (const std::exception&) {
            throw ValidationError("ACTIVEREG_SEED", "unsigned 64-bit integer");
        }
    }
    return c;
}

namespace detail {

inline Json to_json_vec(std::span<const double> v) {
    Json a = Json::array();
    for (double x : v) a.push_back(x);
    return a;
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

/// Responses: simulated from the truth or read from the data file.
inline Vec responses(const BuiltScenario& b, std::uint64_t seed, std::string_view purpose) {
    if (!b.y_data.empty()) return b.y_data;
    Stream st = Stream::derive(seed, purpose);
    Vec y = b.sim.noise.draw(b.sim.n(), st);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.sim.x0[i];
    return y;
}

struct Context {
    const CommandOptions& opts;
    ScenarioConfig cfg;
    BuiltScenario built;
    std::string digest;
    std::vector<std::string> outputs;

    void emit(const std::string& name, const std::string& content) {
        write_atomic(opts.out_dir, name, content);
        outputs.push_back(name);
    }
};

inline Json penalty_json(const PenaltyBreakdown& b) {
    return Json{{"pen0", b.pen0}, {"pen1", b.pen1}, {"pen2", b.pen2}, {"bias_term", b.bias_term},
                {"combined", b.combined}};
}

inline std::string penalty_table_csv(const SimulationScenario& sc) {
    CsvWriter w({"m", "k", "pen0", "pen1", "pen2", "combined"});
    for (const FittedModel& fm : sc.models)
        for (const SamplingScheme& s : sc.collection.schemes) {
            const PenaltyBreakdown b = pen_combined(fm.model, s.k, sc.n(), sc.pcfg, s.p_min, sc.kraft);
            w.row(fm.index + 1, s.k, b.pen0, b.pen1, b.pen2, b.combined);
        }
    return w.str();
}

inline void run_batch(Context& cx) {
    const SimulationScenario& sc = cx.built.sim;
    const Vec y = responses(cx.built, cx.cfg.seed, "batch-noise");
    const BatchResult r = select_model(sc.design, sc.models, sc.collection, y, sc.pcfg, sc.kraft,
                                       Stream::derive(cx.cfg.seed, "batch-weights"));
    Json j;
    j["config_digest"] = cx.digest;
    j["seed"] = cx.cfg.seed;
    j["chosen_model"] = r.chosen_m + 1;
    j["chosen_k"] = r.per_model[r.chosen_m].chosen_k;
    j["penalized_loss"] = r.penalized_loss;
    j["expected_effective_samples"] = r.expected_effective_samples;
    j["labels_used"] = r.estimate.active_count;
    Json models = Json::array();
    for (const ModelOutcome& o : r.per_model) {
        Json m;
        m["model"] = o.model_index + 1;
        m["dim"] = sc.models[o.model_index].model.dim();
        m["chosen_k"] = o.chosen_k;
        m["fitted"] = o.fitted;
        if (o.fitted) {
            m["active_count"] = o.estimate.active_count;
            m["empirical_loss"] = o.empirical_loss;
            m["penalty"] = o.penalty;
            m["penalized_loss"] = o.penalized_loss;
            m["coefficients"] = to_json_vec(o.estimate.coefficients);
        } else {
            m["skip_reason"] = o.skip_reason;
        }
        models.push_back(m);
    }
    j["models"] = models;
    j["coefficients"] = to_json_vec(r.estimate.coefficients);
    j["fitted"] = to_json_vec(r.estimate.fitted);
    if (cx.built.has_truth) {
        j["true_loss"] = loss_true(r.estimate.fitted, sc.x0, sc.design.q_values, sc.pcfg.sigma2);
        try {
            const OracleGap g = oracle_gap(r, sc.design, sc.models, sc.projections, sc.x0, sc.collection, sc.pcfg, sc.kraft);
            j["oracle"] = Json{{"loss", g.loss}, {"factor", g.factor}, {"bracket", g.bracket}, {"rhs", g.rhs},
                               {"holds", g.holds}};
        } catch (const GammaOutOfRange& e) {
            j["oracle"] = Json{{"skipped", e.what()}};
        }
    }
    cx.emit("batch.json", dump(j));
    cx.emit("penalties.csv", penalty_table_csv(sc));
}

inline void run_iterative(Context& cx) {
    const SimulationScenario& sc = cx.built.sim;
    if (sc.icfg.n0 == 0) throw ValidationError("iterative.n0", "set for the iterative command");
    const Vec y = responses(cx.built, cx.cfg.seed, "iterative-noise");
    const LabelSource label = [&y](std::size_t i) { return y[i]; };
    Stream st = Stream::derive(cx.cfg.seed, "iterative");
    const IterativeResult r = iterative_run(sc.design, label, sc.icfg, sc.pcfg, st);
    const IterativeState& s = r.state;

    CsvWriter trace({"j", "candidate", "p", "w", "delta", "B", "labels_used"});
    for (const StepRecord& rec : s.trace)
        trace.row(rec.j, rec.candidate + 1, rec.p, rec.w ? 1 : 0, rec.delta, rec.B, rec.labels_used);

    Json j;
    j["config_digest"] = cx.digest;
    j["seed"] = cx.cfg.seed;
    j["n0"] = sc.icfg.n0;
    j["steps"] = s.j;
    j["labels_used"] = s.labels_used;
    j["final_delta"] = s.delta_history.back();
    j["final_B"] = s.B;
    j["sigma2_used"] = s.sigma2_used;
    if (s.sigma2_estimate) j["sigma2_estimate"] = *s.sigma2_estimate;
    j["probability_sum"] = realized_probability_sum(s);
    j["coefficients"] = to_json_vec(r.estimate.coefficients);
    if (cx.built.has_truth) {
        const std::size_t mi = cx.cfg.iterative_model - 1;
        const double loss_star = loss_true(sc.projections[mi], sc.x0, sc.design.q_values, sc.pcfg.sigma2);
        j["true_loss"] = loss_true(r.estimate.fitted, sc.x0, sc.design.q_values, sc.pcfg.sigma2);
        j["best_in_model_loss"] = loss_star;
        j["effective_sample_bound"] = effective_sample_bound(s, sc.design, sc.icfg, loss_star);
    }
    cx.emit("iterative.json", dump(j));
    cx.emit("trace.csv", trace.str());
}

/// "all" leaves out the iterative check when the config has no iterative block.
inline std::vector<BoundId> bound_ids(const std::string& arg, bool iterative_configured) {
    std::vector<BoundId> ids;
    if (arg == "all") {
        for (const auto& [id, name] : bound_names())
            if (id != BoundId::T3 || iterative_configured) ids.push_back(id);
        return ids;
    }
    for (const std::string& part : split(arg, ',')) ids.push_back(parse_bound_id(part));
    return ids;
}

inline void run_validate(Context& cx) {
    if (!cx.built.has_truth) throw ValidationError("truth", "a known truth for validate");
    const std::vector<BoundId> ids = bound_ids(cx.opts.bound, cx.cfg.n0 > 0);
    if (cx.cfg.n0 == 0 && std::find(ids.begin(), ids.end(), BoundId::T3) != ids.end())
        throw ValidationError("iterative.n0", "set for the T3 check");
    BoundCheckSpec base;
    base.replications = cx.opts.replications.value_or(cx.cfg.replications);
    base.seed = cx.cfg.seed;
    base.workers = cx.opts.workers;
    base.keep_per_rep = cx.opts.per_rep_csv;
    base.model = cx.cfg.validation_model - 1;
    const ValidationReport rep = validate_bounds(cx.built.sim, ids, base);

    Json j;
    j["config_digest"] = cx.digest;
    j["seed"] = cx.cfg.seed;
    j["all_gated_pass"] = rep.all_gated_pass();
    Json entries = Json::array();
    for (const ReportEntry& e : rep.entries) {
        Json x;
        x["bound_id"] = e.bound_id;
        x["label"] = e.label;
        x["replications"] = e.replications;
        x["exceedances"] = e.exceedances;
        x["frequency"] = e.frequency;
        x["wilson_lower"] = e.wilson.lower;
        x["wilson_upper"] = e.wilson.upper;
        x["nominal"] = e.nominal;
        x["rule"] = to_string(e.rule);
        x["gated"] = e.gated();
        x["pass"] = e.pass;
        Json d = Json::object();
        for (const auto& [k, v] : e.diagnostics) d[k] = v;
        x["diagnostics"] = d;
        entries.push_back(x);
    }
    j["entries"] = entries;
    cx.emit("validation.json", dump(j));
    if (cx.opts.per_rep_csv) {
        CsvWriter w({"label", "replication", "margin"});
        for (const ReportEntry& e : rep.entries)
            for (std::size_t i = 0; i < e.per_rep.size(); ++i) w.row(e.label, i, e.per_rep[i]);
        cx.emit("validation_reps.csv", w.str());
    }
}

/// Full-data weighted least squares for every model.
inline void run_fit(Context& cx) {
    const SimulationScenario& sc = cx.built.sim;
    const Vec y = responses(cx.built, cx.cfg.seed, "fit-noise");
    const std::size_t n = sc.n();
    const Vec ones(n, 1.0);
    const WeightDraw all = weights_from_uniforms(ones, Vec(n, 0.0));
    Json j;
    j["config_digest"] = cx.digest;
    j["seed"] = cx.cfg.seed;
    Json models = Json::array();
    for (const FittedModel& fm : sc.models) {
        const Estimate e = fit_weighted(fm.g, sc.design.q_values, y, ones, all);
        Json m;
        m["model"] = fm.index + 1;
        m["indices"] = fm.model.index_set;
        m["coefficients"] = to_json_vec(e.coefficients);
        m["empirical_loss"] = loss_empirical(e.fitted, y, sc.design.q_values, ones, all.weights);
        if (cx.built.has_truth) m["true_loss"] = loss_true(e.fitted, sc.x0, sc.design.q_values, sc.pcfg.sigma2);
        models.push_back(m);

        CsvWriter w({"t", "y", "fitted", "residual"});
        for (std::size_t i = 0; i < n; ++i) w.row(sc.design.points[i], y[i], e.fitted[i], y[i] - e.fitted[i]);
        cx.emit("fit_m" + std::to_string(fm.index + 1) + ".csv", w.str());
    }
    j["models"] = models;
    cx.emit("fit.json", dump(j));
}

/// Design conditions, Kraft sum, scheme summaries and the penalty table.
inline void run_report(Context& cx) {
    const SimulationScenario& sc = cx.built.sim;
    Json j;
    j["config_digest"] = cx.digest;
    j["config"] = serialize_config(cx.cfg);
    j["n"] = sc.n();
    j["kraft_sum"] = cx.built.kraft_sum;
    Json models = Json::array();
    for (const FittedModel& fm : sc.models) {
        const DesignConditions dc = check_conditions(sc.design, fm.model);
        Json m;
        m["model"] = fm.index + 1;
        m["dim"] = fm.model.dim();
        m["gram_deviation"] = dc.as_deviation;
        m["q_max"] = dc.q_max;
        m["sup_norm"] = dc.c_m_observed;
        m["c_m"] = fm.model.c_m;
        m["bias_proxy"] = sc.pcfg.bias_proxy.at(fm.index);
        m["selected_k"] = select_sampling_per_model(fm.model, sc.collection, sc.n(), sc.pcfg, sc.kraft);
        Json pens = Json::array();
        for (const SamplingScheme& s : sc.collection.schemes) {
            Json p = penalty_json(pen_combined(fm.model, s.k, sc.n(), sc.pcfg, s.p_min, sc.kraft));
            p["k"] = s.k;
            pens.push_back(p);
        }
        m["penalties"] = pens;
        models.push_back(m);
    }
    j["models"] = models;
    Json schemes = Json::array();
    for (const SamplingScheme& s : sc.collection.schemes) {
        double sum = 0.0;
        for (double p : s.probs) sum += p;
        schemes.push_back(Json{{"k", s.k}, {"generator", s.label}, {"p_min", s.p_min}, {"probability_sum", sum}});
    }
    j["schemes"] = schemes;
    j["C_bias"] = sc.pcfg.C_bias;
    if (sc.icfg.n0 > 0) {
        const IterativeConfig& ic = sc.icfg;
        j["iterative"] = Json{{"n0", ic.n0},
                              {"model_dim", ic.m0.dim()},
                              {"delta0", ic.delta0_override.value_or(delta0(ic.n0, ic.m0, sc.pcfg, 1.0, ic.B_au))},
                              {"stop_time", ic.stop_time(sc.n())}};
    }
    cx.emit("report.json", dump(j));
    cx.emit("penalties.csv", penalty_table_csv(sc));
}

}  // namespace detail

inline RunReport run_command(const CommandOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    detail::Context cx{opts, load_config(opts.config_path), {}, {}, {}};
    cx.digest = config_digest(cx.cfg);
    cx.built = build_scenario(cx.cfg, opts.config_path.parent_path());

    if (opts.command == "batch") detail::run_batch(cx);
    else if (opts.command == "iterative") detail::run_iterative(cx);
    else if (opts.command == "validate") detail::run_validate(cx);
    else if (opts.command == "fit") detail::run_fit(cx);
    else if (opts.command == "report") detail::run_report(cx);
    else throw ValidationError("command", "one of batch, iterative, validate, fit, report");

    RunReport rr;
    rr.command = opts.command;
    rr.config_digest = cx.digest;
    rr.outputs = cx.outputs;
    rr.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rr.versions = {{"activereg", kVersion}, {"compiler", __VERSION__}, {"cxx", std::to_string(__cplusplus)}};

    Json j;
    j["command"] = rr.command;
    j["config_digest"] = rr.config_digest;
    j["outputs"] = rr.outputs;
    j["wall_seconds"] = rr.wall_seconds;
    j["workers"] = opts.workers;
    j["versions"] = rr.versions;
    write_atomic(opts.out_dir, "run_report.json", detail::dump(j));
    return rr;
}

}  // namespace activereg
