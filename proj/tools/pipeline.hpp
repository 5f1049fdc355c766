#pragma once

#include "config.hpp"

#include "tailhawk/tailhawk.hpp"

#include <atomic>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

namespace tailhawk::cli {

namespace fs = std::filesystem;

struct Context {
    RunConfig config;
    fs::path out;
    std::string hash;     ///< config hash embedded in every output
    bool force = false;
};

namespace detail {

inline std::mutex log_mutex;

template <class... Args>
void log(const Args&... args) {
    std::ostringstream s;
    (s << ... << args);
    std::lock_guard lock(log_mutex);
    std::cerr << s.str() << '\n';
}

/// Runs task(i) for i in [0, n) on `jobs` threads pulling from a shared counter.
/// Every task runs even if others fail; failures are reported together.
inline void run_parallel(std::size_t n, int jobs, const std::function<void(std::size_t)>& task, const std::string& what) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                task(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), std::max<std::size_t>(n, 1));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    std::size_t failed = 0;
    std::string first;
    for (auto& e : errors) {
        if (!e) continue;
        try {
            std::rethrow_exception(e);
        } catch (const std::exception& ex) {
            log(what, ": ", ex.what());
            if (failed == 0) first = ex.what();
        }
        ++failed;
    }
    if (failed > 0) throw std::runtime_error(what + ": " + std::to_string(failed) + " of " + std::to_string(n) + " tasks failed (first: " + first + ")");
}

inline std::string header_comment(const Context& ctx) {
    return std::string("# tailhawk ") + kVersion + " config_hash " + ctx.hash + "\n";
}

inline std::string threshold_label(double a_u) { return "a_u=" + format_double(a_u); }

inline fs::path fit_path(const Context& ctx, const std::string& slug, double a_u) {
    return ctx.out / "fits" / slug / (threshold_label(a_u) + ".json");
}
inline fs::path forecast_path(const Context& ctx, const std::string& slug, double a_u, const char* ext = ".json") {
    return ctx.out / "forecasts" / slug / (threshold_label(a_u) + ext);
}

inline std::string dump(const Json& j) { return j.dump(1) + "\n"; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Input series
// ---------------------------------------------------------------------------

struct StoredSeries {
    ReturnSeries series;
    std::string values_hash;
};

inline void write_series(const Context& ctx, const ReturnSeries& s, const std::string& source, Json extra = Json::object()) {
    std::ostringstream body;
    write_returns(body, s);
    const std::string rows = body.str();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(SplitMix64::fnv1a(rows)));
    Json meta = document("series", ctx.hash);
    meta["source"] = source;
    meta["observations"] = s.size();
    meta["split_index"] = s.split_index;
    meta["split_date"] = s.split_index < s.size() ? s.timestamps[s.split_index] : "";
    meta["first_date"] = s.timestamps.front();
    meta["last_date"] = s.timestamps.back();
    meta["values_hash"] = buf;
    for (auto& [k, v] : extra.items()) meta[k] = v;
    write_atomic(ctx.out / "data" / "series.csv", detail::header_comment(ctx) + rows);
    write_atomic(ctx.out / "data" / "series.json", detail::dump(meta));
}

inline StoredSeries cmd_ingest(const Context& ctx) {
    const auto& c = ctx.config;
    if (c.data_path.empty()) throw ConfigError("ingest: data.path is not set");
    ReturnSeries s = load_returns(c.data_path, c.data_format == "prices" ? SeriesFormat::prices : SeriesFormat::returns, c.split_date);
    write_series(ctx, s, "ingest", {{"path", c.data_path}, {"format", c.data_format}});
    detail::log("ingest: ", s.size(), " returns (", s.split_index, " in-sample) from ", c.data_path);
    return {s, load_document(ctx.out / "data" / "series.json", "series")->at("values_hash").get<std::string>()};
}

/// The series written by ingest/simulate; ingests data.path when there is none yet.
inline StoredSeries load_series(const Context& ctx) {
    const auto meta = load_document(ctx.out / "data" / "series.json", "series");
    if (!meta) {
        if (!ctx.config.data_path.empty()) return cmd_ingest(ctx);
        throw std::runtime_error("no input series in " + (ctx.out / "data").string() + ": run `ingest` or `simulate` first");
    }
    StoredSeries s;
    s.series = load_returns((ctx.out / "data" / "series.csv").string(), SeriesFormat::returns, meta->at("split_date").get<std::string>());
    s.values_hash = meta->at("values_hash").get<std::string>();
    return s;
}

inline void cmd_simulate(const Context& ctx) {
    const auto& c = ctx.config;
    const std::uint64_t seed = derive_seed(c.seed, "simulate");
    if (c.sim_model == "hawkes") {
        HawkesSimConfig sc;
        sc.params = c.sim_hawkes;
        sc.bulk = c.sim_nu > 0.0 ? BulkDist::student_t(c.sim_nu) : BulkDist::normal();
        sc.u_left = c.sim_u_left;
        sc.u_right = c.sim_u_right;
        sc.horizon = c.sim_horizon;
        sc.burn_in = c.sim_burn_in;
        sc.in_sample = c.sim_in_sample;
        sc.seed = seed;
        const auto sim = simulate_2tpot(sc);
        Json truth = document("truth", ctx.hash);
        truth["model"] = "hawkes";
        truth["params"] = to_json(sc.params);
        truth["bulk_nu"] = tailhawk::detail::num(c.sim_nu > 0.0 ? c.sim_nu : kInf);
        truth["thresholds"] = {{"u_left", sc.u_left}, {"u_right", sc.u_right}};
        for (Tail o : {Tail::left, Tail::right}) {
            Json ev = Json::array();
            for (const auto& e : sim.events.events(o)) ev.push_back({e.t, e.magnitude});
            truth["events"][tail_name(o)] = ev;
        }
        write_series(ctx, sim.series, "simulate");
        write_atomic(ctx.out / "data" / "truth.json", detail::dump(truth));
        detail::log("simulate: ", sim.series.size(), " steps, ", sim.events.left.size(), " left / ", sim.events.right.size(), " right events");
    } else {
        GarchSimConfig sc;
        sc.params = c.sim_garch;
        sc.horizon = c.sim_horizon;
        sc.burn_in = c.sim_burn_in;
        sc.in_sample = c.sim_in_sample;
        sc.seed = seed;
        const auto series = simulate_garch(sc);
        Json truth = document("truth", ctx.hash);
        truth["model"] = "garch";
        truth["params"] = to_json(sc.params);
        write_series(ctx, series, "simulate");
        write_atomic(ctx.out / "data" / "truth.json", detail::dump(truth));
        detail::log("simulate: ", series.size(), " GARCH steps");
    }
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

namespace detail {

/// Identity of a fit: everything that changes its result.
inline std::string fit_key(const Context& ctx, const StoredSeries& s, const std::string& model, double a_u, const std::string& depends = "") {
    const auto& c = ctx.config;
    Json k;
    k["values_hash"] = s.values_hash;
    k["split_index"] = s.series.split_index;
    k["model"] = model;
    k["a_u"] = a_u;
    k["seed"] = c.seed;
    k["starts"] = c.starts;
    k["min_events"] = c.min_events;
    k["max_iterations"] = c.max_iterations;
    k["intensity_evaluation"] = intensity_evaluation_name(c.intensity);
    k["garch_min_length"] = c.garch_min_length;
    k["depends"] = depends;
    k["version"] = kVersion;
    return config_hash(k);
}

/// Existing document with a matching key, unless --force.
inline std::optional<Json> reusable(const Context& ctx, const fs::path& path, const std::string& key) {
    if (ctx.force) return std::nullopt;
    auto doc = load_document(path, "fit");
    if (!doc || doc->value("fit_key", "") != key) return std::nullopt;
    return doc;
}

inline Json fit_document(const Context& ctx, const std::string& model, const char* kind, double a_u, const std::string& key,
                         const StoredSeries& s, Json fit) {
    Json doc = document("fit", ctx.hash);
    doc["model"] = model;
    doc["kind"] = kind;
    doc["a_u"] = a_u;
    doc["fit_key"] = key;
    doc["series"] = {{"observations", s.series.size()}, {"split_index", s.series.split_index}, {"values_hash", s.values_hash}};
    doc["fit"] = std::move(fit);
    return doc;
}

struct FitCounters {
    std::atomic<int> fitted{0};
    std::atomic<int> reused{0};
};

/// The Hawkes chain at one threshold: H1 -> H2 -> H2u -> H2bi, each warm-started
/// from the fits before it so that the nesting order of the likelihoods holds.
inline void fit_hawkes_chain(const Context& ctx, const StoredSeries& s, double a_u, FitCounters& counters) {
    const auto& c = ctx.config;
    struct Stage {
        const char* name;
        HawkesVariant variant;
        bool constrained;
    };
    static constexpr Stage stages[] = {{"H1", HawkesVariant::symmetric, true},
                                       {"H2", HawkesVariant::common, true},
                                       {"H2u", HawkesVariant::common, false},
                                       {"H2bi", HawkesVariant::bivariate, false}};
    std::optional<ExceedancePair> ex;
    std::vector<HawkesParams> warm;
    for (const auto& stage : stages) {
        std::vector<const ModelSpec*> wanted;
        for (const auto& m : c.models) {
            if (m.kind == ModelKind::hawkes && m.variant == stage.variant && m.constrained == stage.constrained) wanted.push_back(&m);
        }
        if (wanted.empty()) continue;
        // all bulk families of a stage share one exceedance fit
        std::vector<std::pair<const ModelSpec*, std::string>> pending;
        std::optional<HawkesParams> params;
        for (const auto* m : wanted) {
            const std::string key = fit_key(ctx, s, m->name, a_u);
            if (auto doc = reusable(ctx, fit_path(ctx, m->slug(), a_u), key)) {
                params = hawkes_params_from_json(doc->at("fit").at("params"));
                ++counters.reused;
            } else {
                pending.emplace_back(m, key);
            }
        }
        if (!pending.empty()) {
            if (!ex) ex = extract_exceedances(s.series, a_u, c.min_events);
            FitOptions opt;
            opt.constrain_a_lambda = stage.constrained;
            opt.starts = c.starts;
            opt.seed = derive_seed(c.seed, std::string("fit/") + stage.name + "/" + format_double(a_u));
            opt.min_events = c.min_events;
            opt.optim.max_iterations = c.max_iterations;
            opt.warm_starts = warm;
            opt.intensity = c.intensity;
            FittedHawkes fit = fit_hawkes(s.series.values, *ex, s.series.split_index, stage.variant, opt);
            for (const auto& [m, key] : pending) {
                fit.bulk_family = m->family;
                write_atomic(fit_path(ctx, m->slug(), a_u), dump(fit_document(ctx, m->name, "hawkes", a_u, key, s, to_json(fit))));
                ++counters.fitted;
                log("fit: ", m->name, " ", threshold_label(a_u), "  loglik ", format_double(fit.loglik_exceedance + fit.loglik_bulk()),
                    fit.report.converged ? "" : "  (not converged: " + fit.report.message + ")");
            }
            params = fit.params;
        }
        warm.push_back(*params);
    }
}

/// GARCH base fits (always written, since GARCH-EVT depends on them) then the EVT tails per threshold.
inline void fit_garch_models(const Context& ctx, const StoredSeries& s, FitCounters& counters) {
    const auto& c = ctx.config;
    std::set<std::string> bases;
    for (const auto& m : c.models) {
        if (m.kind == ModelKind::garch) bases.insert(m.base_name());
    }
    if (bases.empty()) return;
    const auto in_sample = s.series.in_sample();
    static const char* const order[] = {"G0^N", "G0^T", "G1^N", "G1^T"};
    std::map<std::string, FittedGarch> fits;
    std::map<std::string, std::string> keys;
    for (const char* name : order) {
        const bool needed = std::any_of(bases.begin(), bases.end(), [&](const std::string& b) { return b == name; });
        // lower-order fits are cheap and serve as warm starts
        const bool helper = std::any_of(bases.begin(), bases.end(), [&](const std::string& b) { return b > std::string(name); });
        if (!needed && !helper) continue;
        const ModelSpec m = parse_model(name);
        const std::string key = fit_key(ctx, s, name, 0.0);
        keys[name] = key;
        if (auto doc = reusable(ctx, fit_path(ctx, m.slug(), 0.0), key)) {
            fits[name] = fitted_garch_from_json(doc->at("fit"));
            ++counters.reused;
            continue;
        }
        GarchFitOptions opt;
        opt.starts = c.starts;
        opt.seed = derive_seed(c.seed, std::string("fit/") + name);
        opt.min_length = c.garch_min_length;
        opt.optim.max_iterations = c.max_iterations;
        for (const auto& [prev, f] : fits) opt.warm_starts.push_back(f.params);
        FittedGarch fit = fit_garch(in_sample, m.r, m.family, opt);
        fits[name] = fit;
        write_atomic(fit_path(ctx, m.slug(), 0.0), dump(fit_document(ctx, name, "garch", 0.0, key, s, to_json(fit))));
        ++counters.fitted;
        log("fit: ", name, "  loglik ", format_double(fit.loglik));
    }
    for (const auto& m : c.models) {
        if (m.kind != ModelKind::garch || !m.evt) continue;
        const FittedGarch& base = fits.at(m.base_name());
        for (double a_u : c.thresholds) {
            const std::string key = fit_key(ctx, s, m.name, a_u, keys.at(m.base_name()));
            if (reusable(ctx, fit_path(ctx, m.slug(), a_u), key)) {
                ++counters.reused;
                continue;
            }
            const FittedGarch evt = fit_garch_evt(base, in_sample, a_u, c.min_events);
            write_atomic(fit_path(ctx, m.slug(), a_u), dump(fit_document(ctx, m.name, "garch", a_u, key, s, to_json(evt))));
            ++counters.fitted;
        }
        log("fit: ", m.name, " at ", c.thresholds.size(), " thresholds");
    }
}

}  // namespace detail

struct FitSummary {
    int fitted = 0;
    int reused = 0;
};

inline FitSummary cmd_fit(const Context& ctx) {
    const auto& c = ctx.config;
    const StoredSeries s = load_series(ctx);
    const bool any_hawkes = std::any_of(c.models.begin(), c.models.end(), [](const ModelSpec& m) { return m.kind == ModelKind::hawkes; });
    const bool any_garch = std::any_of(c.models.begin(), c.models.end(), [](const ModelSpec& m) { return m.kind == ModelKind::garch; });
    // unit 0: all GARCH fits; units 1..: one Hawkes chain per threshold
    std::vector<std::function<void()>> units;
    detail::FitCounters counters;
    if (any_garch) units.emplace_back([&] { detail::fit_garch_models(ctx, s, counters); });
    if (any_hawkes) {
        for (double a_u : c.thresholds) units.emplace_back([&, a_u] { detail::fit_hawkes_chain(ctx, s, a_u, counters); });
    }
    detail::run_parallel(units.size(), c.jobs, [&](std::size_t i) { units[i](); }, "fit");
    detail::log("fit: ", counters.fitted.load(), " fitted, ", counters.reused.load(), " reused");
    return {counters.fitted.load(), counters.reused.load()};
}

// ---------------------------------------------------------------------------
// Forecasting and backtesting
// ---------------------------------------------------------------------------

struct Cell {
    const ModelSpec* model;
    double a_u;
};

inline std::vector<Cell> cells(const RunConfig& c) {
    std::vector<Cell> out;
    for (const auto& m : c.models) {
        if (m.threshold_based()) {
            for (double a_u : c.thresholds) out.push_back({&m, a_u});
        } else {
            out.push_back({&m, 0.0});
        }
    }
    return out;
}

inline Json load_fit(const Context& ctx, const Cell& cell) {
    auto doc = load_document(detail::fit_path(ctx, cell.model->slug(), cell.a_u), "fit");
    if (!doc) {
        throw std::runtime_error("missing fit for " + cell.model->name + " " + detail::threshold_label(cell.a_u) + ": run `fit` first");
    }
    return *doc;
}

inline void cmd_forecast(const Context& ctx) {
    const auto& c = ctx.config;
    const StoredSeries s = load_series(ctx);
    if (s.series.split_index >= s.series.size()) throw std::runtime_error("forecast: the series has no out-of-sample period (set data.split_date)");
    const auto all = cells(c);
    for (const auto& cell : all) load_fit(ctx, cell);   // fail early on missing inputs
    detail::run_parallel(all.size(), c.jobs, [&](std::size_t i) {
        const Cell& cell = all[i];
        const Json fit = load_fit(ctx, cell);
        ForecastTable table;
        if (cell.model->kind == ModelKind::hawkes) {
            table = forecast_hawkes(fitted_hawkes_from_json(fit.at("fit")), s.series.values, s.series.split_index, c.coverages, cell.model->name);
        } else {
            table = garch_forecast(fitted_garch_from_json(fit.at("fit")), s.series.values, s.series.split_index, c.coverages, cell.model->name);
        }
        Json doc = document("forecast", ctx.hash);
        doc["model"] = cell.model->name;
        doc["a_u"] = cell.a_u;
        doc["table"] = to_json(table);
        write_atomic(detail::forecast_path(ctx, cell.model->slug(), cell.a_u), doc.dump() + "\n");
        if (c.forecast_csv) {
            std::ostringstream csv;
            csv << detail::header_comment(ctx);
            write_forecast_csv(csv, table, s.series.timestamps);
            write_atomic(detail::forecast_path(ctx, cell.model->slug(), cell.a_u, ".csv"), csv.str());
        }
    }, "forecast");
    detail::log("forecast: ", all.size(), " tables over ", s.series.size() - s.series.split_index, " out-of-sample steps");
}

inline const char* const kTests[] = {"UC", "CC", "DQ", "ZMD"};

struct BacktestRecord {
    std::string model;
    double a_u = 0.0;
    Tail tail = Tail::left;
    double a_q = 0.0;
    std::string test;
    TestResult result;
};

/// All four tests for every (tail, coverage) of one forecast table.
inline std::vector<BacktestRecord> backtest_table(const RunConfig& c, const ForecastTable& t, const std::string& model, double a_u) {
    std::vector<BacktestRecord> out;
    for (Tail o : {Tail::left, Tail::right}) {
        for (std::size_t k = 0; k < t.coverages.size(); ++k) {
            const double a = t.coverages[k];
            const auto v = t.violations(o, k);
            const std::string cell = model + "/" + format_double(a_u) + "/" + tail_name(o) + "/" + format_double(a);
            const BootstrapOptions boot{c.bootstrap_replicates, c.block_length, derive_seed(c.seed, "zmd/" + cell)};
            out.push_back({model, a_u, o, a, "UC", uc_test(v, a)});
            out.push_back({model, a_u, o, a, "CC", cc_test(v, a)});
            out.push_back({model, a_u, o, a, "DQ", dq_test(v, t.var[o][k], a, c.dq_lags)});
            out.push_back({model, a_u, o, a, "ZMD", zmd_test(t.realized, v, t.var[o][k], t.es[o][k], t.median, boot)});
        }
    }
    return out;
}

inline void cmd_backtest(const Context& ctx) {
    const auto& c = ctx.config;
    const StoredSeries s = load_series(ctx);
    const auto all = cells(c);
    for (const auto& cell : all) {
        if (!load_document(detail::forecast_path(ctx, cell.model->slug(), cell.a_u), "forecast")) {
            throw std::runtime_error("missing forecast for " + cell.model->name + " " + detail::threshold_label(cell.a_u) + ": run `forecast` first");
        }
    }
    std::vector<std::vector<BacktestRecord>> results(all.size());
    std::vector<std::string> residual_rows(all.size());
    detail::run_parallel(all.size(), c.jobs, [&](std::size_t i) {
        const Cell& cell = all[i];
        const auto doc = load_document(detail::forecast_path(ctx, cell.model->slug(), cell.a_u), "forecast");
        results[i] = backtest_table(c, forecast_table_from_json(doc->at("table")), cell.model->name, cell.a_u);
        if (cell.model->kind != ModelKind::hawkes) return;
        // residual diagnostics of the exceedance model, in and out of sample
        const FittedHawkes fit = fitted_hawkes_from_json(load_fit(ctx, cell).at("fit"));
        const ExceedancePair ex = exceedances_at(s.series.values, fit.u_left, fit.u_right, cell.a_u);
        std::ostringstream rows;
        const std::pair<const char*, std::pair<std::size_t, std::size_t>> periods[] = {
            {"in_sample", {0, s.series.split_index}}, {"out_of_sample", {s.series.split_index, s.series.size()}}};
        for (const auto& [period, range] : periods) {
            if (range.first >= range.second) continue;
            const auto res = ks_residual_tests(fit.params, ex, range.first, range.second, c.residual_min_events);
            for (Tail o : {Tail::left, Tail::right}) {
                const std::pair<const char*, const TestResult*> tests[] = {
                    {"residual_time", &res[o].time}, {"residual_magnitude", &res[o].magnitude}, {"calendar_time", &res[o].calendar}};
                for (const auto& [name, r] : tests) {
                    rows << cell.model->name << ',' << format_double(cell.a_u) << ',' << period << ',' << tail_name(o) << ',' << name << ','
                         << format_double(r->statistic) << ',' << format_double(r->p_value) << ',' << r->observations << ','
                         << (r->defined ? 1 : 0) << '\n';
                }
            }
        }
        residual_rows[i] = rows.str();
    }, "backtest");

    std::ostringstream csv;
    csv << detail::header_comment(ctx) << "model,a_u,tail,a_q,test,statistic,p_value,df,defined,violations,observations,note\n";
    Json records = Json::array();
    for (const auto& block : results) {
        for (const auto& r : block) {
            csv << r.model << ',' << format_double(r.a_u) << ',' << tail_name(r.tail) << ',' << format_double(r.a_q) << ',' << r.test << ','
                << format_double(r.result.statistic) << ',' << format_double(r.result.p_value) << ',' << r.result.df << ','
                << (r.result.defined ? 1 : 0) << ',' << r.result.violations << ',' << r.result.observations << ',' << r.result.note << '\n';
            Json j = {{"model", r.model}, {"a_u", r.a_u}, {"tail", tail_name(r.tail)}, {"a_q", r.a_q}, {"test", r.test}};
            j["result"] = to_json(r.result);
            records.push_back(std::move(j));
        }
    }
    write_atomic(ctx.out / "backtest" / "records.csv", csv.str());
    Json doc = document("backtest", ctx.hash);
    doc["records"] = std::move(records);
    write_atomic(ctx.out / "backtest" / "records.json", doc.dump() + "\n");

    std::ostringstream res;
    res << detail::header_comment(ctx) << "model,a_u,period,tail,test,statistic,p_value,events,defined\n";
    for (const auto& r : residual_rows) res << r;
    write_atomic(ctx.out / "backtest" / "residuals.csv", res.str());

    // p-value grids: rows a_q, columns a_u, per model / tail / test
    std::map<std::tuple<std::string, std::size_t, std::string>, std::map<std::pair<double, double>, double>> grid;
    for (const auto& block : results) {
        for (const auto& r : block) grid[{r.model, r.tail, r.test}][{r.a_q, r.a_u}] = r.result.defined ? r.result.p_value : kNaN;
    }
    std::size_t written = 0;
    for (const auto& m : c.models) {
        const std::vector<double> cols = m.threshold_based() ? c.thresholds : std::vector<double>{0.0};
        for (Tail o : {Tail::left, Tail::right}) {
            for (const char* test : kTests) {
                const auto& g = grid[{m.name, o, test}];
                std::ostringstream out;
                out << detail::header_comment(ctx) << "a_q";
                for (double a_u : cols) out << ',' << detail::threshold_label(a_u);
                out << '\n';
                for (double a_q : c.coverages) {
                    out << format_double(a_q);
                    for (double a_u : cols) out << ',' << format_double(g.at({a_q, a_u}));
                    out << '\n';
                }
                write_atomic(ctx.out / "backtest" / "grids" / m.slug() / (std::string(tail_name(o)) + "_" + test + ".csv"), out.str());
                ++written;
            }
        }
    }
    detail::log("backtest: ", all.size(), " tables, ", written, " p-value grids");
}

// ---------------------------------------------------------------------------
// Likelihood-ratio model selection
// ---------------------------------------------------------------------------

inline void cmd_lr_test(const Context& ctx) {
    const auto& c = ctx.config;
    const ModelSpec* h2 = nullptr;
    const ModelSpec* h2u = nullptr;
    const ModelSpec* h2bi = nullptr;
    for (const auto& m : c.models) {
        if (m.kind != ModelKind::hawkes || (m.variant != HawkesVariant::common && m.variant != HawkesVariant::bivariate)) continue;
        if (m.variant == HawkesVariant::bivariate) {
            if (!h2bi) h2bi = &m;
        } else if (m.constrained) {
            if (!h2 || m.family == BulkFamily::student_t) h2 = &m;
        } else if (!h2u) {
            h2u = &m;
        }
    }
    if (!h2) throw ConfigError("lr-test: the model list needs the constrained common-intensity model (H2^T or H2^N)");
    struct Row {
        double a_u;
        std::string test;
        std::string null_model;
        std::string alt_model;
        double ll_null;
        double ll_alt;
        int df;
    };
    std::vector<Row> rows;
    for (double a_u : c.thresholds) {
        const Json d2 = load_fit(ctx, {h2, a_u}).at("fit");
        const double ll2 = d2.at("loglik").at("exceedance").get<double>();
        if (h2bi) {
            const Json db = load_fit(ctx, {h2bi, a_u}).at("fit");
            rows.push_back({a_u, "common_vs_bivariate", h2->name, h2bi->name, ll2, db.at("loglik").at("exceedance").get<double>(), 4});
        }
        if (h2u) {
            const Json du = load_fit(ctx, {h2u, a_u}).at("fit");
            rows.push_back({a_u, "constrained_vs_free_a_lambda", h2->name, h2u->name, ll2, du.at("loglik").at("exceedance").get<double>(), 1});
        }
        const auto& bulk = d2.at("bulk");
        rows.push_back({a_u, "normal_vs_student_t_bulk", "H2^N", "H2^T", bulk.at("normal").at("loglik").get<double>(),
                        bulk.at("student_t").at("loglik").get<double>(), 1});
    }
    std::ostringstream csv;
    csv << detail::header_comment(ctx) << "a_u,test,null_model,alt_model,ll_null,ll_alt,statistic,df,p_value,note\n";
    Json out = Json::array();
    for (const auto& r : rows) {
        double p = kNaN;
        std::string note;
        try {
            p = likelihood_ratio_test(r.ll_null, r.ll_alt, r.df);
        } catch (const ValidationError& e) {
            note = e.what();
        }
        const double stat = 2.0 * (r.ll_alt - r.ll_null);
        csv << format_double(r.a_u) << ',' << r.test << ',' << r.null_model << ',' << r.alt_model << ',' << format_double(r.ll_null) << ','
            << format_double(r.ll_alt) << ',' << format_double(stat) << ',' << r.df << ',' << format_double(p) << ',' << note << '\n';
        out.push_back({{"a_u", r.a_u},
                       {"test", r.test},
                       {"null_model", r.null_model},
                       {"alt_model", r.alt_model},
                       {"ll_null", r.ll_null},
                       {"ll_alt", r.ll_alt},
                       {"statistic", stat},
                       {"df", r.df},
                       {"p_value", tailhawk::detail::num(p)},
                       {"note", note}});
    }
    write_atomic(ctx.out / "lr" / "lr_tests.csv", csv.str());
    Json doc = document("lr_tests", ctx.hash);
    doc["tests"] = std::move(out);
    write_atomic(ctx.out / "lr" / "lr_tests.json", detail::dump(doc));
    detail::log("lr-test: ", rows.size(), " comparisons");
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

namespace detail {

inline bool near(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

struct Tally {
    int rejected = 0;
    int defined = 0;
    int undefined = 0;
};

}  // namespace detail

/// Rejection proportions per coverage band, aggregated over the representative
/// thresholds, plus the same per threshold; and a parameter table.
inline void cmd_report(const Context& ctx) {
    const auto& c = ctx.config;
    const auto doc = load_document(ctx.out / "backtest" / "records.json", "backtest");
    if (!doc) throw std::runtime_error("report: no backtest records: run `backtest` first");
    std::vector<double> reps;
    for (double a : c.representative_thresholds) {
        if (std::any_of(c.thresholds.begin(), c.thresholds.end(), [&](double t) { return detail::near(t, a); })) reps.push_back(a);
    }
    if (reps.empty()) reps = c.thresholds;

    // key: model, tail, test, band index, a_u (or -1 for the aggregate)
    std::map<std::tuple<std::string, std::string, std::string, std::size_t, double>, detail::Tally> tally;
    for (const auto& r : doc->at("records")) {
        const double a_q = r.at("a_q").get<double>();
        const double a_u = r.at("a_u").get<double>();
        std::size_t band = c.bands.size();
        for (std::size_t b = 0; b + 1 < c.bands.size(); ++b) {
            if (a_q > c.bands[b] && a_q <= c.bands[b + 1] + 1e-12) band = b;
        }
        if (band == c.bands.size()) continue;
        const bool rep = a_u == 0.0 || std::any_of(reps.begin(), reps.end(), [&](double x) { return detail::near(a_u, x); });
        if (!rep) continue;
        const auto& res = r.at("result");
        const auto key = [&](double which) {
            return std::tuple{r.at("model").get<std::string>(), r.at("tail").get<std::string>(), r.at("test").get<std::string>(), band, which};
        };
        for (double which : {-1.0, a_u}) {
            auto& t = tally[key(which)];
            if (res.at("defined").get<bool>()) {
                ++t.defined;
                if (res.at("p_value").get<double>() < c.significance) ++t.rejected;
            } else {
                ++t.undefined;
            }
        }
    }
    std::ostringstream agg;
    std::ostringstream per;
    agg << detail::header_comment(ctx) << "tail,test,band_low,band_high,model,rejected,defined,undefined,proportion\n";
    per << detail::header_comment(ctx) << "tail,test,band_low,band_high,model,a_u,rejected,defined,undefined,proportion\n";
    std::ostringstream md;
    md << "# tailhawk backtest summary\n\n"
       << "Version " << kVersion << ", config hash `" << ctx.hash << "`.\n\n"
       << "Proportion of rejections at p < " << format_double(c.significance) << " within coverage bands a_q0 < a_q <= a_q1; threshold models are "
       << "aggregated over a_u in {";
    for (std::size_t i = 0; i < reps.size(); ++i) md << (i ? ", " : "") << format_double(reps[i]);
    md << "}. Undefined tests are excluded and counted separately.\n";
    for (const char* tail : {"left", "right"}) {
        for (const char* test : kTests) {
            md << "\n## " << tail << " tail, " << test << "\n\n| band |";
            for (const auto& m : c.models) md << ' ' << m.name << " |";
            md << "\n|---|";
            for (std::size_t i = 0; i < c.models.size(); ++i) md << "---|";
            md << '\n';
            for (std::size_t b = 0; b + 1 < c.bands.size(); ++b) {
                md << "| " << format_double(c.bands[b]) << " < a_q <= " << format_double(c.bands[b + 1]) << " |";
                for (const auto& m : c.models) {
                    const auto it = tally.find({m.name, tail, test, b, -1.0});
                    const detail::Tally t = it == tally.end() ? detail::Tally{} : it->second;
                    const double prop = t.defined > 0 ? static_cast<double>(t.rejected) / t.defined : kNaN;
                    agg << tail << ',' << test << ',' << format_double(c.bands[b]) << ',' << format_double(c.bands[b + 1]) << ',' << m.name << ','
                        << t.rejected << ',' << t.defined << ',' << t.undefined << ',' << format_double(prop) << '\n';
                    char cellbuf[32];
                    if (t.defined > 0) {
                        std::snprintf(cellbuf, sizeof cellbuf, "%.3f", prop);
                    } else {
                        std::snprintf(cellbuf, sizeof cellbuf, "NA");
                    }
                    md << ' ' << cellbuf << (t.undefined > 0 ? "*" : "") << " |";
                    if (!m.threshold_based()) continue;
                    for (double a_u : reps) {
                        const auto jt = tally.find({m.name, tail, test, b, a_u});
                        const detail::Tally u = jt == tally.end() ? detail::Tally{} : jt->second;
                        const double up = u.defined > 0 ? static_cast<double>(u.rejected) / u.defined : kNaN;
                        per << tail << ',' << test << ',' << format_double(c.bands[b]) << ',' << format_double(c.bands[b + 1]) << ',' << m.name << ','
                            << format_double(a_u) << ',' << u.rejected << ',' << u.defined << ',' << u.undefined << ',' << format_double(up) << '\n';
                    }
                }
                md << '\n';
            }
        }
    }
    md << "\n`*` some tests in the band were undefined (too few violations).\n";

    std::ostringstream params;
    params << detail::header_comment(ctx) << "model,a_u,parameter,estimate,se,loglik\n";
    for (const auto& cell : cells(c)) {
        const auto fit = load_document(detail::fit_path(ctx, cell.model->slug(), cell.a_u), "fit");
        if (!fit) continue;
        const auto& f = fit->at("fit");
        const auto& ll = f.at("loglik");
        const double loglik = ll.is_object() ? ll.at("exceedance").get<double>() : ll.get<double>();
        for (const auto& e : f.at("estimates")) {
            params << cell.model->name << ',' << format_double(cell.a_u) << ',' << e.at("name").get<std::string>() << ','
                   << format_double(tailhawk::detail::num(e.at("estimate"))) << ',' << format_double(tailhawk::detail::num(e.at("se"))) << ',' << format_double(loglik) << '\n';
        }
    }
    write_atomic(ctx.out / "report" / "summary_aggregated.csv", agg.str());
    write_atomic(ctx.out / "report" / "summary_by_threshold.csv", per.str());
    write_atomic(ctx.out / "report" / "parameters.csv", params.str());
    write_atomic(ctx.out / "report" / "summary.md", md.str());
    detail::log("report: written to ", (ctx.out / "report").string());
}

}  // namespace tailhawk::cli
