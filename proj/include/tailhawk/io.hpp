#pragma once

#include "tailhawk/backtest.hpp"
#include "tailhawk/error.hpp"
#include "tailhawk/estimation.hpp"
#include "tailhawk/forecast.hpp"
#include "tailhawk/garch.hpp"
#include "tailhawk/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace tailhawk {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

/// Insertion-ordered JSON, so documents serialize in a fixed key order.
using Json = nlohmann::ordered_json;

/// Shortest text that parses back to the same double; "NA" for NaN/inf.
inline std::string format_double(double x) {
    if (!std::isfinite(x)) return "NA";
    char buf[32];
    for (int digits = 15; digits <= 17; ++digits) {
        std::snprintf(buf, sizeof buf, "%.*g", digits, x);
        if (std::strtod(buf, nullptr) == x) break;
    }
    return buf;
}

/// 16 hex digits of FNV-1a over the compact serialization.
inline std::string config_hash(const Json& canonical) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(SplitMix64::fnv1a(canonical.dump())));
    return buf;
}

/// Writes the whole file under a temporary name and renames it into place,
/// so readers never see a partial document.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// Envelope shared by every document: schema tag, versions and config hash.
inline Json document(const std::string& schema, const std::string& hash) {
    Json j;
    j["schema"] = "tailhawk/" + schema;
    j["schema_version"] = kSchemaVersion;
    j["version"] = kVersion;
    j["config_hash"] = hash;
    return j;
}

/// Parses a document and checks its envelope; nullopt when unreadable or of another schema.
inline std::optional<Json> load_document(const std::filesystem::path& path, const std::string& schema) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) return std::nullopt;
    try {
        Json j = Json::parse(read_file(path));
        if (j.value("schema", "") != "tailhawk/" + schema || j.value("schema_version", 0) != kSchemaVersion) return std::nullopt;
        return j;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

namespace detail {

// NaN and infinities become null; null reads back as NaN.
inline Json num(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }
inline double num(const Json& j) { return j.is_null() ? kNaN : j.get<double>(); }

inline Json pair(const TailPair& p) { return Json::array({num(p[0]), num(p[1])}); }
inline TailPair pair(const Json& j) { return {num(j.at(0)), num(j.at(1))}; }

inline Json opt(const std::optional<double>& x) { return x ? num(*x) : Json(nullptr); }
inline std::optional<double> opt(const Json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

inline Json opt_vector(const std::vector<std::optional<double>>& v) {
    Json a = Json::array();
    for (const auto& x : v) a.push_back(opt(x));
    return a;
}
inline std::vector<std::optional<double>> opt_vector(const Json& j) {
    std::vector<std::optional<double>> v;
    for (const auto& x : j) v.push_back(opt(x));
    return v;
}

inline Json vec(const std::vector<double>& v) {
    Json a = Json::array();
    for (double x : v) a.push_back(num(x));
    return a;
}
inline std::vector<double> vec(const Json& j) {
    std::vector<double> v;
    v.reserve(j.size());
    for (const auto& x : j) v.push_back(num(x));
    return v;
}

inline Json report(const OptimizerReport& r) {
    Json j;
    j["converged"] = r.converged;
    j["message"] = r.message;
    j["iterations"] = r.iterations;
    j["evaluations"] = r.evaluations;
    j["starts"] = r.starts;
    j["best_start"] = r.best_start;
    j["constraint_violation"] = num(r.constraint_violation);
    j["trace"] = vec(r.trace);
    return j;
}
inline OptimizerReport report(const Json& j) {
    OptimizerReport r;
    r.converged = j.at("converged").get<bool>();
    r.message = j.at("message").get<std::string>();
    r.iterations = j.at("iterations").get<int>();
    r.evaluations = j.at("evaluations").get<int>();
    r.starts = j.at("starts").get<int>();
    r.best_start = j.at("best_start").get<int>();
    r.constraint_violation = num(j.at("constraint_violation"));
    r.trace = vec(j.at("trace"));
    return r;
}

inline Json estimates(const std::vector<std::string>& names, const std::vector<double>& est, const std::vector<std::optional<double>>& se) {
    Json a = Json::array();
    for (std::size_t i = 0; i < names.size(); ++i) a.push_back({{"name", names[i]}, {"estimate", num(est[i])}, {"se", opt(se[i])}});
    return a;
}

inline void estimates(const Json& j, std::vector<std::string>& names, std::vector<double>& est, std::vector<std::optional<double>>& se) {
    for (const auto& e : j) {
        names.push_back(e.at("name").get<std::string>());
        est.push_back(num(e.at("estimate")));
        se.push_back(opt(e.at("se")));
    }
}

inline Json bulk(const BulkFit& b) {
    Json j;
    j["family"] = family_name(b.family);
    j["inverse_nu"] = b.inverse_nu;
    j["nu"] = num(b.nu());
    j["nu_se"] = opt(b.nu_se);
    j["nu_se_conditional"] = opt(b.nu_se_conditional);
    j["loglik"] = num(b.loglik);
    j["observations"] = b.observations;
    return j;
}
inline BulkFit bulk(const Json& j) {
    BulkFit b;
    b.family = parse_family(j.at("family").get<std::string>());
    b.inverse_nu = j.at("inverse_nu").get<double>();
    b.nu_se = opt(j.at("nu_se"));
    b.nu_se_conditional = opt(j.at("nu_se_conditional"));
    b.loglik = num(j.at("loglik"));
    b.observations = j.at("observations").get<std::size_t>();
    return b;
}

}  // namespace detail

inline Json to_json(const HawkesParams& p) {
    Json j;
    j["variant"] = variant_name(p.variant);
    j["a_u"] = p.a_u;
    j["constrained_a_lambda"] = p.constrained_a_lambda;
    if (p.variant == HawkesVariant::bivariate) {
        j["a_lambda_tail"] = detail::pair(p.a_lambda_tail);
        j["branching"] = Json::array({detail::pair(p.branching[0]), detail::pair(p.branching[1])});
    } else {
        j["a_lambda"] = p.a_lambda;
        j["gamma"] = detail::pair(p.gamma);
    }
    j["beta"] = detail::pair(p.beta);
    j["xi"] = detail::pair(p.xi);
    j["varsigma"] = detail::pair(p.varsigma);
    j["eta"] = detail::pair(p.eta);
    j["alpha"] = detail::pair(p.alpha);
    j["branching_ratio"] = p.branching_ratio();
    return j;
}

inline HawkesParams hawkes_params_from_json(const Json& j) {
    HawkesParams p;
    p.variant = parse_variant(j.at("variant").get<std::string>());
    p.a_u = j.at("a_u").get<double>();
    p.constrained_a_lambda = j.value("constrained_a_lambda", false);
    if (p.variant == HawkesVariant::bivariate) {
        p.a_lambda_tail = detail::pair(j.at("a_lambda_tail"));
        p.branching = {detail::pair(j.at("branching").at(0)), detail::pair(j.at("branching").at(1))};
    } else {
        p.a_lambda = j.at("a_lambda").get<double>();
        p.gamma = detail::pair(j.at("gamma"));
    }
    p.beta = detail::pair(j.at("beta"));
    p.xi = detail::pair(j.at("xi"));
    p.varsigma = detail::pair(j.at("varsigma"));
    p.eta = detail::pair(j.at("eta"));
    p.alpha = detail::pair(j.at("alpha"));
    p.validate();
    return p;
}

inline Json to_json(const FittedHawkes& f) {
    Json j;
    j["params"] = to_json(f.params);
    j["in_sample_length"] = f.in_sample_length;
    j["thresholds"] = {{"u_left", f.u_left}, {"u_right", f.u_right}};
    j["intensity_evaluation"] = intensity_evaluation_name(f.intensity);
    j["estimates"] = detail::estimates(f.names, f.estimates, f.standard_errors);
    j["loglik"] = {
        {"total", detail::num(f.loglik_exceedance + f.loglik_bulk())},
        {"exceedance", detail::num(f.loglik_exceedance)},
        {"intensity", detail::pair(f.parts.intensity)},
        {"magnitude", detail::pair(f.parts.magnitude)},
        {"bulk", detail::num(f.loglik_bulk())},
    };
    j["bulk_family"] = family_name(f.bulk_family);
    j["bulk"] = {{"normal", detail::bulk(f.bulk_normal)}, {"student_t", detail::bulk(f.bulk_student_t)}};
    j["optimizer"] = detail::report(f.report);
    return j;
}

inline FittedHawkes fitted_hawkes_from_json(const Json& j) {
    FittedHawkes f;
    f.params = hawkes_params_from_json(j.at("params"));
    f.in_sample_length = j.at("in_sample_length").get<std::size_t>();
    f.u_left = j.at("thresholds").at("u_left").get<double>();
    f.u_right = j.at("thresholds").at("u_right").get<double>();
    f.intensity = parse_intensity_evaluation(j.at("intensity_evaluation").get<std::string>());
    detail::estimates(j.at("estimates"), f.names, f.estimates, f.standard_errors);
    f.loglik_exceedance = detail::num(j.at("loglik").at("exceedance"));
    f.parts.intensity = detail::pair(j.at("loglik").at("intensity"));
    f.parts.magnitude = detail::pair(j.at("loglik").at("magnitude"));
    f.bulk_family = parse_family(j.at("bulk_family").get<std::string>());
    f.bulk_normal = detail::bulk(j.at("bulk").at("normal"));
    f.bulk_student_t = detail::bulk(j.at("bulk").at("student_t"));
    f.report = detail::report(j.at("optimizer"));
    return f;
}

inline Json to_json(const GarchParams& p) {
    Json j;
    j["mu"] = p.mu;
    j["omega"] = p.omega;
    j["alpha"] = p.alpha;
    j["beta"] = p.beta;
    j["gamma"] = p.gamma;
    j["r"] = p.r;
    j["family"] = family_name(p.family);
    j["inverse_nu"] = p.inverse_nu;
    j["nu"] = detail::num(p.nu());
    j["persistence"] = p.persistence();
    if (p.evt) {
        const auto& e = *p.evt;
        Json evt;
        evt["a_u"] = e.a_u;
        evt["u"] = detail::pair(e.u);
        evt["xi"] = detail::pair(e.xi);
        evt["varsigma"] = detail::pair(e.varsigma);
        evt["exceedances"] = {e.exceedances[0], e.exceedances[1]};
        evt["loglik"] = detail::pair(e.loglik);
        Json se = Json::array();
        for (const auto& tail : e.standard_errors) se.push_back({{"xi", detail::opt(tail[0])}, {"varsigma", detail::opt(tail[1])}});
        evt["standard_errors"] = se;
        j["evt"] = evt;
    } else {
        j["evt"] = nullptr;
    }
    return j;
}

inline GarchParams garch_params_from_json(const Json& j) {
    GarchParams p;
    p.mu = j.at("mu").get<double>();
    p.omega = j.at("omega").get<double>();
    p.alpha = j.at("alpha").get<double>();
    p.beta = j.at("beta").get<double>();
    p.gamma = j.at("gamma").get<double>();
    p.r = j.at("r").get<int>();
    p.family = parse_family(j.at("family").get<std::string>());
    p.inverse_nu = j.at("inverse_nu").get<double>();
    if (!j.at("evt").is_null()) {
        const auto& e = j.at("evt");
        GarchEvt evt;
        evt.a_u = e.at("a_u").get<double>();
        evt.u = detail::pair(e.at("u"));
        evt.xi = detail::pair(e.at("xi"));
        evt.varsigma = detail::pair(e.at("varsigma"));
        evt.exceedances = {e.at("exceedances").at(0).get<std::size_t>(), e.at("exceedances").at(1).get<std::size_t>()};
        evt.loglik = detail::pair(e.at("loglik"));
        for (std::size_t o = 0; o < 2; ++o) {
            evt.standard_errors[o] = {detail::opt(e.at("standard_errors").at(o).at("xi")),
                                      detail::opt(e.at("standard_errors").at(o).at("varsigma"))};
        }
        p.evt = evt;
    }
    p.validate();
    return p;
}

inline Json to_json(const FittedGarch& f) {
    Json j;
    j["params"] = to_json(f.params);
    j["in_sample_length"] = f.in_sample_length;
    j["sigma0_sq"] = f.sigma0_sq;
    j["estimates"] = detail::estimates(f.names, f.estimates, f.standard_errors);
    j["loglik"] = detail::num(f.loglik);
    j["stationarity_boundary"] = f.stationarity_boundary;
    j["optimizer"] = detail::report(f.report);
    return j;
}

inline FittedGarch fitted_garch_from_json(const Json& j) {
    FittedGarch f;
    f.params = garch_params_from_json(j.at("params"));
    f.in_sample_length = j.at("in_sample_length").get<std::size_t>();
    f.sigma0_sq = j.at("sigma0_sq").get<double>();
    detail::estimates(j.at("estimates"), f.names, f.estimates, f.standard_errors);
    f.loglik = detail::num(j.at("loglik"));
    f.stationarity_boundary = j.at("stationarity_boundary").get<bool>();
    f.report = detail::report(j.at("optimizer"));
    return f;
}

/// Column layout: per tail, one array per coverage level.
inline Json to_json(const ForecastTable& t) {
    Json j;
    j["model"] = t.model;
    j["start"] = t.start;
    j["steps"] = t.steps();
    j["coverages"] = detail::vec(t.coverages);
    j["realized"] = detail::vec(t.realized);
    j["median"] = detail::vec(t.median);
    for (Tail o : {Tail::left, Tail::right}) {
        Json tail;
        tail["p"] = detail::vec(t.p[o]);
        Json var = Json::array();
        Json es = Json::array();
        for (std::size_t k = 0; k < t.coverages.size(); ++k) {
            var.push_back(detail::vec(t.var[o][k]));
            es.push_back(detail::vec(t.es[o][k]));
        }
        tail["var"] = std::move(var);
        tail["es"] = std::move(es);
        j[tail_name(o)] = std::move(tail);
    }
    return j;
}

inline ForecastTable forecast_table_from_json(const Json& j) {
    ForecastTable t;
    const auto n = j.at("steps").get<std::size_t>();
    t.reset(detail::vec(j.at("coverages")), j.at("start").get<std::size_t>(), n);
    t.model = j.at("model").get<std::string>();
    t.realized = detail::vec(j.at("realized"));
    t.median = detail::vec(j.at("median"));
    for (Tail o : {Tail::left, Tail::right}) {
        const auto& tail = j.at(tail_name(o));
        t.p[o] = detail::vec(tail.at("p"));
        for (std::size_t k = 0; k < t.coverages.size(); ++k) {
            t.var[o][k] = detail::vec(tail.at("var").at(k));
            t.es[o][k] = detail::vec(tail.at("es").at(k));
        }
    }
    if (t.realized.size() != n || t.median.size() != n) throw DataError("forecast document: column length mismatch");
    return t;
}

/// Long format: one row per (step, tail, coverage).
inline void write_forecast_csv(std::ostream& out, const ForecastTable& t, const std::vector<std::string>& timestamps = {}) {
    out << "t,date,tail,a_q,var,es,p,realized,violation\n";
    for (std::size_t i = 0; i < t.steps(); ++i) {
        const std::size_t idx = t.start + i;
        const std::string date = idx < timestamps.size() ? timestamps[idx] : "";
        for (Tail o : {Tail::left, Tail::right}) {
            for (std::size_t k = 0; k < t.coverages.size(); ++k) {
                out << idx << ',' << date << ',' << tail_name(o) << ',' << format_double(t.coverages[k]) << ','
                    << format_double(t.var[o][k][i]) << ',' << format_double(t.es[o][k][i]) << ',' << format_double(t.p[o][i]) << ','
                    << format_double(t.realized[i]) << ',' << (t.violation(o, k, i) ? 1 : 0) << '\n';
            }
        }
    }
}

inline Json to_json(const TestResult& r) {
    Json j;
    j["statistic"] = detail::num(r.statistic);
    j["p_value"] = detail::num(r.p_value);
    j["df"] = r.df;
    j["defined"] = r.defined;
    j["violations"] = r.violations;
    j["observations"] = r.observations;
    j["note"] = r.note;
    return j;
}

}  // namespace tailhawk
