#pragma once

#include "tailhawk/tailhawk.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace tailhawk::cli {

/// Malformed or out-of-range configuration (exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline const char* const kDefaultConfig = R"(# tailhawk run configuration
#
# Every key is optional; omitted keys take the values shown here.
# Command-line flags override this file, and TAILHAWK_SEED, TAILHAWK_JOBS,
# TAILHAWK_OUTPUT, TAILHAWK_CONFIG, TAILHAWK_FORCE override it as well.

seed: 20240601
output: tailhawk-out
jobs: 1

data:
  path: ""              # CSV with a header row and (date, value) columns
  format: returns       # returns | prices (prices are turned into log-returns)
  split_date: ""        # first out-of-sample date (ISO-8601); empty means all in-sample

simulation:             # used by `simulate` in place of `ingest`
  model: hawkes         # hawkes | garch
  horizon: 20000
  in_sample: 10000
  burn_in: 1000
  hawkes:
    variant: common     # symmetric | common | bivariate
    a_u: 0.025
    a_lambda: 0.05
    a_lambda_tail: [0.025, 0.025]               # bivariate only
    branching: [[0.4, 0.2], [0.4, 0.2]]         # bivariate only, [target][source]
    gamma: [0.8, 0.4]
    beta: [0.3, 0.07]
    xi: [0.2, 0.1]
    varsigma: [0.008, 0.008]
    eta: [0.1, 0.05]
    alpha: [1.0, 1.0]
    nu: 6               # bulk Student-t degrees of freedom; 0 gives a normal bulk
    u_left: -0.02
    u_right: 0.02
  garch:
    mu: 0.0003
    omega: 0.000002
    alpha: 0.04
    beta: 0.88
    gamma: 0.1
    r: 1
    family: student_t   # normal | student_t
    nu: 7

grids:
  thresholds: default   # a_u = 0.0125 k, k = 1..20; or an explicit list
  coverages: default    # a_q = 0.0025 k, k = 1..60; or an explicit list

# H1: symmetric, H2: common intensity with a_lambda = 2 a_u, H2u: common with
# free a_lambda, H2bi: bivariate; G<r>: GARCH(1, r, 1); -EVT adds GP tails.
# ^T / ^N select the Student-t or normal bulk / innovations.
models: [H1^T, H2^T, H2u^T, H2bi, G0^N, G0^T, G1^T, G1^T-EVT]

estimation:
  starts: 3
  min_events: 10
  max_iterations: 300
  intensity_evaluation: step_average   # step_average | point
  garch_min_length: 250

forecast:
  csv: true             # also write the long-format CSV next to each JSON table

backtest:
  bootstrap_replicates: 1000
  block_length: 5
  dq_lags: 4
  residual_min_events: 5

report:
  representative_thresholds: [0.05, 0.1, 0.2]
  bands: [0, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15]
  significance: 0.05
)";

enum class ModelKind { hawkes, garch };

/// One entry of the model list, e.g. "H2^T" or "G1^T-EVT".
struct ModelSpec {
    std::string name;
    ModelKind kind = ModelKind::hawkes;
    HawkesVariant variant = HawkesVariant::common;
    bool constrained = true;
    int r = 0;
    BulkFamily family = BulkFamily::student_t;
    bool evt = false;

    [[nodiscard]] bool threshold_based() const noexcept { return kind == ModelKind::hawkes || evt; }
    /// Filesystem-safe form of the name.
    [[nodiscard]] std::string slug() const {
        std::string s = name;
        std::replace(s.begin(), s.end(), '^', '_');
        return s;
    }
    /// Name of the same model without EVT tails (GARCH-EVT base fit).
    [[nodiscard]] std::string base_name() const { return evt ? name.substr(0, name.size() - 4) : name; }
};

inline ModelSpec parse_model(const std::string& name) {
    ModelSpec m;
    m.name = name;
    std::string body = name;
    if (body.size() > 4 && body.ends_with("-EVT")) {
        m.evt = true;
        body = body.substr(0, body.size() - 4);
    }
    std::string family = "T";
    if (const auto caret = body.find('^'); caret != std::string::npos) {
        family = body.substr(caret + 1);
        body = body.substr(0, caret);
    }
    if (family != "T" && family != "N") throw ConfigError("model '" + name + "': family suffix must be ^T or ^N");
    m.family = family == "T" ? BulkFamily::student_t : BulkFamily::normal;
    if (body == "H1" || body == "H2" || body == "H2u" || body == "H2bi") {
        if (m.evt) throw ConfigError("model '" + name + "': -EVT applies to GARCH models only");
        m.kind = ModelKind::hawkes;
        m.variant = body == "H1" ? HawkesVariant::symmetric : body == "H2bi" ? HawkesVariant::bivariate : HawkesVariant::common;
        m.constrained = body == "H1" || body == "H2";
    } else if (body == "G0" || body == "G1") {
        m.kind = ModelKind::garch;
        m.r = body == "G1" ? 1 : 0;
    } else {
        throw ConfigError("unknown model '" + name + "' (expected H1, H2, H2u, H2bi, G0 or G1 with ^T/^N and optional -EVT)");
    }
    return m;
}

struct RunConfig {
    std::uint64_t seed = 20240601;
    std::string output = "tailhawk-out";
    int jobs = 1;

    std::string data_path;
    std::string data_format = "returns";
    std::string split_date;

    std::string sim_model = "hawkes";
    std::size_t sim_horizon = 20000;
    std::size_t sim_in_sample = 10000;
    std::size_t sim_burn_in = 1000;
    HawkesParams sim_hawkes;
    double sim_nu = 6.0;
    double sim_u_left = -0.02;
    double sim_u_right = 0.02;
    GarchParams sim_garch;

    std::vector<double> thresholds = default_thresholds();
    std::vector<double> coverages = default_coverages();
    std::vector<ModelSpec> models;

    int starts = 3;
    std::size_t min_events = 10;
    int max_iterations = 300;
    IntensityEvaluation intensity = IntensityEvaluation::step_average;
    std::size_t garch_min_length = 250;

    bool forecast_csv = true;

    int bootstrap_replicates = 1000;
    std::size_t block_length = 5;
    int dq_lags = 4;
    std::size_t residual_min_events = 5;

    std::vector<double> representative_thresholds{0.05, 0.1, 0.2};
    std::vector<double> bands{0.0, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15};
    double significance = 0.05;

    [[nodiscard]] bool has_model(const std::string& name) const {
        return std::any_of(models.begin(), models.end(), [&](const ModelSpec& m) { return m.name == name; });
    }
};

namespace detail {

inline void check_keys(const YAML::Node& node, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!node || node.IsNull()) return;
    if (!node.IsMap()) throw ConfigError(where + ": expected a mapping");
    const std::set<std::string> keys(allowed.begin(), allowed.end());
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (!keys.count(key)) throw ConfigError("unknown configuration key '" + (where.empty() ? key : where + "." + key) + "'");
    }
}

template <class T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where) {
    if (!node || !node[key]) return;
    try {
        out = node[key].as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError("configuration key '" + where + key + "' has the wrong type");
    }
}

inline void read_pair(const YAML::Node& node, const char* key, TailPair& out, const std::string& where) {
    std::vector<double> v;
    if (!node || !node[key]) return;
    read(node, key, v, where);
    if (v.size() != 2) throw ConfigError("configuration key '" + where + key + "' must be a [left, right] pair");
    out = {v[0], v[1]};
}

inline std::vector<double> read_grid(const YAML::Node& node, const char* key, std::vector<double> fallback, const std::string& where) {
    if (!node || !node[key]) return fallback;
    if (node[key].IsScalar() && node[key].as<std::string>() == "default") return fallback;
    std::vector<double> v;
    read(node, key, v, where);
    return v;
}

inline void check_grid(const std::vector<double>& g, double lo, double hi, const std::string& what) {
    if (g.empty()) throw ConfigError(what + " grid is empty");
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(g[i] > lo && g[i] < hi)) {
            throw ConfigError(what + " grid value " + format_double(g[i]) + " outside (" + format_double(lo) + ", " + format_double(hi) + ")");
        }
        if (i > 0 && !(g[i] > g[i - 1])) throw ConfigError(what + " grid must be strictly increasing");
    }
}

}  // namespace detail

/// Parses a YAML document over the defaults, rejecting unknown keys.
inline RunConfig parse_config(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("configuration is not valid YAML: ") + e.what());
    }
    RunConfig c;
    if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    detail::check_keys(root, "", {"seed", "output", "jobs", "data", "simulation", "grids", "models", "estimation", "forecast", "backtest", "report"});
    detail::read(root, "seed", c.seed, "");
    detail::read(root, "output", c.output, "");
    detail::read(root, "jobs", c.jobs, "");

    const auto data = root["data"];
    detail::check_keys(data, "data", {"path", "format", "split_date"});
    detail::read(data, "path", c.data_path, "data.");
    detail::read(data, "format", c.data_format, "data.");
    detail::read(data, "split_date", c.split_date, "data.");

    const auto sim = root["simulation"];
    detail::check_keys(sim, "simulation", {"model", "horizon", "in_sample", "burn_in", "hawkes", "garch"});
    detail::read(sim, "model", c.sim_model, "simulation.");
    detail::read(sim, "horizon", c.sim_horizon, "simulation.");
    detail::read(sim, "in_sample", c.sim_in_sample, "simulation.");
    detail::read(sim, "burn_in", c.sim_burn_in, "simulation.");
    {
        auto& p = c.sim_hawkes;
        p.a_u = 0.025;
        p.a_lambda = 0.05;
        p.a_lambda_tail = {0.025, 0.025};
        p.branching = {TailPair{0.4, 0.2}, TailPair{0.4, 0.2}};
        p.gamma = {0.8, 0.4};
        p.beta = {0.3, 0.07};
        p.xi = {0.2, 0.1};
        p.varsigma = {0.008, 0.008};
        p.eta = {0.1, 0.05};
        p.alpha = {1.0, 1.0};
        const auto h = sim ? sim["hawkes"] : YAML::Node();
        const std::string w = "simulation.hawkes.";
        detail::check_keys(h, "simulation.hawkes", {"variant", "a_u", "a_lambda", "a_lambda_tail", "branching", "gamma", "beta", "xi", "varsigma",
                                                     "eta", "alpha", "nu", "u_left", "u_right"});
        std::string variant = "common";
        detail::read(h, "variant", variant, w);
        try {
            p.variant = parse_variant(variant);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("simulation.hawkes.variant: ") + e.what());
        }
        detail::read(h, "a_u", p.a_u, w);
        detail::read(h, "a_lambda", p.a_lambda, w);
        detail::read_pair(h, "a_lambda_tail", p.a_lambda_tail, w);
        if (h && h["branching"]) {
            std::vector<std::vector<double>> b;
            detail::read(h, "branching", b, w);
            if (b.size() != 2 || b[0].size() != 2 || b[1].size() != 2) throw ConfigError("simulation.hawkes.branching must be a 2x2 matrix");
            p.branching = {TailPair{b[0][0], b[0][1]}, TailPair{b[1][0], b[1][1]}};
        }
        detail::read_pair(h, "gamma", p.gamma, w);
        detail::read_pair(h, "beta", p.beta, w);
        detail::read_pair(h, "xi", p.xi, w);
        detail::read_pair(h, "varsigma", p.varsigma, w);
        detail::read_pair(h, "eta", p.eta, w);
        detail::read_pair(h, "alpha", p.alpha, w);
        detail::read(h, "nu", c.sim_nu, w);
        detail::read(h, "u_left", c.sim_u_left, w);
        detail::read(h, "u_right", c.sim_u_right, w);
    }
    {
        auto& g = c.sim_garch;
        g.mu = 3e-4;
        g.omega = 2e-6;
        g.alpha = 0.04;
        g.beta = 0.88;
        g.gamma = 0.1;
        g.r = 1;
        const auto n = sim ? sim["garch"] : YAML::Node();
        const std::string w = "simulation.garch.";
        detail::check_keys(n, "simulation.garch", {"mu", "omega", "alpha", "beta", "gamma", "r", "family", "nu"});
        detail::read(n, "mu", g.mu, w);
        detail::read(n, "omega", g.omega, w);
        detail::read(n, "alpha", g.alpha, w);
        detail::read(n, "beta", g.beta, w);
        detail::read(n, "gamma", g.gamma, w);
        detail::read(n, "r", g.r, w);
        std::string family = "student_t";
        double nu = 7.0;
        detail::read(n, "family", family, w);
        detail::read(n, "nu", nu, w);
        try {
            g.family = parse_family(family);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("simulation.garch.family: ") + e.what());
        }
        g.inverse_nu = g.family == BulkFamily::student_t && nu > 0.0 ? 1.0 / nu : 0.0;
    }

    const auto grids = root["grids"];
    detail::check_keys(grids, "grids", {"thresholds", "coverages"});
    c.thresholds = detail::read_grid(grids, "thresholds", c.thresholds, "grids.");
    c.coverages = detail::read_grid(grids, "coverages", c.coverages, "grids.");

    std::vector<std::string> models{"H1^T", "H2^T", "H2u^T", "H2bi", "G0^N", "G0^T", "G1^T", "G1^T-EVT"};
    detail::read(root, "models", models, "");
    for (const auto& m : models) c.models.push_back(parse_model(m));

    const auto est = root["estimation"];
    detail::check_keys(est, "estimation", {"starts", "min_events", "max_iterations", "intensity_evaluation", "garch_min_length"});
    detail::read(est, "starts", c.starts, "estimation.");
    detail::read(est, "min_events", c.min_events, "estimation.");
    detail::read(est, "max_iterations", c.max_iterations, "estimation.");
    detail::read(est, "garch_min_length", c.garch_min_length, "estimation.");
    std::string intensity = "step_average";
    detail::read(est, "intensity_evaluation", intensity, "estimation.");
    try {
        c.intensity = parse_intensity_evaluation(intensity);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("estimation.intensity_evaluation: ") + e.what());
    }

    const auto fc = root["forecast"];
    detail::check_keys(fc, "forecast", {"csv"});
    detail::read(fc, "csv", c.forecast_csv, "forecast.");

    const auto bt = root["backtest"];
    detail::check_keys(bt, "backtest", {"bootstrap_replicates", "block_length", "dq_lags", "residual_min_events"});
    detail::read(bt, "bootstrap_replicates", c.bootstrap_replicates, "backtest.");
    detail::read(bt, "block_length", c.block_length, "backtest.");
    detail::read(bt, "dq_lags", c.dq_lags, "backtest.");
    detail::read(bt, "residual_min_events", c.residual_min_events, "backtest.");

    const auto rp = root["report"];
    detail::check_keys(rp, "report", {"representative_thresholds", "bands", "significance"});
    detail::read(rp, "representative_thresholds", c.representative_thresholds, "report.");
    detail::read(rp, "bands", c.bands, "report.");
    detail::read(rp, "significance", c.significance, "report.");
    return c;
}

/// Checks every setting; called before anything is written.
inline void validate(const RunConfig& c) {
    if (c.jobs < 1) throw ConfigError("jobs must be >= 1");
    if (c.output.empty()) throw ConfigError("output directory must be set");
    if (c.data_format != "returns" && c.data_format != "prices") throw ConfigError("data.format must be 'returns' or 'prices'");
    detail::check_grid(c.thresholds, 0.0, 0.5, "threshold (a_u)");
    detail::check_grid(c.coverages, 0.0, 1.0, "coverage (a_q)");
    if (c.models.empty()) throw ConfigError("model list is empty");
    std::set<std::string> seen;
    for (const auto& m : c.models) {
        if (!seen.insert(m.name).second) throw ConfigError("model '" + m.name + "' listed twice");
    }
    if (c.starts < 1) throw ConfigError("estimation.starts must be >= 1");
    if (c.max_iterations < 1) throw ConfigError("estimation.max_iterations must be >= 1");
    if (c.min_events < 1) throw ConfigError("estimation.min_events must be >= 1");
    if (c.bootstrap_replicates < 1) throw ConfigError("backtest.bootstrap_replicates must be >= 1");
    if (c.block_length < 1) throw ConfigError("backtest.block_length must be >= 1");
    if (c.dq_lags < 0) throw ConfigError("backtest.dq_lags must be >= 0");
    if (!(c.significance > 0.0 && c.significance < 1.0)) throw ConfigError("report.significance must lie in (0, 1)");
    if (c.bands.size() < 2) throw ConfigError("report.bands needs at least two edges");
    for (std::size_t i = 1; i < c.bands.size(); ++i) {
        if (!(c.bands[i] > c.bands[i - 1])) throw ConfigError("report.bands must be strictly increasing");
    }
    if (c.sim_model != "hawkes" && c.sim_model != "garch") throw ConfigError("simulation.model must be 'hawkes' or 'garch'");
    if (c.sim_horizon < 2) throw ConfigError("simulation.horizon must be >= 2");
    if (c.sim_in_sample == 0 || c.sim_in_sample > c.sim_horizon) throw ConfigError("simulation.in_sample must lie in [1, horizon]");
    if (const char* why = c.sim_hawkes.problem()) throw ConfigError(std::string("simulation.hawkes: ") + why);
    if (!(c.sim_hawkes.a_u > 0.0 && c.sim_hawkes.a_u < 0.5)) throw ConfigError("simulation.hawkes.a_u must lie in (0, 0.5)");
    if (!(c.sim_u_left < c.sim_u_right)) throw ConfigError("simulation.hawkes.u_left must be below u_right");
    if (c.sim_nu != 0.0 && !(c.sim_nu > 2.0)) throw ConfigError("simulation.hawkes.nu must exceed 2 (or be 0 for a normal bulk)");
    if (const char* why = c.sim_garch.problem()) throw ConfigError(std::string("simulation.garch: ") + why);
}

/// Settings that determine outputs, in a fixed order. Output directory,
/// job count and --force are excluded: they do not change any result.
inline Json canonical(const RunConfig& c) {
    Json j;
    j["seed"] = c.seed;
    j["data"] = {{"path", c.data_path}, {"format", c.data_format}, {"split_date", c.split_date}};
    Json sim;
    sim["model"] = c.sim_model;
    sim["horizon"] = c.sim_horizon;
    sim["in_sample"] = c.sim_in_sample;
    sim["burn_in"] = c.sim_burn_in;
    sim["hawkes"] = to_json(c.sim_hawkes);
    sim["hawkes"]["nu"] = c.sim_nu;
    sim["hawkes"]["u_left"] = c.sim_u_left;
    sim["hawkes"]["u_right"] = c.sim_u_right;
    sim["garch"] = to_json(c.sim_garch);
    j["simulation"] = sim;
    j["grids"] = {{"thresholds", c.thresholds}, {"coverages", c.coverages}};
    Json models = Json::array();
    for (const auto& m : c.models) models.push_back(m.name);
    j["models"] = models;
    j["estimation"] = {{"starts", c.starts},
                       {"min_events", c.min_events},
                       {"max_iterations", c.max_iterations},
                       {"intensity_evaluation", intensity_evaluation_name(c.intensity)},
                       {"garch_min_length", c.garch_min_length}};
    j["forecast"] = {{"csv", c.forecast_csv}};
    j["backtest"] = {{"bootstrap_replicates", c.bootstrap_replicates},
                     {"block_length", c.block_length},
                     {"dq_lags", c.dq_lags},
                     {"residual_min_events", c.residual_min_events}};
    j["report"] = {{"representative_thresholds", c.representative_thresholds}, {"bands", c.bands}, {"significance", c.significance}};
    return j;
}

}  // namespace tailhawk::cli
