// tailhawk: ingest -> fit -> forecast -> backtest -> report.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration or validation error.

#include "config.hpp"
#include "pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

using namespace tailhawk;
using namespace tailhawk::cli;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::optional<std::string> output;
    bool force = false;
};

Context make_context(const Flags& f) {
    RunConfig c = f.config.empty() ? parse_config("") : [&] {
        std::string text;
        try {
            text = read_file(f.config);
        } catch (const DataError&) {
            throw ConfigError("cannot read configuration file " + f.config);
        }
        return parse_config(text);
    }();
    if (f.seed) c.seed = *f.seed;
    if (f.jobs) c.jobs = *f.jobs;
    if (f.output) c.output = *f.output;
    validate(c);
    Context ctx;
    ctx.config = std::move(c);
    ctx.out = ctx.config.output;
    ctx.hash = config_hash(canonical(ctx.config));
    ctx.force = f.force;
    return ctx;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-tailed peaks-over-threshold Hawkes risk forecasting"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.fallthrough();

    Flags flags;
    app.add_option("--config", flags.config, "YAML run configuration")->envname("TAILHAWK_CONFIG");
    app.add_option("--seed", flags.seed, "master seed")->envname("TAILHAWK_SEED");
    app.add_option("--jobs", flags.jobs, "worker threads")->envname("TAILHAWK_JOBS")->check(CLI::PositiveNumber);
    app.add_option("--output", flags.output, "output directory")->envname("TAILHAWK_OUTPUT");
    app.add_flag("--force", flags.force, "refit cells that already have valid fit documents")->envname("TAILHAWK_FORCE");

    auto* ingest = app.add_subcommand("ingest", "read data.path into the output tree");
    auto* simulate = app.add_subcommand("simulate", "write a synthetic series from the simulation section");
    auto* fit = app.add_subcommand("fit", "fit every model at every threshold (resumable)");
    auto* forecast = app.add_subcommand("forecast", "one-step VaR/ES forecasts over the out-of-sample period");
    auto* backtest = app.add_subcommand("backtest", "UC, CC, DQ and ZMD tests plus residual diagnostics");
    auto* lr = app.add_subcommand("lr-test", "likelihood-ratio model selection tables");
    auto* report = app.add_subcommand("report", "rejection summaries and parameter tables");
    auto* config = app.add_subcommand("config", "configuration helpers");
    auto* init = config->add_subcommand("init", "print the default configuration");
    config->require_subcommand(1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (init->parsed()) {
            std::cout << kDefaultConfig;
            return 0;
        }
        const Context ctx = make_context(flags);
        if (ingest->parsed()) cmd_ingest(ctx);
        if (simulate->parsed()) cmd_simulate(ctx);
        if (fit->parsed()) cmd_fit(ctx);
        if (forecast->parsed()) cmd_forecast(ctx);
        if (backtest->parsed()) cmd_backtest(ctx);
        if (lr->parsed()) cmd_lr_test(ctx);
        if (report->parsed()) cmd_report(ctx);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}
