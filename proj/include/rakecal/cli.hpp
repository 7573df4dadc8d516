#pragma once

// Command dispatch for the rakecal executable. run_cli is callable
// in-process so tests exercise exactly what the binary does.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "rakecal/io.hpp"
#include "rakecal/simulation.hpp"

namespace rakecal {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitSchema = 2, kExitEstimation = 3 };

/// Schema and configuration problems exit with 2, solver failures with 3.
inline int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::ParseError:
        case ErrorCode::SchemaError:
        case ErrorCode::InvalidConfig:
        case ErrorCode::InvalidPlan:
        case ErrorCode::EmptyDataset:
        case ErrorCode::DimensionMismatch:
        case ErrorCode::NonFiniteInput:
        case ErrorCode::NotBracketed:
            return kExitSchema;
        default:
            return kExitEstimation;
    }
}

struct FitRequest {
    EstimatorKind estimator = EstimatorKind::GRN;
    ErrorModelSpec spec = ErrorModelSpec::for_mode(ErrorMode::Both);
    std::vector<double> rsrc_grid = RsrcOptions{}.grid;
    int bootstrap = 0;
    std::uint64_t seed = 1;
    unsigned threads = 1;
};

/// Point estimate plus optional stratified-bootstrap inference on a dataset.
inline FitReport fit_dataset(const AnalysisDataset& ds, const FitRequest& request) {
    const Estimator estimator = make_estimator(request.estimator, request.spec, request.rsrc_grid);
    FitReport report;
    report.estimator = std::string(to_string(request.estimator));
    const auto terms = ds.term_names();
    const auto fill = [&](const Vector& beta) {
        report.rows.clear();
        for (Eigen::Index j = 0; j < beta.size(); ++j) {
            CoefficientRow row;
            row.term = terms[static_cast<std::size_t>(j)];
            row.estimate = beta(j);
            report.rows.push_back(row);
        }
    };

    if (request.bootstrap >= 2) {
        BootstrapOptions bo;
        bo.replicates = request.bootstrap;
        bo.seed = request.seed;
        bo.threads = request.threads;
        const auto boot = stratified_bootstrap(ds.cohort, ds.design, estimator, bo);
        fill(boot.point);
        for (std::size_t j = 0; j < report.rows.size(); ++j) {
            const auto k = static_cast<Eigen::Index>(j);
            auto& row = report.rows[j];
            row.se = boot.se(k);
            row.lower = boot.ci_percentile(k, 0);
            row.upper = boot.ci_percentile(k, 1);
            row.normal_lower = boot.ci_normal(k, 0);
            row.normal_upper = boot.ci_normal(k, 1);
        }
        report.se_source = "bootstrap";
        report.b_requested = boot.b_requested;
        report.b_effective = boot.b_effective;
        return report;
    }

    if (request.estimator == EstimatorKind::Naive || request.estimator == EstimatorKind::True) {
        const auto data = request.estimator == EstimatorKind::Naive ? naive_data(ds.cohort) : true_data(ds.cohort);
        const auto fit = require_converged(fit_cox(data), report.estimator);
        fill(fit.beta);
        const Vector se = fit.standard_errors();
        for (std::size_t j = 0; j < report.rows.size(); ++j) {
            auto& row = report.rows[j];
            row.se = se(static_cast<Eigen::Index>(j));
            row.normal_lower = row.estimate - 1.959963984540054 * row.se;
            row.normal_upper = row.estimate + 1.959963984540054 * row.se;
            row.lower = row.normal_lower;
            row.upper = row.normal_upper;
        }
        report.se_source = "model";
        return report;
    }
    fill(estimator(ds.cohort, ds.design));
    report.se_source = "none";
    return report;
}

namespace detail {

inline std::filesystem::path prepare_output(const std::string& dir) {
    std::filesystem::path out(dir);
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) fail(ErrorCode::InvalidConfig, "cannot create output directory '" + dir + "'");
    return out;
}

template <class Writer>
void write_file(const std::filesystem::path& path, Writer&& writer) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::InvalidConfig, "cannot write '" + path.string() + "'");
    writer(f);
}

inline std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> grid;
    for (const auto& g : split_list(text)) grid.push_back(parse_config_number(g, "grid"));
    return grid;
}

}  // namespace detail

/// Runs one command line (args excludes the program name). Output meant for
/// people goes to `out`; diagnostics go to `err`.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Measurement-error corrected Cox regression: regression calibration and generalized raking"};
    app.require_subcommand(1);

    // fit
    auto* fit = app.add_subcommand("fit", "Fit one estimator to a two-phase CSV dataset");
    std::string data_path, estimator_name = "grn", mode_name = "both", omega_on, grid_text, out_dir = ".";
    int fit_bootstrap = 0;
    std::uint64_t fit_seed = 1;
    fit->add_option("--data", data_path, "Dataset CSV")->required();
    fit->add_option("--estimator", estimator_name, "naive, true, ht, rc, rsrc, grn or grrc");
    fit->add_option("--mode", mode_name, "Error model: covariate, outcome or both");
    fit->add_option("--omega-on", omega_on, "Regress omega on x or x_star (default follows the mode)");
    fit->add_option("--grid", grid_text, "RSRC recalibration quantiles, comma separated");
    fit->add_option("--bootstrap", fit_bootstrap, "Stratified bootstrap replicates (0: none)");
    fit->add_option("--seed", fit_seed, "Bootstrap seed");
    fit->add_option("--out", out_dir, "Output directory");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run a simulation scenario");
    std::string config_path, sim_out = ".";
    std::optional<int> reps, boot, rsrc_boot;
    std::optional<std::uint64_t> sim_seed;
    std::optional<unsigned> threads;
    std::vector<std::string> overrides;
    sim->add_option("--config", config_path, "Scenario file")->required();
    sim->add_option("--reps", reps, "Override the replicate count");
    sim->add_option("--bootstrap", boot, "Override bootstrap replicates");
    sim->add_option("--rsrc-bootstrap", rsrc_boot, "Override RSRC bootstrap replicates");
    sim->add_option("--seed", sim_seed, "Override the seed");
    sim->add_option("--threads", threads, "Worker threads (default RAKECAL_THREADS or all cores)");
    sim->add_option("--set", overrides, "Extra key=value overrides")->take_all();
    sim->add_option("--out", sim_out, "Output directory");

    // tune-censoring
    auto* tune = app.add_subcommand("tune-censoring", "Find the censoring lower endpoint for a target rate");
    std::string tune_config;
    std::optional<double> target;
    double tolerance = 0.005;
    tune->add_option("--config", tune_config, "Scenario file")->required();
    tune->add_option("--target", target, "Censoring rate (default: the scenario's censor_target)");
    tune->add_option("--tolerance", tolerance, "Accepted distance from the target");

    // generate
    auto* gen = app.add_subcommand("generate", "Write one simulated two-phase dataset as CSV");
    std::string gen_config, gen_out;
    std::uint64_t gen_replicate = 0;
    gen->add_option("--config", gen_config, "Scenario file")->required();
    gen->add_option("--out", gen_out, "Output CSV")->required();
    gen->add_option("--replicate", gen_replicate, "Replicate index within the scenario's seed");

    auto* version = app.add_subcommand("version", "Print the version");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (version->parsed()) {
            out << "rakecal " << kVersion << '\n';
            return kExitOk;
        }

        if (fit->parsed()) {
            FitRequest request;
            request.estimator = detail::parse_estimator(estimator_name);
            request.spec = ErrorModelSpec::for_mode(detail::parse_mode(mode_name));
            if (!omega_on.empty()) {
                if (omega_on == "x") request.spec.regress_omega_on = OmegaRegressor::TrueX;
                else if (omega_on == "x_star") request.spec.regress_omega_on = OmegaRegressor::ErrorProneX;
                else fail(ErrorCode::InvalidConfig, "--omega-on must be x or x_star");
            }
            if (!grid_text.empty()) request.rsrc_grid = detail::parse_grid(grid_text);
            if (fit_bootstrap == 1 || fit_bootstrap < 0) fail(ErrorCode::InvalidConfig, "--bootstrap must be 0 or >= 2");
            request.bootstrap = fit_bootstrap;
            request.seed = fit_seed;
            request.threads = default_thread_count();
            const auto ds = load_dataset(data_path);
            const auto report = fit_dataset(ds, request);

            const auto dir = detail::prepare_output(out_dir);
            const std::string stem = "fit_" + detail::lower(report.estimator);
            RunManifest manifest;
            manifest.set("command", "fit");
            manifest.set("data", data_path);
            manifest.set("estimator", report.estimator);
            manifest.set("mode", detail::mode_name(request.spec.mode));
            manifest.set("omega_on", request.spec.regress_omega_on == OmegaRegressor::TrueX ? "x" : "x_star");
            manifest.set("bootstrap", std::to_string(request.bootstrap));
            manifest.set("seed", std::to_string(request.seed));
            manifest.set("output", (dir / stem).string());
            manifest.set("version", std::string(kVersion));
            std::string grid;
            for (double g : request.rsrc_grid) grid += detail::format_double(g) + ",";
            manifest.set("rsrc_grid", grid);
            detail::write_file(dir / (stem + ".csv"), [&](std::ostream& f) { write_fit_csv(f, report, manifest, request.seed); });
            detail::write_file(dir / (stem + ".txt"), [&](std::ostream& f) { write_fit_table(f, report, manifest, request.seed); });
            write_fit_table(out, report, manifest, request.seed);
            return kExitOk;
        }

        if (sim->parsed()) {
            auto config = load_scenario(config_path);
            if (reps) config.reps = *reps;
            if (boot) config.bootstrap = *boot;
            if (rsrc_boot) config.rsrc_bootstrap = *rsrc_boot;
            if (sim_seed) config.seed = *sim_seed;
            for (const auto& o : overrides) {
                const auto eq = o.find('=');
                if (eq == std::string::npos) fail(ErrorCode::InvalidConfig, "--set expects key=value, got '" + o + "'");
                apply_setting(config, o.substr(0, eq), o.substr(eq + 1));
            }
            config.threads = threads ? *threads : default_thread_count();
            const auto result = run_scenario(config);

            const auto dir = detail::prepare_output(sim_out);
            RunManifest manifest;
            manifest.set("command", "simulate");
            manifest.set("scenario", format_scenario(config));
            manifest.set("output", (dir / config.name).string());
            manifest.set("version", std::string(kVersion));
            detail::write_file(dir / (config.name + ".csv"),
                               [&](std::ostream& f) { write_scenario_csv(f, result, manifest, config.seed); });
            detail::write_file(dir / (config.name + ".txt"),
                               [&](std::ostream& f) { write_scenario_table(f, result, manifest, config.seed); });
            write_scenario_table(out, result, manifest, config.seed);
            out << "runtime " << detail::format_fixed(result.runtime_seconds, 2) << " s\n";
            return kExitOk;
        }

        if (tune->parsed()) {
            const auto config = load_scenario(tune_config);
            const double t = target ? *target : config.censor_target;
            const auto tuned = tune_censoring(config, t, tolerance);
            out << "censor_lower = " << detail::format_double(tuned.lower) << '\n'
                << "censor_length = " << detail::format_double(tuned.length) << '\n'
                << "# achieved censoring " << detail::format_fixed(tuned.achieved, 5) << '\n';
            return kExitOk;
        }

        if (gen->parsed()) {
            const auto config = load_scenario(gen_config);
            const ScenarioPlan plan(config);
            auto rng = make_stream(config.seed, gen_replicate);
            const auto [cohort, design] = simulate_dataset(plan, rng);
            detail::write_file(gen_out, [&](std::ostream& f) { write_dataset(f, cohort, design); });
            out << "wrote " << cohort.n() << " rows (" << design.n_selected() << " validated) to " << gen_out << '\n';
            return kExitOk;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    }
    return kExitUsage;
}

}  // namespace rakecal
