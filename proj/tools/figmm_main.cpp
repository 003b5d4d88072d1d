// Command-line front end: impute / select-g / estimate / variance / simulate.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "figmm/conditional.hpp"
#include "figmm/dataset.hpp"
#include "figmm/em.hpp"
#include "figmm/errors.hpp"
#include "figmm/estimators.hpp"
#include "figmm/imputation.hpp"
#include "figmm/jackknife.hpp"
#include "figmm/mixture.hpp"
#include "figmm/model_select.hpp"
#include "figmm/parallel.hpp"
#include "figmm/simulation.hpp"

namespace {

namespace fs = std::filesystem;

struct CommonOpts {
    std::string input;
    std::string output_dir = ".";
    std::string missing_token = "NA";
    std::uint64_t seed = 0;
    int threads = 0;  // 0: all available
    std::string categorical;
    std::string id_column;
    bool log_transform = false;
    std::string config_path;
};

// Flat key=value configuration: each key names a long option of the
// subcommand; values from the command line win; unknown keys are rejected.
void apply_config_file(CLI::App* cmd, const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw figmm::ConfigError("cannot open config file " + path);
    }
    std::map<std::string, std::vector<std::string>> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw figmm::ConfigError("config line " + std::to_string(line_no) +
                                     " is not key=value: " + line);
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        entries[trim(line.substr(0, eq))].push_back(trim(line.substr(eq + 1)));
    }
    for (const auto& [key, values] : entries) {
        if (key == "config") {
            throw figmm::ConfigError("config files cannot nest");
        }
        CLI::Option* opt = cmd->get_option_no_throw("--" + key);
        if (opt == nullptr) {
            throw figmm::ConfigError("unknown config key '" + key + "' in " + path);
        }
        if (opt->count() > 0) {
            continue;  // set on the command line
        }
        for (const auto& v : values) {
            opt->add_result(v);
        }
        opt->run_callback();
    }
}

struct EmOpts {
    int m = 50;
    int max_iter = 500;
    double tol = 1e-6;
    double min_component_prob = 1e-8;
    std::string allocation = "deterministic";
    int restarts = 5;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_input = true) {
    if (with_input) {
        cmd->add_option("--input", opts.input, "input CSV with a header row")->required();
        cmd->add_option("--missing-token", opts.missing_token,
                        "cell value marking a missing item (case-sensitive)");
        cmd->add_option("--categorical", opts.categorical,
                        "name of a fully observed categorical covariate column");
        cmd->add_option("--id-column", opts.id_column, "column holding unique record ids");
        cmd->add_flag("--log-transform", opts.log_transform,
                      "apply natural log to all numeric items at ingestion");
    }
    cmd->add_option("--seed", opts.seed, "RNG seed; all output is deterministic given it");
    cmd->add_option("--threads", opts.threads, "worker threads (default: all available)");
    cmd->add_option("--output-dir", opts.output_dir, "directory for output files");
    cmd->add_option("--config", opts.config_path,
                    "flat key=value configuration file; command-line flags win");
}

void add_em(CLI::App* cmd, EmOpts& opts) {
    cmd->add_option("--m", opts.m, "imputations per incomplete record (M)");
    cmd->add_option("--max-iter", opts.max_iter, "EM iteration cap");
    cmd->add_option("--tol", opts.tol, "relative tolerance on the smoothed log-likelihood");
    cmd->add_option("--min-component-prob", opts.min_component_prob,
                    "posterior below which a component is dropped per record");
    cmd->add_option("--allocation", opts.allocation, "deterministic or stochastic")
        ->check(CLI::IsMember({"deterministic", "stochastic"}));
    cmd->add_option("--restarts", opts.restarts, "initialization restarts");
}

figmm::EmConfig make_em_config(const CommonOpts& common, const EmOpts& em) {
    figmm::EmConfig cfg;
    cfg.imputations = em.m;
    cfg.max_iterations = em.max_iter;
    cfg.loglik_rel_tol = em.tol;
    cfg.min_component_prob = em.min_component_prob;
    cfg.seed = common.seed;
    cfg.allocation = em.allocation == "stochastic" ? figmm::AllocationMode::stochastic
                                                   : figmm::AllocationMode::deterministic;
    cfg.restarts = em.restarts;
    cfg.threads = 1;
    return cfg;
}

int resolve_threads(int requested) {
    return requested > 0 ? requested : figmm::hardware_threads();
}

figmm::IncompleteDataset load_dataset(const CommonOpts& opts) {
    figmm::CsvOptions csv;
    csv.missing_token = opts.missing_token;
    if (!opts.categorical.empty()) {
        csv.categorical_column = opts.categorical;
    }
    if (!opts.id_column.empty()) {
        csv.id_column = opts.id_column;
    }
    csv.log_transform = opts.log_transform;
    return figmm::read_csv_file(opts.input, csv);
}

std::string out_path(const CommonOpts& opts, const std::string& name) {
    fs::create_directories(opts.output_dir);
    return (fs::path(opts.output_dir) / name).string();
}

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) {
        std::cerr << "warning: " << w << '\n';
    }
}

using Metadata = std::vector<std::pair<std::string, std::string>>;

void write_kv_file(const std::string& path, const Metadata& rows) {
    std::ofstream out(path);
    if (!out) {
        throw figmm::IoError("cannot write " + path);
    }
    for (const auto& [k, v] : rows) {
        out << "# " << k << ": " << v << '\n';
    }
}

void write_bic_csv(const std::string& path, const figmm::BicReport& report, const Metadata& meta) {
    std::ofstream out(path);
    if (!out) {
        throw figmm::IoError("cannot write " + path);
    }
    for (const auto& [k, v] : meta) {
        out << "# " << k << ": " << v << '\n';
    }
    out << "G,BIC,loglik,penalty,status\n";
    for (const auto& c : report.candidates) {
        out << c.components << ',';
        if (c.success) {
            out << figmm::format_double(c.bic) << ',' << figmm::format_double(c.loglik) << ','
                << figmm::format_double(c.penalty) << ",ok\n";
        } else {
            out << "NA,NA,NA,failed\n";
        }
    }
    out << "# selected: " << report.selected_components << '\n';
}

// ---------------------------------------------------------------- impute

struct ImputeOpts {
    CommonOpts common;
    EmOpts em;
    int g = 0;  // 0: select by BIC
    int g_min = 1;
    int g_max = 8;
};

int cmd_impute(const ImputeOpts& opts) {
    const figmm::IncompleteDataset data = load_dataset(opts.common);
    const figmm::EmConfig em = make_em_config(opts.common, opts.em);
    const int threads = resolve_threads(opts.common.threads);

    Metadata report;
    report.emplace_back("input", opts.common.input);
    report.emplace_back("records", std::to_string(data.size()));
    report.emplace_back("items", std::to_string(data.dim()));
    report.emplace_back("complete_records", std::to_string(data.complete_count()));
    report.emplace_back("seed", std::to_string(opts.common.seed));
    report.emplace_back("imputations", std::to_string(opts.em.m));

    std::vector<std::string> warnings;
    Metadata imp_meta = {{"source", opts.common.input}, {"seed", std::to_string(opts.common.seed)}};

    if (!opts.common.categorical.empty()) {
        figmm::ConditionalEmResult fit;
        if (opts.g > 0) {
            fit = figmm::run_em_conditional(data, opts.g, em);
            report.emplace_back("components", std::to_string(opts.g));
        } else {
            figmm::SelectConfig sc;
            sc.g_min = opts.g_min;
            sc.g_max = opts.g_max;
            sc.em = em;
            sc.threads = threads;
            figmm::ConditionalBicReport bic = figmm::select_g_conditional(data, sc);
            fit = std::move(bic.candidates[static_cast<std::size_t>(bic.selected_components -
                                                                    opts.g_min)]
                                .fit);
            report.emplace_back("selected_G", std::to_string(bic.selected_components));
            warnings.insert(warnings.end(), bic.warnings.begin(), bic.warnings.end());
        }
        figmm::write_conditional_model_file(out_path(opts.common, "model.txt"), fit.model);
        figmm::write_imputation_csv_file(out_path(opts.common, "imputation.csv"), fit.imputation,
                                         data, imp_meta);
        report.emplace_back("iterations", std::to_string(fit.iterations));
        report.emplace_back("converged", fit.converged ? "yes" : "no");
        report.emplace_back("final_loglik", figmm::format_double(fit.loglik_trace.back()));
        warnings.insert(warnings.end(), fit.warnings.begin(), fit.warnings.end());
    } else {
        figmm::EmResult fit;
        if (opts.g > 0) {
            fit = figmm::run_em(data, opts.g, em);
            report.emplace_back("components", std::to_string(opts.g));
        } else {
            figmm::SelectConfig sc;
            sc.g_min = opts.g_min;
            sc.g_max = opts.g_max;
            sc.em = em;
            sc.threads = threads;
            figmm::BicReport bic = figmm::select_g(data, sc);
            write_bic_csv(out_path(opts.common, "bic.csv"), bic,
                          {{"input", opts.common.input}});
            fit = std::move(
                bic.candidates[static_cast<std::size_t>(bic.selected_components - opts.g_min)]
                    .fit);
            report.emplace_back("selected_G", std::to_string(bic.selected_components));
            warnings.insert(warnings.end(), bic.warnings.begin(), bic.warnings.end());
        }
        figmm::write_model_file(out_path(opts.common, "model.txt"), fit.model);
        figmm::write_imputation_csv_file(out_path(opts.common, "imputation.csv"), fit.imputation,
                                         data, imp_meta);
        report.emplace_back("iterations", std::to_string(fit.iterations));
        report.emplace_back("converged", fit.converged ? "yes" : "no");
        report.emplace_back("final_loglik", figmm::format_double(fit.loglik_trace.back()));
        warnings.insert(warnings.end(), fit.warnings.begin(), fit.warnings.end());
    }

    for (const auto& w : warnings) {
        report.emplace_back("warning", w);
    }
    write_kv_file(out_path(opts.common, "report.txt"), report);
    print_warnings(warnings);
    std::cout << "wrote " << out_path(opts.common, "model.txt") << ", "
              << out_path(opts.common, "imputation.csv") << '\n';
    return 0;
}

// ---------------------------------------------------------------- select-g

struct SelectOpts {
    CommonOpts common;
    EmOpts em;
    int g_min = 1;
    int g_max = 8;
};

int cmd_select_g(const SelectOpts& opts) {
    const figmm::IncompleteDataset data = load_dataset(opts.common);
    figmm::SelectConfig sc;
    sc.g_min = opts.g_min;
    sc.g_max = opts.g_max;
    sc.em = make_em_config(opts.common, opts.em);
    sc.threads = resolve_threads(opts.common.threads);

    if (!opts.common.categorical.empty()) {
        const figmm::ConditionalBicReport report = figmm::select_g_conditional(data, sc);
        std::cout << "G BIC\n";
        for (const auto& c : report.candidates) {
            if (c.success) {
                std::cout << c.components << ' ' << figmm::format_double(c.bic) << '\n';
            } else {
                std::cout << c.components << " failed\n";
            }
        }
        std::cout << "selected " << report.selected_components << '\n';
        print_warnings(report.warnings);
        return 0;
    }

    const figmm::BicReport report = figmm::select_g(data, sc);
    write_bic_csv(out_path(opts.common, "bic.csv"), report, {{"input", opts.common.input}});
    std::cout << "G BIC\n";
    for (const auto& c : report.candidates) {
        if (c.success) {
            std::cout << c.components << ' ' << figmm::format_double(c.bic) << '\n';
        } else {
            std::cout << c.components << " failed\n";
        }
    }
    std::cout << "selected " << report.selected_components << '\n';
    print_warnings(report.warnings);
    return 0;
}

// ---------------------------------------------------------------- estimate

struct EstimateOpts {
    CommonOpts common;
    std::string imputation_path;
    std::vector<std::string> estimands;
};

int cmd_estimate(const EstimateOpts& opts) {
    const figmm::LoadedImputation loaded =
        figmm::read_imputation_csv_file(opts.imputation_path);
    std::ofstream out(out_path(opts.common, "estimates.csv"));
    out << "# imputation: " << opts.imputation_path << '\n';
    out << "estimand,estimate,residual_norm,solver\n";
    for (const auto& spec : opts.estimands) {
        const figmm::EstimatingFunction u = figmm::parse_estimand(spec, loaded.column_names);
        const figmm::PointEstimate est =
            figmm::solve_estimating_equation(loaded.imputation, u);
        out << spec << ',' << figmm::format_double(est.value(u)) << ','
            << figmm::format_double(est.residual_norm) << ','
            << (est.used_closed_form ? "closed-form" : "newton") << '\n';
        std::cout << spec << " = " << figmm::format_double(est.value(u)) << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------- variance

struct VarianceOpts {
    CommonOpts common;
    EmOpts em;
    std::string model_path;
    std::string imputation_path;
    std::vector<std::string> estimands;
    int g = 0;
    int g_min = 1;
    int g_max = 8;
    int groups = 0;
    double level = 0.95;
};

int cmd_variance(const VarianceOpts& opts) {
    const figmm::IncompleteDataset data = load_dataset(opts.common);
    if (!opts.common.categorical.empty()) {
        throw figmm::ConfigError(
            "variance estimation supports the unconditional model; drop --categorical");
    }
    const figmm::EmConfig em = make_em_config(opts.common, opts.em);

    figmm::EmResult base;
    if (!opts.model_path.empty() && !opts.imputation_path.empty()) {
        base.model = figmm::read_model_file(opts.model_path);
        figmm::LoadedImputation loaded = figmm::read_imputation_csv_file(opts.imputation_path);
        if (loaded.record_ids != data.row_ids()) {
            throw figmm::IoError("imputation records do not match the input dataset");
        }
        base.imputation = std::move(loaded.imputation);
        figmm::rebuild_blocks(base.imputation, base.model.components());
    } else if (opts.g > 0) {
        base = figmm::run_em(data, opts.g, em);
    } else {
        figmm::SelectConfig sc;
        sc.g_min = opts.g_min;
        sc.g_max = opts.g_max;
        sc.em = em;
        sc.threads = resolve_threads(opts.common.threads);
        figmm::BicReport bic = figmm::select_g(data, sc);
        base = std::move(
            bic.candidates[static_cast<std::size_t>(bic.selected_components - opts.g_min)].fit);
        print_warnings(bic.warnings);
    }

    std::vector<figmm::EstimatingFunction> estimands;
    for (const auto& spec : opts.estimands) {
        estimands.push_back(figmm::parse_estimand(spec, data.column_names()));
    }
    figmm::JackknifeConfig jc;
    jc.groups = opts.groups;
    jc.threads = resolve_threads(opts.common.threads);
    const figmm::JackknifeRun run =
        figmm::jackknife_pipeline(data, base, estimands, jc, opts.level);

    std::ofstream out(out_path(opts.common, "variance.csv"));
    out << "# input: " << opts.common.input << '\n';
    out << "# level: " << opts.level << '\n';
    out << "# replicates: " << (opts.groups == 0 ? data.size() : opts.groups) << '\n';
    out << "# replicate_failures: " << run.replicate_failures << '\n';
    out << "estimand,estimate,std_error,ci_lower,ci_upper,replicate_failures\n";
    for (const auto& ev : run.estimands) {
        const double se = std::sqrt(ev.variance);
        out << ev.name << ',' << figmm::format_double(ev.estimate) << ','
            << figmm::format_double(se) << ',' << figmm::format_double(ev.interval.lower) << ','
            << figmm::format_double(ev.interval.upper) << ',' << run.replicate_failures << '\n';
        std::cout << ev.name << ": " << figmm::format_double(ev.estimate) << "  se "
                  << figmm::format_double(se) << "  [" << figmm::format_double(ev.interval.lower)
                  << ", " << figmm::format_double(ev.interval.upper) << "]  excluded "
                  << run.replicate_failures << '\n';
    }
    print_warnings(run.warnings);
    return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateOpts {
    CommonOpts common;
    std::string model = "M1";
    int n = 500;
    int replicates = 200;
    std::string methods = "Full,CC,PFI,SFI";
    int m = 50;
    int g_min = 1;
    int g_max = 6;
    bool no_jackknife = false;
    int max_iter = 100;
    double tol = 1e-5;
    double level = 0.95;
    std::string external;  // name:path
};

int cmd_simulate(const SimulateOpts& opts) {
    figmm::sim::StudyConfig cfg;
    cfg.model = figmm::sim::parse_sim_model(opts.model);
    cfg.n = opts.n;
    cfg.replicates = opts.replicates;
    cfg.seed = opts.common.seed;
    cfg.methods.clear();
    {
        std::stringstream ss(opts.methods);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            cfg.methods.push_back(figmm::sim::parse_method(tok));
        }
    }
    cfg.imputations = opts.m;
    cfg.g_min = opts.g_min;
    cfg.g_max = opts.g_max;
    cfg.jackknife = !opts.no_jackknife;
    cfg.level = opts.level;
    cfg.em.max_iterations = opts.max_iter;
    cfg.em.loglik_rel_tol = opts.tol;
    cfg.threads = resolve_threads(opts.common.threads);
    if (!opts.external.empty()) {
        const auto colon = opts.external.find(':');
        if (colon == std::string::npos) {
            throw figmm::ConfigError("--external expects name:path");
        }
        cfg.external = figmm::sim::read_external_estimates(opts.external.substr(0, colon),
                                                           opts.external.substr(colon + 1));
    }

    const figmm::sim::SimResult result = figmm::sim::run_study(cfg);

    {
        std::ofstream out(out_path(opts.common, "table1.csv"));
        figmm::sim::write_table_csv(out, result, cfg);
    }
    {
        std::ofstream out(out_path(opts.common, "g_histogram.csv"));
        figmm::sim::write_histogram_csv(out, result, cfg);
    }
    std::cout << "model " << opts.model << ", B = " << cfg.replicates << ", n = " << cfg.n
              << "\nmethod estimand rmse_ratio coverage\n";
    for (const auto& m : result.methods) {
        for (int e = 0; e < 4; ++e) {
            const auto& cell = m.cells[static_cast<std::size_t>(e)];
            std::cout << m.name << ' ' << result.estimand_names[static_cast<std::size_t>(e)]
                      << ' ' << cell.rmse_ratio << ' ';
            if (cell.coverage_pct >= 0.0) {
                std::cout << cell.coverage_pct;
            } else {
                std::cout << "NA";
            }
            std::cout << '\n';
        }
    }
    print_warnings(result.warnings);
    std::cout << "wrote " << out_path(opts.common, "table1.csv") << ", "
              << out_path(opts.common, "g_histogram.csv") << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fractional imputation with Gaussian mixture models"};
    app.require_subcommand(1);

    ImputeOpts impute_opts;
    auto* impute = app.add_subcommand(
        "impute", "fit the mixture by Monte Carlo EM and write the imputed dataset");
    add_common(impute, impute_opts.common);
    add_em(impute, impute_opts.em);
    impute->add_option("--g", impute_opts.g, "number of components (0: select by BIC)");
    impute->add_option("--gmin", impute_opts.g_min, "smallest candidate G");
    impute->add_option("--gmax", impute_opts.g_max, "largest candidate G");

    SelectOpts select_opts;
    auto* select = app.add_subcommand("select-g", "score candidate component counts by BIC");
    add_common(select, select_opts.common);
    add_em(select, select_opts.em);
    select->add_option("--gmin", select_opts.g_min, "smallest candidate G");
    select->add_option("--gmax", select_opts.g_max, "largest candidate G");

    EstimateOpts estimate_opts;
    auto* estimate = app.add_subcommand(
        "estimate", "solve estimating equations on a fractionally imputed dataset");
    add_common(estimate, estimate_opts.common, false);
    estimate->add_option("--imputation", estimate_opts.imputation_path,
                         "long-form imputation CSV written by impute")
        ->required();
    estimate->add_option("--estimand", estimate_opts.estimands,
                         "estimand spec: mean:k, prop:k:c or corr:k:l")
        ->required();

    VarianceOpts variance_opts;
    auto* variance = app.add_subcommand(
        "variance", "jackknife variance with importance-sampling replicate weights");
    add_common(variance, variance_opts.common);
    add_em(variance, variance_opts.em);
    variance->add_option("--model", variance_opts.model_path, "model file from impute");
    variance->add_option("--imputation", variance_opts.imputation_path,
                         "imputation CSV from impute");
    variance->add_option("--estimand", variance_opts.estimands, "estimand specs")->required();
    variance->add_option("--g", variance_opts.g, "number of components when fitting here");
    variance->add_option("--gmin", variance_opts.g_min, "smallest candidate G");
    variance->add_option("--gmax", variance_opts.g_max, "largest candidate G");
    variance->add_option("--groups", variance_opts.groups,
                         "grouped jackknife group count (0: delete-one)");
    variance->add_option("--level", variance_opts.level, "confidence level");

    SimulateOpts sim_opts;
    auto* simulate = app.add_subcommand("simulate", "reproduce the simulation study");
    add_common(simulate, sim_opts.common, false);
    simulate->add_option("--model", sim_opts.model, "M1, M2, M3 or M4");
    simulate->add_option("--n", sim_opts.n, "sample size per replicate");
    simulate->add_option("--B", sim_opts.replicates, "number of replicates (paper scale: 2000)");
    simulate->add_option("--methods", sim_opts.methods, "comma-separated subset of Full,CC,PFI,SFI");
    simulate->add_option("--M", sim_opts.m, "imputations per incomplete record");
    simulate->add_option("--gmin", sim_opts.g_min, "smallest candidate G for SFI");
    simulate->add_option("--gmax", sim_opts.g_max, "largest candidate G for SFI");
    simulate->add_flag("--no-jackknife", sim_opts.no_jackknife,
                       "skip interval construction for PFI/SFI");
    simulate->add_option("--max-iter", sim_opts.max_iter, "EM iteration cap per fit");
    simulate->add_option("--tol", sim_opts.tol, "EM relative tolerance");
    simulate->add_option("--level", sim_opts.level, "confidence level");
    simulate->add_option("--external", sim_opts.external,
                         "name:path of a per-replicate estimate file to score alongside");

    try {
        app.parse(argc, argv);
        const std::vector<std::pair<CLI::App*, CommonOpts*>> commons = {
            {impute, &impute_opts.common},     {select, &select_opts.common},
            {estimate, &estimate_opts.common}, {variance, &variance_opts.common},
            {simulate, &sim_opts.common},
        };
        for (const auto& [cmd, common] : commons) {
            if (cmd->parsed() && !common->config_path.empty()) {
                apply_config_file(cmd, common->config_path);
            }
        }
        if (impute->parsed()) {
            return cmd_impute(impute_opts);
        }
        if (select->parsed()) {
            return cmd_select_g(select_opts);
        }
        if (estimate->parsed()) {
            return cmd_estimate(estimate_opts);
        }
        if (variance->parsed()) {
            return cmd_variance(variance_opts);
        }
        if (simulate->parsed()) {
            return cmd_simulate(sim_opts);
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const figmm::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
