// End-to-end checks of the command-line tool: runs the built binary against
// small fixture files in a scratch directory and inspects exit codes and
// output artifacts.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "figmm/rng.hpp"
#include "figmm/simulation.hpp"

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
    if (ok) {
        std::cout << "  ok: " << what << '\n';
    } else {
        std::cout << "  FAILED: " << what << '\n';
        ++failures;
    }
}

int run(const std::string& args) {
    const std::string cmd = std::string(FIGMM_CLI_PATH) + " " + args + " >cli_stdout.txt 2>cli_stderr.txt";
    return std::system(cmd.c_str());
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_fixture_csv(const fs::path& path, int n, std::uint64_t seed) {
    figmm::RngStream pop_rng = figmm::RngStream(seed).substream(1);
    figmm::RngStream miss_rng = figmm::RngStream(seed).substream(2);
    const Eigen::MatrixXd pop =
        figmm::sim::generate_population(figmm::sim::SimModel::M1, n, pop_rng);
    const figmm::IncompleteDataset data =
        figmm::sim::impose_missingness(pop, {}, miss_rng);
    std::ofstream out(path);
    out << "y1,y2,y3\n";
    out.setf(std::ios::fmtflags(0), std::ios::floatfield);
    out.precision(17);
    for (int i = 0; i < data.size(); ++i) {
        for (int j = 0; j < 3; ++j) {
            if (j) {
                out << ',';
            }
            if (data.is_observed(i, j)) {
                out << data.value(i, j);
            } else {
                out << "NA";
            }
        }
        out << '\n';
    }
}

}  // namespace

int main() {
    const fs::path scratch = fs::temp_directory_path() / "figmm_cli_test";
    fs::remove_all(scratch);
    fs::create_directories(scratch);
    const fs::path prev = fs::current_path();
    fs::current_path(scratch);

    write_fixture_csv("data.csv", 80, 7);

    std::cout << "impute with a fixed G is deterministic\n";
    {
        const int rc = run("impute --input data.csv --g 2 --m 8 --max-iter 12 --seed 5 "
                           "--output-dir out1");
        check(rc == 0, "impute exits zero");
        check(fs::exists("out1/model.txt"), "model written");
        check(fs::exists("out1/imputation.csv"), "imputation written");
        check(fs::exists("out1/report.txt"), "report written");
        const int rc2 = run("impute --input data.csv --g 2 --m 8 --max-iter 12 --seed 5 "
                            "--output-dir out2");
        check(rc2 == 0, "second run exits zero");
        check(slurp("out1/model.txt") == slurp("out2/model.txt"), "model bytes identical");
        check(slurp("out1/imputation.csv") == slurp("out2/imputation.csv"),
              "imputation bytes identical");
    }

    std::cout << "select-g prints the table and the selected line\n";
    {
        const int rc = run("select-g --input data.csv --gmin 1 --gmax 2 --m 6 --max-iter 10 "
                           "--seed 3 --output-dir sel");
        check(rc == 0, "select-g exits zero");
        const std::string out = slurp("cli_stdout.txt");
        check(out.find("G BIC") != std::string::npos, "table header present");
        check(out.find("selected ") != std::string::npos, "selected line present");
        check(fs::exists("sel/bic.csv"), "bic.csv written");
    }

    std::cout << "estimate works on the imputation artifact\n";
    {
        const int rc = run("estimate --imputation out1/imputation.csv --estimand mean:y2 "
                           "--estimand prop:y2:-2 --estimand corr:y1:y2 --output-dir est");
        check(rc == 0, "estimate exits zero");
        const std::string out = slurp("est/estimates.csv");
        check(out.find("mean:y2") != std::string::npos, "mean estimand present");
        check(out.find("corr:y1:y2") != std::string::npos, "correlation estimand present");
    }

    std::cout << "variance runs the jackknife end to end\n";
    {
        write_fixture_csv("small.csv", 30, 9);
        const int rc = run("variance --input small.csv --g 1 --m 6 --max-iter 10 --seed 2 "
                           "--estimand mean:y2 --output-dir var");
        check(rc == 0, "variance exits zero");
        const std::string out = slurp("var/variance.csv");
        check(out.find("estimand,estimate,std_error") != std::string::npos,
              "variance header present");
        check(out.find("mean:y2") != std::string::npos, "estimand row present");
    }

    std::cout << "variance accepts impute artifacts\n";
    {
        const int rc = run("variance --input data.csv --model out1/model.txt "
                           "--imputation out1/imputation.csv --estimand mean:y2 "
                           "--output-dir var2");
        check(rc == 0, "artifact-driven variance exits zero");
        check(slurp("var2/variance.csv").find("mean:y2") != std::string::npos,
              "estimand row present");
    }

    std::cout << "simulate writes the study tables\n";
    {
        const int rc = run("simulate --model M1 --n 60 --B 2 --M 5 --gmax 2 --no-jackknife "
                           "--max-iter 8 --seed 4 --output-dir sim");
        check(rc == 0, "simulate exits zero");
        check(fs::exists("sim/table1.csv"), "table1.csv written");
        check(fs::exists("sim/g_histogram.csv"), "g_histogram.csv written");
        const std::string table = slurp("sim/table1.csv");
        check(table.find("# model: M1") != std::string::npos, "metadata block present");
        check(table.find("SFI") != std::string::npos, "SFI rows present");
    }

    std::cout << "config files provide defaults and the command line wins\n";
    {
        {
            std::ofstream cfg("run.cfg");
            cfg << "gmax=2\n";
            cfg << "m=6\n";
            cfg << "max-iter=10\n";
            cfg << "seed=3\n";
        }
        const int rc = run("select-g --input data.csv --config run.cfg --output-dir cfg1");
        check(rc == 0, "config-driven run exits zero");
        const std::string bic = slurp("cfg1/bic.csv");
        check(bic.find("\n2,") != std::string::npos, "config gmax applied");
        check(bic.find("\n3,") == std::string::npos, "no candidates beyond gmax");

        const int rc2 =
            run("select-g --input data.csv --config run.cfg --gmax 1 --output-dir cfg2");
        check(rc2 == 0, "override run exits zero");
        const std::string bic2 = slurp("cfg2/bic.csv");
        check(bic2.find("\n2,") == std::string::npos, "command line overrides the config");

        {
            std::ofstream cfg("bad.cfg");
            cfg << "no-such-knob=1\n";
        }
        const int rc3 = run("select-g --input data.csv --config bad.cfg");
        check(rc3 != 0, "unknown config keys are rejected");
    }

    std::cout << "bad inputs exit nonzero\n";
    {
        check(run("impute --input missing_file.csv --g 1") != 0, "missing file");
        check(run("estimate --imputation data.csv --estimand mean:1") != 0,
              "wrong artifact type");
        check(run("simulate --model M9") != 0, "unknown simulation model");
    }

    fs::current_path(prev);
    if (failures == 0) {
        fs::remove_all(scratch);
        std::cout << "all cli checks passed\n";
        return 0;
    }
    std::cout << failures << " cli checks failed (artifacts kept in " << scratch << ")\n";
    return 1;
}
