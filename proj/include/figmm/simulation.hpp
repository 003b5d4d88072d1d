#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "figmm/dataset.hpp"
#include "figmm/em.hpp"
#include "figmm/estimators.hpp"
#include "figmm/jackknife.hpp"
#include "figmm/rng.hpp"

namespace figmm::sim {

enum class SimModel { M1, M2, M3, M4 };

SimModel parse_sim_model(const std::string& name);
std::string to_string(SimModel model);

double normal_cdf(double x);

// logit(pi_2) = -0.8 + 0.4 y1, logit(pi_3) = 0.4 - 0.8 y1; pi is the
// probability that the item goes missing, y1 is always observed
struct MissingnessMechanism {
    double intercept_y2 = -0.8;
    double slope_y2 = 0.4;
    double intercept_y3 = 0.4;
    double slope_y3 = -0.8;
};

// item is 2 or 3
double miss_probability(const MissingnessMechanism& mech, int item, double y1);

Eigen::MatrixXd generate_population(SimModel model, int n, RngStream& rng);

IncompleteDataset impose_missingness(const Eigen::MatrixXd& complete,
                                     const MissingnessMechanism& mech, RngStream& rng,
                                     std::array<double, 2>* realized_miss_rates = nullptr);

// theta2 = E y2, theta3 = E y3, p2 = pr(y2 < c2), p3 = pr(y3 < c3)
struct TrueValues {
    double theta2 = 0.0;
    double theta3 = 0.0;
    double p2 = 0.0;
    double p3 = 0.0;
    double c2 = 0.0;
    double c3 = 0.0;
};

// Closed forms where available; proportions without a closed form come from a
// seed-pinned 1e7-draw Monte Carlo oracle computed once per process.
TrueValues true_values(SimModel model);

// the oracle itself (all entries Monte Carlo), exposed for verification
TrueValues mc_oracle_true_values(SimModel model, std::int64_t draws, std::uint64_t seed);

enum class Method { full, cc, pfi, sfi };
std::string to_string(Method method);
Method parse_method(const std::string& name);

// pre-computed per-replicate estimates of an external method (comparison slot)
struct ExternalEstimates {
    std::string name;
    Eigen::MatrixXd estimates;               // B x 4
    std::optional<Eigen::MatrixXd> std_errors;  // B x 4, enables coverage
};
ExternalEstimates read_external_estimates(const std::string& name, const std::string& path);

struct StudyConfig {
    SimModel model = SimModel::M1;
    int n = 500;
    int replicates = 200;  // B; the paper runs 2000
    std::uint64_t seed = 0;
    std::vector<Method> methods = {Method::full, Method::cc, Method::pfi, Method::sfi};
    int imputations = 50;  // M
    int g_min = 1;
    int g_max = 6;  // SFI selects G by BIC over [g_min, g_max]
    bool jackknife = true;
    double level = 0.95;
    EmConfig em;  // seed is derived per replicate; M is taken from `imputations`
    ReplicateConfig replicate;
    MissingnessMechanism mechanism;
    int threads = 1;
    std::optional<ExternalEstimates> external;
};

struct CellStats {
    double rmse_ratio = 0.0;    // MSE_method / MSE_full * 100
    double coverage_pct = -1.0;  // -1 when intervals are unavailable
    double mse = 0.0;
    double mean_estimate = 0.0;
};

struct MethodResult {
    std::string name;
    std::array<CellStats, 4> cells;
    int failures = 0;
    Eigen::MatrixXd estimates;  // B x 4, NaN for failed replicates
    Eigen::MatrixXi covered;    // B x 4, 1/0, -1 unknown
};

struct SimResult {
    std::array<std::string, 4> estimand_names{{"theta2", "theta3", "P2", "P3"}};
    std::vector<MethodResult> methods;
    std::vector<int> g_histogram;  // counts indexed by G, SFI only
    TrueValues truth;
    double miss_rate_y2 = 0.0;  // realized, averaged over replicates
    double miss_rate_y3 = 0.0;
    std::vector<std::string> warnings;

    const MethodResult& method(const std::string& name) const;
};

SimResult run_study(const StudyConfig& config);

// estimand over the fully observed records with unit weights
PointEstimate complete_case_estimate(const IncompleteDataset& data, const EstimatingFunction& u);

// the four study estimands for one model (columns y1, y2, y3)
std::vector<EstimatingFunction> study_estimands(SimModel model);

void write_table_csv(std::ostream& out, const SimResult& result, const StudyConfig& config);
void write_histogram_csv(std::ostream& out, const SimResult& result, const StudyConfig& config);

}  // namespace figmm::sim
