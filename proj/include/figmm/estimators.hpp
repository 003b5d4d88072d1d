#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

#include "figmm/imputation.hpp"

namespace figmm {

// Flat weighted view: one completed vector per row with its effective weight
// (fractional weight times any per-record base weight).
struct WeightedSampleView {
    const Eigen::MatrixXd& values;
    const Eigen::VectorXd& weights;
};

using RowRef = Eigen::Ref<const Eigen::VectorXd, 0, Eigen::InnerStride<>>;

// U(theta; Y) with theta_dim components. `closed_form`, when present, solves
// the weighted estimating equation directly; discontinuous estimating
// functions (indicators) must provide it, since the iterative path
// finite-differences U.
struct EstimatingFunction {
    std::string name;
    int theta_dim = 1;
    int report_component = 0;  // which theta coordinate is the estimand of interest
    std::function<void(const Eigen::VectorXd& theta, RowRef y, Eigen::Ref<Eigen::VectorXd> out)>
        evaluate;
    std::function<Eigen::VectorXd(const WeightedSampleView&)> closed_form;
};

struct SolverConfig {
    double tolerance = 1e-8;          // iterative path
    double closed_form_tolerance = 1e-10;
    int max_iterations = 100;
};

struct PointEstimate {
    Eigen::VectorXd theta;
    int iterations = 0;
    double residual_norm = 0.0;
    bool used_closed_form = false;

    double value(const EstimatingFunction& u) const { return theta(u.report_component); }
};

// Solves sum_rows w_row U(theta; y_row) = 0 over an explicit weighted sample.
PointEstimate solve_weighted(const WeightedSampleView& sample, const EstimatingFunction& u,
                             const SolverConfig& config = {});

// Solves the fractionally imputed estimating equation. `record_base_weights`
// (default 1/n each) scale whole records — the jackknife passes replicate
// weights here; `row_weight_override` replaces the stored fractional weights —
// the jackknife passes replicate fractional weights here.
PointEstimate solve_estimating_equation(const FractionalImputation& imputation,
                                        const EstimatingFunction& u,
                                        const SolverConfig& config = {},
                                        const Eigen::VectorXd* record_base_weights = nullptr,
                                        const Eigen::VectorXd* row_weight_override = nullptr);

EstimatingFunction builtin_mean(int coord);
EstimatingFunction builtin_proportion(int coord, double threshold);
EstimatingFunction builtin_correlation(int coord_a, int coord_b);

// "mean:k", "prop:k:c", "corr:k:l" where k/l are 1-based column indices or
// column names resolved against `columns`.
EstimatingFunction parse_estimand(const std::string& spec,
                                  const std::vector<std::string>& columns);

}  // namespace figmm
