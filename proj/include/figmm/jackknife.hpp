#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "figmm/dataset.hpp"
#include "figmm/em.hpp"
#include "figmm/estimators.hpp"
#include "figmm/imputation.hpp"
#include "figmm/mixture.hpp"

namespace figmm {

// delete-one base weights: w_k = 0, w_i = 1/(n-1) otherwise
Eigen::VectorXd jackknife_base_weights(int n, int k);

// contiguous grouped jackknife: deleting group k zeroes its records and puts
// 1/(n - |group k|) on the rest
std::vector<Eigen::VectorXd> grouped_jackknife_weights(int n, int groups);

struct ReplicateConfig {
    double loglik_rel_tol = 1e-7;
    int max_iterations = 100;
};

struct ReplicateFit {
    GaussianMixture model;
    bool converged = false;
    int iterations = 0;
};

// Precomputed state for refitting replicate parameters on the frozen base
// draws: per-pattern index structure plus the base conditional log-densities
// of every draw (the importance-sampling denominators). fit() and
// fractional_weights() are const and safe to call from parallel replicates.
class ReplicateEngine {
public:
    ReplicateEngine(const IncompleteDataset& data, const FractionalImputation& imputation,
                    const GaussianMixture& base_model);

    // W/M-step iteration on the fixed draws with record weights `base_weights`,
    // warm-started from the base model; no I-step is run. Component order is
    // kept aligned with the base model so importance ratios stay paired.
    ReplicateFit fit(const Eigen::VectorXd& base_weights, const ReplicateConfig& config) const;

    // replicate fractional weights w*^(k) per draw row at the given replicate
    // parameters: renormalized posterior times the importance-normalized
    // within-cell weights; pseudo-draw rows keep weight one
    Eigen::VectorXd fractional_weights(const GaussianMixture& replicate_model,
                                       int replicate = -1) const;

    // n x G posteriors at arbitrary parameters (Eq-weightp style)
    Eigen::MatrixXd posteriors(const GaussianMixture& model) const;

    double observed_loglik(const GaussianMixture& model,
                           const Eigen::VectorXd& base_weights) const;

private:
    Eigen::VectorXd fractional_weights_impl(const GaussianMixture& replicate_model,
                                            const Eigen::MatrixXd& posteriors,
                                            int replicate) const;

    const IncompleteDataset& data_;
    const FractionalImputation& imputation_;
    const GaussianMixture& base_model_;
    Eigen::VectorXd base_cond_logdens_;  // per draw row
    // row-major copy of the draw table for tight M-step loops
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> values_rm_;
};

ReplicateFit replicate_fit(const IncompleteDataset& data, const FractionalImputation& imputation,
                           const GaussianMixture& base_model,
                           const Eigen::VectorXd& base_weights,
                           const ReplicateConfig& config = {});

Eigen::VectorXd replicate_fractional_weights(const IncompleteDataset& data,
                                             const FractionalImputation& imputation,
                                             const GaussianMixture& base_model,
                                             const GaussianMixture& replicate_model,
                                             int replicate = -1);

// (K-1)/K * sum_k (theta_k - theta)(theta_k - theta)'
Eigen::MatrixXd jackknife_variance(const Eigen::VectorXd& theta,
                                   const std::vector<Eigen::VectorXd>& replicate_thetas);

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
    bool contains(double x) const { return lower <= x && x <= upper; }
};

// Wald interval theta +- z * sqrt(variance); variance must be >= 0
Interval confidence_interval(double theta, double variance, double level);

// inverse standard normal CDF (Newton on the erfc form)
double normal_quantile(double prob);

struct JackknifeConfig {
    int groups = 0;  // 0: delete-one (K = n)
    ReplicateConfig replicate;
    int threads = 1;
    bool keep_models = false;
};

struct EstimandVariance {
    std::string name;
    Eigen::VectorXd theta;
    Eigen::MatrixXd covariance;   // of the full theta vector
    double estimate = 0.0;        // report component
    double variance = 0.0;        // report component
    Interval interval;
};

struct JackknifeRun {
    std::vector<EstimandVariance> estimands;
    Eigen::MatrixXd replicate_values;  // K x n_estimands (report components)
    int replicate_failures = 0;
    std::vector<std::string> warnings;
    std::vector<GaussianMixture> replicate_models;  // only when keep_models
};

// Full Remark-1 pipeline: for every replicate, refit parameters on the frozen
// draws, rebuild fractional weights by importance sampling, solve each
// estimating equation, then combine with the jackknife formula. Failed
// replicates are excluded (their estimate imputed as the base estimate) and
// counted.
JackknifeRun jackknife_pipeline(const IncompleteDataset& data, const EmResult& base,
                                const std::vector<EstimatingFunction>& estimands,
                                const JackknifeConfig& config, double level = 0.95);

}  // namespace figmm
