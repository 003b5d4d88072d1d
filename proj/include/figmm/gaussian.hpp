#pragma once

#include <Eigen/Dense>

#include "figmm/pattern.hpp"
#include "figmm/rng.hpp"

namespace figmm {

struct GaussianParams {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;

    int dim() const noexcept { return static_cast<int>(mean.size()); }
};

// Checks symmetry (1e-12 relative) and positive definiteness (Cholesky with
// the bounded ridge policy). Throws DegenerateCovarianceError on failure.
void validate_params(const GaussianParams& params, int component = -1);

// Lower-triangular Cholesky factor of a covariance matrix. If the plain
// factorization fails, one retry is made with ridge 1e-8 * trace/p added to
// the diagonal; a second failure raises DegenerateCovarianceError carrying
// `component`.
class CholeskyFactor {
public:
    static CholeskyFactor compute(const Eigen::MatrixXd& cov, int component = -1);

    int dim() const noexcept { return static_cast<int>(lower_.rows()); }
    const Eigen::MatrixXd& lower() const noexcept { return lower_; }
    double log_det() const noexcept { return log_det_; }
    double ridge() const noexcept { return ridge_; }

    // x' Sigma^{-1} x via one forward solve.
    double quad_form(const Eigen::VectorXd& x) const;

    // Sigma^{-1} b.
    Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
    Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;

private:
    Eigen::MatrixXd lower_;
    double log_det_ = 0.0;
    double ridge_ = 0.0;
};

// log N(x; mean, Sigma) given a precomputed factor of Sigma.
double gaussian_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                            const CholeskyFactor& factor);

// log-density of the observed sub-vector under N(mean, cov). `values` holds
// the observed coordinates in pattern order. Requires observed_count >= 1.
double marginal_log_density(const Eigen::VectorXd& values, const ObservedPattern& pattern,
                            const GaussianParams& params);

// Distribution of the missing block given the observed one. Requires
// 1 <= observed_count <= p-1. The returned covariance is symmetrized after
// the Schur complement.
GaussianParams conditional_params(const Eigen::VectorXd& obs_values,
                                  const ObservedPattern& pattern, const GaussianParams& params);

// `count` i.i.d. draws from N(cond.mean, cond.cov); one draw per row.
Eigen::MatrixXd sample_conditional(const GaussianParams& cond, int count, RngStream& rng);

// Everything about one missingness pattern under a shared covariance that is
// independent of the component mean: the marginal factor of Sigma_oo, the
// regression gain Sigma_mo Sigma_oo^{-1}, and the conditional covariance with
// its factor. Mixture code builds one of these per pattern and reuses it for
// every component and record.
class ConditionalDecomposition {
public:
    ConditionalDecomposition(const ObservedPattern& pattern, const Eigen::MatrixXd& cov,
                             int component = -1);

    const ObservedPattern& pattern() const noexcept { return pattern_; }
    const CholeskyFactor& observed_factor() const noexcept { return obs_factor_; }
    const CholeskyFactor& conditional_factor() const noexcept { return cond_factor_; }
    const Eigen::MatrixXd& conditional_cov() const noexcept { return cond_cov_; }
    const Eigen::MatrixXd& gain() const noexcept { return gain_; }

    // mean of the missing block given obs_values, for a component with the
    // given full-dimension mean
    Eigen::VectorXd conditional_mean(const Eigen::VectorXd& full_mean,
                                     const Eigen::VectorXd& obs_values) const;

    // log N(obs_values; full_mean[obs], Sigma_oo); 0 when nothing is observed
    double marginal_log_density(const Eigen::VectorXd& obs_values,
                                const Eigen::VectorXd& full_mean) const;

    // log N(mis_values; cond_mean, Sigma_c)
    double conditional_log_density(const Eigen::VectorXd& mis_values,
                                   const Eigen::VectorXd& cond_mean) const;

private:
    ObservedPattern pattern_;
    CholeskyFactor obs_factor_;   // empty when fully missing
    CholeskyFactor cond_factor_;  // empty when fully observed
    Eigen::MatrixXd cond_cov_;
    Eigen::MatrixXd gain_;
};

// Gathers the subvector/submatrix selected by indices.
Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& idx);
Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<int>& rows,
                       const std::vector<int>& cols);

}  // namespace figmm
