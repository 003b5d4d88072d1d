#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

#include "figmm/dataset.hpp"
#include "figmm/gaussian.hpp"
#include "figmm/pattern.hpp"

namespace figmm {

// Gaussian mixture with a covariance shared across components. Components are
// kept in canonical order (means sorted lexicographically) so that fits
// differing only by relabeling serialize identically.
struct GaussianMixture {
    Eigen::VectorXd alpha;   // G mixing proportions
    Eigen::MatrixXd means;   // G x p, one component per row
    Eigen::MatrixXd shared_cov;

    int components() const noexcept { return static_cast<int>(alpha.size()); }
    int dim() const noexcept { return static_cast<int>(means.cols()); }

    Eigen::VectorXd component_mean(int g) const { return means.row(g).transpose(); }
    GaussianParams component_params(int g) const {
        return GaussianParams{component_mean(g), shared_cov};
    }

    void canonicalize();
    void validate() const;
};

using MembershipPosterior = Eigen::VectorXd;

// softmax with max-subtraction; throws OutlierRecordError when no score is finite
Eigen::VectorXd normalized_from_log_scores(const Eigen::VectorXd& scores, int record = -1);

// Per-(covariance, pattern) marginal machinery: the factor of Sigma_oo plus
// per-component observed means. Built once per pattern and reused across
// records; the log prior is supplied per call so the conditional extension
// can swap in level-dependent proportions.
class PatternScorer {
public:
    PatternScorer(const Eigen::MatrixXd& means, const Eigen::MatrixXd& shared_cov,
                  const ObservedPattern& pattern);

    // log_prior[g] + log N(y_obs; mu_g[obs], Sigma_oo)
    Eigen::VectorXd log_scores(const Eigen::VectorXd& obs_values,
                               const Eigen::VectorXd& log_prior) const;
    // log sum_g exp(scores)
    double log_observed_density(const Eigen::VectorXd& obs_values,
                                const Eigen::VectorXd& log_prior) const;

    bool fully_missing() const noexcept { return obs_means_.cols() == 0; }

private:
    Eigen::MatrixXd obs_means_;  // G x obs_count
    CholeskyFactor factor_;
    int components_;
};

MembershipPosterior posterior_membership(const Eigen::VectorXd& obs_values,
                                         const ObservedPattern& pattern,
                                         const GaussianMixture& model, int record = -1);

// sum_i w_i log f_obs(y_i,obs); fully missing records contribute zero
double observed_log_likelihood(const IncompleteDataset& data, const GaussianMixture& model,
                               const Eigen::VectorXd& base_weights);

// Flat text serialization: header "G p", alpha line, G mean lines, p covariance
// lines, 17 significant digits (round-trip exact).
void write_model(std::ostream& out, const GaussianMixture& model);
GaussianMixture read_model(std::istream& in);
void write_model_file(const std::string& path, const GaussianMixture& model);
GaussianMixture read_model_file(const std::string& path);

// value formatted with 17 significant digits
std::string format_double(double v);

}  // namespace figmm
