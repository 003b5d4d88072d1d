#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "figmm/dataset.hpp"
#include "figmm/em.hpp"
#include "figmm/mixture.hpp"
#include "figmm/model_select.hpp"

namespace figmm {

// Mixture whose proportions depend on a fully observed categorical covariate;
// component means and the shared covariance are pooled across levels.
struct ConditionalMixture {
    Eigen::MatrixXd alpha_table;  // L x G, row-stochastic
    Eigen::MatrixXd means;        // G x p
    Eigen::MatrixXd shared_cov;
    std::vector<std::string> level_names;

    int components() const noexcept { return static_cast<int>(alpha_table.cols()); }
    int levels() const noexcept { return static_cast<int>(alpha_table.rows()); }
    int dim() const noexcept { return static_cast<int>(means.cols()); }

    Eigen::VectorXd component_mean(int g) const { return means.row(g).transpose(); }

    // the unconditional-mixture view at one level
    GaussianMixture at_level(int level) const;

    void canonicalize();
    void validate() const;

    int level_index(const std::string& name) const;  // throws UnknownCategoryError
};

MembershipPosterior posterior_membership_conditional(const Eigen::VectorXd& obs_values,
                                                     const ObservedPattern& pattern,
                                                     int level,
                                                     const ConditionalMixture& model,
                                                     int record = -1);

double observed_log_likelihood_conditional(const IncompleteDataset& data,
                                           const ConditionalMixture& model,
                                           const Eigen::VectorXd& base_weights);

struct ConditionalEmResult {
    ConditionalMixture model;
    FractionalImputation imputation;
    std::vector<double> loglik_trace;
    int iterations = 0;
    bool converged = false;
    std::vector<std::string> warnings;
};

// Section-3 EM with level-dependent proportions: the I/W steps use the
// record's alpha row, the M step pools mean and covariance updates across
// levels and renormalizes each alpha row with a small smoothing pseudo-weight.
// Requires data.categorical() to be present.
ConditionalEmResult run_em_conditional(const IncompleteDataset& data, int components,
                                       const EmConfig& config);

// the conditional M-step itself; exposed so the pooled mean/covariance update
// can be property-tested against the unconditional one on matched inputs
ConditionalMixture conditional_m_step(const IncompleteDataset& data,
                                      const FractionalImputation& imputation, int components,
                                      const std::vector<std::string>& level_names);

// L(G-1) + G*p parameters that grow with G
PenaltyFn conditional_penalty(int levels, int dim);

double bic_score_conditional(const IncompleteDataset& data, const ConditionalMixture& model,
                             const PenaltyFn& penalty);

struct ConditionalBicCandidate {
    int components = 0;
    bool success = false;
    std::string error;
    ConditionalEmResult fit;
    double loglik = 0.0;
    double penalty = 0.0;
    double bic = 0.0;
};

struct ConditionalBicReport {
    std::vector<ConditionalBicCandidate> candidates;
    int selected_components = 0;
    std::vector<std::string> warnings;

    const ConditionalBicCandidate& selected() const;
};

ConditionalBicReport select_g_conditional(const IncompleteDataset& data,
                                          const SelectConfig& config);

// Model file with header "G p L", alpha table rows, mean rows, covariance rows.
void write_conditional_model(std::ostream& out, const ConditionalMixture& model);
ConditionalMixture read_conditional_model(std::istream& in);
void write_conditional_model_file(const std::string& path, const ConditionalMixture& model);
ConditionalMixture read_conditional_model_file(const std::string& path);

}  // namespace figmm
