#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "figmm/dataset.hpp"
#include "figmm/imputation.hpp"
#include "figmm/mixture.hpp"
#include "figmm/rng.hpp"

namespace figmm {

enum class AllocationMode { deterministic, stochastic };

struct EmConfig {
    int imputations = 50;  // M draws per incomplete record
    int max_iterations = 500;
    double loglik_rel_tol = 1e-6;
    double min_component_prob = 1e-8;  // components at or below are dropped per record
    std::uint64_t seed = 0;
    AllocationMode allocation = AllocationMode::deterministic;
    int restarts = 5;
    int threads = 1;

    void validate() const;
};

struct EmResult {
    GaussianMixture model;
    FractionalImputation imputation;  // drawn under the final model
    std::vector<double> loglik_trace;  // observed log-likelihood (unit weights) after each M-step
    int iterations = 0;
    bool converged = false;
    std::vector<std::string> warnings;
};

// Splits M draws across components. Components with posterior <= min_component_prob
// are dropped for this record (their mass renormalized into the rest); every
// retained component receives at least one draw. Deterministic mode uses
// largest-remainder rounding; stochastic mode resamples the multinomial until
// all retained counts are positive.
std::vector<int> allocate_imputations(const Eigen::VectorXd& posterior, int total,
                                      AllocationMode mode, double min_component_prob,
                                      RngStream& rng);

FractionalImputation i_step(const IncompleteDataset& data, const GaussianMixture& model,
                            const EmConfig& config, std::uint64_t iteration);

GaussianMixture m_step(const IncompleteDataset& data, const FractionalImputation& imputation);

// k-means++ seeding (with Lloyd refinement) on mean-completed records; shared
// covariance from the completed data plus ridge; uniform proportions. Returns
// the seed whose 3-iteration EM log-likelihood is best across restarts.
GaussianMixture initialize(const IncompleteDataset& data, int components, const EmConfig& config);

EmResult run_em(const IncompleteDataset& data, int components, const EmConfig& config);

// Pooled weighted moments over imputation rows: draw rows contribute through
// their fractional weight, pseudo-draw rows of fully observed records through
// the supplied per-component posteriors. Shared by the M-step, the conditional
// extension and replicate refits.
struct WeightedMoments {
    Eigen::VectorXd mass;   // per-component total weight
    Eigen::MatrixXd means;  // G x p (zero rows where mass is zero)
    Eigen::MatrixXd cov;    // pooled, normalized by the total record mass
};

struct MomentOptions {
    const Eigen::VectorXd* record_base = nullptr;        // per-record multiplier, default 1
    const Eigen::VectorXd* row_weights = nullptr;        // default: imputation weights
    const Eigen::MatrixXd* complete_posteriors = nullptr;  // n x G, default: stored posteriors
};

WeightedMoments weighted_moments(const FractionalImputation& imp, int components,
                                 const MomentOptions& options = {});

namespace detail {

// per-record log prior over components; the conditional extension supplies
// level-dependent rows
using LogPriorFn = std::function<const Eigen::VectorXd&(int record)>;

FractionalImputation i_step_core(const IncompleteDataset& data, const Eigen::MatrixXd& means,
                                 const Eigen::MatrixXd& shared_cov, const LogPriorFn& log_prior,
                                 const EmConfig& config, const RngStream& parent,
                                 std::uint64_t iteration);

double observed_loglik_core(const IncompleteDataset& data, const Eigen::MatrixXd& means,
                            const Eigen::MatrixXd& shared_cov, const LogPriorFn& log_prior,
                            const Eigen::VectorXd& base_weights);

// mass-renormalized posterior after dropping components at or below the
// threshold (the argmax is always retained); exact zeros on dropped entries
Eigen::VectorXd renormalized_retained(const Eigen::VectorXd& posterior, double min_component_prob);

// clamps eigenvalues from below at 1e-10 * trace/p
void apply_covariance_floor(Eigen::MatrixXd& cov);

// relative change of the 3-iteration moving average of the trace
bool smoothed_converged(const std::vector<double>& trace, double rel_tol);

// stream tags for substream derivation
inline constexpr std::uint64_t kTagIStep = 0x49535445ULL;      // main EM I-steps
inline constexpr std::uint64_t kTagInitSeed = 0x494E4954ULL;   // k-means seeding
inline constexpr std::uint64_t kTagInitEm = 0x494E454DULL;     // restart scoring iterations
inline constexpr std::uint64_t kTagAlloc = 0x414C4CULL;        // per-record allocation
inline constexpr std::uint64_t kTagDraw = 0x445257ULL;         // per-record draws

}  // namespace detail

}  // namespace figmm
