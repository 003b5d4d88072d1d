#pragma once

#include <functional>
#include <string>
#include <vector>

#include "figmm/dataset.hpp"
#include "figmm/em.hpp"

namespace figmm {

using PenaltyFn = std::function<double(int components)>;

// G + G*p, the parameter count with constant-in-G terms dropped
PenaltyFn default_penalty(int dim);

// -2 * observed log-likelihood (unit weights) + log(n) * penalty(G)
double bic_score(const IncompleteDataset& data, const GaussianMixture& model,
                 const PenaltyFn& penalty);

struct BicCandidate {
    int components = 0;
    bool success = false;
    std::string error;
    EmResult fit;
    double loglik = 0.0;
    double penalty = 0.0;
    double bic = 0.0;
};

struct BicReport {
    std::vector<BicCandidate> candidates;
    int selected_components = 0;
    std::vector<std::string> warnings;

    const BicCandidate& selected() const;
};

struct SelectConfig {
    int g_min = 1;
    int g_max = 8;
    EmConfig em;          // candidate fits derive their seeds from em.seed
    PenaltyFn penalty;    // defaults to G + G*p
    int threads = 1;
};

// Fits every candidate independently, scores by BIC, selects the argmin with
// ties broken toward the smaller G. Per-candidate failures are recorded and
// skipped; all candidates failing is an error.
BicReport select_g(const IncompleteDataset& data, const SelectConfig& config);

// the independent per-candidate stream used by select_g; exposed so a fit can
// be reproduced outside the selection loop
std::uint64_t candidate_seed(std::uint64_t seed, int components);

}  // namespace figmm
