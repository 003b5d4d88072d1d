#include "figmm/model_select.hpp"

#include <algorithm>
#include <cmath>

#include "figmm/errors.hpp"
#include "figmm/parallel.hpp"

namespace figmm {

std::uint64_t candidate_seed(std::uint64_t seed, int components) {
    return mix64(mix64(seed ^ 0x534C4354ULL) ^ static_cast<std::uint64_t>(components));
}

PenaltyFn default_penalty(int dim) {
    return [dim](int g) { return static_cast<double>(g + g * dim); };
}

double bic_score(const IncompleteDataset& data, const GaussianMixture& model,
                 const PenaltyFn& penalty) {
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(data.size());
    const double loglik = observed_log_likelihood(data, model, ones);
    return -2.0 * loglik +
           std::log(static_cast<double>(data.size())) * penalty(model.components());
}

const BicCandidate& BicReport::selected() const {
    for (const auto& c : candidates) {
        if (c.success && c.components == selected_components) {
            return c;
        }
    }
    throw Error("report has no selected candidate");
}

namespace {

// Monte Carlo jitter of the converged log-likelihood, estimated from the tail
// of the trace. Used only to flag suspicious non-monotonicity across G.
double trace_mc_se(const std::vector<double>& trace) {
    const int tail = std::min<int>(10, static_cast<int>(trace.size()));
    if (tail < 3) {
        return 0.0;
    }
    double mean = 0.0;
    for (int k = 0; k < tail; ++k) {
        mean += trace[trace.size() - 1 - static_cast<std::size_t>(k)];
    }
    mean /= tail;
    double var = 0.0;
    for (int k = 0; k < tail; ++k) {
        const double d = trace[trace.size() - 1 - static_cast<std::size_t>(k)] - mean;
        var += d * d;
    }
    return std::sqrt(var / (tail - 1));
}

}  // namespace

BicReport select_g(const IncompleteDataset& data, const SelectConfig& config) {
    if (config.g_min < 1 || config.g_max < config.g_min) {
        throw ConfigError("invalid component range [" + std::to_string(config.g_min) + ", " +
                          std::to_string(config.g_max) + "]");
    }
    const PenaltyFn penalty = config.penalty ? config.penalty : default_penalty(data.dim());
    const int count = config.g_max - config.g_min + 1;

    BicReport report;
    report.candidates.resize(static_cast<std::size_t>(count));
    parallel_for(count, config.threads, [&](int idx) {
        BicCandidate& cand = report.candidates[static_cast<std::size_t>(idx)];
        cand.components = config.g_min + idx;
        EmConfig em = config.em;
        // candidates are fitted independently, each on its own stream
        em.seed = candidate_seed(config.em.seed, cand.components);
        try {
            cand.fit = run_em(data, cand.components, em);
            const Eigen::VectorXd ones = Eigen::VectorXd::Ones(data.size());
            cand.loglik = observed_log_likelihood(data, cand.fit.model, ones);
            cand.penalty = penalty(cand.components);
            cand.bic = -2.0 * cand.loglik +
                       std::log(static_cast<double>(data.size())) * cand.penalty;
            cand.success = true;
        } catch (const Error& e) {
            cand.error = e.what();
        }
    });

    int best = -1;
    for (int idx = 0; idx < count; ++idx) {
        const auto& cand = report.candidates[static_cast<std::size_t>(idx)];
        if (!cand.success) {
            report.warnings.push_back("G = " + std::to_string(cand.components) +
                                      " failed: " + cand.error);
            continue;
        }
        if (best < 0 ||
            cand.bic < report.candidates[static_cast<std::size_t>(best)].bic - 1e-9) {
            best = idx;
        }
    }
    if (best < 0) {
        throw Error("every candidate fit failed");
    }
    report.selected_components = report.candidates[static_cast<std::size_t>(best)].components;

    // nested fits should not lose likelihood beyond Monte Carlo noise
    for (int idx = 0; idx + 1 < count; ++idx) {
        const auto& lo = report.candidates[static_cast<std::size_t>(idx)];
        const auto& hi = report.candidates[static_cast<std::size_t>(idx + 1)];
        if (!lo.success || !hi.success) {
            continue;
        }
        const double allowance =
            3.0 * std::max(trace_mc_se(lo.fit.loglik_trace), trace_mc_se(hi.fit.loglik_trace));
        if (hi.loglik < lo.loglik - allowance) {
            report.warnings.push_back(
                "optimization failure: log-likelihood at G = " + std::to_string(hi.components) +
                " fell below G = " + std::to_string(lo.components) + " by more than " +
                std::to_string(allowance));
        }
    }
    return report;
}

}  // namespace figmm
