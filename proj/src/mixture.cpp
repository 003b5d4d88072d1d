#include "figmm/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "figmm/errors.hpp"

namespace figmm {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void GaussianMixture::canonicalize() {
    const int g_count = components();
    std::vector<int> order(static_cast<std::size_t>(g_count));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        for (int j = 0; j < dim(); ++j) {
            if (means(a, j) != means(b, j)) {
                return means(a, j) < means(b, j);
            }
        }
        return alpha(a) < alpha(b);
    });
    Eigen::VectorXd new_alpha(g_count);
    Eigen::MatrixXd new_means(g_count, dim());
    for (int g = 0; g < g_count; ++g) {
        new_alpha(g) = alpha(order[static_cast<std::size_t>(g)]);
        new_means.row(g) = means.row(order[static_cast<std::size_t>(g)]);
    }
    alpha = std::move(new_alpha);
    means = std::move(new_means);
}

void GaussianMixture::validate() const {
    const int g_count = components();
    if (g_count < 1) {
        throw ConfigError("mixture must have at least one component");
    }
    if (means.rows() != g_count) {
        throw ConfigError("mixture means do not match alpha length");
    }
    for (int g = 0; g < g_count; ++g) {
        if (!(alpha(g) > 0.0) || !(alpha(g) < 1.0 + 1e-12)) {
            throw ConfigError("mixing proportion out of (0,1) for component " + std::to_string(g));
        }
    }
    if (std::abs(alpha.sum() - 1.0) > 1e-12) {
        throw ConfigError("mixing proportions do not sum to one");
    }
    for (int a = 0; a < g_count; ++a) {
        for (int b = a + 1; b < g_count; ++b) {
            if ((means.row(a) - means.row(b)).norm() == 0.0) {
                throw ConfigError("component means must be pairwise distinct (components " +
                                  std::to_string(a) + " and " + std::to_string(b) + ")");
            }
        }
    }
    validate_params(GaussianParams{component_mean(0), shared_cov}, 0);
}

Eigen::VectorXd normalized_from_log_scores(const Eigen::VectorXd& scores, int record) {
    const double top = scores.maxCoeff();
    if (!std::isfinite(top)) {
        throw OutlierRecordError(
            "all component densities underflowed for record " + std::to_string(record), record);
    }
    // scalar std::exp: Eigen's vectorized exp clamps -inf to a denormal
    Eigen::VectorXd probs(scores.size());
    double total = 0.0;
    for (Eigen::Index g = 0; g < scores.size(); ++g) {
        probs(g) = std::exp(scores(g) - top);
        total += probs(g);
    }
    probs /= total;
    return probs;
}

PatternScorer::PatternScorer(const Eigen::MatrixXd& means, const Eigen::MatrixXd& shared_cov,
                             const ObservedPattern& pattern)
    : components_(static_cast<int>(means.rows())) {
    const auto& obs = pattern.observed_indices();
    obs_means_.resize(components_, static_cast<Eigen::Index>(obs.size()));
    for (int g = 0; g < components_; ++g) {
        for (std::size_t c = 0; c < obs.size(); ++c) {
            obs_means_(g, static_cast<Eigen::Index>(c)) = means(g, obs[c]);
        }
    }
    if (!obs.empty()) {
        factor_ = CholeskyFactor::compute(gather(shared_cov, obs, obs));
    }
}

Eigen::VectorXd PatternScorer::log_scores(const Eigen::VectorXd& obs_values,
                                          const Eigen::VectorXd& log_prior) const {
    if (fully_missing()) {
        return log_prior;
    }
    constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
    const double base =
        -0.5 * (static_cast<double>(obs_values.size()) * kLogTwoPi + factor_.log_det());
    Eigen::VectorXd scores(components_);
    for (int g = 0; g < components_; ++g) {
        const Eigen::VectorXd diff = obs_values - obs_means_.row(g).transpose();
        scores(g) = log_prior(g) + base - 0.5 * factor_.quad_form(diff);
    }
    return scores;
}

double PatternScorer::log_observed_density(const Eigen::VectorXd& obs_values,
                                           const Eigen::VectorXd& log_prior) const {
    const Eigen::VectorXd scores = log_scores(obs_values, log_prior);
    const double top = scores.maxCoeff();
    if (!std::isfinite(top)) {
        return -std::numeric_limits<double>::infinity();
    }
    return top + std::log((scores.array() - top).exp().sum());
}

MembershipPosterior posterior_membership(const Eigen::VectorXd& obs_values,
                                         const ObservedPattern& pattern,
                                         const GaussianMixture& model, int record) {
    if (pattern.fully_missing()) {
        return model.alpha;  // posterior equals the prior
    }
    const PatternScorer scorer(model.means, model.shared_cov, pattern);
    const Eigen::VectorXd log_prior = model.alpha.array().log();
    return normalized_from_log_scores(scorer.log_scores(obs_values, log_prior), record);
}

double observed_log_likelihood(const IncompleteDataset& data, const GaussianMixture& model,
                               const Eigen::VectorXd& base_weights) {
    if (base_weights.size() != data.size()) {
        throw std::invalid_argument("base weight length does not match the dataset");
    }
    if (!(base_weights.sum() > 0.0)) {
        throw std::invalid_argument("base weights must have positive sum");
    }
    const Eigen::VectorXd log_prior = model.alpha.array().log();
    double total = 0.0;
    const auto& patterns = data.unique_patterns();
    for (std::size_t q = 0; q < patterns.size(); ++q) {
        if (patterns[q].fully_missing()) {
            continue;  // log 1 = 0
        }
        const PatternScorer scorer(model.means, model.shared_cov, patterns[q]);
        for (const int i : data.records_by_pattern()[q]) {
            const double w = base_weights(i);
            if (w == 0.0) {
                continue;
            }
            total += w * scorer.log_observed_density(data.observed_values(i), log_prior);
        }
    }
    return total;
}

void write_model(std::ostream& out, const GaussianMixture& model) {
    const int g_count = model.components();
    const int p = model.dim();
    out << g_count << ' ' << p << '\n';
    for (int g = 0; g < g_count; ++g) {
        out << (g ? " " : "") << format_double(model.alpha(g));
    }
    out << '\n';
    for (int g = 0; g < g_count; ++g) {
        for (int j = 0; j < p; ++j) {
            out << (j ? " " : "") << format_double(model.means(g, j));
        }
        out << '\n';
    }
    for (int r = 0; r < p; ++r) {
        for (int c = 0; c < p; ++c) {
            out << (c ? " " : "") << format_double(model.shared_cov(r, c));
        }
        out << '\n';
    }
}

GaussianMixture read_model(std::istream& in) {
    int g_count = 0;
    int p = 0;
    if (!(in >> g_count >> p) || g_count < 1 || p < 1) {
        throw IoError("bad model header");
    }
    GaussianMixture model;
    model.alpha.resize(g_count);
    model.means.resize(g_count, p);
    model.shared_cov.resize(p, p);
    for (int g = 0; g < g_count; ++g) {
        if (!(in >> model.alpha(g))) {
            throw IoError("bad model alpha line");
        }
    }
    for (int g = 0; g < g_count; ++g) {
        for (int j = 0; j < p; ++j) {
            if (!(in >> model.means(g, j))) {
                throw IoError("bad model mean line");
            }
        }
    }
    for (int r = 0; r < p; ++r) {
        for (int c = 0; c < p; ++c) {
            if (!(in >> model.shared_cov(r, c))) {
                throw IoError("bad model covariance line");
            }
        }
    }
    return model;
}

void write_model_file(const std::string& path, const GaussianMixture& model) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    write_model(out, model);
}

GaussianMixture read_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    return read_model(in);
}

}  // namespace figmm
