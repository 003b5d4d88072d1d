#include "figmm/conditional.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "figmm/errors.hpp"
#include "figmm/parallel.hpp"

namespace figmm {

namespace {
constexpr double kAlphaSmoothing = 1e-6;
}

GaussianMixture ConditionalMixture::at_level(int level) const {
    GaussianMixture m;
    m.alpha = alpha_table.row(level).transpose();
    m.means = means;
    m.shared_cov = shared_cov;
    return m;
}

void ConditionalMixture::canonicalize() {
    const int g_count = components();
    std::vector<int> order(static_cast<std::size_t>(g_count));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        for (int j = 0; j < dim(); ++j) {
            if (means(a, j) != means(b, j)) {
                return means(a, j) < means(b, j);
            }
        }
        return a < b;
    });
    Eigen::MatrixXd new_alpha(levels(), g_count);
    Eigen::MatrixXd new_means(g_count, dim());
    for (int g = 0; g < g_count; ++g) {
        new_alpha.col(g) = alpha_table.col(order[static_cast<std::size_t>(g)]);
        new_means.row(g) = means.row(order[static_cast<std::size_t>(g)]);
    }
    alpha_table = std::move(new_alpha);
    means = std::move(new_means);
}

void ConditionalMixture::validate() const {
    if (components() < 1 || levels() < 1) {
        throw ConfigError("conditional mixture needs at least one component and one level");
    }
    for (int l = 0; l < levels(); ++l) {
        if (std::abs(alpha_table.row(l).sum() - 1.0) > 1e-12) {
            throw ConfigError("alpha row " + std::to_string(l) + " does not sum to one");
        }
        for (int g = 0; g < components(); ++g) {
            if (!(alpha_table(l, g) > 0.0) || !(alpha_table(l, g) < 1.0)) {
                throw ConfigError("alpha entry out of (0,1) at level " + std::to_string(l));
            }
        }
    }
    validate_params(GaussianParams{component_mean(0), shared_cov}, 0);
}

int ConditionalMixture::level_index(const std::string& name) const {
    for (int l = 0; l < levels(); ++l) {
        if (level_names[static_cast<std::size_t>(l)] == name) {
            return l;
        }
    }
    throw UnknownCategoryError("unknown category '" + name + "'");
}

MembershipPosterior posterior_membership_conditional(const Eigen::VectorXd& obs_values,
                                                     const ObservedPattern& pattern, int level,
                                                     const ConditionalMixture& model,
                                                     int record) {
    if (level < 0 || level >= model.levels()) {
        throw UnknownCategoryError("category index " + std::to_string(level) +
                                   " was not seen at fit time");
    }
    const Eigen::VectorXd log_prior = model.alpha_table.row(level).array().log();
    if (pattern.fully_missing()) {
        return normalized_from_log_scores(log_prior, record);
    }
    const PatternScorer scorer(model.means, model.shared_cov, pattern);
    return normalized_from_log_scores(scorer.log_scores(obs_values, log_prior), record);
}

namespace {

const CategoricalColumn& require_categorical(const IncompleteDataset& data) {
    if (!data.categorical()) {
        throw ConfigError("dataset has no categorical covariate column");
    }
    return *data.categorical();
}

std::vector<Eigen::VectorXd> log_prior_rows(const ConditionalMixture& model) {
    std::vector<Eigen::VectorXd> rows;
    rows.reserve(static_cast<std::size_t>(model.levels()));
    for (int l = 0; l < model.levels(); ++l) {
        rows.push_back(model.alpha_table.row(l).array().log());
    }
    return rows;
}

}  // namespace

double observed_log_likelihood_conditional(const IncompleteDataset& data,
                                           const ConditionalMixture& model,
                                           const Eigen::VectorXd& base_weights) {
    const CategoricalColumn& cat = require_categorical(data);
    const std::vector<Eigen::VectorXd> priors = log_prior_rows(model);
    return detail::observed_loglik_core(
        data, model.means, model.shared_cov,
        [&](int i) -> const Eigen::VectorXd& {
            return priors[static_cast<std::size_t>(cat.codes[static_cast<std::size_t>(i)])];
        },
        base_weights);
}

// M-step for the conditional model: pooled moments plus per-level proportion
// rows smoothed away from the boundary.
ConditionalMixture conditional_m_step(const IncompleteDataset& data,
                                      const FractionalImputation& imp, int g_count,
                                      const std::vector<std::string>& level_names) {
    const CategoricalColumn& cat = require_categorical(data);
    const int l_count = static_cast<int>(level_names.size());

    // component mass per level; as in the unconditional M-step, records
    // contribute their expected allocation
    Eigen::MatrixXd alpha = Eigen::MatrixXd::Zero(l_count, g_count);
    Eigen::VectorXd level_count = Eigen::VectorXd::Zero(l_count);
    for (int i = 0; i < data.size(); ++i) {
        const int l = cat.codes[static_cast<std::size_t>(i)];
        level_count(l) += 1.0;
        alpha.row(l) += imp.records[static_cast<std::size_t>(i)].posterior.transpose();
    }
    for (int l = 0; l < l_count; ++l) {
        if (level_count(l) == 0.0) {
            throw Error("level '" + level_names[static_cast<std::size_t>(l)] +
                        "' has no records at fit time");
        }
        alpha.row(l).array() += kAlphaSmoothing;
        alpha.row(l) /= alpha.row(l).sum();
    }

    const WeightedMoments moments = weighted_moments(imp, g_count);
    for (int g = 0; g < g_count; ++g) {
        if (!(moments.mass(g) > 0.0)) {
            throw ComponentCollapseError(
                "component " + std::to_string(g) + " received zero total weight", g);
        }
    }

    ConditionalMixture model;
    model.alpha_table = std::move(alpha);
    model.means = moments.means;
    model.shared_cov = moments.cov;
    model.level_names = level_names;
    model.canonicalize();
    return model;
}

ConditionalEmResult run_em_conditional(const IncompleteDataset& data, int g_count,
                                       const EmConfig& config) {
    config.validate();
    const CategoricalColumn& cat = require_categorical(data);
    if (data.size() <= g_count) {
        throw ConfigError("need n > G");
    }
    for (int l = 0; l < cat.levels(); ++l) {
        if (std::count(cat.codes.begin(), cat.codes.end(), l) == 0) {
            throw Error("level '" + cat.level_names[static_cast<std::size_t>(l)] +
                        "' has no records at fit time");
        }
    }

    // seed from the unconditional initializer; proportion rows start uniform
    const GaussianMixture seed = initialize(data, g_count, config);
    ConditionalMixture model;
    model.alpha_table = Eigen::MatrixXd::Constant(cat.levels(), g_count,
                                                  1.0 / static_cast<double>(g_count));
    model.means = seed.means;
    model.shared_cov = seed.shared_cov;
    model.level_names = cat.level_names;

    const RngStream parent = RngStream(config.seed).substream(detail::kTagIStep);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(data.size());

    ConditionalEmResult result;
    auto prior_fn = [&](const std::vector<Eigen::VectorXd>& priors) {
        return [&priors, &cat](int i) -> const Eigen::VectorXd& {
            return priors[static_cast<std::size_t>(cat.codes[static_cast<std::size_t>(i)])];
        };
    };

    int t = 0;
    for (t = 1; t <= config.max_iterations; ++t) {
        const std::vector<Eigen::VectorXd> priors = log_prior_rows(model);
        const FractionalImputation imp =
            detail::i_step_core(data, model.means, model.shared_cov, prior_fn(priors), config,
                                parent, static_cast<std::uint64_t>(t));
        try {
            model = conditional_m_step(data, imp, g_count, cat.level_names);
        } catch (const ComponentCollapseError& e) {
            throw ComponentCollapseError(
                std::string(e.what()) + " at iteration " + std::to_string(t), e.component(), t);
        }
        detail::apply_covariance_floor(model.shared_cov);
        result.loglik_trace.push_back(observed_log_likelihood_conditional(data, model, ones));
        if (detail::smoothed_converged(result.loglik_trace, config.loglik_rel_tol)) {
            result.converged = true;
            break;
        }
    }
    result.iterations = std::min(t, config.max_iterations);
    if (!result.converged) {
        result.warnings.push_back("EM did not converge within " +
                                  std::to_string(config.max_iterations) + " iterations");
    }

    const std::vector<Eigen::VectorXd> priors = log_prior_rows(model);
    result.imputation =
        detail::i_step_core(data, model.means, model.shared_cov, prior_fn(priors), config, parent,
                            static_cast<std::uint64_t>(result.iterations + 1));
    result.model = std::move(model);
    return result;
}

PenaltyFn conditional_penalty(int levels, int dim) {
    return [levels, dim](int g) { return static_cast<double>(levels * (g - 1) + g * dim); };
}

double bic_score_conditional(const IncompleteDataset& data, const ConditionalMixture& model,
                             const PenaltyFn& penalty) {
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(data.size());
    const double loglik = observed_log_likelihood_conditional(data, model, ones);
    return -2.0 * loglik +
           std::log(static_cast<double>(data.size())) * penalty(model.components());
}

const ConditionalBicCandidate& ConditionalBicReport::selected() const {
    for (const auto& c : candidates) {
        if (c.success && c.components == selected_components) {
            return c;
        }
    }
    throw Error("report has no selected candidate");
}

ConditionalBicReport select_g_conditional(const IncompleteDataset& data,
                                          const SelectConfig& config) {
    if (config.g_min < 1 || config.g_max < config.g_min) {
        throw ConfigError("invalid component range");
    }
    const CategoricalColumn& cat = require_categorical(data);
    const PenaltyFn penalty =
        config.penalty ? config.penalty : conditional_penalty(cat.levels(), data.dim());
    const int count = config.g_max - config.g_min + 1;

    ConditionalBicReport report;
    report.candidates.resize(static_cast<std::size_t>(count));
    parallel_for(count, config.threads, [&](int idx) {
        ConditionalBicCandidate& cand = report.candidates[static_cast<std::size_t>(idx)];
        cand.components = config.g_min + idx;
        EmConfig em = config.em;
        em.seed = candidate_seed(config.em.seed, cand.components);
        try {
            cand.fit = run_em_conditional(data, cand.components, em);
            const Eigen::VectorXd ones = Eigen::VectorXd::Ones(data.size());
            cand.loglik = observed_log_likelihood_conditional(data, cand.fit.model, ones);
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
    return report;
}

void write_conditional_model(std::ostream& out, const ConditionalMixture& model) {
    out << model.components() << ' ' << model.dim() << ' ' << model.levels() << '\n';
    for (int l = 0; l < model.levels(); ++l) {
        out << model.level_names[static_cast<std::size_t>(l)];
        for (int g = 0; g < model.components(); ++g) {
            out << ' ' << format_double(model.alpha_table(l, g));
        }
        out << '\n';
    }
    for (int g = 0; g < model.components(); ++g) {
        for (int j = 0; j < model.dim(); ++j) {
            out << (j ? " " : "") << format_double(model.means(g, j));
        }
        out << '\n';
    }
    for (int r = 0; r < model.dim(); ++r) {
        for (int c = 0; c < model.dim(); ++c) {
            out << (c ? " " : "") << format_double(model.shared_cov(r, c));
        }
        out << '\n';
    }
}

ConditionalMixture read_conditional_model(std::istream& in) {
    int g_count = 0;
    int p = 0;
    int l_count = 0;
    if (!(in >> g_count >> p >> l_count) || g_count < 1 || p < 1 || l_count < 1) {
        throw IoError("bad conditional model header");
    }
    ConditionalMixture model;
    model.alpha_table.resize(l_count, g_count);
    model.means.resize(g_count, p);
    model.shared_cov.resize(p, p);
    model.level_names.resize(static_cast<std::size_t>(l_count));
    for (int l = 0; l < l_count; ++l) {
        if (!(in >> model.level_names[static_cast<std::size_t>(l)])) {
            throw IoError("bad conditional model alpha row");
        }
        for (int g = 0; g < g_count; ++g) {
            if (!(in >> model.alpha_table(l, g))) {
                throw IoError("bad conditional model alpha row");
            }
        }
    }
    for (int g = 0; g < g_count; ++g) {
        for (int j = 0; j < p; ++j) {
            if (!(in >> model.means(g, j))) {
                throw IoError("bad conditional model mean row");
            }
        }
    }
    for (int r = 0; r < p; ++r) {
        for (int c = 0; c < p; ++c) {
            if (!(in >> model.shared_cov(r, c))) {
                throw IoError("bad conditional model covariance row");
            }
        }
    }
    return model;
}

void write_conditional_model_file(const std::string& path, const ConditionalMixture& model) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    write_conditional_model(out, model);
}

ConditionalMixture read_conditional_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    return read_conditional_model(in);
}

}  // namespace figmm
