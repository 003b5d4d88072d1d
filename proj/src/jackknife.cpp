#include "figmm/jackknife.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "figmm/errors.hpp"
#include "figmm/parallel.hpp"

namespace figmm {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
constexpr double kSqrtTwoPi = 2.5066282746310005024157652848110;

// forward substitution z = L^{-1} diff; returns |z|^2
double solve_quad(const Eigen::MatrixXd& lower, const double* diff, int dim, double* z) {
    double quad = 0.0;
    for (int a = 0; a < dim; ++a) {
        double s = diff[a];
        for (int b = 0; b < a; ++b) {
            s -= lower(a, b) * z[b];
        }
        z[a] = s / lower(a, a);
        quad += z[a] * z[a];
    }
    return quad;
}
}  // namespace

Eigen::VectorXd jackknife_base_weights(int n, int k) {
    if (k < 0 || k >= n) {
        throw std::invalid_argument("replicate index out of range");
    }
    Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n - 1));
    w(k) = 0.0;
    return w;
}

std::vector<Eigen::VectorXd> grouped_jackknife_weights(int n, int groups) {
    if (groups < 2 || groups > n) {
        throw ConfigError("grouped jackknife needs 2 <= groups <= n");
    }
    std::vector<Eigen::VectorXd> out;
    out.reserve(static_cast<std::size_t>(groups));
    for (int k = 0; k < groups; ++k) {
        const int lo = static_cast<int>(static_cast<long long>(n) * k / groups);
        const int hi = static_cast<int>(static_cast<long long>(n) * (k + 1) / groups);
        Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n - (hi - lo)));
        w.segment(lo, hi - lo).setZero();
        out.push_back(std::move(w));
    }
    return out;
}

ReplicateEngine::ReplicateEngine(const IncompleteDataset& data,
                                 const FractionalImputation& imputation,
                                 const GaussianMixture& base_model)
    : data_(data),
      imputation_(imputation),
      base_model_(base_model),
      base_cond_logdens_(Eigen::VectorXd::Zero(imputation.row_count())),
      values_rm_(imputation.values) {
    if (data_.size() != imputation_.record_count()) {
        throw std::invalid_argument("imputation does not match the dataset");
    }
    // importance-sampling denominators: conditional log-densities of every
    // draw under the base parameters
    const auto& patterns = data_.unique_patterns();
    std::vector<std::optional<ConditionalDecomposition>> decomps(patterns.size());
    for (std::size_t q = 0; q < patterns.size(); ++q) {
        if (!patterns[q].fully_observed()) {
            decomps[q].emplace(patterns[q], base_model_.shared_cov);
        }
    }
    for (int i = 0; i < data_.size(); ++i) {
        const auto& block = imputation_.records[static_cast<std::size_t>(i)];
        if (block.fully_observed) {
            continue;
        }
        const int q = data_.pattern_index(i);
        const ConditionalDecomposition& decomp = *decomps[static_cast<std::size_t>(q)];
        const auto& mis = patterns[static_cast<std::size_t>(q)].missing_indices();
        int r = block.first_row;
        for (int g = 0; g < base_model_.components(); ++g) {
            const int count = block.counts[static_cast<std::size_t>(g)];
            if (count == 0) {
                continue;
            }
            const Eigen::VectorXd cond_mean =
                decomp.conditional_mean(base_model_.component_mean(g), data_.observed_values(i));
            for (int j = 0; j < count; ++j, ++r) {
                const Eigen::VectorXd mis_values =
                    gather(imputation_.values.row(r).transpose(), mis);
                base_cond_logdens_(r) = decomp.conditional_log_density(mis_values, cond_mean);
            }
        }
    }
}

Eigen::MatrixXd ReplicateEngine::posteriors(const GaussianMixture& model) const {
    const int n = data_.size();
    const int g_count = model.components();
    const Eigen::VectorXd log_prior = model.alpha.array().log();
    Eigen::MatrixXd post(n, g_count);
    const auto& patterns = data_.unique_patterns();
    for (std::size_t q = 0; q < patterns.size(); ++q) {
        if (patterns[q].fully_missing()) {
            for (const int i : data_.records_by_pattern()[q]) {
                post.row(i) = normalized_from_log_scores(log_prior, i).transpose();
            }
            continue;
        }
        const PatternScorer scorer(model.means, model.shared_cov, patterns[q]);
        for (const int i : data_.records_by_pattern()[q]) {
            post.row(i) =
                normalized_from_log_scores(scorer.log_scores(data_.observed_values(i), log_prior), i)
                    .transpose();
        }
    }
    return post;
}

double ReplicateEngine::observed_loglik(const GaussianMixture& model,
                                        const Eigen::VectorXd& base_weights) const {
    return observed_log_likelihood(data_, model, base_weights);
}

Eigen::VectorXd ReplicateEngine::fractional_weights(const GaussianMixture& replicate_model,
                                                    int replicate) const {
    return fractional_weights_impl(replicate_model, posteriors(replicate_model), replicate);
}

Eigen::VectorXd ReplicateEngine::fractional_weights_impl(const GaussianMixture& replicate_model,
                                                         const Eigen::MatrixXd& post,
                                                         int replicate) const {
    const int g_count = replicate_model.components();
    Eigen::VectorXd weights = Eigen::VectorXd::Ones(imputation_.row_count());

    const auto& patterns = data_.unique_patterns();
    std::vector<std::optional<ConditionalDecomposition>> decomps(patterns.size());
    for (std::size_t q = 0; q < patterns.size(); ++q) {
        if (!patterns[q].fully_observed()) {
            decomps[q].emplace(patterns[q], replicate_model.shared_cov);
        }
    }

    Eigen::VectorXd cell_log(imputation_.imputations);
    for (int i = 0; i < data_.size(); ++i) {
        const auto& block = imputation_.records[static_cast<std::size_t>(i)];
        if (block.fully_observed) {
            continue;  // single pseudo-draw keeps weight one
        }
        const int q = data_.pattern_index(i);
        const ConditionalDecomposition& decomp = *decomps[static_cast<std::size_t>(q)];
        const auto& mis = patterns[static_cast<std::size_t>(q)].missing_indices();
        const int m_dim = static_cast<int>(mis.size());
        const double logdet = decomp.conditional_factor().log_det();

        // replicate posterior renormalized over the components that actually
        // carry draws for this record
        double retained_mass = 0.0;
        for (int g = 0; g < g_count; ++g) {
            if (block.counts[static_cast<std::size_t>(g)] > 0) {
                retained_mass += post(i, g);
            }
        }

        int r = block.first_row;
        for (int g = 0; g < g_count; ++g) {
            const int count = block.counts[static_cast<std::size_t>(g)];
            if (count == 0) {
                continue;
            }
            const Eigen::VectorXd cond_mean =
                decomp.conditional_mean(replicate_model.component_mean(g),
                                        data_.observed_values(i));
            double top = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < count; ++j) {
                Eigen::VectorXd diff(m_dim);
                for (int c = 0; c < m_dim; ++c) {
                    diff(c) = imputation_.values(r + j, mis[static_cast<std::size_t>(c)]) -
                              cond_mean(c);
                }
                const double logdens =
                    -0.5 * (m_dim * kLogTwoPi + logdet +
                            decomp.conditional_factor().quad_form(diff));
                cell_log(j) = logdens - base_cond_logdens_(r + j);
                top = std::max(top, cell_log(j));
            }
            if (!std::isfinite(top)) {
                throw DegenerateReplicateError(
                    "all importance ratios underflowed for record " + std::to_string(i) +
                        ", component " + std::to_string(g) + ", replicate " +
                        std::to_string(replicate),
                    i, g, replicate);
            }
            double denom = 0.0;
            for (int j = 0; j < count; ++j) {
                cell_log(j) = std::exp(cell_log(j) - top);
                denom += cell_log(j);
            }
            const double mass = retained_mass > 0.0 ? post(i, g) / retained_mass : 0.0;
            for (int j = 0; j < count; ++j, ++r) {
                weights(r) = mass * cell_log(j) / denom;
            }
        }
    }
    return weights;
}

ReplicateFit ReplicateEngine::fit(const Eigen::VectorXd& base_weights,
                                  const ReplicateConfig& config) const {
    if (base_weights.size() != data_.size()) {
        throw std::invalid_argument("base weight length does not match the dataset");
    }
    const int n = data_.size();
    const int p = imputation_.dim;
    const int g_count = base_model_.components();
    const auto& patterns = data_.unique_patterns();
    const double total_base = base_weights.sum();

    ReplicateFit out;
    out.model = base_model_;

    // workspaces reused across iterations
    Eigen::VectorXd row_w = Eigen::VectorXd::Zero(imputation_.row_count());
    Eigen::MatrixXd posts = Eigen::MatrixXd::Zero(n, g_count);
    Eigen::VectorXd scores(g_count);
    Eigen::VectorXd cell_log(std::max(1, imputation_.imputations));
    std::vector<double> zwork(static_cast<std::size_t>(p));
    std::vector<double> diff(static_cast<std::size_t>(p));
    std::vector<double> trace;

    // parameter history for Aitken extrapolation of the EM fixed point
    const int param_dim = g_count + g_count * p + p * p;
    std::vector<Eigen::VectorXd> history;
    int cooldown = 0;
    auto flatten = [&](const GaussianMixture& m) {
        Eigen::VectorXd v(param_dim);
        int k = 0;
        for (int g = 0; g < g_count; ++g) {
            v(k++) = m.alpha(g);
        }
        for (int g = 0; g < g_count; ++g) {
            for (int j = 0; j < p; ++j) {
                v(k++) = m.means(g, j);
            }
        }
        for (int r = 0; r < p; ++r) {
            for (int c = 0; c < p; ++c) {
                v(k++) = m.shared_cov(r, c);
            }
        }
        return v;
    };
    auto try_unflatten = [&](const Eigen::VectorXd& v, GaussianMixture& m) {
        int k = 0;
        Eigen::VectorXd alpha(g_count);
        for (int g = 0; g < g_count; ++g) {
            alpha(g) = v(k++);
        }
        if (!(alpha.array() > 0.0).all()) {
            return false;
        }
        alpha /= alpha.sum();
        Eigen::MatrixXd means(g_count, p);
        for (int g = 0; g < g_count; ++g) {
            for (int j = 0; j < p; ++j) {
                means(g, j) = v(k++);
            }
        }
        Eigen::MatrixXd cov(p, p);
        for (int r = 0; r < p; ++r) {
            for (int c = 0; c < p; ++c) {
                cov(r, c) = v(k++);
            }
        }
        cov = 0.5 * (cov + cov.transpose()).eval();
        if (Eigen::LLT<Eigen::MatrixXd>(cov).info() != Eigen::Success) {
            return false;
        }
        m.alpha = std::move(alpha);
        m.means = std::move(means);
        m.shared_cov = std::move(cov);
        return true;
    };

    int t = 0;
    for (t = 1; t <= config.max_iterations; ++t) {
        // per-pattern machinery at the current parameters
        std::vector<ConditionalDecomposition> decomps;
        std::vector<Eigen::MatrixXd> obs_means(patterns.size());
        std::vector<Eigen::MatrixXd> mis_base(patterns.size());  // G x m: mu_mis - K mu_obs
        std::vector<double> obs_const(patterns.size(), 0.0);
        std::vector<double> cond_const(patterns.size(), 0.0);
        decomps.reserve(patterns.size());
        for (std::size_t q = 0; q < patterns.size(); ++q) {
            decomps.emplace_back(patterns[q], out.model.shared_cov);
            const auto& obs = patterns[q].observed_indices();
            const auto& mis = patterns[q].missing_indices();
            const int o = static_cast<int>(obs.size());
            const int m_dim = static_cast<int>(mis.size());
            obs_means[q].resize(g_count, o);
            mis_base[q].resize(g_count, m_dim);
            for (int g = 0; g < g_count; ++g) {
                for (int c = 0; c < o; ++c) {
                    obs_means[q](g, c) = out.model.means(g, obs[static_cast<std::size_t>(c)]);
                }
            }
            if (o > 0) {
                obs_const[q] = -0.5 * (o * kLogTwoPi + decomps[q].observed_factor().log_det());
            }
            if (m_dim > 0) {
                cond_const[q] = -0.5 * (m_dim * kLogTwoPi + decomps[q].conditional_factor().log_det());
                for (int g = 0; g < g_count; ++g) {
                    Eigen::VectorXd mu_m(m_dim);
                    for (int c = 0; c < m_dim; ++c) {
                        mu_m(c) = out.model.means(g, mis[static_cast<std::size_t>(c)]);
                    }
                    if (o > 0) {
                        Eigen::VectorXd mu_o = obs_means[q].row(g).transpose();
                        mu_m -= decomps[q].gain() * mu_o;
                    }
                    mis_base[q].row(g) = mu_m.transpose();
                }
            }
        }
        const Eigen::VectorXd log_alpha = out.model.alpha.array().log();

        // E pass: posteriors, the observed log-likelihood at the current
        // parameters, replicate fractional weights, and the moment sums
        double loglik = 0.0;
        Eigen::VectorXd mass = Eigen::VectorXd::Zero(g_count);
        Eigen::MatrixXd mean_sum = Eigen::MatrixXd::Zero(g_count, p);
        Eigen::VectorXd alpha_mass = Eigen::VectorXd::Zero(g_count);
        Eigen::MatrixXd second_moment = Eigen::MatrixXd::Zero(p, p);  // lower triangle

        for (std::size_t q = 0; q < patterns.size(); ++q) {
            const auto& pattern = patterns[q];
            const auto& obs = pattern.observed_indices();
            const auto& mis = pattern.missing_indices();
            const int o = static_cast<int>(obs.size());
            const int m_dim = static_cast<int>(mis.size());
            const Eigen::MatrixXd& lo =
                o > 0 ? decomps[q].observed_factor().lower() : decomps[q].conditional_factor().lower();
            const Eigen::MatrixXd& lc = m_dim > 0 ? decomps[q].conditional_factor().lower() : lo;

            for (const int i : data_.records_by_pattern()[q]) {
                const double w = base_weights(i);
                const auto& block = imputation_.records[static_cast<std::size_t>(i)];
                const Eigen::VectorXd& y_obs = data_.observed_values(i);

                // component scores over the observed block
                double top = -std::numeric_limits<double>::infinity();
                for (int g = 0; g < g_count; ++g) {
                    double s = log_alpha(g);
                    if (o > 0) {
                        for (int c = 0; c < o; ++c) {
                            diff[static_cast<std::size_t>(c)] = y_obs(c) - obs_means[q](g, c);
                        }
                        s += obs_const[q] - 0.5 * solve_quad(lo, diff.data(), o, zwork.data());
                    }
                    scores(g) = s;
                    top = std::max(top, s);
                }
                if (!std::isfinite(top)) {
                    throw OutlierRecordError("all component densities underflowed for record " +
                                                 std::to_string(i),
                                             i);
                }
                double norm = 0.0;
                for (int g = 0; g < g_count; ++g) {
                    scores(g) = std::exp(scores(g) - top);
                    norm += scores(g);
                }
                for (int g = 0; g < g_count; ++g) {
                    posts(i, g) = scores(g) / norm;
                }
                if (w != 0.0 && o > 0) {
                    loglik += w * (top + std::log(norm));
                }
                if (w == 0.0) {
                    continue;  // deleted records contribute nothing further
                }

                if (block.fully_observed) {
                    const int r = block.first_row;
                    const double* row = values_rm_.row(r).data();
                    for (int g = 0; g < g_count; ++g) {
                        const double wg = w * posts(i, g);
                        alpha_mass(g) += wg;
                        mass(g) += wg;
                        mean_sum.row(g) += wg * values_rm_.row(r);
                    }
                    for (int a = 0; a < p; ++a) {
                        for (int b = 0; b <= a; ++b) {
                            second_moment(a, b) += w * row[a] * row[b];
                        }
                    }
                    continue;
                }

                // replicate posterior renormalized over components with draws
                double retained = 0.0;
                for (int g = 0; g < g_count; ++g) {
                    if (block.counts[static_cast<std::size_t>(g)] > 0) {
                        retained += posts(i, g);
                    }
                }

                // conditional mean offset shared across components
                Eigen::VectorXd k_yobs = Eigen::VectorXd::Zero(m_dim);
                if (o > 0 && m_dim > 0) {
                    k_yobs = decomps[q].gain() * y_obs;
                }

                int r = block.first_row;
                for (int g = 0; g < g_count; ++g) {
                    const int count = block.counts[static_cast<std::size_t>(g)];
                    if (count == 0) {
                        continue;
                    }
                    double cell_top = -std::numeric_limits<double>::infinity();
                    for (int j = 0; j < count; ++j) {
                        const double* row = values_rm_.row(r + j).data();
                        for (int c = 0; c < m_dim; ++c) {
                            diff[static_cast<std::size_t>(c)] =
                                row[mis[static_cast<std::size_t>(c)]] -
                                (mis_base[q](g, c) + k_yobs(c));
                        }
                        const double logdens =
                            cond_const[q] - 0.5 * solve_quad(lc, diff.data(), m_dim, zwork.data());
                        cell_log(j) = logdens - base_cond_logdens_(r + j);
                        cell_top = std::max(cell_top, cell_log(j));
                    }
                    if (!std::isfinite(cell_top)) {
                        throw DegenerateReplicateError(
                            "all importance ratios underflowed for record " + std::to_string(i) +
                                ", component " + std::to_string(g),
                            i, g, -1);
                    }
                    double denom = 0.0;
                    for (int j = 0; j < count; ++j) {
                        cell_log(j) = std::exp(cell_log(j) - cell_top);
                        denom += cell_log(j);
                    }
                    const double cell_mass = retained > 0.0 ? posts(i, g) / retained : 0.0;
                    alpha_mass(g) += w * cell_mass;
                    for (int j = 0; j < count; ++j) {
                        const double rw = cell_mass * cell_log(j) / denom;
                        row_w(r + j) = rw;
                        const double wr = w * rw;
                        mass(g) += wr;
                        mean_sum.row(g) += wr * values_rm_.row(r + j);
                        const double* row = values_rm_.row(r + j).data();
                        for (int a = 0; a < p; ++a) {
                            for (int b = 0; b <= a; ++b) {
                                second_moment(a, b) += wr * row[a] * row[b];
                            }
                        }
                    }
                    r += count;
                }
            }
        }

        // convergence is judged on the likelihood of the entering parameters;
        // a vanishing consecutive change short-circuits the smoothing window
        trace.push_back(loglik);
        const bool settled =
            trace.size() >= 2 &&
            std::abs(trace[trace.size() - 1] - trace[trace.size() - 2]) <=
                0.1 * config.loglik_rel_tol * std::max(std::abs(loglik), 1e-8);
        if (settled || detail::smoothed_converged(trace, config.loglik_rel_tol)) {
            out.converged = true;
            break;
        }

        // M pass from the accumulated sums
        GaussianMixture next = out.model;
        for (int g = 0; g < g_count; ++g) {
            if (!(mass(g) > 0.0)) {
                throw ComponentCollapseError(
                    "replicate refit collapsed component " + std::to_string(g), g, t);
            }
            next.means.row(g) = mean_sum.row(g) / mass(g);
        }
        next.alpha = alpha_mass / alpha_mass.sum();

        Eigen::MatrixXd cov = second_moment;
        for (int g = 0; g < g_count; ++g) {
            for (int a = 0; a < p; ++a) {
                for (int b = 0; b <= a; ++b) {
                    cov(a, b) -= mass(g) * next.means(g, a) * next.means(g, b);
                }
            }
        }
        for (int a = 0; a < p; ++a) {
            for (int b = a + 1; b < p; ++b) {
                cov(a, b) = cov(b, a);
            }
        }
        next.shared_cov = cov / total_base;
        detail::apply_covariance_floor(next.shared_cov);
        out.model = std::move(next);

        // Aitken extrapolation: the warm-started EM tail is geometric, so a
        // stable contraction estimate lets us jump to the fixed point
        if (cooldown > 0) {
            --cooldown;
        }
        history.push_back(flatten(out.model));
        if (history.size() > 3) {
            history.erase(history.begin());
        }
        if (history.size() == 3 && cooldown == 0) {
            const double d1 = (history[1] - history[0]).norm();
            const double d2 = (history[2] - history[1]).norm();
            if (d1 > 0.0) {
                const double rho = d2 / d1;
                if (rho > 0.2 && rho < 0.995) {
                    const Eigen::VectorXd target =
                        history[2] + (history[2] - history[1]) * (rho / (1.0 - rho));
                    GaussianMixture jumped = out.model;
                    if (try_unflatten(target, jumped)) {
                        out.model = std::move(jumped);
                        history.clear();
                        cooldown = 2;
                    }
                }
            }
        }
    }
    out.iterations = std::min(t, config.max_iterations);
    return out;
}

ReplicateFit replicate_fit(const IncompleteDataset& data, const FractionalImputation& imputation,
                           const GaussianMixture& base_model,
                           const Eigen::VectorXd& base_weights, const ReplicateConfig& config) {
    return ReplicateEngine(data, imputation, base_model).fit(base_weights, config);
}

Eigen::VectorXd replicate_fractional_weights(const IncompleteDataset& data,
                                             const FractionalImputation& imputation,
                                             const GaussianMixture& base_model,
                                             const GaussianMixture& replicate_model,
                                             int replicate) {
    return ReplicateEngine(data, imputation, base_model)
        .fractional_weights(replicate_model, replicate);
}

Eigen::MatrixXd jackknife_variance(const Eigen::VectorXd& theta,
                                   const std::vector<Eigen::VectorXd>& replicate_thetas) {
    const int k_count = static_cast<int>(replicate_thetas.size());
    if (k_count < 2) {
        throw std::invalid_argument("jackknife needs at least two replicates");
    }
    const int d = static_cast<int>(theta.size());
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (const auto& rep : replicate_thetas) {
        const Eigen::VectorXd diff = rep - theta;
        cov.selfadjointView<Eigen::Lower>().rankUpdate(diff, 1.0);
    }
    cov = Eigen::MatrixXd(cov.selfadjointView<Eigen::Lower>());
    cov *= static_cast<double>(k_count - 1) / static_cast<double>(k_count);
    return cov;
}

double normal_quantile(double prob) {
    if (!(prob > 0.0 && prob < 1.0)) {
        throw std::invalid_argument("quantile probability must lie in (0, 1)");
    }
    // Acklam's rational approximation with one Halley refinement
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;
    double x;
    if (prob < p_low) {
        const double q = std::sqrt(-2.0 * std::log(prob));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (prob <= 1.0 - p_low) {
        const double q = prob - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - prob));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - prob;
    const double u = e * kSqrtTwoPi * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

Interval confidence_interval(double theta, double variance, double level) {
    if (variance < 0.0) {
        throw Error("negative variance in confidence interval");
    }
    if (!(level > 0.0 && level < 1.0)) {
        throw ConfigError("confidence level must lie in (0, 1)");
    }
    const double z = normal_quantile(0.5 * (1.0 + level));
    const double half = z * std::sqrt(variance);
    return Interval{theta - half, theta + half};
}

JackknifeRun jackknife_pipeline(const IncompleteDataset& data, const EmResult& base,
                                const std::vector<EstimatingFunction>& estimands,
                                const JackknifeConfig& config, double level) {
    const int n = data.size();
    const int e_count = static_cast<int>(estimands.size());

    std::vector<Eigen::VectorXd> weight_sets;
    if (config.groups == 0) {
        weight_sets.reserve(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) {
            weight_sets.push_back(jackknife_base_weights(n, k));
        }
    } else {
        weight_sets = grouped_jackknife_weights(n, config.groups);
    }
    const int k_count = static_cast<int>(weight_sets.size());

    const ReplicateEngine engine(data, base.imputation, base.model);

    std::vector<Eigen::VectorXd> base_thetas(static_cast<std::size_t>(e_count));
    for (int e = 0; e < e_count; ++e) {
        base_thetas[static_cast<std::size_t>(e)] =
            solve_estimating_equation(base.imputation, estimands[static_cast<std::size_t>(e)])
                .theta;
    }

    std::vector<std::vector<Eigen::VectorXd>> rep_thetas(
        static_cast<std::size_t>(e_count),
        std::vector<Eigen::VectorXd>(static_cast<std::size_t>(k_count)));
    std::vector<char> failed(static_cast<std::size_t>(k_count), 0);
    std::vector<std::string> failure_notes(static_cast<std::size_t>(k_count));
    std::vector<GaussianMixture> models(config.keep_models ? static_cast<std::size_t>(k_count)
                                                           : std::size_t{0});

    parallel_for(k_count, config.threads, [&](int k) {
        try {
            const ReplicateFit rfit = engine.fit(weight_sets[static_cast<std::size_t>(k)],
                                                 config.replicate);
            if (!rfit.converged) {
                throw Error("replicate refit did not converge");
            }
            const Eigen::VectorXd row_weights = engine.fractional_weights(rfit.model, k);
            for (int e = 0; e < e_count; ++e) {
                rep_thetas[static_cast<std::size_t>(e)][static_cast<std::size_t>(k)] =
                    solve_estimating_equation(base.imputation,
                                              estimands[static_cast<std::size_t>(e)], {},
                                              &weight_sets[static_cast<std::size_t>(k)],
                                              &row_weights)
                        .theta;
            }
            if (config.keep_models) {
                models[static_cast<std::size_t>(k)] = rfit.model;
            }
        } catch (const Error& err) {
            failed[static_cast<std::size_t>(k)] = 1;
            failure_notes[static_cast<std::size_t>(k)] = err.what();
        }
    });

    JackknifeRun run;
    run.replicate_values.resize(k_count, e_count);
    for (int k = 0; k < k_count; ++k) {
        if (failed[static_cast<std::size_t>(k)]) {
            run.replicate_failures += 1;
            run.warnings.push_back("replicate " + std::to_string(k) + " excluded: " +
                                   failure_notes[static_cast<std::size_t>(k)]);
            for (int e = 0; e < e_count; ++e) {
                rep_thetas[static_cast<std::size_t>(e)][static_cast<std::size_t>(k)] =
                    base_thetas[static_cast<std::size_t>(e)];
            }
        }
    }

    for (int e = 0; e < e_count; ++e) {
        const auto& u = estimands[static_cast<std::size_t>(e)];
        EstimandVariance ev;
        ev.name = u.name;
        ev.theta = base_thetas[static_cast<std::size_t>(e)];
        ev.covariance = jackknife_variance(ev.theta, rep_thetas[static_cast<std::size_t>(e)]);
        ev.estimate = ev.theta(u.report_component);
        ev.variance = ev.covariance(u.report_component, u.report_component);
        ev.interval = confidence_interval(ev.estimate, ev.variance, level);
        for (int k = 0; k < k_count; ++k) {
            run.replicate_values(k, e) =
                rep_thetas[static_cast<std::size_t>(e)][static_cast<std::size_t>(k)](
                    u.report_component);
        }
        run.estimands.push_back(std::move(ev));
    }
    if (config.keep_models) {
        run.replicate_models = std::move(models);
    }
    return run;
}

}  // namespace figmm
