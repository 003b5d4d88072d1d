#include "figmm/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "figmm/errors.hpp"
#include "figmm/parallel.hpp"

namespace figmm {

void EmConfig::validate() const {
    if (imputations < 1) {
        throw ConfigError("imputations (M) must be >= 1");
    }
    if (max_iterations < 1) {
        throw ConfigError("max_iterations must be >= 1");
    }
    if (loglik_rel_tol < 0.0) {
        throw ConfigError("loglik_rel_tol must be >= 0");
    }
    if (min_component_prob < 0.0 || min_component_prob > 0.01) {
        throw ConfigError("min_component_prob must lie in [0, 0.01]");
    }
    if (restarts < 1) {
        throw ConfigError("restarts must be >= 1");
    }
    if (threads < 1) {
        throw ConfigError("threads must be >= 1");
    }
}

namespace detail {

Eigen::VectorXd renormalized_retained(const Eigen::VectorXd& posterior,
                                      double min_component_prob) {
    const int g_count = static_cast<int>(posterior.size());
    int argmax = 0;
    posterior.maxCoeff(&argmax);
    Eigen::VectorXd q = Eigen::VectorXd::Zero(g_count);
    double total = 0.0;
    for (int g = 0; g < g_count; ++g) {
        if (posterior(g) > min_component_prob || g == argmax) {
            q(g) = posterior(g);
            total += posterior(g);
        }
    }
    q /= total;
    return q;
}

void apply_covariance_floor(Eigen::MatrixXd& cov) {
    const int p = static_cast<int>(cov.rows());
    const double floor = 1e-10 * cov.trace() / static_cast<double>(p);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) {
        return;
    }
    if (eig.eigenvalues().minCoeff() >= floor) {
        return;
    }
    Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(floor);
    cov = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
}

bool smoothed_converged(const std::vector<double>& trace, double rel_tol) {
    const int t = static_cast<int>(trace.size());
    if (t < 2) {
        return false;
    }
    auto moving_average = [&](int end) {
        const int start = std::max(0, end - 3);
        double s = 0.0;
        for (int k = start; k < end; ++k) {
            s += trace[static_cast<std::size_t>(k)];
        }
        return s / static_cast<double>(end - start);
    };
    const double cur = moving_average(t);
    const double prev = moving_average(t - 1);
    return std::abs(cur - prev) <= rel_tol * std::max(std::abs(cur), 1e-8);
}

double observed_loglik_core(const IncompleteDataset& data, const Eigen::MatrixXd& means,
                            const Eigen::MatrixXd& shared_cov, const LogPriorFn& log_prior,
                            const Eigen::VectorXd& base_weights) {
    double total = 0.0;
    const auto& patterns = data.unique_patterns();
    for (std::size_t q = 0; q < patterns.size(); ++q) {
        if (patterns[q].fully_missing()) {
            continue;
        }
        const PatternScorer scorer(means, shared_cov, patterns[q]);
        for (const int i : data.records_by_pattern()[q]) {
            const double w = base_weights(i);
            if (w == 0.0) {
                continue;
            }
            total += w * scorer.log_observed_density(data.observed_values(i), log_prior(i));
        }
    }
    return total;
}

FractionalImputation i_step_core(const IncompleteDataset& data, const Eigen::MatrixXd& means,
                                 const Eigen::MatrixXd& shared_cov, const LogPriorFn& log_prior,
                                 const EmConfig& config, const RngStream& parent,
                                 std::uint64_t iteration) {
    const int n = data.size();
    const int p = data.dim();
    const int g_count = static_cast<int>(means.rows());
    const int m_total = config.imputations;

    const auto& patterns = data.unique_patterns();
    std::vector<std::optional<PatternScorer>> scorers(patterns.size());
    std::vector<std::optional<ConditionalDecomposition>> decomps(patterns.size());
    for (std::size_t q = 0; q < patterns.size(); ++q) {
        if (!patterns[q].fully_missing()) {
            scorers[q].emplace(means, shared_cov, patterns[q]);
        }
        if (!patterns[q].fully_observed()) {
            decomps[q].emplace(patterns[q], shared_cov);
        }
    }

    FractionalImputation imp;
    imp.dim = p;
    imp.imputations = m_total;
    imp.records.resize(static_cast<std::size_t>(n));

    // pass 1: posteriors and allocations
    parallel_for(n, config.threads, [&](int i) {
        auto& block = imp.records[static_cast<std::size_t>(i)];
        const int q = data.pattern_index(i);
        const ObservedPattern& pattern = patterns[static_cast<std::size_t>(q)];
        Eigen::VectorXd posterior;
        if (pattern.fully_missing()) {
            posterior = normalized_from_log_scores(log_prior(i), i);
        } else {
            posterior = normalized_from_log_scores(
                scorers[static_cast<std::size_t>(q)]->log_scores(data.observed_values(i),
                                                                 log_prior(i)),
                i);
        }
        if (pattern.fully_observed()) {
            block.fully_observed = true;
            block.posterior = std::move(posterior);
            block.rows = 1;
        } else {
            RngStream alloc_rng = parent.substream(kTagAlloc, iteration, static_cast<std::uint64_t>(i));
            block.counts = allocate_imputations(posterior, m_total, config.allocation,
                                                config.min_component_prob, alloc_rng);
            block.posterior = renormalized_retained(posterior, config.min_component_prob);
            block.rows = m_total;
        }
    });

    int total_rows = 0;
    for (auto& block : imp.records) {
        block.first_row = total_rows;
        total_rows += block.rows;
    }
    imp.values.resize(total_rows, p);
    imp.weights.resize(total_rows);
    imp.row_record.resize(static_cast<std::size_t>(total_rows));
    imp.row_component.resize(static_cast<std::size_t>(total_rows));
    imp.row_draw.resize(static_cast<std::size_t>(total_rows));

    // pass 2: completions
    parallel_for(n, config.threads, [&](int i) {
        const auto& block = imp.records[static_cast<std::size_t>(i)];
        const int q = data.pattern_index(i);
        const ObservedPattern& pattern = patterns[static_cast<std::size_t>(q)];
        if (block.fully_observed) {
            const int r = block.first_row;
            imp.values.row(r) = data.matrix().row(i);
            imp.weights(r) = 1.0;
            imp.row_record[static_cast<std::size_t>(r)] = i;
            imp.row_component[static_cast<std::size_t>(r)] = -1;
            imp.row_draw[static_cast<std::size_t>(r)] = 0;
            return;
        }
        const ConditionalDecomposition& decomp = *decomps[static_cast<std::size_t>(q)];
        const auto& mis = pattern.missing_indices();
        const auto& obs = pattern.observed_indices();
        const int m_dim = static_cast<int>(mis.size());
        const Eigen::VectorXd& obs_values = data.observed_values(i);
        RngStream draw_rng = parent.substream(kTagDraw, iteration, static_cast<std::uint64_t>(i));

        int r = block.first_row;
        for (int g = 0; g < g_count; ++g) {
            const int count = block.counts[static_cast<std::size_t>(g)];
            if (count == 0) {
                continue;
            }
            const Eigen::VectorXd cond_mean =
                decomp.conditional_mean(means.row(g).transpose(), obs_values);
            Eigen::MatrixXd z(count, m_dim);
            draw_rng.fill_normals(z.data(),
                                  static_cast<std::size_t>(count) * static_cast<std::size_t>(m_dim));
            const Eigen::MatrixXd mis_draws =
                (z * decomp.conditional_factor().lower().transpose()).rowwise() +
                cond_mean.transpose();
            const double w = block.posterior(g) / static_cast<double>(count);
            for (int j = 0; j < count; ++j, ++r) {
                for (std::size_t c = 0; c < obs.size(); ++c) {
                    imp.values(r, obs[c]) = obs_values(static_cast<Eigen::Index>(c));
                }
                for (int c = 0; c < m_dim; ++c) {
                    imp.values(r, mis[static_cast<std::size_t>(c)]) = mis_draws(j, c);
                }
                imp.weights(r) = w;
                imp.row_record[static_cast<std::size_t>(r)] = i;
                imp.row_component[static_cast<std::size_t>(r)] = g;
                imp.row_draw[static_cast<std::size_t>(r)] = j + 1;
            }
        }
    });

    return imp;
}

}  // namespace detail

std::vector<int> allocate_imputations(const Eigen::VectorXd& posterior, int total,
                                      AllocationMode mode, double min_component_prob,
                                      RngStream& rng) {
    const int g_count = static_cast<int>(posterior.size());
    const Eigen::VectorXd q = detail::renormalized_retained(posterior, min_component_prob);
    std::vector<int> retained;
    for (int g = 0; g < g_count; ++g) {
        if (q(g) > 0.0) {
            retained.push_back(g);
        }
    }
    if (total < static_cast<int>(retained.size())) {
        throw ConfigError("M = " + std::to_string(total) + " is smaller than the " +
                          std::to_string(retained.size()) + " retained components");
    }

    auto largest_remainder = [&]() {
        std::vector<int> counts(static_cast<std::size_t>(g_count), 0);
        std::vector<double> remainder(static_cast<std::size_t>(g_count), 0.0);
        int assigned = 0;
        for (const int g : retained) {
            const double target = static_cast<double>(total) * q(g);
            counts[static_cast<std::size_t>(g)] = static_cast<int>(std::floor(target));
            remainder[static_cast<std::size_t>(g)] = target - std::floor(target);
            assigned += counts[static_cast<std::size_t>(g)];
        }
        std::vector<int> order = retained;
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return remainder[static_cast<std::size_t>(a)] > remainder[static_cast<std::size_t>(b)];
        });
        for (std::size_t k = 0; assigned < total; ++assigned, ++k) {
            counts[static_cast<std::size_t>(order[k % order.size()])] += 1;
        }
        // every retained component ends up with at least one draw
        for (const int g : retained) {
            while (counts[static_cast<std::size_t>(g)] == 0) {
                int donor = -1;
                for (const int h : retained) {
                    if (counts[static_cast<std::size_t>(h)] >= 2 &&
                        (donor < 0 || counts[static_cast<std::size_t>(h)] >
                                          counts[static_cast<std::size_t>(donor)])) {
                        donor = h;
                    }
                }
                counts[static_cast<std::size_t>(donor)] -= 1;
                counts[static_cast<std::size_t>(g)] += 1;
            }
        }
        return counts;
    };

    if (mode == AllocationMode::deterministic) {
        return largest_remainder();
    }

    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<int> counts(static_cast<std::size_t>(g_count), 0);
        for (int d = 0; d < total; ++d) {
            const double u = rng.uniform();
            double cum = 0.0;
            int chosen = retained.back();
            for (const int g : retained) {
                cum += q(g);
                if (u <= cum) {
                    chosen = g;
                    break;
                }
            }
            counts[static_cast<std::size_t>(chosen)] += 1;
        }
        bool all_positive = true;
        for (const int g : retained) {
            if (counts[static_cast<std::size_t>(g)] == 0) {
                all_positive = false;
                break;
            }
        }
        if (all_positive) {
            return counts;
        }
    }
    // a positive draw is astronomically unlikely for this posterior; fall back
    // to the deterministic split, which satisfies the same constraints
    return largest_remainder();
}

FractionalImputation i_step(const IncompleteDataset& data, const GaussianMixture& model,
                            const EmConfig& config, std::uint64_t iteration) {
    const Eigen::VectorXd log_prior = model.alpha.array().log();
    const RngStream parent = RngStream(config.seed).substream(detail::kTagIStep);
    return detail::i_step_core(
        data, model.means, model.shared_cov, [&](int) -> const Eigen::VectorXd& { return log_prior; },
        config, parent, iteration);
}

WeightedMoments weighted_moments(const FractionalImputation& imp, int components,
                                 const MomentOptions& options) {
    const int p = imp.dim;
    const int rows = imp.row_count();
    WeightedMoments out;
    out.mass = Eigen::VectorXd::Zero(components);
    out.means = Eigen::MatrixXd::Zero(components, p);
    out.cov = Eigen::MatrixXd::Zero(p, p);

    auto base_of = [&](int record) {
        return options.record_base ? (*options.record_base)(record) : 1.0;
    };
    auto row_weight = [&](int r) {
        return options.row_weights ? (*options.row_weights)(r) : imp.weights(r);
    };
    auto complete_posterior = [&](int record, int g) {
        return options.complete_posteriors
                   ? (*options.complete_posteriors)(record, g)
                   : imp.records[static_cast<std::size_t>(record)].posterior(g);
    };

    // first pass: component masses and means
    for (int r = 0; r < rows; ++r) {
        const int i = imp.row_record[static_cast<std::size_t>(r)];
        const double base = base_of(i);
        if (base == 0.0) {
            continue;
        }
        const int g = imp.row_component[static_cast<std::size_t>(r)];
        if (g >= 0) {
            const double w = base * row_weight(r);
            out.mass(g) += w;
            out.means.row(g) += w * imp.values.row(r);
        } else {
            for (int h = 0; h < components; ++h) {
                const double w = base * complete_posterior(i, h);
                out.mass(h) += w;
                out.means.row(h) += w * imp.values.row(r);
            }
        }
    }
    for (int g = 0; g < components; ++g) {
        if (out.mass(g) > 0.0) {
            out.means.row(g) /= out.mass(g);
        }
    }

    // second pass: pooled covariance about the component means
    double total_base = 0.0;
    for (int i = 0; i < imp.record_count(); ++i) {
        total_base += base_of(i);
    }
    Eigen::VectorXd diff(p);
    for (int r = 0; r < rows; ++r) {
        const int i = imp.row_record[static_cast<std::size_t>(r)];
        const double base = base_of(i);
        if (base == 0.0) {
            continue;
        }
        const int g = imp.row_component[static_cast<std::size_t>(r)];
        if (g >= 0) {
            const double w = base * row_weight(r);
            diff = imp.values.row(r).transpose() - out.means.row(g).transpose();
            out.cov.selfadjointView<Eigen::Lower>().rankUpdate(diff, w);
        } else {
            for (int h = 0; h < components; ++h) {
                const double w = base * complete_posterior(i, h);
                diff = imp.values.row(r).transpose() - out.means.row(h).transpose();
                out.cov.selfadjointView<Eigen::Lower>().rankUpdate(diff, w);
            }
        }
    }
    out.cov = Eigen::MatrixXd(out.cov.selfadjointView<Eigen::Lower>());
    out.cov /= total_base;
    return out;
}

GaussianMixture m_step(const IncompleteDataset& data, const FractionalImputation& imputation) {
    const int n = imputation.record_count();
    if (data.size() != n) {
        throw std::invalid_argument("imputation does not match the dataset");
    }
    const int g_count = static_cast<int>(imputation.records.front().posterior.size());

    // every record contributes its component mass sum_j w*_igj (the expected
    // allocation); realized counts M_ig/M would floor alpha at 1/M for any
    // component kept alive by the one-draw minimum and stall selection
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(g_count);
    for (const auto& block : imputation.records) {
        alpha += block.posterior;
    }
    alpha /= alpha.sum();

    const WeightedMoments moments = weighted_moments(imputation, g_count);
    for (int g = 0; g < g_count; ++g) {
        if (!(moments.mass(g) > 0.0)) {
            throw ComponentCollapseError(
                "component " + std::to_string(g) + " received zero total weight", g);
        }
    }

    GaussianMixture model;
    model.alpha = std::move(alpha);
    model.means = moments.means;
    model.shared_cov = moments.cov;
    model.canonicalize();
    return model;
}

namespace {

// k-means++ seeding with a short Lloyd refinement. Distances use only the
// coordinates a record actually observes (scaled to full dimension);
// mean-completing the data first plants artificial clusters at the
// pattern-specific completion points and merges real ones under heavy
// missingness. Centers are full vectors; coordinates no assigned record
// observes fall back to the observed column mean. Fully missing records are
// ignored. On complete data this is plain k-means++ with Lloyd steps.
class PartialKmeans {
public:
    PartialKmeans(const IncompleteDataset& data, const Eigen::VectorXd& column_means)
        : data_(data), column_means_(column_means) {
        for (int i = 0; i < data_.size(); ++i) {
            if (!data_.fully_missing(i)) {
                usable_.push_back(i);
            }
        }
    }

    // squared distance between record i and a full center, over observed
    // coordinates, rescaled by p / #observed
    double record_center_dist2(int i, const Eigen::VectorXd& center) const {
        const auto& obs = data_.pattern(i).observed_indices();
        double d2 = 0.0;
        for (const int j : obs) {
            const double d = data_.value(i, j) - center(j);
            d2 += d * d;
        }
        return d2 * static_cast<double>(data_.dim()) / static_cast<double>(obs.size());
    }

    // completion of one record used when a record itself becomes a center
    Eigen::VectorXd completed_record(int i) const {
        Eigen::VectorXd y = column_means_;
        for (const int j : data_.pattern(i).observed_indices()) {
            y(j) = data_.value(i, j);
        }
        return y;
    }

    Eigen::MatrixXd run(int g_count, RngStream& rng) const {
        const int p = data_.dim();
        const int m = static_cast<int>(usable_.size());

        // k-means++ seeding over usable records
        std::vector<Eigen::VectorXd> centers;
        centers.push_back(completed_record(
            usable_[static_cast<std::size_t>(rng.uniform_below(static_cast<std::uint64_t>(m)))]));
        Eigen::VectorXd dist2(m);
        for (int r = 0; r < m; ++r) {
            dist2(r) = record_center_dist2(usable_[static_cast<std::size_t>(r)], centers[0]);
        }
        while (static_cast<int>(centers.size()) < g_count) {
            const double total = dist2.sum();
            int pick = m - 1;
            if (total > 0.0) {
                const double u = rng.uniform() * total;
                double cum = 0.0;
                for (int r = 0; r < m; ++r) {
                    cum += dist2(r);
                    if (u <= cum) {
                        pick = r;
                        break;
                    }
                }
            } else {
                pick = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(m)));
            }
            centers.push_back(completed_record(usable_[static_cast<std::size_t>(pick)]));
            for (int r = 0; r < m; ++r) {
                dist2(r) = std::min(dist2(r), record_center_dist2(usable_[static_cast<std::size_t>(r)],
                                                                  centers.back()));
            }
        }

        // Lloyd refinement with per-coordinate observed means
        std::vector<int> assign(static_cast<std::size_t>(m), -1);
        for (int pass = 0; pass < 10; ++pass) {
            bool changed = false;
            for (int r = 0; r < m; ++r) {
                const int i = usable_[static_cast<std::size_t>(r)];
                int best = 0;
                double best_d = record_center_dist2(i, centers[0]);
                for (int g = 1; g < g_count; ++g) {
                    const double d = record_center_dist2(i, centers[static_cast<std::size_t>(g)]);
                    if (d < best_d) {
                        best_d = d;
                        best = g;
                    }
                }
                if (assign[static_cast<std::size_t>(r)] != best) {
                    assign[static_cast<std::size_t>(r)] = best;
                    changed = true;
                }
            }
            if (!changed) {
                break;
            }
            Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(g_count, p);
            Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(g_count, p);
            std::vector<int> members(static_cast<std::size_t>(g_count), 0);
            for (int r = 0; r < m; ++r) {
                const int i = usable_[static_cast<std::size_t>(r)];
                const int g = assign[static_cast<std::size_t>(r)];
                members[static_cast<std::size_t>(g)] += 1;
                for (const int j : data_.pattern(i).observed_indices()) {
                    sums(g, j) += data_.value(i, j);
                    counts(g, j) += 1.0;
                }
            }
            for (int g = 0; g < g_count; ++g) {
                if (members[static_cast<std::size_t>(g)] == 0) {
                    // revive an empty cluster at the record farthest from its center
                    int far = 0;
                    double far_d = -1.0;
                    for (int r = 0; r < m; ++r) {
                        const int i = usable_[static_cast<std::size_t>(r)];
                        const double d = record_center_dist2(
                            i, centers[static_cast<std::size_t>(assign[static_cast<std::size_t>(r)])]);
                        if (d > far_d) {
                            far_d = d;
                            far = r;
                        }
                    }
                    centers[static_cast<std::size_t>(g)] =
                        completed_record(usable_[static_cast<std::size_t>(far)]);
                    assign[static_cast<std::size_t>(far)] = g;
                    continue;
                }
                for (int j = 0; j < p; ++j) {
                    centers[static_cast<std::size_t>(g)](j) =
                        counts(g, j) > 0.0 ? sums(g, j) / counts(g, j) : column_means_(j);
                }
            }
        }

        Eigen::MatrixXd out(g_count, p);
        for (int g = 0; g < g_count; ++g) {
            out.row(g) = centers[static_cast<std::size_t>(g)].transpose();
        }
        return out;
    }

private:
    const IncompleteDataset& data_;
    Eigen::VectorXd column_means_;
    std::vector<int> usable_;
};

Eigen::MatrixXd mean_completed(const IncompleteDataset& data) {
    const int n = data.size();
    const int p = data.dim();
    Eigen::VectorXd col_sum = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd col_count = Eigen::VectorXd::Zero(p);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) {
            if (data.is_observed(i, j)) {
                col_sum(j) += data.value(i, j);
                col_count(j) += 1.0;
            }
        }
    }
    for (int j = 0; j < p; ++j) {
        if (col_count(j) == 0.0) {
            throw InitializationError("column " + data.column_names()[static_cast<std::size_t>(j)] +
                                      " has no observed values");
        }
    }
    Eigen::MatrixXd completed(n, p);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) {
            completed(i, j) =
                data.is_observed(i, j) ? data.value(i, j) : col_sum(j) / col_count(j);
        }
    }
    return completed;
}

}  // namespace

GaussianMixture initialize(const IncompleteDataset& data, int g_count, const EmConfig& config) {
    config.validate();
    int usable = 0;
    for (int i = 0; i < data.size(); ++i) {
        if (!data.fully_missing(i)) {
            ++usable;
        }
    }
    if (usable < g_count) {
        throw InitializationError("need at least " + std::to_string(g_count) +
                                  " records with an observed coordinate");
    }
    const Eigen::MatrixXd completed = mean_completed(data);
    const int n = static_cast<int>(completed.rows());
    const int p = static_cast<int>(completed.cols());

    int distinct = 0;
    {
        std::vector<int> reps;
        for (int i = 0; i < n; ++i) {
            bool found = false;
            for (const int r : reps) {
                if ((completed.row(i) - completed.row(r)).norm() == 0.0) {
                    found = true;
                    break;
                }
            }
            if (!found) {
                reps.push_back(i);
                if (++distinct >= g_count) {
                    break;
                }
            }
        }
    }
    if (distinct < g_count) {
        throw InitializationError("fewer than " + std::to_string(g_count) + " distinct records");
    }

    const Eigen::RowVectorXd center = completed.colwise().mean();
    Eigen::MatrixXd cov0 =
        (completed.rowwise() - center).transpose() * (completed.rowwise() - center) /
        static_cast<double>(n);
    cov0.diagonal().array() += 1e-6 * cov0.trace() / static_cast<double>(p) + 1e-12;

    Eigen::VectorXd column_means(p);
    for (int j = 0; j < p; ++j) {
        column_means(j) = completed.col(j).mean();
    }
    const PartialKmeans kmeans(data, column_means);

    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    GaussianMixture best;
    bool have_best = false;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < config.restarts; ++restart) {
        RngStream seed_rng =
            RngStream(config.seed).substream(detail::kTagInitSeed, static_cast<std::uint64_t>(restart));
        GaussianMixture candidate;
        candidate.alpha = Eigen::VectorXd::Constant(g_count, 1.0 / static_cast<double>(g_count));
        candidate.means = kmeans.run(g_count, seed_rng);
        candidate.shared_cov = cov0;
        candidate.canonicalize();

        // rank restarts by the likelihood after three probe iterations; a
        // seed whose probe degenerates scores -inf but remains usable
        double score;
        try {
            GaussianMixture probe = candidate;
            const RngStream parent =
                RngStream(config.seed).substream(detail::kTagInitEm, static_cast<std::uint64_t>(restart));
            for (std::uint64_t t = 1; t <= 3; ++t) {
                const Eigen::VectorXd log_prior = probe.alpha.array().log();
                const FractionalImputation imp = detail::i_step_core(
                    data, probe.means, probe.shared_cov,
                    [&](int) -> const Eigen::VectorXd& { return log_prior; }, config, parent, t);
                probe = m_step(data, imp);
                detail::apply_covariance_floor(probe.shared_cov);
            }
            score = observed_log_likelihood(data, probe, ones);
        } catch (const Error&) {
            score = -std::numeric_limits<double>::infinity();
        }
        if (!have_best || score > best_score) {
            best_score = score;
            best = candidate;
            have_best = true;
        }
    }
    return best;
}

EmResult run_em(const IncompleteDataset& data, int g_count, const EmConfig& config) {
    config.validate();
    if (g_count < 1) {
        throw ConfigError("number of components must be >= 1");
    }
    if (data.size() <= g_count) {
        throw ConfigError("need n > G (n = " + std::to_string(data.size()) + ", G = " +
                          std::to_string(g_count) + ")");
    }

    EmResult result;
    GaussianMixture model = initialize(data, g_count, config);
    const RngStream parent = RngStream(config.seed).substream(detail::kTagIStep);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(data.size());

    int t = 0;
    for (t = 1; t <= config.max_iterations; ++t) {
        const Eigen::VectorXd log_prior = model.alpha.array().log();
        const FractionalImputation imp = detail::i_step_core(
            data, model.means, model.shared_cov,
            [&](int) -> const Eigen::VectorXd& { return log_prior; }, config, parent,
            static_cast<std::uint64_t>(t));
        try {
            model = m_step(data, imp);
        } catch (const ComponentCollapseError& e) {
            throw ComponentCollapseError(std::string(e.what()) + " at iteration " +
                                             std::to_string(t),
                                         e.component(), t);
        }
        detail::apply_covariance_floor(model.shared_cov);
        result.loglik_trace.push_back(observed_log_likelihood(data, model, ones));
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

    const Eigen::VectorXd log_prior = model.alpha.array().log();
    result.imputation = detail::i_step_core(
        data, model.means, model.shared_cov,
        [&](int) -> const Eigen::VectorXd& { return log_prior; }, config, parent,
        static_cast<std::uint64_t>(result.iterations + 1));
    result.model = std::move(model);
    return result;
}

}  // namespace figmm
