#include <doctest.h>

#include <cmath>
#include <sstream>

#include "figmm/conditional.hpp"
#include "figmm/em.hpp"
#include "figmm/errors.hpp"
#include "figmm/simulation.hpp"
#include "support/oracles.hpp"

using figmm::ConditionalEmResult;
using figmm::ConditionalMixture;
using figmm::EmConfig;
using figmm::IncompleteDataset;
using figmm::ObservedPattern;
using figmm::RngStream;

namespace {

ConditionalMixture two_level_model() {
    ConditionalMixture m;
    m.alpha_table.resize(2, 2);
    m.alpha_table << 0.8, 0.2, 0.35, 0.65;
    m.means.resize(2, 2);
    m.means << -1.0, 0.0, 2.0, 1.0;
    m.shared_cov = Eigen::MatrixXd::Identity(2, 2);
    m.level_names = {"a", "b"};
    return m;
}

IncompleteDataset with_constant_level(const Eigen::MatrixXd& values,
                                      const std::vector<std::vector<bool>>& observed) {
    figmm::CategoricalColumn cat;
    cat.name = "x";
    cat.level_names = {"only"};
    cat.codes.assign(static_cast<std::size_t>(values.rows()), 0);
    std::vector<std::string> names;
    for (int j = 0; j < values.cols(); ++j) {
        names.push_back("y" + std::to_string(j + 1));
    }
    return IncompleteDataset(std::move(names), values, observed, {}, std::move(cat));
}

}  // namespace

TEST_SUITE("conditional") {

TEST_CASE("a single level collapses to the unconditional posterior") {
    const figmm::GaussianMixture base = oracle::m1_model();
    ConditionalMixture cond;
    cond.alpha_table = base.alpha.transpose();
    cond.means = base.means;
    cond.shared_cov = base.shared_cov;
    cond.level_names = {"only"};

    Eigen::VectorXd v(2);
    v << 0.5, 4.0;
    const ObservedPattern pattern({true, false, true});
    const Eigen::VectorXd conditional =
        figmm::posterior_membership_conditional(v, pattern, 0, cond);
    const Eigen::VectorXd unconditional = figmm::posterior_membership(v, pattern, base);
    CHECK((conditional - unconditional).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("a degenerate prior row pins the posterior") {
    ConditionalMixture m = two_level_model();
    m.alpha_table.row(0) << 1.0, 0.0;
    Eigen::VectorXd v(2);
    v << 1.9, 1.1;  // squarely inside component 2's basin
    const Eigen::VectorXd probs = figmm::posterior_membership_conditional(
        v, ObservedPattern::all_observed(2), 0, m);
    CHECK(probs(0) == 1.0);
    CHECK(probs(1) == 0.0);
}

TEST_CASE("two-level posterior matches the direct density oracle") {
    const ConditionalMixture m = two_level_model();
    Eigen::VectorXd v(1);
    v << 0.4;
    const ObservedPattern pattern({true, false});
    for (int level = 0; level < 2; ++level) {
        const Eigen::VectorXd probs =
            figmm::posterior_membership_conditional(v, pattern, level, m);
        Eigen::Vector2d direct;
        for (int g = 0; g < 2; ++g) {
            const Eigen::VectorXd mu = figmm::gather(m.component_mean(g), {0});
            const Eigen::MatrixXd sub = figmm::gather(m.shared_cov, {0}, {0});
            direct(g) = m.alpha_table(level, g) *
                        std::exp(oracle::direct_log_density(v, mu, sub));
        }
        direct /= direct.sum();
        CHECK((probs - direct).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("unseen categories are rejected") {
    const ConditionalMixture m = two_level_model();
    Eigen::VectorXd v(2);
    v << 0.0, 0.0;
    CHECK_THROWS_AS(
        figmm::posterior_membership_conditional(v, ObservedPattern::all_observed(2), 2, m),
        figmm::UnknownCategoryError);
    CHECK_THROWS_AS(m.level_index("zzz"), figmm::UnknownCategoryError);
}

TEST_CASE("pooled moment updates agree with the unconditional M-step") {
    RngStream pop_rng = RngStream(7).substream(1);
    RngStream miss_rng = RngStream(7).substream(2);
    const Eigen::MatrixXd pop =
        figmm::sim::generate_population(figmm::sim::SimModel::M1, 70, pop_rng);
    const IncompleteDataset plain = figmm::sim::impose_missingness(pop, {}, miss_rng);
    std::vector<std::vector<bool>> observed;
    for (int i = 0; i < plain.size(); ++i) {
        std::vector<bool> row;
        for (int j = 0; j < plain.dim(); ++j) {
            row.push_back(plain.is_observed(i, j));
        }
        observed.push_back(row);
    }
    const IncompleteDataset tagged = with_constant_level(pop, observed);

    EmConfig config;
    config.seed = 5;
    config.imputations = 9;
    const figmm::FractionalImputation imp =
        figmm::i_step(plain, oracle::m1_model(), config, 1);

    const figmm::GaussianMixture plain_fit = figmm::m_step(plain, imp);
    const ConditionalMixture cond_fit =
        figmm::conditional_m_step(tagged, imp, 3, {"only"});
    CHECK((plain_fit.means - cond_fit.means).cwiseAbs().maxCoeff() == 0.0);
    CHECK((plain_fit.shared_cov - cond_fit.shared_cov).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a constant covariate reproduces the unconditional fit") {
    RngStream pop_rng = RngStream(19).substream(1);
    RngStream miss_rng = RngStream(19).substream(2);
    const Eigen::MatrixXd pop =
        figmm::sim::generate_population(figmm::sim::SimModel::M1, 150, pop_rng);
    const IncompleteDataset plain = figmm::sim::impose_missingness(pop, {}, miss_rng);
    std::vector<std::vector<bool>> observed;
    for (int i = 0; i < plain.size(); ++i) {
        std::vector<bool> row;
        for (int j = 0; j < plain.dim(); ++j) {
            row.push_back(plain.is_observed(i, j));
        }
        observed.push_back(row);
    }
    const IncompleteDataset tagged = with_constant_level(pop, observed);

    EmConfig config;
    config.seed = 23;
    config.imputations = 20;
    config.max_iterations = 6;
    config.loglik_rel_tol = 0.0;  // identical iteration schedules
    const figmm::EmResult plain_fit = figmm::run_em(plain, 2, config);
    const ConditionalEmResult cond_fit = figmm::run_em_conditional(tagged, 2, config);

    CHECK((plain_fit.model.means - cond_fit.model.means).cwiseAbs().maxCoeff() < 1e-3);
    CHECK((plain_fit.model.shared_cov - cond_fit.model.shared_cov).cwiseAbs().maxCoeff() <
          1e-3);
    // proportions differ only by the smoothing pseudo-weight
    CHECK((plain_fit.model.alpha.transpose() - cond_fit.model.alpha_table.row(0))
              .cwiseAbs()
              .maxCoeff() < 1e-4);
}

TEST_CASE("separated components aligned with the covariate drive the alpha rows apart") {
    RngStream rng(3);
    const int per_level = 60;
    Eigen::MatrixXd values(2 * per_level, 2);
    figmm::CategoricalColumn cat;
    cat.name = "x";
    cat.level_names = {"lo", "hi"};
    for (int i = 0; i < 2 * per_level; ++i) {
        const bool hi = i >= per_level;
        Eigen::Vector2d z;
        rng.fill_normals(z.data(), 2);
        values.row(i) = (Eigen::Vector2d(hi ? 6.0 : -6.0, hi ? 6.0 : -6.0) + z).transpose();
        cat.codes.push_back(hi ? 1 : 0);
    }
    const IncompleteDataset data(
        {"y1", "y2"}, values,
        std::vector<std::vector<bool>>(2 * per_level, std::vector<bool>(2, true)), {}, cat);

    EmConfig config;
    config.seed = 11;
    config.max_iterations = 50;
    const ConditionalEmResult fit = figmm::run_em_conditional(data, 2, config);
    fit.model.validate();
    // canonical order: component 0 is the low cluster
    CHECK(fit.model.alpha_table(0, 0) > 0.99);
    CHECK(fit.model.alpha_table(1, 1) > 0.99);
}

TEST_CASE("alpha rows stay exactly row-stochastic and interior") {
    RngStream pop_rng = RngStream(47).substream(1);
    const Eigen::MatrixXd pop =
        figmm::sim::generate_population(figmm::sim::SimModel::M1, 90, pop_rng);
    figmm::CategoricalColumn cat;
    cat.name = "x";
    cat.level_names = {"a", "b", "c"};
    std::vector<std::vector<bool>> observed;
    for (int i = 0; i < 90; ++i) {
        cat.codes.push_back(i % 3);
        observed.push_back({true, i % 5 != 0, true});
    }
    const IncompleteDataset data({"y1", "y2", "y3"}, pop, observed, {}, cat);
    EmConfig config;
    config.seed = 2;
    config.imputations = 8;
    config.max_iterations = 12;
    const ConditionalEmResult fit = figmm::run_em_conditional(data, 2, config);
    for (int l = 0; l < 3; ++l) {
        CHECK(std::abs(fit.model.alpha_table.row(l).sum() - 1.0) < 1e-15);
        for (int g = 0; g < 2; ++g) {
            CHECK(fit.model.alpha_table(l, g) > 0.0);
            CHECK(fit.model.alpha_table(l, g) < 1.0);
        }
    }
    fit.model.validate();
}

TEST_CASE("an empty level at fit time is an error") {
    Eigen::MatrixXd values(4, 1);
    values << 0.0, 1.0, 2.0, 3.0;
    figmm::CategoricalColumn cat;
    cat.name = "x";
    cat.level_names = {"seen", "unseen"};
    cat.codes = {0, 0, 0, 0};
    const IncompleteDataset data(
        {"y"}, values, std::vector<std::vector<bool>>(4, std::vector<bool>(1, true)), {}, cat);
    EmConfig config;
    CHECK_THROWS_AS(figmm::run_em_conditional(data, 1, config), figmm::Error);
}

TEST_CASE("conditional BIC selection runs and the penalty counts parameters") {
    const auto penalty = figmm::conditional_penalty(3, 2);
    CHECK(penalty(2) == 3.0 * 1 + 2.0 * 2);

    RngStream rng(4);
    Eigen::MatrixXd values(80, 2);
    figmm::CategoricalColumn cat;
    cat.name = "x";
    cat.level_names = {"a", "b"};
    for (int i = 0; i < 80; ++i) {
        Eigen::Vector2d z;
        rng.fill_normals(z.data(), 2);
        values.row(i) = z.transpose();
        cat.codes.push_back(i % 2);
    }
    const IncompleteDataset data(
        {"y1", "y2"}, values, std::vector<std::vector<bool>>(80, std::vector<bool>(2, true)),
        {}, cat);
    figmm::SelectConfig sc;
    sc.g_min = 1;
    sc.g_max = 2;
    sc.em.max_iterations = 30;
    sc.em.seed = 6;
    const figmm::ConditionalBicReport report = figmm::select_g_conditional(data, sc);
    CHECK(report.selected_components == 1);  // standard-normal data
}

TEST_CASE("conditional model files round-trip") {
    const ConditionalMixture m = two_level_model();
    std::stringstream ss;
    figmm::write_conditional_model(ss, m);
    const ConditionalMixture back = figmm::read_conditional_model(ss);
    CHECK((back.alpha_table - m.alpha_table).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.means - m.means).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.level_names == m.level_names);
}

}  // TEST_SUITE
