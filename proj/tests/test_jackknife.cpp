#include <doctest.h>

#include <cmath>

#include "figmm/em.hpp"
#include "figmm/errors.hpp"
#include "figmm/jackknife.hpp"
#include "figmm/simulation.hpp"
#include "support/oracles.hpp"

using figmm::EmConfig;
using figmm::EmResult;
using figmm::FractionalImputation;
using figmm::GaussianMixture;
using figmm::IncompleteDataset;
using figmm::ReplicateEngine;
using figmm::RngStream;

namespace {

// n identical incomplete records with hand-built identical draws: fully
// symmetric input for replicate-fit checks
struct SymmetricFixture {
    IncompleteDataset data;
    FractionalImputation imputation;
    GaussianMixture base;
};

SymmetricFixture symmetric_fixture(int n) {
    // fully missing records keep the observed likelihood flat, so the refit
    // cannot chase a degenerate observed-variance optimum
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(n, 2);
    std::vector<std::vector<bool>> observed(static_cast<std::size_t>(n),
                                            std::vector<bool>{false, false});
    IncompleteDataset data({"a", "b"}, values, std::move(observed));

    FractionalImputation imp;
    imp.dim = 2;
    imp.imputations = 3;
    const double draws[3][2] = {{-1.0, -0.5}, {0.25, 0.3}, {1.0, 0.8}};
    imp.values.resize(3 * n, 2);
    imp.weights.resize(3 * n);
    for (int i = 0; i < n; ++i) {
        FractionalImputation::RecordBlock block;
        block.fully_observed = false;
        block.posterior = Eigen::VectorXd::Ones(1);
        block.counts = {3};
        block.first_row = 3 * i;
        block.rows = 3;
        imp.records.push_back(block);
        for (int j = 0; j < 3; ++j) {
            const int r = 3 * i + j;
            imp.values.row(r) << draws[j][0], draws[j][1];
            imp.weights(r) = 1.0 / 3.0;
            imp.row_record.push_back(i);
            imp.row_component.push_back(0);
            imp.row_draw.push_back(j + 1);
        }
    }

    GaussianMixture base;
    base.alpha = Eigen::VectorXd::Ones(1);
    base.means = Eigen::MatrixXd::Zero(1, 2);
    base.means.row(0) << 0.1, 0.1;
    base.shared_cov = Eigen::MatrixXd::Identity(2, 2);
    return SymmetricFixture{std::move(data), std::move(imp), std::move(base)};
}

}  // namespace

TEST_SUITE("jackknife") {

TEST_CASE("delete-one base weights") {
    const Eigen::VectorXd w1 = figmm::jackknife_base_weights(2, 0);
    CHECK(w1(0) == 0.0);
    CHECK(w1(1) == 1.0);

    const Eigen::VectorXd w3 = figmm::jackknife_base_weights(4, 2);
    CHECK(w3(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(w3(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(w3(2) == 0.0);
    CHECK(w3(3) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    for (int n : {2, 5, 17}) {
        for (int k = 0; k < n; ++k) {
            CHECK(figmm::jackknife_base_weights(n, k).sum() ==
                  doctest::Approx(1.0).epsilon(1e-14));
        }
    }
}

TEST_CASE("grouped weights zero their block and renormalize") {
    const auto sets = figmm::grouped_jackknife_weights(10, 5);
    CHECK(sets.size() == 5);
    for (const auto& w : sets) {
        CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-14));
        CHECK((w.array() == 0.0).count() == 2);
    }
}

TEST_CASE("replicate fit on complete data reproduces the leave-one-out mean") {
    RngStream rng(9);
    Eigen::MatrixXd values(12, 2);
    for (int i = 0; i < 12; ++i) {
        Eigen::Vector2d z;
        rng.fill_normals(z.data(), 2);
        values.row(i) = z.transpose();
    }
    const IncompleteDataset data = figmm::dataset_from_complete(values);
    EmConfig config;
    config.seed = 2;
    const EmResult base = figmm::run_em(data, 1, config);

    for (int k = 0; k < 12; ++k) {
        const auto fit = figmm::replicate_fit(data, base.imputation, base.model,
                                              figmm::jackknife_base_weights(12, k));
        Eigen::RowVector2d loo = Eigen::RowVector2d::Zero();
        for (int i = 0; i < 12; ++i) {
            if (i != k) {
                loo += values.row(i);
            }
        }
        loo /= 11.0;
        CHECK((fit.model.means.row(0) - loo).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("identical records give identical replicate parameters") {
    const SymmetricFixture fx = symmetric_fixture(6);
    const ReplicateEngine engine(fx.data, fx.imputation, fx.base);
    figmm::ReplicateConfig config;
    const auto first = engine.fit(figmm::jackknife_base_weights(6, 0), config);
    CHECK(first.converged);
    for (int k = 1; k < 6; ++k) {
        const auto fit = engine.fit(figmm::jackknife_base_weights(6, k), config);
        CHECK((fit.model.means - first.model.means).cwiseAbs().maxCoeff() == 0.0);
        CHECK((fit.model.shared_cov - first.model.shared_cov).cwiseAbs().maxCoeff() == 0.0);
    }
    // and they equal the uniform-weight refit, by the same symmetry
    const auto uniform = engine.fit(Eigen::VectorXd::Constant(6, 1.0 / 6.0), config);
    CHECK((uniform.model.means - first.model.means).cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("replicate fit approaches the exact weighted-likelihood maximizer") {
    // small instance, importance approximation sharpened by a large M
    RngStream rng(404);
    Eigen::MatrixXd values(10, 2);
    std::vector<std::vector<bool>> observed;
    for (int i = 0; i < 10; ++i) {
        Eigen::Vector2d z;
        rng.fill_normals(z.data(), 2);
        const bool high = i % 2 == 0;
        values.row(i) << (high ? 2.5 : -2.5) + z(0), (high ? 2.0 : -2.0) + 0.8 * z(1);
        observed.push_back({true, i % 3 != 1});
    }
    const IncompleteDataset data({"a", "b"}, values, observed);
    EmConfig config;
    config.seed = 7;
    config.imputations = 60000;
    config.max_iterations = 120;
    config.loglik_rel_tol = 1e-9;
    const EmResult base = figmm::run_em(data, 2, config);

    const Eigen::VectorXd weights = figmm::jackknife_base_weights(10, 3);
    figmm::ReplicateConfig rconfig;
    rconfig.loglik_rel_tol = 1e-10;
    rconfig.max_iterations = 400;
    const auto fit = figmm::replicate_fit(data, base.imputation, base.model, weights, rconfig);

    oracle::DeterministicEm exact =
        oracle::weighted_missing_em(data, weights, base.model, 4000, 1e-13);
    exact.model.canonicalize();
    GaussianMixture ours = fit.model;
    ours.canonicalize();
    CHECK((ours.means - exact.model.means).cwiseAbs().maxCoeff() < 1e-3);
    CHECK((ours.alpha - exact.model.alpha).cwiseAbs().maxCoeff() < 1e-3);
    CHECK((ours.shared_cov - exact.model.shared_cov).cwiseAbs().maxCoeff() < 2e-3);
}

TEST_CASE("replicate weights at the base parameters reproduce the stored weights") {
    const IncompleteDataset data = [&] {
        RngStream pop_rng = RngStream(15).substream(1);
        RngStream miss_rng = RngStream(15).substream(2);
        const Eigen::MatrixXd pop =
            figmm::sim::generate_population(figmm::sim::SimModel::M1, 50, pop_rng);
        return figmm::sim::impose_missingness(pop, {}, miss_rng);
    }();
    EmConfig config;
    config.seed = 5;
    config.imputations = 12;
    config.max_iterations = 10;
    const EmResult base = figmm::run_em(data, 2, config);
    const Eigen::VectorXd weights =
        figmm::replicate_fractional_weights(data, base.imputation, base.model, base.model);
    CHECK((weights - base.imputation.weights).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("a single draw per cell always carries the full cell weight") {
    const SymmetricFixture fx = symmetric_fixture(3);
    FractionalImputation single = fx.imputation;
    // shrink each record to one draw
    FractionalImputation imp;
    imp.dim = 2;
    imp.imputations = 1;
    imp.values.resize(3, 2);
    imp.weights.resize(3);
    for (int i = 0; i < 3; ++i) {
        FractionalImputation::RecordBlock block;
        block.fully_observed = false;
        block.posterior = Eigen::VectorXd::Ones(1);
        block.counts = {1};
        block.first_row = i;
        block.rows = 1;
        imp.records.push_back(block);
        imp.values.row(i) << 1.0, 0.3 * i;
        imp.weights(i) = 1.0;
        imp.row_record.push_back(i);
        imp.row_component.push_back(0);
        imp.row_draw.push_back(1);
    }
    GaussianMixture shifted = fx.base;
    shifted.means(0, 1) += 0.7;  // any replicate parameters
    const Eigen::VectorXd weights =
        figmm::replicate_fractional_weights(fx.data, imp, fx.base, shifted);
    for (int r = 0; r < 3; ++r) {
        CHECK(weights(r) == doctest::Approx(1.0).epsilon(1e-15));
    }
}

TEST_CASE("importance ratios match the hand-normalized exponential tilt") {
    // one fully-missing univariate record, three draws, base N(0,1) vs
    // replicate N(0.1,1): ratios proportional to exp(0.1 y - 0.005)
    Eigen::MatrixXd values(1, 1);
    values << 0.0;
    std::vector<std::vector<bool>> observed{{false}};
    const IncompleteDataset data({"y"}, values, observed);

    FractionalImputation imp;
    imp.dim = 1;
    imp.imputations = 3;
    imp.values.resize(3, 1);
    imp.values << -0.5, 0.3, 1.2;
    imp.weights = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
    imp.row_record = {0, 0, 0};
    imp.row_component = {0, 0, 0};
    imp.row_draw = {1, 2, 3};
    FractionalImputation::RecordBlock block;
    block.fully_observed = false;
    block.posterior = Eigen::VectorXd::Ones(1);
    block.counts = {3};
    block.first_row = 0;
    block.rows = 3;
    imp.records.push_back(block);

    GaussianMixture base;
    base.alpha = Eigen::VectorXd::Ones(1);
    base.means = Eigen::MatrixXd::Zero(1, 1);
    base.shared_cov = Eigen::MatrixXd::Identity(1, 1);
    GaussianMixture replicate = base;
    replicate.means(0, 0) = 0.1;

    const Eigen::VectorXd weights =
        figmm::replicate_fractional_weights(data, imp, base, replicate);
    Eigen::Vector3d hand;
    for (int j = 0; j < 3; ++j) {
        hand(j) = std::exp(0.1 * imp.values(j, 0) - 0.005);
    }
    hand /= hand.sum();
    CHECK((weights - hand).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("replicate weight normalization holds per record") {
    const IncompleteDataset data = [&] {
        RngStream pop_rng = RngStream(77).substream(1);
        RngStream miss_rng = RngStream(77).substream(2);
        const Eigen::MatrixXd pop =
            figmm::sim::generate_population(figmm::sim::SimModel::M1, 60, pop_rng);
        return figmm::sim::impose_missingness(pop, {}, miss_rng);
    }();
    EmConfig config;
    config.seed = 3;
    config.imputations = 8;
    config.max_iterations = 8;
    const EmResult base = figmm::run_em(data, 3, config);
    const ReplicateEngine engine(data, base.imputation, base.model);
    for (int k : {0, 17, 59}) {
        const auto fit = engine.fit(figmm::jackknife_base_weights(60, k), {});
        const Eigen::VectorXd weights = engine.fractional_weights(fit.model, k);
        for (const auto& blockref : base.imputation.records) {
            double sum = 0.0;
            for (int r = blockref.first_row; r < blockref.first_row + blockref.rows; ++r) {
                sum += weights(r);
            }
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("jackknife variance formula") {
    Eigen::VectorXd theta(1);
    theta << 2.0;
    std::vector<Eigen::VectorXd> reps;
    for (int k = 0; k < 4; ++k) {
        Eigen::VectorXd t(1);
        t << 2.0;
        reps.push_back(t);
    }
    CHECK(figmm::jackknife_variance(theta, reps)(0, 0) == 0.0);

    // hand-listed scalar replicates
    std::vector<double> vals{1.8, 2.1, 2.2, 1.9};
    reps.clear();
    for (const double v : vals) {
        Eigen::VectorXd t(1);
        t << v;
        reps.push_back(t);
    }
    double hand = 0.0;
    for (const double v : vals) {
        hand += (v - 2.0) * (v - 2.0);
    }
    hand *= 3.0 / 4.0;
    CHECK(figmm::jackknife_variance(theta, reps)(0, 0) ==
          doctest::Approx(hand).epsilon(1e-15));
}

TEST_CASE("jackknife covariance matrices are symmetric positive semidefinite") {
    RngStream rng(31);
    Eigen::VectorXd theta = oracle::random_vector(3, rng);
    std::vector<Eigen::VectorXd> reps;
    for (int k = 0; k < 8; ++k) {
        reps.push_back(theta + 0.1 * oracle::random_vector(3, rng));
    }
    const Eigen::MatrixXd cov = figmm::jackknife_variance(theta, reps);
    CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-12);
}

TEST_CASE("the classical delete-one identity holds for the mean") {
    Eigen::MatrixXd values(4, 1);
    values << 1.0, 2.0, 3.0, 4.0;
    const IncompleteDataset data = figmm::dataset_from_complete(values);
    EmConfig config;
    config.seed = 1;
    const EmResult base = figmm::run_em(data, 1, config);
    const auto run = figmm::jackknife_pipeline(data, base, {figmm::builtin_mean(0)}, {});
    // s^2/n = (5/3)/4
    CHECK(run.estimands[0].variance == doctest::Approx(5.0 / 12.0).epsilon(1e-12));
    CHECK(run.replicate_failures == 0);
}

TEST_CASE("confidence intervals") {
    const auto degenerate = figmm::confidence_interval(1.5, 0.0, 0.95);
    CHECK(degenerate.lower == 1.5);
    CHECK(degenerate.upper == 1.5);

    const auto standard = figmm::confidence_interval(0.0, 1.0, 0.95);
    CHECK(standard.lower == doctest::Approx(-1.959964).epsilon(1e-3));
    CHECK(standard.upper == doctest::Approx(1.959964).epsilon(1e-3));

    CHECK_THROWS_AS(figmm::confidence_interval(0.0, -1.0, 0.95), figmm::Error);
}

TEST_CASE("normal quantile inverts the normal CDF tightly") {
    for (const double p : {0.025, 0.31, 0.5, 0.84, 0.975, 0.999}) {
        const double z = figmm::normal_quantile(p);
        CHECK(0.5 * std::erfc(-z / std::sqrt(2.0)) == doctest::Approx(p).epsilon(1e-12));
    }
}

TEST_CASE("grouped jackknife runs through the pipeline") {
    const IncompleteDataset data = [&] {
        RngStream pop_rng = RngStream(91).substream(1);
        RngStream miss_rng = RngStream(91).substream(2);
        const Eigen::MatrixXd pop =
            figmm::sim::generate_population(figmm::sim::SimModel::M1, 60, pop_rng);
        return figmm::sim::impose_missingness(pop, {}, miss_rng);
    }();
    EmConfig config;
    config.seed = 8;
    config.imputations = 10;
    config.max_iterations = 15;
    const EmResult base = figmm::run_em(data, 2, config);
    figmm::JackknifeConfig jc;
    jc.groups = 6;
    const auto run = figmm::jackknife_pipeline(data, base, {figmm::builtin_mean(1)}, jc);
    CHECK(run.replicate_values.rows() == 6);
    CHECK(run.estimands[0].variance >= 0.0);
}

}  // TEST_SUITE
