#include <doctest.h>

#include <cmath>

#include "figmm/errors.hpp"
#include "figmm/gaussian.hpp"
#include "support/oracles.hpp"

using figmm::CholeskyFactor;
using figmm::ConditionalDecomposition;
using figmm::GaussianParams;
using figmm::ObservedPattern;
using figmm::RngStream;

namespace {

ObservedPattern pattern_from(std::initializer_list<bool> mask) {
    return ObservedPattern(std::vector<bool>(mask));
}

}  // namespace

TEST_SUITE("gaussian") {

TEST_CASE("standard normal log-density at the mode") {
    GaussianParams params{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)};
    Eigen::VectorXd v(1);
    v << 0.0;
    CHECK(figmm::marginal_log_density(v, ObservedPattern::all_observed(1), params) ==
          doctest::Approx(-0.91893853320467274).epsilon(1e-12));
}

TEST_CASE("AR covariance marginal over coordinates 1 and 3") {
    GaussianParams params{Eigen::VectorXd::Zero(3), oracle::ar_covariance(0.7)};
    const ObservedPattern pattern = pattern_from({true, false, true});
    Eigen::VectorXd v(2);
    v << 0.4, -1.1;
    // the bivariate marginal has covariance [[1, 0.49], [0.49, 1]]
    const double det = 1.0 - 0.49 * 0.49;
    const double quad = (v(0) * v(0) - 2.0 * 0.49 * v(0) * v(1) + v(1) * v(1)) / det;
    const double expected = -std::log(2.0 * M_PI) - 0.5 * std::log(det) - 0.5 * quad;
    CHECK(figmm::marginal_log_density(v, pattern, params) ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("marginal log-density matches the quadrature oracle") {
    RngStream rng(101);
    const int p = 4;
    for (int rep = 0; rep < 5; ++rep) {
        GaussianParams params{oracle::random_vector(p, rng, 2.0), oracle::random_spd(p, rng)};
        const ObservedPattern pattern = pattern_from({false, true, false, true});
        const Eigen::VectorXd obs = oracle::random_vector(2, rng, 1.0) +
                                    figmm::gather(params.mean, pattern.observed_indices());
        const double ours = figmm::marginal_log_density(obs, pattern, params);
        const double quad = oracle::quadrature_marginal_log_density(obs, pattern, params);
        CHECK(ours == doctest::Approx(quad).epsilon(1e-6));
    }
}

TEST_CASE("conditional with diagonal covariance is the marginal of the missing block") {
    Eigen::VectorXd mean(3);
    mean << 1.0, -2.0, 3.0;
    Eigen::MatrixXd cov = Eigen::Vector3d(0.5, 2.0, 1.5).asDiagonal();
    GaussianParams params{mean, cov};
    const ObservedPattern pattern = pattern_from({true, false, false});
    Eigen::VectorXd obs(1);
    obs << 9.0;
    const GaussianParams cond = figmm::conditional_params(obs, pattern, params);
    CHECK(cond.mean(0) == doctest::Approx(-2.0).epsilon(1e-14));
    CHECK(cond.mean(1) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(cond.cov(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(cond.cov(1, 1) == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(cond.cov(0, 1) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("bivariate conditional closed form") {
    Eigen::VectorXd mean(2);
    mean << 0.7, -1.3;
    Eigen::MatrixXd cov(2, 2);
    cov << 1.0, 0.7, 0.7, 1.0;
    GaussianParams params{mean, cov};
    Eigen::VectorXd obs(1);
    obs << mean(0) + 1.0;
    const GaussianParams cond =
        figmm::conditional_params(obs, pattern_from({true, false}), params);
    CHECK(cond.mean(0) == doctest::Approx(mean(1) + 0.7).epsilon(1e-14));
    CHECK(cond.cov(0, 0) == doctest::Approx(0.51).epsilon(1e-14));
}

TEST_CASE("AR conditional of the third coordinate against quadrature") {
    GaussianParams params{Eigen::VectorXd::Zero(3), oracle::ar_covariance(0.7)};
    const ObservedPattern pattern = pattern_from({true, true, false});
    Eigen::VectorXd obs(2);
    obs << 0.0, 0.0;  // at the means
    const GaussianParams cond = figmm::conditional_params(obs, pattern, params);
    CHECK(cond.mean(0) == doctest::Approx(0.0).epsilon(1e-12));

    Eigen::Matrix2d sigma_oo;
    sigma_oo << 1.0, 0.7, 0.7, 1.0;
    Eigen::Vector2d cross(0.49, 0.7);
    const double expected_var = 1.0 - cross.dot(sigma_oo.inverse() * cross);
    CHECK(cond.cov(0, 0) == doctest::Approx(expected_var).epsilon(1e-12));

    Eigen::VectorXd qmean;
    Eigen::MatrixXd qcov;
    oracle::quadrature_conditional_moments(obs, pattern, params, qmean, qcov);
    CHECK(cond.mean(0) == doctest::Approx(qmean(0)).epsilon(1e-8));
    CHECK(cond.cov(0, 0) == doctest::Approx(qcov(0, 0)).epsilon(1e-8));
}

TEST_CASE("sampling a near-degenerate conditional stays at the mean") {
    Eigen::VectorXd mean(2);
    mean << 4.0, -2.0;
    GaussianParams cond{mean, 1e-12 * Eigen::MatrixXd::Identity(2, 2)};
    RngStream rng(3);
    const Eigen::MatrixXd draws = figmm::sample_conditional(cond, 50, rng);
    for (int i = 0; i < draws.rows(); ++i) {
        CHECK(std::abs(draws(i, 0) - 4.0) < 1e-5);
        CHECK(std::abs(draws(i, 1) + 2.0) < 1e-5);
    }
}

TEST_CASE("sample moments converge for the standard bivariate") {
    GaussianParams cond{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)};
    RngStream rng(17);
    const Eigen::MatrixXd draws = figmm::sample_conditional(cond, 100000, rng);
    const Eigen::RowVector2d mean = draws.colwise().mean();
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (int i = 0; i < draws.rows(); ++i) {
        const Eigen::Vector2d d = draws.row(i).transpose() - mean.transpose();
        cov += d * d.transpose();
    }
    cov /= draws.rows();
    CHECK(std::abs(cov(0, 0) - 1.0) < 0.02);
    CHECK(std::abs(cov(1, 1) - 1.0) < 0.02);
    CHECK(std::abs(cov(0, 1)) < 0.02);
}

TEST_CASE("sampling is bit-identical for a fixed stream") {
    GaussianParams cond{Eigen::VectorXd::Zero(3), oracle::ar_covariance(0.5)};
    RngStream a(99);
    RngStream b(99);
    const Eigen::MatrixXd d1 = figmm::sample_conditional(cond, 64, a);
    const Eigen::MatrixXd d2 = figmm::sample_conditional(cond, 64, b);
    CHECK((d1 - d2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("conditioning reconstructs the joint density") {
    RngStream rng(2024);
    for (int rep = 0; rep < 20; ++rep) {
        const int p = 2 + static_cast<int>(rng.uniform_below(5));  // up to 6
        GaussianParams params{oracle::random_vector(p, rng, 1.5), oracle::random_spd(p, rng)};
        const ObservedPattern pattern = oracle::random_pattern(p, rng, true, true);
        Eigen::VectorXd y(p);
        rng.fill_normals(y.data(), static_cast<std::size_t>(p));
        y += params.mean;

        const Eigen::VectorXd y_obs = figmm::gather(y, pattern.observed_indices());
        const Eigen::VectorXd y_mis = figmm::gather(y, pattern.missing_indices());

        const double joint =
            figmm::marginal_log_density(y, ObservedPattern::all_observed(p), params);
        const double marginal = figmm::marginal_log_density(y_obs, pattern, params);
        const GaussianParams cond = figmm::conditional_params(y_obs, pattern, params);
        const double conditional = figmm::marginal_log_density(
            y_mis, ObservedPattern::all_observed(pattern.missing_count()), cond);
        CHECK(joint == doctest::Approx(marginal + conditional).epsilon(1e-10));
    }
}

TEST_CASE("conditional covariance ignores the observed values") {
    RngStream rng(555);
    const int p = 4;
    GaussianParams params{oracle::random_vector(p, rng), oracle::random_spd(p, rng)};
    const ObservedPattern pattern = pattern_from({true, false, true, false});
    const GaussianParams base =
        figmm::conditional_params(Eigen::Vector2d(0.0, 0.0), pattern, params);
    for (int rep = 0; rep < 10; ++rep) {
        Eigen::VectorXd obs(2);
        rng.fill_normals(obs.data(), 2);
        obs *= 5.0;
        const GaussianParams other = figmm::conditional_params(obs, pattern, params);
        CHECK((base.cov - other.cov).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("Cholesky density equals the determinant-inverse route") {
    RngStream rng(31);
    for (int rep = 0; rep < 20; ++rep) {
        const int p = 1 + static_cast<int>(rng.uniform_below(6));
        GaussianParams params{oracle::random_vector(p, rng), oracle::random_spd(p, rng)};
        Eigen::VectorXd x = oracle::random_vector(p, rng, 2.0) + params.mean;
        const double ours =
            figmm::marginal_log_density(x, ObservedPattern::all_observed(p), params);
        const double direct = oracle::direct_log_density(x, params.mean, params.cov);
        CHECK(ours == doctest::Approx(direct).epsilon(1e-10));
    }
}

TEST_CASE("ridge retry accepts tiny indefiniteness and rejects real degeneracy") {
    Eigen::MatrixXd nearly = Eigen::MatrixXd::Identity(2, 2);
    nearly(1, 1) = -1e-14;  // tiny negative diagonal, fixed by one ridge
    const CholeskyFactor factor = CholeskyFactor::compute(nearly);
    CHECK(factor.ridge() > 0.0);

    Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
    bad(1, 1) = -1.0;
    CHECK_THROWS_AS(CholeskyFactor::compute(bad, 3), figmm::DegenerateCovarianceError);
    try {
        CholeskyFactor::compute(bad, 3);
    } catch (const figmm::DegenerateCovarianceError& e) {
        CHECK(e.component() == 3);
    }
}

TEST_CASE("validate_params flags asymmetry") {
    GaussianParams params{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)};
    params.cov(0, 1) = 1e-3;
    CHECK_THROWS_AS(figmm::validate_params(params), figmm::DegenerateCovarianceError);
}

TEST_CASE("preconditions are enforced") {
    GaussianParams params{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)};
    CHECK_THROWS_AS(
        figmm::conditional_params(Eigen::VectorXd(2), ObservedPattern::all_observed(2), params),
        std::invalid_argument);
    RngStream rng(1);
    CHECK_THROWS_AS(figmm::sample_conditional(params, 0, rng), std::invalid_argument);
}

}  // TEST_SUITE
