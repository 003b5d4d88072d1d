#include "figmm/gaussian.hpp"

#include <cmath>
#include <string>

#include "figmm/errors.hpp"

namespace figmm {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

bool try_llt(const Eigen::MatrixXd& m, Eigen::MatrixXd& lower) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
        return false;
    }
    lower = llt.matrixL();
    // Eigen can report success with non-finite entries on pathological input.
    if (!lower.allFinite()) {
        return false;
    }
    for (int j = 0; j < lower.rows(); ++j) {
        if (lower(j, j) <= 0.0) {
            return false;
        }
    }
    return true;
}
}  // namespace

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out(static_cast<Eigen::Index>(i)) = v(idx[i]);
    }
    return out;
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<int>& rows,
                       const std::vector<int>& cols) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                m(rows[i], cols[j]);
        }
    }
    return out;
}

CholeskyFactor CholeskyFactor::compute(const Eigen::MatrixXd& cov, int component) {
    const int p = static_cast<int>(cov.rows());
    CholeskyFactor f;
    if (p == 0) {
        f.lower_.resize(0, 0);
        return f;
    }
    if (try_llt(cov, f.lower_)) {
        f.log_det_ = 2.0 * f.lower_.diagonal().array().log().sum();
        return f;
    }
    // Bounded regularization: a single ridge proportional to the mean
    // diagonal scale, then give up.
    const double ridge = 1e-8 * cov.trace() / static_cast<double>(p);
    if (ridge > 0.0) {
        Eigen::MatrixXd padded = cov;
        padded.diagonal().array() += ridge;
        if (try_llt(padded, f.lower_)) {
            f.log_det_ = 2.0 * f.lower_.diagonal().array().log().sum();
            f.ridge_ = ridge;
            return f;
        }
    }
    throw DegenerateCovarianceError(
        "covariance is not positive definite after one ridge retry (dim " +
            std::to_string(p) + ", component " + std::to_string(component) + ")",
        component);
}

double CholeskyFactor::quad_form(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd z = lower_.triangularView<Eigen::Lower>().solve(x);
    return z.squaredNorm();
}

Eigen::VectorXd CholeskyFactor::solve(const Eigen::VectorXd& b) const {
    Eigen::VectorXd z = lower_.triangularView<Eigen::Lower>().solve(b);
    return lower_.transpose().triangularView<Eigen::Upper>().solve(z);
}

Eigen::MatrixXd CholeskyFactor::solve(const Eigen::MatrixXd& b) const {
    Eigen::MatrixXd z = lower_.triangularView<Eigen::Lower>().solve(b);
    return lower_.transpose().triangularView<Eigen::Upper>().solve(z);
}

double gaussian_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                            const CholeskyFactor& factor) {
    const double q = factor.quad_form(x - mean);
    return -0.5 * (static_cast<double>(x.size()) * kLogTwoPi + factor.log_det() + q);
}

void validate_params(const GaussianParams& params, int component) {
    const int p = params.dim();
    if (params.cov.rows() != p || params.cov.cols() != p) {
        throw DegenerateCovarianceError("covariance dimensions do not match the mean",
                                        component);
    }
    const double scale = params.cov.cwiseAbs().maxCoeff();
    const double asym = (params.cov - params.cov.transpose()).cwiseAbs().maxCoeff();
    if (scale > 0.0 && asym > 1e-12 * scale) {
        throw DegenerateCovarianceError("covariance is not symmetric", component);
    }
    CholeskyFactor::compute(params.cov, component);
}

double marginal_log_density(const Eigen::VectorXd& values, const ObservedPattern& pattern,
                            const GaussianParams& params) {
    if (pattern.observed_count() < 1) {
        throw std::invalid_argument("marginal_log_density requires at least one observed coordinate");
    }
    if (values.size() != pattern.observed_count()) {
        throw std::invalid_argument("observed value vector does not match the pattern");
    }
    const auto& obs = pattern.observed_indices();
    const Eigen::VectorXd mu = gather(params.mean, obs);
    const Eigen::MatrixXd sub = gather(params.cov, obs, obs);
    const CholeskyFactor factor = CholeskyFactor::compute(sub);
    return gaussian_log_density(values, mu, factor);
}

GaussianParams conditional_params(const Eigen::VectorXd& obs_values,
                                  const ObservedPattern& pattern,
                                  const GaussianParams& params) {
    if (pattern.observed_count() < 1 || pattern.missing_count() < 1) {
        throw std::invalid_argument(
            "conditional_params requires 1 <= observed_count <= p-1");
    }
    if (obs_values.size() != pattern.observed_count()) {
        throw std::invalid_argument("observed value vector does not match the pattern");
    }
    const ConditionalDecomposition decomp(pattern, params.cov);
    GaussianParams cond;
    cond.mean = decomp.conditional_mean(params.mean, obs_values);
    cond.cov = decomp.conditional_cov();
    return cond;
}

Eigen::MatrixXd sample_conditional(const GaussianParams& cond, int count, RngStream& rng) {
    if (count < 1) {
        throw std::invalid_argument("sample_conditional requires count >= 1");
    }
    const int m = cond.dim();
    const CholeskyFactor factor = CholeskyFactor::compute(cond.cov);
    Eigen::MatrixXd z(count, m);
    rng.fill_normals(z.data(), static_cast<std::size_t>(count) * static_cast<std::size_t>(m));
    Eigen::MatrixXd draws = z * factor.lower().transpose();
    draws.rowwise() += cond.mean.transpose();
    return draws;
}

ConditionalDecomposition::ConditionalDecomposition(const ObservedPattern& pattern,
                                                   const Eigen::MatrixXd& cov, int component)
    : pattern_(pattern) {
    const auto& obs = pattern_.observed_indices();
    const auto& mis = pattern_.missing_indices();

    if (!obs.empty()) {
        obs_factor_ = CholeskyFactor::compute(gather(cov, obs, obs), component);
    }
    if (mis.empty()) {
        cond_cov_.resize(0, 0);
        gain_.resize(0, 0);
        return;
    }
    if (obs.empty()) {
        // nothing observed: the conditional is the full component law
        cond_cov_ = cov;
        gain_.resize(static_cast<Eigen::Index>(mis.size()), 0);
        cond_factor_ = CholeskyFactor::compute(cond_cov_, component);
        return;
    }
    const Eigen::MatrixXd cross = gather(cov, mis, obs);   // Sigma_mo
    const Eigen::MatrixXd mis_block = gather(cov, mis, mis);
    const Eigen::MatrixXd cross_t = cross.transpose();
    gain_ = obs_factor_.solve(cross_t).transpose();  // Sigma_mo Sigma_oo^{-1}
    Eigen::MatrixXd schur = mis_block - gain_ * cross.transpose();
    cond_cov_ = 0.5 * (schur + schur.transpose());
    cond_factor_ = CholeskyFactor::compute(cond_cov_, component);
}

Eigen::VectorXd ConditionalDecomposition::conditional_mean(
    const Eigen::VectorXd& full_mean, const Eigen::VectorXd& obs_values) const {
    const auto& mis = pattern_.missing_indices();
    Eigen::VectorXd mu_m = gather(full_mean, mis);
    if (pattern_.observed_count() == 0) {
        return mu_m;
    }
    const Eigen::VectorXd mu_o = gather(full_mean, pattern_.observed_indices());
    return mu_m + gain_ * (obs_values - mu_o);
}

double ConditionalDecomposition::marginal_log_density(
    const Eigen::VectorXd& obs_values, const Eigen::VectorXd& full_mean) const {
    if (pattern_.observed_count() == 0) {
        return 0.0;
    }
    const Eigen::VectorXd mu_o = gather(full_mean, pattern_.observed_indices());
    return gaussian_log_density(obs_values, mu_o, obs_factor_);
}

double ConditionalDecomposition::conditional_log_density(
    const Eigen::VectorXd& mis_values, const Eigen::VectorXd& cond_mean) const {
    return gaussian_log_density(mis_values, cond_mean, cond_factor_);
}

}  // namespace figmm
