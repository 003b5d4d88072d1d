#include "figmm/estimators.hpp"

#include <cmath>
#include <sstream>

#include "figmm/errors.hpp"

namespace figmm {

namespace {

Eigen::VectorXd residual(const WeightedSampleView& sample, const EstimatingFunction& u,
                         const Eigen::VectorXd& theta) {
    Eigen::VectorXd total = Eigen::VectorXd::Zero(u.theta_dim);
    Eigen::VectorXd out(u.theta_dim);
    for (Eigen::Index r = 0; r < sample.values.rows(); ++r) {
        const double w = sample.weights(r);
        if (w == 0.0) {
            continue;
        }
        u.evaluate(theta, sample.values.row(r).transpose(), out);
        total += w * out;
    }
    return total;
}

PointEstimate newton_solve(const WeightedSampleView& sample, const EstimatingFunction& u,
                           const SolverConfig& config) {
    const int d = u.theta_dim;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd f = residual(sample, u, theta);
    double fnorm = f.norm();

    int iter = 0;
    for (; iter < config.max_iterations && fnorm >= config.tolerance; ++iter) {
        Eigen::MatrixXd jac(d, d);
        for (int j = 0; j < d; ++j) {
            const double h = std::max(1e-6, 1e-6 * std::abs(theta(j)));
            Eigen::VectorXd shifted = theta;
            shifted(j) += h;
            jac.col(j) = (residual(sample, u, shifted) - f) / h;
        }
        const Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
        if (!lu.isInvertible()) {
            throw SolverError("singular Jacobian while solving " + u.name, fnorm);
        }
        const Eigen::VectorXd step = lu.solve(-f);

        double lambda = 1.0;
        Eigen::VectorXd trial;
        Eigen::VectorXd ftrial;
        double tnorm = fnorm;
        for (int back = 0; back < 30; ++back) {
            trial = theta + lambda * step;
            ftrial = residual(sample, u, trial);
            tnorm = ftrial.norm();
            if (tnorm < fnorm) {
                break;
            }
            lambda *= 0.5;
        }
        if (!(tnorm < fnorm)) {
            throw SolverError("Newton step failed to reduce the residual for " + u.name, fnorm);
        }
        theta = trial;
        f = ftrial;
        fnorm = tnorm;
    }
    if (fnorm >= config.tolerance) {
        throw SolverError("Newton did not converge for " + u.name + " (residual " +
                              std::to_string(fnorm) + ")",
                          fnorm);
    }
    // one undamped polish step; for estimating functions linear in theta this
    // lands on the closed-form root to machine precision
    if (fnorm > 0.0) {
        Eigen::MatrixXd jac(d, d);
        for (int j = 0; j < d; ++j) {
            const double h = std::max(1e-6, 1e-6 * std::abs(theta(j)));
            Eigen::VectorXd shifted = theta;
            shifted(j) += h;
            jac.col(j) = (residual(sample, u, shifted) - f) / h;
        }
        const Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
        if (lu.isInvertible()) {
            const Eigen::VectorXd trial = theta + lu.solve(-f);
            const Eigen::VectorXd ftrial = residual(sample, u, trial);
            if (ftrial.norm() < fnorm) {
                theta = trial;
                fnorm = ftrial.norm();
            }
        }
    }
    PointEstimate est;
    est.theta = theta;
    est.iterations = iter;
    est.residual_norm = fnorm;
    est.used_closed_form = false;
    return est;
}

}  // namespace

PointEstimate solve_weighted(const WeightedSampleView& sample, const EstimatingFunction& u,
                             const SolverConfig& config) {
    if (sample.values.rows() != sample.weights.size()) {
        throw std::invalid_argument("weighted sample rows and weights disagree");
    }
    if (u.closed_form) {
        PointEstimate est;
        est.theta = u.closed_form(sample);
        est.residual_norm = residual(sample, u, est.theta).norm() / sample.weights.sum();
        est.used_closed_form = true;
        return est;
    }
    return newton_solve(sample, u, config);
}

PointEstimate solve_estimating_equation(const FractionalImputation& imputation,
                                        const EstimatingFunction& u, const SolverConfig& config,
                                        const Eigen::VectorXd* record_base_weights,
                                        const Eigen::VectorXd* row_weight_override) {
    const int rows = imputation.row_count();
    Eigen::VectorXd eff(rows);
    const double uniform = 1.0 / static_cast<double>(imputation.record_count());
    for (int r = 0; r < rows; ++r) {
        const int i = imputation.row_record[static_cast<std::size_t>(r)];
        const double base = record_base_weights ? (*record_base_weights)(i) : uniform;
        const double frac = row_weight_override ? (*row_weight_override)(r) : imputation.weights(r);
        eff(r) = base * frac;
    }
    return solve_weighted(WeightedSampleView{imputation.values, eff}, u, config);
}

EstimatingFunction builtin_mean(int coord) {
    EstimatingFunction u;
    u.name = "mean:" + std::to_string(coord + 1);
    u.theta_dim = 1;
    u.report_component = 0;
    u.evaluate = [coord](const Eigen::VectorXd& theta, RowRef y, Eigen::Ref<Eigen::VectorXd> out) {
        out(0) = y(coord) - theta(0);
    };
    u.closed_form = [coord](const WeightedSampleView& sample) {
        const double total = sample.weights.sum();
        const double s = sample.weights.dot(sample.values.col(coord));
        Eigen::VectorXd theta(1);
        theta(0) = s / total;
        return theta;
    };
    return u;
}

EstimatingFunction builtin_proportion(int coord, double threshold) {
    EstimatingFunction u;
    u.name = "prop:" + std::to_string(coord + 1) + ":" + std::to_string(threshold);
    u.theta_dim = 1;
    u.report_component = 0;
    u.evaluate = [coord, threshold](const Eigen::VectorXd& theta, RowRef y,
                                    Eigen::Ref<Eigen::VectorXd> out) {
        out(0) = (y(coord) < threshold ? 1.0 : 0.0) - theta(0);
    };
    u.closed_form = [coord, threshold](const WeightedSampleView& sample) {
        const double total = sample.weights.sum();
        double s = 0.0;
        for (Eigen::Index r = 0; r < sample.values.rows(); ++r) {
            if (sample.values(r, coord) < threshold) {
                s += sample.weights(r);
            }
        }
        Eigen::VectorXd theta(1);
        theta(0) = s / total;
        return theta;
    };
    return u;
}

EstimatingFunction builtin_correlation(int coord_a, int coord_b) {
    // moment system: theta = (mu_a, mu_b, var_a, var_b, corr)
    EstimatingFunction u;
    u.name = "corr:" + std::to_string(coord_a + 1) + ":" + std::to_string(coord_b + 1);
    u.theta_dim = 5;
    u.report_component = 4;
    u.evaluate = [coord_a, coord_b](const Eigen::VectorXd& theta, RowRef y,
                                    Eigen::Ref<Eigen::VectorXd> out) {
        const double da = y(coord_a) - theta(0);
        const double db = y(coord_b) - theta(1);
        out(0) = da;
        out(1) = db;
        out(2) = da * da - theta(2);
        out(3) = db * db - theta(3);
        out(4) = da * db - theta(4) * std::sqrt(theta(2) * theta(3));
    };
    u.closed_form = [coord_a, coord_b](const WeightedSampleView& sample) {
        const double total = sample.weights.sum();
        const double ma = sample.weights.dot(sample.values.col(coord_a)) / total;
        const double mb = sample.weights.dot(sample.values.col(coord_b)) / total;
        double va = 0.0;
        double vb = 0.0;
        double cab = 0.0;
        for (Eigen::Index r = 0; r < sample.values.rows(); ++r) {
            const double w = sample.weights(r);
            const double da = sample.values(r, coord_a) - ma;
            const double db = sample.values(r, coord_b) - mb;
            va += w * da * da;
            vb += w * db * db;
            cab += w * da * db;
        }
        va /= total;
        vb /= total;
        cab /= total;
        Eigen::VectorXd theta(5);
        theta << ma, mb, va, vb, cab / std::sqrt(va * vb);
        return theta;
    };
    return u;
}

namespace {

int resolve_coordinate(const std::string& token, const std::vector<std::string>& columns) {
    try {
        std::size_t pos = 0;
        const int k = std::stoi(token, &pos);
        if (pos == token.size()) {
            if (k < 1 || k > static_cast<int>(columns.size())) {
                throw ConfigError("column index " + token + " out of range");
            }
            return k - 1;
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        // fall through to name lookup
    }
    for (int j = 0; j < static_cast<int>(columns.size()); ++j) {
        if (columns[static_cast<std::size_t>(j)] == token) {
            return j;
        }
    }
    throw ConfigError("unknown column '" + token + "' in estimand spec");
}

}  // namespace

EstimatingFunction parse_estimand(const std::string& spec,
                                  const std::vector<std::string>& columns) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ':')) {
        parts.push_back(part);
    }
    if (parts.empty()) {
        throw ConfigError("empty estimand spec");
    }
    if (parts[0] == "mean" && parts.size() == 2) {
        auto u = builtin_mean(resolve_coordinate(parts[1], columns));
        u.name = spec;
        return u;
    }
    if (parts[0] == "prop" && parts.size() == 3) {
        double c = 0.0;
        try {
            c = std::stod(parts[2]);
        } catch (const std::exception&) {
            throw ConfigError("bad threshold in estimand spec '" + spec + "'");
        }
        auto u = builtin_proportion(resolve_coordinate(parts[1], columns), c);
        u.name = spec;
        return u;
    }
    if (parts[0] == "corr" && parts.size() == 3) {
        auto u = builtin_correlation(resolve_coordinate(parts[1], columns),
                                     resolve_coordinate(parts[2], columns));
        u.name = spec;
        return u;
    }
    throw ConfigError("unrecognized estimand spec '" + spec +
                      "' (expected mean:k, prop:k:c or corr:k:l)");
}

}  // namespace figmm
