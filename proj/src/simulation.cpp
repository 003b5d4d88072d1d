#include "figmm/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "figmm/errors.hpp"
#include "figmm/model_select.hpp"
#include "figmm/parallel.hpp"

namespace figmm::sim {

namespace {

constexpr std::uint64_t kTagPopulation = 0x504F50ULL;
constexpr std::uint64_t kTagMissingness = 0x4D495353ULL;
constexpr std::uint64_t kTagFit = 0x464954ULL;
constexpr std::uint64_t kOracleSeed = 424242ULL;
constexpr std::int64_t kOracleDraws = 10'000'000;

Eigen::MatrixXd ar_covariance(double rho) {
    Eigen::MatrixXd cov(3, 3);
    cov << 1.0, rho, rho * rho, rho, 1.0, rho, rho * rho, rho, 1.0;
    return cov;
}

double expit(double u) { return 1.0 / (1.0 + std::exp(-u)); }

double exp_cdf(double c) { return c <= 0.0 ? 0.0 : 1.0 - std::exp(-c); }

struct M1Params {
    Eigen::Vector3d alpha{0.3, 0.3, 0.4};
    Eigen::Matrix3d means;
    Eigen::Matrix3d chol;
    M1Params() {
        means << -3.0, -3.0, -3.0, 1.0, 1.0, 1.0, 5.0, 5.0, 5.0;
        chol = Eigen::LLT<Eigen::Matrix3d>(ar_covariance(0.7)).matrixL();
    }
};

const M1Params& m1_params() {
    static const M1Params params;
    return params;
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

SimModel parse_sim_model(const std::string& name) {
    if (name == "M1") return SimModel::M1;
    if (name == "M2") return SimModel::M2;
    if (name == "M3") return SimModel::M3;
    if (name == "M4") return SimModel::M4;
    throw ConfigError("unknown simulation model '" + name + "' (expected M1..M4)");
}

std::string to_string(SimModel model) {
    switch (model) {
        case SimModel::M1: return "M1";
        case SimModel::M2: return "M2";
        case SimModel::M3: return "M3";
        case SimModel::M4: return "M4";
    }
    return "?";
}

std::string to_string(Method method) {
    switch (method) {
        case Method::full: return "Full";
        case Method::cc: return "CC";
        case Method::pfi: return "PFI";
        case Method::sfi: return "SFI";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    if (name == "Full" || name == "full") return Method::full;
    if (name == "CC" || name == "cc") return Method::cc;
    if (name == "PFI" || name == "pfi") return Method::pfi;
    if (name == "SFI" || name == "sfi") return Method::sfi;
    throw ConfigError("unknown method '" + name + "' (expected Full, CC, PFI or SFI)");
}

double miss_probability(const MissingnessMechanism& mech, int item, double y1) {
    if (item == 2) {
        return expit(mech.intercept_y2 + mech.slope_y2 * y1);
    }
    if (item == 3) {
        return expit(mech.intercept_y3 + mech.slope_y3 * y1);
    }
    throw std::invalid_argument("missingness applies to items 2 and 3");
}

Eigen::MatrixXd generate_population(SimModel model, int n, RngStream& rng) {
    Eigen::MatrixXd out(n, 3);
    switch (model) {
        case SimModel::M1: {
            const M1Params& pars = m1_params();
            for (int i = 0; i < n; ++i) {
                const double u = rng.uniform();
                const int g = u < pars.alpha(0) ? 0 : (u < pars.alpha(0) + pars.alpha(1) ? 1 : 2);
                Eigen::Vector3d z;
                rng.fill_normals(z.data(), 3);
                out.row(i) = (pars.means.row(g).transpose() + pars.chol * z).transpose();
            }
            break;
        }
        case SimModel::M2: {
            const M1Params& pars = m1_params();
            for (int i = 0; i < n; ++i) {
                const double u = rng.uniform();
                const int g = u < pars.alpha(0) ? 0 : (u < pars.alpha(0) + pars.alpha(1) ? 1 : 2);
                if (g == 0) {
                    for (int j = 0; j < 3; ++j) {
                        out(i, j) = -std::log(rng.uniform());
                    }
                } else {
                    Eigen::Vector3d z;
                    rng.fill_normals(z.data(), 3);
                    out.row(i) = (pars.means.row(g).transpose() + pars.chol * z).transpose();
                }
            }
            break;
        }
        case SimModel::M3: {
            for (int i = 0; i < n; ++i) {
                const double y1 = 1.0 + rng.normal();
                const double y2 = 0.5 * y1 - std::log(rng.uniform());
                const double chi = rng.normal();
                out(i, 0) = y1;
                out(i, 1) = y2;
                out(i, 2) = y2 + chi * chi;
            }
            break;
        }
        case SimModel::M4: {
            Eigen::Matrix2d cov;
            cov << 1.0, 0.5, 0.5, 1.0;
            const Eigen::Matrix2d chol = Eigen::LLT<Eigen::Matrix2d>(cov).matrixL();
            const Eigen::Vector2d mean{1.0, 2.0};
            for (int i = 0; i < n; ++i) {
                Eigen::Vector2d z;
                rng.fill_normals(z.data(), 2);
                const Eigen::Vector2d y = mean + chol * z;
                out(i, 0) = y(0);
                out(i, 1) = y(1);
                out(i, 2) = y(1) * y(1) + rng.normal();
            }
            break;
        }
    }
    return out;
}

IncompleteDataset impose_missingness(const Eigen::MatrixXd& complete,
                                     const MissingnessMechanism& mech, RngStream& rng,
                                     std::array<double, 2>* realized_miss_rates) {
    const int n = static_cast<int>(complete.rows());
    if (complete.cols() < 3) {
        throw std::invalid_argument("the response mechanism needs columns y1, y2, y3");
    }
    const int p = static_cast<int>(complete.cols());
    std::vector<std::vector<bool>> observed(
        static_cast<std::size_t>(n), std::vector<bool>(static_cast<std::size_t>(p), true));
    int missing2 = 0;
    int missing3 = 0;
    for (int i = 0; i < n; ++i) {
        const double y1 = complete(i, 0);
        if (rng.uniform() < miss_probability(mech, 2, y1)) {
            observed[static_cast<std::size_t>(i)][1] = false;
            ++missing2;
        }
        if (rng.uniform() < miss_probability(mech, 3, y1)) {
            observed[static_cast<std::size_t>(i)][2] = false;
            ++missing3;
        }
    }
    if (realized_miss_rates) {
        (*realized_miss_rates)[0] = static_cast<double>(missing2) / n;
        (*realized_miss_rates)[1] = static_cast<double>(missing3) / n;
    }
    std::vector<std::string> names;
    for (int j = 0; j < p; ++j) {
        names.push_back("y" + std::to_string(j + 1));
    }
    return IncompleteDataset(std::move(names), complete, std::move(observed));
}

TrueValues mc_oracle_true_values(SimModel model, std::int64_t draws, std::uint64_t seed) {
    TrueValues base = [&] {
        switch (model) {
            case SimModel::M1:
            case SimModel::M2: return TrueValues{0, 0, 0, 0, -2.0, -2.0};
            case SimModel::M3: return TrueValues{0, 0, 0, 0, 2.0, 3.0};
            case SimModel::M4: return TrueValues{0, 0, 0, 0, 2.0, 5.0};
        }
        return TrueValues{};
    }();
    RngStream rng(seed);
    const int chunk = 100000;
    double s2 = 0.0;
    double s3 = 0.0;
    std::int64_t c2 = 0;
    std::int64_t c3 = 0;
    std::int64_t done = 0;
    while (done < draws) {
        const int m = static_cast<int>(std::min<std::int64_t>(chunk, draws - done));
        const Eigen::MatrixXd y = generate_population(model, m, rng);
        s2 += y.col(1).sum();
        s3 += y.col(2).sum();
        c2 += (y.col(1).array() < base.c2).count();
        c3 += (y.col(2).array() < base.c3).count();
        done += m;
    }
    base.theta2 = s2 / static_cast<double>(draws);
    base.theta3 = s3 / static_cast<double>(draws);
    base.p2 = static_cast<double>(c2) / static_cast<double>(draws);
    base.p3 = static_cast<double>(c3) / static_cast<double>(draws);
    return base;
}

TrueValues true_values(SimModel model) {
    switch (model) {
        case SimModel::M1: {
            TrueValues tv{0, 0, 0, 0, -2.0, -2.0};
            tv.theta2 = tv.theta3 = 0.3 * -3.0 + 0.3 * 1.0 + 0.4 * 5.0;
            const auto prop = [&](double c) {
                return 0.3 * normal_cdf(c + 3.0) + 0.3 * normal_cdf(c - 1.0) +
                       0.4 * normal_cdf(c - 5.0);
            };
            tv.p2 = prop(tv.c2);
            tv.p3 = prop(tv.c3);
            return tv;
        }
        case SimModel::M2: {
            TrueValues tv{0, 0, 0, 0, -2.0, -2.0};
            tv.theta2 = tv.theta3 = 0.3 * 1.0 + 0.3 * 1.0 + 0.4 * 5.0;
            const auto prop = [&](double c) {
                return 0.3 * exp_cdf(c) + 0.3 * normal_cdf(c - 1.0) + 0.4 * normal_cdf(c - 5.0);
            };
            tv.p2 = prop(tv.c2);
            tv.p3 = prop(tv.c3);
            return tv;
        }
        case SimModel::M3: {
            // proportions have no closed form; seed-pinned oracle, cached
            static const TrueValues oracle =
                mc_oracle_true_values(SimModel::M3, kOracleDraws, kOracleSeed);
            TrueValues tv = oracle;
            tv.theta2 = 1.5;  // 0.5 * E y1 + E Gamma(1,1)
            tv.theta3 = 2.5;  // theta2 + E chi^2_1
            return tv;
        }
        case SimModel::M4: {
            static const TrueValues oracle =
                mc_oracle_true_values(SimModel::M4, kOracleDraws, kOracleSeed);
            TrueValues tv = oracle;
            tv.theta2 = 2.0;
            tv.theta3 = 5.0;  // E y2^2 = 4 + 1
            tv.p2 = 0.5;      // pr(y2 < 2) with y2 ~ N(2, 1)
            return tv;
        }
    }
    return TrueValues{};
}

std::vector<EstimatingFunction> study_estimands(SimModel model) {
    const TrueValues tv = true_values(model);
    std::vector<EstimatingFunction> out;
    out.push_back(builtin_mean(1));
    out.push_back(builtin_mean(2));
    out.push_back(builtin_proportion(1, tv.c2));
    out.push_back(builtin_proportion(2, tv.c3));
    return out;
}

PointEstimate complete_case_estimate(const IncompleteDataset& data,
                                     const EstimatingFunction& u) {
    std::vector<int> complete;
    for (int i = 0; i < data.size(); ++i) {
        if (data.fully_observed(i)) {
            complete.push_back(i);
        }
    }
    if (complete.empty()) {
        throw Error("no complete cases");
    }
    Eigen::MatrixXd values(static_cast<int>(complete.size()), data.dim());
    for (std::size_t r = 0; r < complete.size(); ++r) {
        values.row(static_cast<Eigen::Index>(r)) = data.matrix().row(complete[r]);
    }
    const Eigen::VectorXd weights = Eigen::VectorXd::Ones(values.rows());
    return solve_weighted(WeightedSampleView{values, weights}, u);
}

ExternalEstimates read_external_estimates(const std::string& name, const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            header.push_back(field);
        }
        break;
    }
    const bool with_se = header.size() >= 9;
    if (header.size() != 5 && !with_se) {
        throw IoError("external estimate file needs columns replicate,theta2,theta3,P2,P3"
                      " with optional se_* columns: " +
                      path);
    }
    std::vector<std::array<double, 8>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::stringstream ss(line);
        std::string field;
        std::vector<double> vals;
        bool first = true;
        while (std::getline(ss, field, ',')) {
            if (first) {  // replicate index, unused
                first = false;
                continue;
            }
            vals.push_back(std::stod(field));
        }
        if (vals.size() != (with_se ? 8u : 4u)) {
            throw IoError("bad row in external estimate file " + path);
        }
        std::array<double, 8> row{};
        std::copy(vals.begin(), vals.end(), row.begin());
        rows.push_back(row);
    }
    ExternalEstimates ext;
    ext.name = name;
    ext.estimates.resize(static_cast<int>(rows.size()), 4);
    if (with_se) {
        ext.std_errors.emplace(static_cast<int>(rows.size()), 4);
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (int e = 0; e < 4; ++e) {
            ext.estimates(static_cast<Eigen::Index>(r), e) = rows[r][static_cast<std::size_t>(e)];
            if (with_se) {
                (*ext.std_errors)(static_cast<Eigen::Index>(r), e) =
                    rows[r][static_cast<std::size_t>(4 + e)];
            }
        }
    }
    return ext;
}

namespace {

struct FitOutcome {
    std::array<double, 4> est{};
    std::array<Interval, 4> ci{};
    bool has_ci = false;
    int selected_g = 0;
    bool ok = false;
    std::string error;
};

double mean_variance(const Eigen::VectorXd& col) {
    const int m = static_cast<int>(col.size());
    const double mean = col.mean();
    const double ss = (col.array() - mean).square().sum();
    return ss / static_cast<double>(m - 1) / static_cast<double>(m);
}

// closed-form Wald intervals for the Full and complete-case methods; the
// estimand order is (mean y2, mean y3, prop y2, prop y3)
FitOutcome closed_form_outcome(const Eigen::MatrixXd& rows, const TrueValues& tv, double level) {
    FitOutcome out;
    const int m = static_cast<int>(rows.rows());
    const double p2 = (rows.col(1).array() < tv.c2).cast<double>().mean();
    const double p3 = (rows.col(2).array() < tv.c3).cast<double>().mean();
    out.est = {rows.col(1).mean(), rows.col(2).mean(), p2, p3};
    const std::array<double, 4> var = {mean_variance(rows.col(1)), mean_variance(rows.col(2)),
                                       p2 * (1.0 - p2) / m, p3 * (1.0 - p3) / m};
    for (int e = 0; e < 4; ++e) {
        out.ci[static_cast<std::size_t>(e)] =
            confidence_interval(out.est[static_cast<std::size_t>(e)],
                                var[static_cast<std::size_t>(e)], level);
    }
    out.has_ci = true;
    out.ok = true;
    return out;
}

FitOutcome figmm_outcome(const IncompleteDataset& data, const StudyConfig& config, int g_min,
                         int g_max, std::uint64_t fit_seed,
                         const std::vector<EstimatingFunction>& estimands) {
    SelectConfig sc;
    sc.g_min = g_min;
    sc.g_max = g_max;
    sc.em = config.em;
    sc.em.imputations = config.imputations;
    sc.em.seed = fit_seed;
    sc.em.threads = 1;
    sc.threads = 1;
    const BicReport report = select_g(data, sc);
    const EmResult& fit = report.selected().fit;

    FitOutcome out;
    out.selected_g = report.selected_components;
    if (config.jackknife) {
        JackknifeConfig jc;
        jc.replicate = config.replicate;
        jc.threads = 1;
        const JackknifeRun run = jackknife_pipeline(data, fit, estimands, jc, config.level);
        for (int e = 0; e < 4; ++e) {
            out.est[static_cast<std::size_t>(e)] = run.estimands[static_cast<std::size_t>(e)].estimate;
            out.ci[static_cast<std::size_t>(e)] = run.estimands[static_cast<std::size_t>(e)].interval;
        }
        out.has_ci = true;
    } else {
        for (int e = 0; e < 4; ++e) {
            const PointEstimate est =
                solve_estimating_equation(fit.imputation, estimands[static_cast<std::size_t>(e)]);
            out.est[static_cast<std::size_t>(e)] = est.value(estimands[static_cast<std::size_t>(e)]);
        }
    }
    out.ok = true;
    return out;
}

}  // namespace

const MethodResult& SimResult::method(const std::string& name) const {
    for (const auto& m : methods) {
        if (m.name == name) {
            return m;
        }
    }
    throw Error("method '" + name + "' is not part of this study");
}

SimResult run_study(const StudyConfig& config) {
    if (config.replicates < 1) {
        throw ConfigError("need at least one replicate");
    }
    const int b_count = config.replicates;
    const int m_count = static_cast<int>(config.methods.size());
    const TrueValues tv = true_values(config.model);
    const std::vector<EstimatingFunction> estimands = study_estimands(config.model);
    const double nan = std::numeric_limits<double>::quiet_NaN();

    std::vector<Eigen::MatrixXd> estimates(
        static_cast<std::size_t>(m_count), Eigen::MatrixXd::Constant(b_count, 4, nan));
    std::vector<Eigen::MatrixXi> covered(static_cast<std::size_t>(m_count),
                                         Eigen::MatrixXi::Constant(b_count, 4, -1));
    std::vector<std::string> failures(static_cast<std::size_t>(b_count));
    std::vector<int> selected_g(static_cast<std::size_t>(b_count), 0);
    Eigen::VectorXd rate2(b_count);
    Eigen::VectorXd rate3(b_count);

    parallel_for(b_count, config.threads, [&](int b) {
        RngStream pop_rng = RngStream(config.seed).substream(kTagPopulation, static_cast<std::uint64_t>(b));
        RngStream miss_rng = RngStream(config.seed).substream(kTagMissingness, static_cast<std::uint64_t>(b));
        const Eigen::MatrixXd pop = generate_population(config.model, config.n, pop_rng);
        std::array<double, 2> rates{};
        const IncompleteDataset incomplete =
            impose_missingness(pop, config.mechanism, miss_rng, &rates);
        rate2(b) = rates[0];
        rate3(b) = rates[1];
        const std::uint64_t fit_seed =
            RngStream(config.seed).substream(kTagFit, static_cast<std::uint64_t>(b)).seed();

        for (int m = 0; m < m_count; ++m) {
            const Method method = config.methods[static_cast<std::size_t>(m)];
            FitOutcome out;
            try {
                switch (method) {
                    case Method::full:
                        out = closed_form_outcome(pop, tv, config.level);
                        break;
                    case Method::cc: {
                        std::vector<int> rows;
                        for (int i = 0; i < incomplete.size(); ++i) {
                            if (incomplete.fully_observed(i)) {
                                rows.push_back(i);
                            }
                        }
                        if (rows.empty()) {
                            throw Error("no complete cases");
                        }
                        Eigen::MatrixXd cc(static_cast<int>(rows.size()), incomplete.dim());
                        for (std::size_t r = 0; r < rows.size(); ++r) {
                            cc.row(static_cast<Eigen::Index>(r)) = pop.row(rows[r]);
                        }
                        out = closed_form_outcome(cc, tv, config.level);
                        break;
                    }
                    case Method::pfi:
                        out = figmm_outcome(incomplete, config, 1, 1, fit_seed, estimands);
                        break;
                    case Method::sfi:
                        out = figmm_outcome(incomplete, config, config.g_min, config.g_max,
                                            fit_seed, estimands);
                        selected_g[static_cast<std::size_t>(b)] = out.selected_g;
                        break;
                }
            } catch (const Error& e) {
                out.ok = false;
                out.error = e.what();
            }
            if (!out.ok) {
                if (failures[static_cast<std::size_t>(b)].empty()) {
                    failures[static_cast<std::size_t>(b)] =
                        to_string(method) + " failed in replicate " + std::to_string(b) + ": " +
                        out.error;
                }
                continue;
            }
            const std::array<double, 4> truths = {tv.theta2, tv.theta3, tv.p2, tv.p3};
            for (int e = 0; e < 4; ++e) {
                estimates[static_cast<std::size_t>(m)](b, e) = out.est[static_cast<std::size_t>(e)];
                if (out.has_ci) {
                    covered[static_cast<std::size_t>(m)](b, e) =
                        out.ci[static_cast<std::size_t>(e)].contains(
                            truths[static_cast<std::size_t>(e)])
                            ? 1
                            : 0;
                }
            }
        }
    });

    SimResult result;
    result.truth = tv;
    result.miss_rate_y2 = rate2.mean();
    result.miss_rate_y3 = rate3.mean();
    result.g_histogram.assign(static_cast<std::size_t>(config.g_max + 1), 0);
    for (int b = 0; b < b_count; ++b) {
        const int g = selected_g[static_cast<std::size_t>(b)];
        if (g >= 1 && g <= config.g_max) {
            result.g_histogram[static_cast<std::size_t>(g)] += 1;
        }
        if (!failures[static_cast<std::size_t>(b)].empty()) {
            result.warnings.push_back(failures[static_cast<std::size_t>(b)]);
        }
    }

    const std::array<double, 4> truths = {tv.theta2, tv.theta3, tv.p2, tv.p3};
    auto summarize = [&](const std::string& name, const Eigen::MatrixXd& est,
                         const Eigen::MatrixXi& cov) {
        MethodResult mr;
        mr.name = name;
        mr.estimates = est;
        mr.covered = cov;
        for (int e = 0; e < 4; ++e) {
            double mse = 0.0;
            double mean_est = 0.0;
            int used = 0;
            int cover_count = 0;
            int cover_known = 0;
            for (int b = 0; b < static_cast<int>(est.rows()); ++b) {
                const double v = est(b, e);
                if (std::isnan(v)) {
                    continue;
                }
                ++used;
                mean_est += v;
                const double d = v - truths[static_cast<std::size_t>(e)];
                mse += d * d;
                if (cov(b, e) >= 0) {
                    ++cover_known;
                    cover_count += cov(b, e);
                }
            }
            CellStats cell;
            cell.mse = used > 0 ? mse / used : nan;
            cell.mean_estimate = used > 0 ? mean_est / used : nan;
            cell.coverage_pct =
                cover_known > 0 ? 100.0 * cover_count / cover_known : -1.0;
            mr.cells[static_cast<std::size_t>(e)] = cell;
        }
        mr.failures = static_cast<int>(est.rows()) -
                      static_cast<int>((est.col(0).array() == est.col(0).array()).count());
        return mr;
    };

    for (int m = 0; m < m_count; ++m) {
        result.methods.push_back(summarize(to_string(config.methods[static_cast<std::size_t>(m)]),
                                           estimates[static_cast<std::size_t>(m)],
                                           covered[static_cast<std::size_t>(m)]));
    }
    if (config.external) {
        const auto& ext = *config.external;
        Eigen::MatrixXi cov = Eigen::MatrixXi::Constant(ext.estimates.rows(), 4, -1);
        if (ext.std_errors) {
            for (int b = 0; b < static_cast<int>(ext.estimates.rows()); ++b) {
                for (int e = 0; e < 4; ++e) {
                    const double se = (*ext.std_errors)(b, e);
                    const Interval ci = confidence_interval(ext.estimates(b, e), se * se,
                                                            config.level);
                    cov(b, e) = ci.contains(truths[static_cast<std::size_t>(e)]) ? 1 : 0;
                }
            }
        }
        result.methods.push_back(summarize(ext.name, ext.estimates, cov));
    }

    // relative MSE against the Full benchmark
    const MethodResult* full = nullptr;
    for (const auto& m : result.methods) {
        if (m.name == "Full") {
            full = &m;
        }
    }
    for (auto& m : result.methods) {
        for (int e = 0; e < 4; ++e) {
            auto& cell = m.cells[static_cast<std::size_t>(e)];
            cell.rmse_ratio =
                full ? 100.0 * cell.mse / full->cells[static_cast<std::size_t>(e)].mse : nan;
        }
    }
    return result;
}

namespace {

void write_common_metadata(std::ostream& out, const SimResult& result,
                           const StudyConfig& config) {
    out << "# model: " << to_string(config.model) << '\n';
    out << "# n: " << config.n << '\n';
    out << "# replicates: " << config.replicates << '\n';
    out << "# seed: " << config.seed << '\n';
    out << "# imputations: " << config.imputations << '\n';
    out << "# g_range: " << config.g_min << ".." << config.g_max << '\n';
    out << "# jackknife: " << (config.jackknife ? "on" : "off") << '\n';
    out << "# truth_theta2: " << format_double(result.truth.theta2) << '\n';
    out << "# truth_theta3: " << format_double(result.truth.theta3) << '\n';
    out << "# truth_P2: " << format_double(result.truth.p2) << '\n';
    out << "# truth_P3: " << format_double(result.truth.p3) << '\n';
    out << "# thresholds: c2=" << result.truth.c2 << " c3=" << result.truth.c3 << '\n';
    out << "# realized_miss_rate_y2: " << result.miss_rate_y2 << '\n';
    out << "# realized_miss_rate_y3: " << result.miss_rate_y3 << '\n';
}

}  // namespace

void write_table_csv(std::ostream& out, const SimResult& result, const StudyConfig& config) {
    write_common_metadata(out, result, config);
    out << "method,estimand,rmse_ratio,coverage,mse,mean_estimate,failures\n";
    for (const auto& m : result.methods) {
        for (int e = 0; e < 4; ++e) {
            const auto& cell = m.cells[static_cast<std::size_t>(e)];
            out << m.name << ',' << result.estimand_names[static_cast<std::size_t>(e)] << ','
                << format_double(cell.rmse_ratio) << ',';
            if (cell.coverage_pct >= 0.0) {
                out << format_double(cell.coverage_pct);
            } else {
                out << "NA";
            }
            out << ',' << format_double(cell.mse) << ',' << format_double(cell.mean_estimate)
                << ',' << m.failures << '\n';
        }
    }
}

void write_histogram_csv(std::ostream& out, const SimResult& result, const StudyConfig& config) {
    write_common_metadata(out, result, config);
    out << "G,count\n";
    for (int g = 1; g < static_cast<int>(result.g_histogram.size()); ++g) {
        out << g << ',' << result.g_histogram[static_cast<std::size_t>(g)] << '\n';
    }
}

}  // namespace figmm::sim
