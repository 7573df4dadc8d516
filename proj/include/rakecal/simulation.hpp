#pragma once

// Data-generating mechanisms for the measurement-error simulation studies and
// the scenario runner that aggregates estimator performance over replicates.

#include <Eigen/Dense>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rakecal/calibration.hpp"
#include "rakecal/cohort.hpp"
#include "rakecal/design_bootstrap.hpp"
#include "rakecal/errors.hpp"
#include "rakecal/numeric.hpp"
#include "rakecal/raking.hpp"
#include "rakecal/survival_core.hpp"

namespace rakecal {

enum class ErrorDistribution { Normal, GammaMixture };

enum class EstimatorKind { True, Naive, Complete, RC, RSRC, GRRC, GRN };

inline std::string_view to_string(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::True: return "True";
        case EstimatorKind::Naive: return "Naive";
        case EstimatorKind::Complete: return "Complete";
        case EstimatorKind::RC: return "RC";
        case EstimatorKind::RSRC: return "RSRC";
        case EstimatorKind::GRRC: return "GRRC";
        case EstimatorKind::GRN: return "GRN";
    }
    return "?";
}

inline const std::vector<EstimatorKind>& all_estimators() {
    static const std::vector<EstimatorKind> all{EstimatorKind::True, EstimatorKind::RC,   EstimatorKind::RSRC,
                                                EstimatorKind::GRRC, EstimatorKind::GRN,  EstimatorKind::Naive,
                                                EstimatorKind::Complete};
    return all;
}

struct Misclassification {
    double sensitivity = 0.9;
    double specificity = 0.9;
};

struct ScenarioConfig {
    std::string name = "scenario";
    Eigen::Index n = 2000;
    SamplingPlan validation = SamplingPlan::srs(200, 0);

    double beta_x = std::log(1.5);
    double beta_z = std::log(2.0);
    double lambda0 = 0.1;
    double rho_xz = 0.5;

    double censor_target = 0.25;
    std::optional<double> censor_lower;  // tuned when absent; +inf means no censoring
    double censor_length = 2.0;

    ErrorDistribution error_dist = ErrorDistribution::Normal;
    double mix_p = 0.5;  // probability of the point mass at zero
    double gamma_shape = 2.0;

    double sigma2_eps = 0.5;
    double sigma2_nu = 0.5;
    double sigma_eps_nu = 0.15;
    std::array<double, 3> alpha{0.0, 0.9, -0.2};
    std::array<double, 3> gamma{std::numeric_limits<double>::quiet_NaN(), 0.2, -0.3};  // NaN gamma0: 3 sigma_nu
    std::optional<Misclassification> misclass;

    ErrorMode analysis_mode = ErrorMode::Both;
    std::vector<EstimatorKind> estimators = all_estimators();
    std::vector<double> rsrc_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

    int reps = 500;
    std::uint64_t seed = 20240101;
    int bootstrap = 0;        // 0: no bootstrap standard errors
    int rsrc_bootstrap = 100; // replicates for RSRC when bootstrapping
    unsigned threads = 0;     // 0: RAKECAL_THREADS or hardware concurrency

    double gamma0() const { return std::isnan(gamma[0]) ? 3.0 * std::sqrt(sigma2_nu) : gamma[0]; }

    void validate() const {
        if (n < 10) fail(ErrorCode::InvalidConfig, "cohort size too small");
        if (!(lambda0 > 0.0)) fail(ErrorCode::InvalidConfig, "baseline hazard must be positive");
        if (!(std::abs(rho_xz) < 1.0)) fail(ErrorCode::InvalidConfig, "rho_xz must lie in (-1, 1)");
        if (!(sigma2_eps >= 0.0 && sigma2_nu >= 0.0)) fail(ErrorCode::InvalidConfig, "error variances must be nonnegative");
        if (sigma_eps_nu * sigma_eps_nu > sigma2_eps * sigma2_nu * (1.0 + 1e-12)) {
            fail(ErrorCode::InvalidConfig, "error covariance matrix is not positive semidefinite");
        }
        if (error_dist == ErrorDistribution::GammaMixture) {
            if (!(mix_p > 0.0 && mix_p < 1.0)) fail(ErrorCode::InvalidConfig, "mix_p must lie in (0, 1)");
            if (!(gamma_shape > 0.0)) fail(ErrorCode::InvalidConfig, "gamma shape must be positive");
        }
        if (misclass) {
            const auto& m = *misclass;
            if (!(m.sensitivity > 0.0 && m.sensitivity <= 1.0 && m.specificity > 0.0 && m.specificity <= 1.0)) {
                fail(ErrorCode::InvalidConfig, "sensitivity and specificity must lie in (0, 1]");
            }
        }
        if (!(censor_length > 0.0)) fail(ErrorCode::InvalidConfig, "censoring interval length must be positive");
        if (censor_lower && !(*censor_lower >= 0.0)) fail(ErrorCode::InvalidConfig, "censoring lower endpoint must be >= 0");
        if (!(censor_target >= 0.0 && censor_target < 1.0)) fail(ErrorCode::InvalidConfig, "censoring target must lie in [0, 1)");
        if (reps < 1) fail(ErrorCode::InvalidConfig, "reps must be positive");
        if (bootstrap == 1 || bootstrap < 0) fail(ErrorCode::InvalidConfig, "bootstrap must be 0 or >= 2");
        if (estimators.empty()) fail(ErrorCode::InvalidConfig, "no estimators requested");
    }
};

namespace detail {

/// Correlation of two standardized gamma margins joined by a Gaussian copula
/// with latent correlation r, by 2-D quadrature on a fine normal grid.
class GammaCopula {
public:
    explicit GammaCopula(double shape) : shape_(shape), dist_(shape, 1.0) {
        const int m = static_cast<int>(2 * kHalfWidth / kStep) + 1;
        grid_.resize(m);
        values_.resize(m);
        for (int i = 0; i < m; ++i) {
            const double z = -kHalfWidth + kStep * i;
            grid_[i] = z;
            values_[i] = standardized(z);
        }
    }

    /// Standardized gamma variate (mean 0, variance 1) at normal score z.
    double standardized(double z) const {
        static const boost::math::normal_distribution<double> unit;
        const double g = z <= 0.0 ? boost::math::quantile(dist_, boost::math::cdf(unit, z))
                                  : boost::math::quantile(boost::math::complement(dist_, boost::math::cdf(unit, -z)));
        return (g - shape_) / std::sqrt(shape_);
    }

    double margin_correlation(double r) const {
        const double s = std::sqrt(1.0 - r * r);
        const double norm = 1.0 / (2.0 * M_PI * s);
        const std::size_t m = grid_.size();
        double exy = 0.0, ex = 0.0, ex2 = 0.0, mass = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double a = grid_[i];
            const double phi_a = std::exp(-0.5 * a * a) / std::sqrt(2.0 * M_PI);
            ex += values_[i] * phi_a;
            ex2 += values_[i] * values_[i] * phi_a;
            mass += phi_a;
            double inner = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                const double b = grid_[j];
                const double qf = (a * a - 2.0 * r * a * b + b * b) / (s * s);
                inner += values_[j] * std::exp(-0.5 * qf);
            }
            exy += values_[i] * inner * norm;
        }
        const double step2 = kStep * kStep;
        const double mean = ex / mass;
        const double var = ex2 / mass - mean * mean;
        return (exy * step2 - mean * mean) / var;
    }

    /// Latent correlation giving margin correlation `target`.
    double latent_for(double target) const {
        if (target == 0.0) return 0.0;
        double lo = target > 0 ? 0.0 : -0.999;
        double hi = target > 0 ? 0.999 : 0.0;
        if ((target > 0 && margin_correlation(hi) < target) || (target < 0 && margin_correlation(lo) > target)) {
            fail(ErrorCode::InvalidConfig, "error correlation unreachable with this gamma shape");
        }
        for (int it = 0; it < 40; ++it) {
            const double mid = 0.5 * (lo + hi);
            (margin_correlation(mid) < target ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

private:
    static constexpr double kHalfWidth = 8.5;
    static constexpr double kStep = 0.025;
    double shape_;
    boost::math::gamma_distribution<double> dist_;
    std::vector<double> grid_;
    std::vector<double> values_;
};

}  // namespace detail

/// Draws the (epsilon, nu) error pair with the configured covariance.
/// Gamma mixture: both errors are zero together with probability mix_p,
/// otherwise standardized gamma variates scaled to variance sigma^2/(1-mix_p)
/// and joined by a Gaussian copula calibrated to the target correlation.
class ErrorSampler {
public:
    explicit ErrorSampler(const ScenarioConfig& c)
        : dist_(c.error_dist), mix_p_(c.mix_p), sd_eps_(std::sqrt(c.sigma2_eps)), sd_nu_(std::sqrt(c.sigma2_nu)) {
        const double denom = sd_eps_ * sd_nu_;
        rho_ = denom > 0.0 ? c.sigma_eps_nu / denom : 0.0;
        if (dist_ == ErrorDistribution::GammaMixture) {
            copula_.emplace(c.gamma_shape);
            latent_ = copula_->latent_for(rho_);
            scale_ = 1.0 / std::sqrt(1.0 - mix_p_);
        } else {
            latent_ = rho_;
        }
    }

    template <class Rng>
    std::pair<double, double> operator()(Rng& rng) const {
        std::normal_distribution<double> unit;
        const double z1 = unit(rng);
        const double z2 = unit(rng);
        const double a = z1;
        const double b = latent_ * z1 + std::sqrt(std::max(0.0, 1.0 - latent_ * latent_)) * z2;
        if (dist_ == ErrorDistribution::Normal) return {sd_eps_ * a, sd_nu_ * b};
        std::uniform_real_distribution<double> u01;
        if (u01(rng) < mix_p_) return {0.0, 0.0};
        const double eps = sd_eps_ > 0.0 ? sd_eps_ * scale_ * copula_->standardized(a) : 0.0;
        const double nu = sd_nu_ > 0.0 ? sd_nu_ * scale_ * copula_->standardized(b) : 0.0;
        return {eps, nu};
    }

    double latent_correlation() const { return latent_; }

private:
    ErrorDistribution dist_;
    double mix_p_;
    double sd_eps_;
    double sd_nu_;
    double rho_ = 0.0;
    double latent_ = 0.0;
    double scale_ = 1.0;
    std::optional<detail::GammaCopula> copula_;
};

namespace detail {

template <class Rng>
std::pair<double, double> draw_covariates(const ScenarioConfig& c, Rng& rng) {
    std::normal_distribution<double> unit;
    const double u = unit(rng);
    const double v = unit(rng);
    const double x = u;
    const double z = 2.0 + c.rho_xz * u + std::sqrt(1.0 - c.rho_xz * c.rho_xz) * v;
    return {x, z};
}

template <class Rng>
double draw_failure_time(const ScenarioConfig& c, double x, double z, Rng& rng) {
    std::exponential_distribution<double> t(c.lambda0 * std::exp(c.beta_x * x + c.beta_z * z));
    return t(rng);
}

}  // namespace detail

/// One simulated phase-one cohort with full truth attached.
template <class Rng>
CohortData generate_cohort(const ScenarioConfig& config, const ErrorSampler& errors, double censor_lower, Rng& rng) {
    const Eigen::Index n = config.n;
    CohortData c;
    c.time_star.resize(n);
    c.event_star.resize(n);
    c.x_star.resize(n, 1);
    c.z.resize(n, 1);
    c.time.resize(n);
    c.event.resize(n);
    c.x.resize(n, 1);
    c.has_truth.assign(static_cast<std::size_t>(n), 1);

    std::uniform_real_distribution<double> u01;
    const double g0 = config.gamma0();
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto [x, z] = detail::draw_covariates(config, rng);
        const double t = detail::draw_failure_time(config, x, z, rng);
        const double cens = std::isinf(censor_lower) ? std::numeric_limits<double>::infinity()
                                                     : censor_lower + config.censor_length * u01(rng);
        const double u = std::min(t, cens);
        const int delta = t <= cens ? 1 : 0;
        const auto [eps, nu] = errors(rng);

        const double x_star = config.alpha[0] + config.alpha[1] * x + config.alpha[2] * z + eps;
        const double omega = g0 + config.gamma[1] * x + config.gamma[2] * z + nu;
        const double u_star = std::abs(u + omega);  // negative times reflected across zero

        int delta_star = delta;
        if (config.misclass) {
            const double flip = delta == 1 ? 1.0 - config.misclass->sensitivity : 1.0 - config.misclass->specificity;
            if (u01(rng) < flip) delta_star = 1 - delta;
        }

        c.x(i, 0) = x;
        c.z(i, 0) = z;
        c.time(i) = u;
        c.event(i) = delta;
        c.x_star(i, 0) = x_star;
        c.time_star(i) = u_star;
        c.event_star(i) = delta_star;
    }
    return c;
}

struct CensoringTuning {
    double lower = 0.0;  // +inf: no censoring
    double length = 0.0;
    double achieved = 0.0;
};

/// Bisection on the lower endpoint of the Uniform(lower, lower + length)
/// censoring distribution until a large pre-run reaches the target rate.
inline CensoringTuning tune_censoring(const ScenarioConfig& config, double target, double tolerance = 0.005,
                                      Eigen::Index pre_run = 100000) {
    CensoringTuning out;
    out.length = config.censor_length;
    if (target == 0.0) {
        out.lower = std::numeric_limits<double>::infinity();
        return out;
    }
    if (!(target > 0.0 && target < 1.0)) fail(ErrorCode::InvalidConfig, "censoring target must lie in (0, 1)");

    auto rng = make_stream(config.seed, 0xCE5503ull);
    std::uniform_real_distribution<double> u01;
    std::vector<double> failure(static_cast<std::size_t>(pre_run));
    std::vector<double> offset(static_cast<std::size_t>(pre_run));
    for (std::size_t i = 0; i < failure.size(); ++i) {
        const auto [x, z] = detail::draw_covariates(config, rng);
        failure[i] = detail::draw_failure_time(config, x, z, rng);
        offset[i] = config.censor_length * u01(rng);
    }
    const auto rate = [&](double lower) {
        std::size_t censored = 0;
        for (std::size_t i = 0; i < failure.size(); ++i) censored += failure[i] > lower + offset[i];
        return static_cast<double>(censored) / static_cast<double>(failure.size());
    };

    const double max_rate = rate(0.0);
    if (max_rate < target - tolerance) {
        fail(ErrorCode::NotBracketed, "censoring rate " + std::to_string(target) + " unreachable; achievable range (0, " +
                                          std::to_string(max_rate) + "] with length " + std::to_string(config.censor_length));
    }
    double lo = 0.0;
    double hi = 1.0;
    while (rate(hi) > target) hi *= 2.0;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (rate(mid) > target ? lo : hi) = mid;
    }
    const double lo_rate = rate(lo);
    const double hi_rate = rate(hi);
    out.lower = std::abs(lo_rate - target) <= std::abs(hi_rate - target) ? lo : hi;
    out.achieved = rate(out.lower);
    if (std::abs(out.achieved - target) > tolerance) {
        fail(ErrorCode::NotBracketed, "bisection could not reach the censoring target within tolerance");
    }
    return out;
}

struct EstimatorSummary {
    EstimatorKind kind = EstimatorKind::True;
    int coef = 0;  // 0: beta_x, 1: beta_z
    double truth = 0.0;
    double mean = 0.0;
    double pct_bias = std::numeric_limits<double>::quiet_NaN();  // undefined when truth = 0
    double ase = std::numeric_limits<double>::quiet_NaN();
    double ese = 0.0;
    double mse = 0.0;
    double cp = std::numeric_limits<double>::quiet_NaN();
    double rejection = std::numeric_limits<double>::quiet_NaN();  // type 1 error (truth 0) or power
    int reps_used = 0;
    int se_reps = 0;
    int failures = 0;
};

struct ScenarioResult {
    std::string name;
    double censor_lower = 0.0;
    std::vector<EstimatorSummary> rows;
    int reps = 0;
    double runtime_seconds = 0.0;

    const EstimatorSummary& row(EstimatorKind kind, int coef = 0) const {
        for (const auto& r : rows)
            if (r.kind == kind && r.coef == coef) return r;
        fail(ErrorCode::InvalidConfig, "estimator not part of this scenario");
    }
};

/// Per-replicate estimates, kept for aggregation and replay checks.
struct ReplicateEstimate {
    std::optional<Vector> beta;
    std::optional<Vector> se;
};

namespace detail {

inline Vector model_se(const CoxFit& fit) { return fit.standard_errors(); }

inline ErrorModelSpec analysis_spec(const ScenarioConfig& c) { return ErrorModelSpec::for_mode(c.analysis_mode); }

}  // namespace detail

/// The full pipeline of one estimator as a (cohort, design) -> beta map, so
/// bootstrap replicates refit calibration and raking from scratch.
inline Estimator make_estimator(EstimatorKind kind, const ErrorModelSpec& spec, const std::vector<double>& grid) {
    RsrcOptions rsrc;
    rsrc.grid = grid;
    switch (kind) {
        case EstimatorKind::RC:
            return [spec](const CohortData& cohort, const TwoPhaseDesign& design) {
                return require_converged(rc_fit(cohort, design, spec, design_weighting(design)), "RC").beta;
            };
        case EstimatorKind::RSRC:
            return [spec, rsrc](const CohortData& cohort, const TwoPhaseDesign& design) {
                auto opts = rsrc;
                opts.weighting = design_weighting(design);
                return require_converged(rsrc_fit(cohort, design, spec, opts), "RSRC").beta;
            };
        case EstimatorKind::GRRC:
            return [spec](const CohortData& cohort, const TwoPhaseDesign& design) {
                return require_converged(grrc_estimate(cohort, design, spec).fit, "GRRC").beta;
            };
        case EstimatorKind::GRN:
            return [](const CohortData& cohort, const TwoPhaseDesign& design) {
                return require_converged(grn_estimate(cohort, design).fit, "GRN").beta;
            };
        case EstimatorKind::Complete:
            return [](const CohortData& cohort, const TwoPhaseDesign& design) {
                return require_converged(ht_estimate(cohort, design), "HT").beta;
            };
        case EstimatorKind::Naive:
            return [](const CohortData& cohort, const TwoPhaseDesign&) {
                return require_converged(fit_cox(naive_data(cohort)), "naive").beta;
            };
        case EstimatorKind::True:
            return [](const CohortData& cohort, const TwoPhaseDesign&) {
                return require_converged(fit_cox(true_data(cohort)), "true").beta;
            };
    }
    fail(ErrorCode::InvalidConfig, "unknown estimator");
}

namespace detail {

/// Complete-case model standard error: the HT information rescaled by the
/// mean design weight, i.e. the unweighted fit's information under SRS.
inline Vector complete_case_se(const CoxFit& fit, const TwoPhaseDesign& design) {
    double wsum = 0.0;
    for (auto i : design.selected_rows()) wsum += 1.0 / design.pi(i);
    const double mean_w = wsum / static_cast<double>(design.n_selected());
    return (InformationFactor(fit.information).inverse().diagonal() * mean_w).cwiseSqrt();
}

}  // namespace detail

/// Everything a scenario needs that does not change across replicates.
struct ScenarioPlan {
    ScenarioConfig config;
    double censor_lower = 0.0;
    ErrorSampler errors;

    explicit ScenarioPlan(const ScenarioConfig& c)
        : config(c),
          censor_lower(c.censor_lower ? *c.censor_lower : tune_censoring(c, c.censor_target).lower),
          errors(c) {
        c.validate();
    }
};

/// Phase-one cohort and validation subset of one replicate.
template <class Rng>
std::pair<CohortData, TwoPhaseDesign> simulate_dataset(const ScenarioPlan& plan, Rng& rng) {
    CohortData cohort = generate_cohort(plan.config, plan.errors, plan.censor_lower, rng);
    TwoPhaseDesign design = draw_validation(cohort, plan.config.validation, rng);
    return {std::move(cohort), std::move(design)};
}

/// Generates, samples and estimates one replicate.
inline std::vector<ReplicateEstimate> run_replicate(const ScenarioPlan& plan, std::size_t index) {
    const auto& c = plan.config;
    auto rng = make_stream(c.seed, index);
    const auto [cohort, design] = simulate_dataset(plan, rng);
    const std::uint64_t boot_seed = rng();

    std::vector<ReplicateEstimate> out(c.estimators.size());
    for (std::size_t e = 0; e < c.estimators.size(); ++e) {
        const EstimatorKind kind = c.estimators[e];
        try {
            auto& slot = out[e];
            switch (kind) {
                case EstimatorKind::True: {
                    const auto fit = require_converged(fit_cox(true_data(cohort)), "true");
                    slot.beta = fit.beta;
                    slot.se = detail::model_se(fit);
                    break;
                }
                case EstimatorKind::Naive: {
                    const auto fit = require_converged(fit_cox(naive_data(cohort)), "naive");
                    slot.beta = fit.beta;
                    slot.se = detail::model_se(fit);
                    break;
                }
                case EstimatorKind::Complete: {
                    const auto fit = require_converged(ht_estimate(cohort, design), "HT");
                    slot.beta = fit.beta;
                    slot.se = detail::complete_case_se(fit, design);
                    break;
                }
                default: {
                    const Estimator est = make_estimator(kind, detail::analysis_spec(c), c.rsrc_grid);
                    if (c.bootstrap >= 2) {
                        BootstrapOptions bo;
                        bo.replicates = kind == EstimatorKind::RSRC ? std::min(c.bootstrap, c.rsrc_bootstrap) : c.bootstrap;
                        bo.seed = boot_seed + static_cast<std::uint64_t>(kind);
                        const auto boot = stratified_bootstrap(cohort, design, est, bo);
                        slot.beta = boot.point;
                        slot.se = boot.se;
                    } else {
                        slot.beta = est(cohort, design);
                    }
                }
            }
        } catch (const Error&) {
            out[e] = {};
        }
    }
    return out;
}

/// Aggregates replicate estimates (in replicate order) into table metrics.
inline std::vector<EstimatorSummary> summarize(const ScenarioConfig& c,
                                               const std::vector<std::vector<ReplicateEstimate>>& reps) {
    constexpr double z975 = 1.959963984540054;
    std::vector<EstimatorSummary> rows;
    const std::array<double, 2> truth{c.beta_x, c.beta_z};
    for (std::size_t e = 0; e < c.estimators.size(); ++e) {
        for (int coef = 0; coef < 2; ++coef) {
            EstimatorSummary s;
            s.kind = c.estimators[e];
            s.coef = coef;
            s.truth = truth[static_cast<std::size_t>(coef)];
            std::vector<double> est;
            CompensatedSum se_sum;
            int covered = 0, rejected = 0;
            for (const auto& rep : reps) {
                const auto& r = rep[e];
                if (!r.beta) {
                    ++s.failures;
                    continue;
                }
                const double b = (*r.beta)(coef);
                est.push_back(b);
                if (r.se) {
                    const double se = (*r.se)(coef);
                    se_sum.add(se);
                    ++s.se_reps;
                    covered += std::abs(b - s.truth) <= z975 * se;
                    rejected += std::abs(b) > z975 * se;
                }
            }
            s.reps_used = static_cast<int>(est.size());
            if (!est.empty()) {
                CompensatedSum sum;
                for (double b : est) sum.add(b);
                s.mean = sum.value() / static_cast<double>(est.size());
                CompensatedSum var, sq;
                for (double b : est) {
                    var.add((b - s.mean) * (b - s.mean));
                    sq.add((b - s.truth) * (b - s.truth));
                }
                s.ese = std::sqrt(var.value() / static_cast<double>(est.size()));
                s.mse = sq.value() / static_cast<double>(est.size());
                if (s.truth != 0.0) s.pct_bias = 100.0 * (s.mean - s.truth) / s.truth;
            }
            if (s.se_reps > 0) {
                s.ase = se_sum.value() / s.se_reps;
                s.cp = static_cast<double>(covered) / s.se_reps;
                s.rejection = static_cast<double>(rejected) / s.se_reps;
            }
            rows.push_back(s);
        }
    }
    return rows;
}

/// Runs every replicate (in parallel, each on its own stream) and aggregates.
inline ScenarioResult run_scenario(const ScenarioConfig& config,
                                   std::vector<std::vector<ReplicateEstimate>>* replicates = nullptr) {
    const auto start = std::chrono::steady_clock::now();
    const ScenarioPlan plan(config);
    std::vector<std::vector<ReplicateEstimate>> reps(static_cast<std::size_t>(config.reps));
    const unsigned threads = config.threads > 0 ? config.threads : default_thread_count();
    parallel_for(reps.size(), threads, [&](std::size_t r) { reps[r] = run_replicate(plan, r); });

    ScenarioResult result;
    result.name = config.name;
    result.censor_lower = plan.censor_lower;
    result.reps = config.reps;
    result.rows = summarize(config, reps);
    result.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (replicates) *replicates = std::move(reps);
    return result;
}

}  // namespace rakecal
