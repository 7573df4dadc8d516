#pragma once

// Weighted Cox proportional-hazards fitting (Breslow ties) with score,
// observed information and per-subject dfbeta residuals.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "rakecal/errors.hpp"
#include "rakecal/numeric.hpp"

namespace rakecal {

struct SurvivalRecord {
    double time = 0.0;
    bool event = false;
    Vector covariates;
    double weight = 1.0;
};

/// Column-oriented survival data. `entry` is empty for ordinary right-censored
/// data (at risk on [0, time]); when present each row is a counting-process
/// episode at risk on (entry, time]. `subject` maps rows to subjects so that
/// dfbeta residuals of split episodes collapse to one row per subject.
struct SurvivalData {
    Vector entry;
    Vector time;
    IntVector event;
    Matrix x;
    Vector weight;
    std::vector<Eigen::Index> subject;

    Eigen::Index size() const { return time.size(); }
    Eigen::Index n_covariates() const { return x.cols(); }
    bool has_entry() const { return entry.size() != 0; }

    Eigen::Index n_subjects() const {
        if (subject.empty()) return size();
        return *std::max_element(subject.begin(), subject.end()) + 1;
    }

    static SurvivalData from_records(const std::vector<SurvivalRecord>& records) {
        SurvivalData d;
        const auto n = static_cast<Eigen::Index>(records.size());
        const Eigen::Index k = records.empty() ? 0 : records.front().covariates.size();
        d.time.resize(n);
        d.event.resize(n);
        d.weight.resize(n);
        d.x.resize(n, k);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& r = records[static_cast<std::size_t>(i)];
            if (r.covariates.size() != k) {
                fail(ErrorCode::DimensionMismatch, "covariate vector length differs across records");
            }
            d.time(i) = r.time;
            d.event(i) = r.event ? 1 : 0;
            d.weight(i) = r.weight;
            d.x.row(i) = r.covariates.transpose();
        }
        return d;
    }

    void validate() const {
        const Eigen::Index n = size();
        if (event.size() != n || weight.size() != n || x.rows() != n ||
            (has_entry() && entry.size() != n) ||
            (!subject.empty() && static_cast<Eigen::Index>(subject.size()) != n)) {
            fail(ErrorCode::DimensionMismatch, "survival data columns have inconsistent lengths");
        }
        if (!time.allFinite() || !x.allFinite() || !weight.allFinite() ||
            (has_entry() && !entry.allFinite())) {
            fail(ErrorCode::NonFiniteInput, "survival data contains non-finite values");
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            if (time(i) < 0.0) fail(ErrorCode::NonFiniteInput, "negative follow-up time");
            if (!(weight(i) > 0.0)) fail(ErrorCode::NonFiniteInput, "weights must be positive");
            if (event(i) != 0 && event(i) != 1) fail(ErrorCode::NonFiniteInput, "event flag must be 0 or 1");
            if (has_entry() && !(entry(i) < time(i))) {
                fail(ErrorCode::NonFiniteInput, "episode entry must precede its exit time");
            }
        }
    }
};

struct CoxOptions {
    int max_iterations = 50;
    double score_tolerance = 1e-9;  // scaled by max(1, weighted event count)
    double step_tolerance = 1e-8;
    int max_halvings = 10;
    bool compute_dfbetas = true;
};

struct FitDiagnostics {
    int low_times = 0;         // imputed times below the positive floor before shifting
    double time_shift = 0.0;   // common shift applied to every imputed time
    int fallback_windows = 0;  // recalibration windows reusing the previous model
    int halvings = 0;
    std::vector<double> loglik_path;  // loglik after every accepted iterate
};

struct CoxFit {
    Vector beta;
    double loglik = 0.0;
    Vector score_at_solution;
    Matrix information;
    Matrix dfbetas;  // one row per subject
    int n_events = 0;
    bool converged = false;
    int iterations = 0;
    FitDiagnostics diagnostics;

    Vector standard_errors() const;
};

struct ScoreInformation {
    double loglik = 0.0;
    Vector score;
    Matrix information;
};

namespace detail {

struct RiskSetOrder {
    std::vector<Eigen::Index> by_time;   // time desc, censored before events, index asc
    std::vector<Eigen::Index> by_entry;  // entry desc (counting-process data only)
};

inline RiskSetOrder make_order(const SurvivalData& d) {
    RiskSetOrder o;
    o.by_time.resize(static_cast<std::size_t>(d.size()));
    std::iota(o.by_time.begin(), o.by_time.end(), Eigen::Index{0});
    std::sort(o.by_time.begin(), o.by_time.end(), [&](Eigen::Index a, Eigen::Index b) {
        if (d.time(a) != d.time(b)) return d.time(a) > d.time(b);
        if (d.event(a) != d.event(b)) return d.event(a) < d.event(b);
        return a < b;
    });
    if (d.has_entry()) {
        o.by_entry.resize(static_cast<std::size_t>(d.size()));
        std::iota(o.by_entry.begin(), o.by_entry.end(), Eigen::Index{0});
        std::sort(o.by_entry.begin(), o.by_entry.end(), [&](Eigen::Index a, Eigen::Index b) {
            if (d.entry(a) != d.entry(b)) return d.entry(a) > d.entry(b);
            return a < b;
        });
    }
    return o;
}

/// Risk-set summary at one distinct event time.
struct EventTime {
    double time = 0.0;
    double s0 = 0.0;        // sum of w * exp(eta - shift) over the risk set
    Vector xbar;            // risk-set weighted mean of (centered) covariates
    double dweight = 0.0;   // weighted number of events at this time
};

inline Vector weighted_column_means(const SurvivalData& d) {
    const double wsum = d.weight.sum();
    return (d.x.transpose() * d.weight) / wsum;
}

/// Linear predictors and the exp shift used by every sweep over `xc`.
inline Vector linear_predictor(const Matrix& xc, const Vector& beta) { return xc * beta; }

/// One reverse-time sweep: loglik, score and (optionally) information under
/// the Breslow convention. `xc` holds centered covariates.
inline ScoreInformation sweep(const Vector& beta, const Matrix& xc, const SurvivalData& d,
                              const RiskSetOrder& order, bool with_information,
                              std::vector<EventTime>* event_times) {
    const Eigen::Index n = d.size();
    const Eigen::Index k = xc.cols();
    const Vector eta = linear_predictor(xc, beta);
    const double shift = n > 0 ? eta.maxCoeff() : 0.0;
    const Vector risk = (eta.array() - shift).exp().matrix();

    ScoreInformation out;
    out.score = Vector::Zero(k);
    out.information = Matrix::Zero(k, k);
    CompensatedSum loglik;

    double s0 = 0.0;
    Vector s1 = Vector::Zero(k);
    Matrix s2 = Matrix::Zero(k, k);
    Vector xi(k);

    const auto add_row = [&](Eigen::Index i, double sign) {
        const double r = sign * d.weight(i) * risk(i);
        s0 += r;
        xi = xc.row(i).transpose();
        s1.noalias() += r * xi;
        if (with_information) s2.noalias() += r * xi * xi.transpose();
    };

    std::size_t pos = 0;
    std::size_t entry_pos = 0;
    const auto total = static_cast<std::size_t>(n);
    while (pos < total) {
        const double t = d.time(order.by_time[pos]);
        std::size_t end = pos;
        while (end < total && d.time(order.by_time[end]) == t) ++end;

        for (std::size_t j = pos; j < end; ++j) add_row(order.by_time[j], 1.0);
        if (d.has_entry()) {
            while (entry_pos < order.by_entry.size() && d.entry(order.by_entry[entry_pos]) >= t) {
                add_row(order.by_entry[entry_pos], -1.0);
                ++entry_pos;
            }
        }

        double dweight = 0.0;
        for (std::size_t j = pos; j < end; ++j) {
            const Eigen::Index i = order.by_time[j];
            if (d.event(i) != 0) dweight += d.weight(i);
        }
        if (dweight > 0.0) {
            if (!(s0 > 0.0)) fail(ErrorCode::NonFiniteInput, "empty risk set at an event time");
            const Vector xbar = s1 / s0;
            const double log_s0 = std::log(s0);
            for (std::size_t j = pos; j < end; ++j) {
                const Eigen::Index i = order.by_time[j];
                if (d.event(i) == 0) continue;
                const double w = d.weight(i);
                loglik.add(w * (eta(i) - shift - log_s0));
                out.score.noalias() += w * (xc.row(i).transpose() - xbar);
            }
            if (with_information) {
                out.information.noalias() += dweight * (s2 / s0 - xbar * xbar.transpose());
            }
            if (event_times) event_times->push_back({t, s0, xbar, dweight});
        }
        pos = end;
    }
    out.loglik = loglik.value();
    if (with_information) out.information = 0.5 * (out.information + out.information.transpose());
    return out;
}

/// Cholesky of the unit-diagonal rescaling of `info`; rejects numerically
/// singular or indefinite matrices.
class InformationFactor {
public:
    explicit InformationFactor(const Matrix& info) {
        const Eigen::Index k = info.rows();
        scale_ = Vector(k);
        const double max_diag = k > 0 ? info.diagonal().cwiseAbs().maxCoeff() : 0.0;
        for (Eigen::Index j = 0; j < k; ++j) {
            if (!(info(j, j) > 1e-12 * max_diag) || !(info(j, j) > 0.0)) {
                fail(ErrorCode::SingularInformation,
                     "information has a null direction (covariate " + std::to_string(j) + ")");
            }
            scale_(j) = 1.0 / std::sqrt(info(j, j));
        }
        const Matrix normalized = scale_.asDiagonal() * info * scale_.asDiagonal();
        llt_.compute(normalized);
        if (llt_.info() != Eigen::Success) {
            fail(ErrorCode::SingularInformation, "information matrix is not positive definite");
        }
        const Vector pivots = Matrix(llt_.matrixL()).diagonal();
        if (pivots.size() > 0 && pivots.minCoeff() < 1e-7) {
            fail(ErrorCode::SingularInformation, "information matrix is numerically singular");
        }
    }

    Vector solve(const Vector& rhs) const {
        return scale_.asDiagonal() * llt_.solve(scale_.asDiagonal() * rhs);
    }

    Matrix inverse() const {
        const Eigen::Index k = scale_.size();
        return scale_.asDiagonal() * llt_.solve(Matrix::Identity(k, k)) * scale_.asDiagonal();
    }

private:
    Vector scale_;
    Eigen::LLT<Matrix> llt_;
};

inline int count_events(const SurvivalData& d) { return static_cast<int>(d.event.sum()); }

inline double weighted_events(const SurvivalData& d) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i)
        if (d.event(i) != 0) s += d.weight(i);
    return s;
}

/// Weighted score residuals, one row per subject, at `beta`.
inline Matrix score_residuals(const Vector& beta, const Matrix& xc, const SurvivalData& d,
                              const RiskSetOrder& order) {
    std::vector<EventTime> times;
    sweep(beta, xc, d, order, false, &times);
    std::reverse(times.begin(), times.end());  // ascending

    const Eigen::Index k = xc.cols();
    const auto m = times.size();
    std::vector<double> tgrid(m);
    Vector h0(static_cast<Eigen::Index>(m) + 1);
    Matrix h1(static_cast<Eigen::Index>(m) + 1, k);
    h0(0) = 0.0;
    h1.row(0).setZero();
    for (std::size_t j = 0; j < m; ++j) {
        const auto& e = times[j];
        tgrid[j] = e.time;
        const double inc = e.dweight / e.s0;
        const auto r = static_cast<Eigen::Index>(j);
        h0(r + 1) = h0(r) + inc;
        h1.row(r + 1) = h1.row(r) + inc * e.xbar.transpose();
    }

    const Vector eta = xc * beta;
    const double shift = d.size() > 0 ? eta.maxCoeff() : 0.0;
    const auto upto = [&](double t) {
        return static_cast<Eigen::Index>(std::upper_bound(tgrid.begin(), tgrid.end(), t) - tgrid.begin());
    };

    Matrix resid = Matrix::Zero(d.n_subjects(), k);
    Vector r(k);
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        const Eigen::Index a = upto(d.time(i));
        const Eigen::Index b = d.has_entry() ? upto(d.entry(i)) : 0;
        const double risk = std::exp(eta(i) - shift);
        const double dh0 = h0(a) - h0(b);
        r = -risk * (xc.row(i).transpose() * dh0 - (h1.row(a) - h1.row(b)).transpose());
        if (d.event(i) != 0) {
            r += xc.row(i).transpose() - times[static_cast<std::size_t>(a - 1)].xbar;
        }
        const Eigen::Index s = d.subject.empty() ? i : d.subject[static_cast<std::size_t>(i)];
        resid.row(s) += d.weight(i) * r.transpose();
    }
    return resid;
}

}  // namespace detail

inline Vector CoxFit::standard_errors() const {
    return detail::InformationFactor(information).inverse().diagonal().cwiseSqrt();
}

/// Log partial likelihood, score and observed information at `beta`.
inline ScoreInformation score_and_information(const Vector& beta, const SurvivalData& data) {
    data.validate();
    if (data.size() == 0) fail(ErrorCode::NoEvents, "no records");
    if (beta.size() != data.n_covariates()) fail(ErrorCode::DimensionMismatch, "beta length");
    if (!beta.allFinite()) fail(ErrorCode::NonFiniteInput, "non-finite coefficients");
    const Matrix xc = data.x.rowwise() - detail::weighted_column_means(data).transpose();
    return detail::sweep(beta, xc, data, detail::make_order(data), true, nullptr);
}

inline double log_partial_likelihood(const Vector& beta, const SurvivalData& data) {
    return score_and_information(beta, data).loglik;
}

/// Newton-Raphson with step halving, started at zero.
inline CoxFit fit_cox(const SurvivalData& data, const CoxOptions& options = {}) {
    data.validate();
    const int n_events = detail::count_events(data);
    if (n_events == 0) fail(ErrorCode::NoEvents, "no events in the data");

    const Matrix xc = data.x.rowwise() - detail::weighted_column_means(data).transpose();
    const auto order = detail::make_order(data);
    const double score_tol = options.score_tolerance * std::max(1.0, detail::weighted_events(data));

    CoxFit fit;
    fit.n_events = n_events;
    fit.beta = Vector::Zero(data.n_covariates());
    auto current = detail::sweep(fit.beta, xc, data, order, true, nullptr);
    fit.diagnostics.loglik_path.push_back(current.loglik);

    for (int it = 1; it <= options.max_iterations; ++it) {
        const Vector step = detail::InformationFactor(current.information).solve(current.score);
        if (!step.allFinite()) fail(ErrorCode::SingularInformation, "non-finite Newton step");

        Vector trial_step = step;
        Vector trial = fit.beta + trial_step;
        auto next = detail::sweep(trial, xc, data, order, true, nullptr);
        int halvings = 0;
        while ((!std::isfinite(next.loglik) || next.loglik < current.loglik) &&
               halvings < options.max_halvings) {
            trial_step *= 0.5;
            trial = fit.beta + trial_step;
            next = detail::sweep(trial, xc, data, order, true, nullptr);
            ++halvings;
        }
        fit.diagnostics.halvings += halvings;
        if (!std::isfinite(next.loglik) ||
            next.loglik < current.loglik - 1e-12 * (1.0 + std::abs(current.loglik))) {
            break;  // no ascent possible from here; report non-convergence
        }
        fit.beta = trial;
        current = std::move(next);
        fit.iterations = it;
        fit.diagnostics.loglik_path.push_back(current.loglik);
        if (max_abs(current.score) < score_tol && max_abs(trial_step) < options.step_tolerance) {
            fit.converged = true;
            break;
        }
    }

    fit.loglik = current.loglik;
    fit.score_at_solution = current.score;
    fit.information = current.information;
    if (fit.converged) {
        // Confirms the information is usable for standard errors and dfbetas.
        detail::InformationFactor factor(fit.information);
        if (options.compute_dfbetas) {
            fit.dfbetas = detail::score_residuals(fit.beta, xc, data, order) * factor.inverse();
        }
    }
    return fit;
}

/// Information-scaled score residuals of a converged fit; rows are subjects.
inline Matrix dfbeta_residuals(const CoxFit& fit, const SurvivalData& data) {
    if (!fit.converged) fail(ErrorCode::NotConverged, "dfbeta residuals need a converged fit");
    data.validate();
    if (fit.beta.size() != data.n_covariates()) fail(ErrorCode::DimensionMismatch, "beta length");
    const Matrix xc = data.x.rowwise() - detail::weighted_column_means(data).transpose();
    detail::InformationFactor factor(fit.information);
    return detail::score_residuals(fit.beta, xc, data, detail::make_order(data)) * factor.inverse();
}

/// Throws NotConverged when the fit hit its iteration cap.
inline const CoxFit& require_converged(const CoxFit& fit, const std::string& what) {
    if (!fit.converged) fail(ErrorCode::NotConverged, what + " did not converge");
    return fit;
}

}  // namespace rakecal
