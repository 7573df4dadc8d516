#pragma once

// Regression calibration for covariate error, time-to-event error and both,
// plus the two-stage risk-set recalibration (RSRC) estimator.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rakecal/cohort.hpp"
#include "rakecal/errors.hpp"
#include "rakecal/numeric.hpp"
#include "rakecal/survival_core.hpp"

namespace rakecal {

enum class ErrorMode { CovariateOnly, OutcomeOnly, Both };

/// Which covariate block the outcome error is regressed on.
enum class OmegaRegressor { TrueX, ErrorProneX };

enum class Weighting { Unweighted, InverseProbability };

struct ErrorModelSpec {
    ErrorMode mode = ErrorMode::Both;
    OmegaRegressor regress_omega_on = OmegaRegressor::ErrorProneX;

    /// OutcomeOnly regresses on X (observed without error for everyone);
    /// the other modes on X*.
    static ErrorModelSpec for_mode(ErrorMode mode) {
        return {mode, mode == ErrorMode::OutcomeOnly ? OmegaRegressor::TrueX : OmegaRegressor::ErrorProneX};
    }

    bool corrects_covariate() const { return mode != ErrorMode::OutcomeOnly; }
    bool corrects_outcome() const { return mode != ErrorMode::CovariateOnly; }
};

/// Linear calibration maps. Rows of `zeta_x` / entries of `zeta_omega`
/// follow the regressor layout (1, X-block, Z).
struct CalibrationModel {
    Matrix zeta_x;      // (1+p+q) x p; empty when the covariate is not calibrated
    Vector zeta_omega;  // 1+p+q;      empty when the outcome is not calibrated
    OmegaRegressor omega_regressor = OmegaRegressor::ErrorProneX;
    Weighting weighting = Weighting::Unweighted;
};

struct CalibratedCohort {
    Matrix x_hat;
    Vector u_hat;
    IntVector event;
    int low_times = 0;   // imputed times below the positive floor
    double shift = 0.0;  // added to every imputed time to lift the minimum to the floor
    CalibrationModel model;
};

namespace detail {

inline Vector calibration_weights(const TwoPhaseDesign& design, const std::vector<Eigen::Index>& rows,
                                  Weighting weighting) {
    Vector w(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        w(static_cast<Eigen::Index>(r)) = weighting == Weighting::InverseProbability ? 1.0 / design.pi(rows[r]) : 1.0;
    }
    return w;
}

/// Regressor rows (1, block_i, z_i) for the listed cohort rows.
inline Matrix regressor_rows(const Matrix& block, const Matrix& z, const std::vector<Eigen::Index>& rows) {
    const Eigen::Index p = block.cols();
    const Eigen::Index q = z.cols();
    Matrix d(static_cast<Eigen::Index>(rows.size()), 1 + p + q);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto i = rows[r];
        const auto rr = static_cast<Eigen::Index>(r);
        d(rr, 0) = 1.0;
        d.block(rr, 1, 1, p) = block.row(i);
        d.block(rr, 1 + p, 1, q) = z.row(i);
    }
    return d;
}

inline Matrix regressors_all(const Matrix& block, const Matrix& z) {
    Matrix d(block.rows(), 1 + block.cols() + z.cols());
    d << Vector::Ones(block.rows()), block, z;
    return d;
}

inline Matrix fit_x_on_rows(const CohortData& c, const TwoPhaseDesign& design,
                            const std::vector<Eigen::Index>& rows, Weighting weighting) {
    if (rows.empty()) fail(ErrorCode::EmptyValidation, "no validated records for covariate calibration");
    const Matrix design_matrix = regressor_rows(c.x_star, c.z, rows);
    Matrix response(static_cast<Eigen::Index>(rows.size()), c.p());
    for (std::size_t r = 0; r < rows.size(); ++r) response.row(static_cast<Eigen::Index>(r)) = c.x.row(rows[r]);
    return weighted_least_squares(design_matrix, response, calibration_weights(design, rows, weighting));
}

inline Vector fit_omega_on_rows(const CohortData& c, const TwoPhaseDesign& design,
                                const std::vector<Eigen::Index>& rows, OmegaRegressor regressor,
                                Weighting weighting) {
    if (rows.empty()) fail(ErrorCode::EmptyValidation, "no validated records for outcome calibration");
    const Matrix& block = regressor == OmegaRegressor::TrueX ? c.x : c.x_star;
    const Matrix design_matrix = regressor_rows(block, c.z, rows);
    Matrix response(static_cast<Eigen::Index>(rows.size()), 1);
    for (std::size_t r = 0; r < rows.size(); ++r) response(static_cast<Eigen::Index>(r), 0) = c.omega_at(rows[r]);
    return weighted_least_squares(design_matrix, response, calibration_weights(design, rows, weighting)).col(0);
}

/// Positive floor for calibrated times.
inline double time_floor(const CohortData& c) { return 1e-8 * c.time_star.maxCoeff(); }

inline Matrix predict_x(const CohortData& c, const Matrix& zeta_x) {
    return regressors_all(c.x_star, c.z) * zeta_x;
}

/// Omega regressors for prediction over all subjects: X* or, for TrueX, the
/// covariate values used in the outcome model (X itself when X is error-free).
inline Vector predict_omega(const CohortData& c, const Vector& zeta_omega, OmegaRegressor regressor,
                            const Matrix& x_used) {
    const Matrix& block = regressor == OmegaRegressor::TrueX ? x_used : c.x_star;
    return regressors_all(block, c.z) * zeta_omega;
}

/// Lifts every time by one common constant so the smallest equals `floor`.
/// The partial likelihood depends on the times only through their order, so
/// the shift leaves the fit unchanged while keeping every time positive.
inline double shift_times(Vector& u, double floor, int& low) {
    low = static_cast<int>((u.array() < floor).count());
    if (low == 0) return 0.0;
    const double shift = floor - u.minCoeff();
    u.array() += shift;
    return shift;
}

}  // namespace detail

/// Least-squares calibration of X on (1, X*, Z) over the validation subset.
inline Matrix fit_x_calibration(const CohortData& cohort, const TwoPhaseDesign& design,
                                Weighting weighting = Weighting::Unweighted) {
    return detail::fit_x_on_rows(cohort, design, design.selected_rows(), weighting);
}

/// Least-squares calibration of omega = U* - U on (1, X or X*, Z) over the
/// validation subset.
inline Vector fit_omega_calibration(const CohortData& cohort, const TwoPhaseDesign& design,
                                    const ErrorModelSpec& spec, Weighting weighting = Weighting::Unweighted) {
    return detail::fit_omega_on_rows(cohort, design, design.selected_rows(), spec.regress_omega_on, weighting);
}

inline CalibrationModel fit_calibration(const CohortData& cohort, const TwoPhaseDesign& design,
                                        const ErrorModelSpec& spec, Weighting weighting) {
    CalibrationModel model;
    model.omega_regressor = spec.regress_omega_on;
    model.weighting = weighting;
    if (spec.corrects_covariate()) model.zeta_x = fit_x_calibration(cohort, design, weighting);
    if (spec.corrects_outcome()) model.zeta_omega = fit_omega_calibration(cohort, design, spec, weighting);
    return model;
}

/// Imputes X-hat and U-hat for every phase-one subject.
inline CalibratedCohort apply_rc(const CohortData& cohort, const CalibrationModel& model,
                                 const ErrorModelSpec& spec) {
    const Eigen::Index regressors = 1 + cohort.p() + cohort.q();
    if (spec.corrects_covariate() &&
        (model.zeta_x.rows() != regressors || model.zeta_x.cols() != cohort.p())) {
        fail(ErrorCode::DimensionMismatch, "covariate calibration does not match the cohort");
    }
    if (spec.corrects_outcome() && model.zeta_omega.size() != regressors) {
        fail(ErrorCode::DimensionMismatch, "outcome calibration does not match the cohort");
    }
    CalibratedCohort out;
    out.model = model;
    out.event = cohort.event_star;
    out.x_hat = spec.corrects_covariate() ? detail::predict_x(cohort, model.zeta_x) : cohort.x_star;
    out.u_hat = cohort.time_star;
    if (spec.corrects_outcome()) {
        out.u_hat -= detail::predict_omega(cohort, model.zeta_omega, model.omega_regressor, out.x_hat);
        out.shift = detail::shift_times(out.u_hat, detail::time_floor(cohort), out.low_times);
    }
    return out;
}

inline SurvivalData calibrated_data(const CalibratedCohort& calibrated, const CohortData& cohort) {
    return make_survival_data(calibrated.u_hat, calibrated.event, calibrated.x_hat, cohort.z,
                              Vector::Ones(cohort.n()));
}

/// Calibration weighting implied by a design: IPW unless probabilities are equal.
inline Weighting design_weighting(const TwoPhaseDesign& design) {
    return design.equal_probability() ? Weighting::Unweighted : Weighting::InverseProbability;
}

/// Ordinary regression calibration followed by an unweighted Cox fit on the
/// imputed phase-one data.
inline CoxFit rc_fit(const CohortData& cohort, const TwoPhaseDesign& design, const ErrorModelSpec& spec,
                     Weighting weighting, const CoxOptions& options = {}) {
    design.validate(cohort);
    const auto calibrated = apply_rc(cohort, fit_calibration(cohort, design, spec, weighting), spec);
    auto fit = fit_cox(calibrated_data(calibrated, cohort), options);
    fit.diagnostics.low_times = calibrated.low_times;
    fit.diagnostics.time_shift = calibrated.shift;
    return fit;
}

struct RsrcOptions {
    /// Recalibration points as quantiles of the stage-one event times; 0 maps
    /// to time zero (the global calibration).
    std::vector<double> grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    Weighting weighting = Weighting::Unweighted;
    bool recalibrate_omega = true;
    CoxOptions cox{};
};

namespace detail {

struct RsrcWindow {
    double start = 0.0;
    Matrix x_hat;  // n x p
    Vector omega_hat;
};

}  // namespace detail

/// Two-stage risk-set regression calibration. Stage one imputes U-hat by
/// ordinary RC; stage two refits the calibration among validated subjects
/// still at risk (stage-one U-hat >= window start) and fits the Cox model on
/// counting-process episodes carrying each window's imputations.
inline CoxFit rsrc_fit(const CohortData& cohort, const TwoPhaseDesign& design, const ErrorModelSpec& spec,
                       const RsrcOptions& options = {}) {
    design.validate(cohort);
    if (options.grid.empty()) fail(ErrorCode::InvalidConfig, "empty recalibration grid");
    for (std::size_t g = 0; g < options.grid.size(); ++g) {
        const double q = options.grid[g];
        if (!(q >= 0.0 && q < 1.0) || (g > 0 && !(q > options.grid[g - 1]))) {
            fail(ErrorCode::InvalidConfig, "recalibration quantiles must increase strictly within [0, 1)");
        }
    }

    const auto global = fit_calibration(cohort, design, spec, options.weighting);
    const auto stage_one = apply_rc(cohort, global, spec);
    const Vector& u1 = stage_one.u_hat;

    std::vector<double> event_times;
    for (Eigen::Index i = 0; i < cohort.n(); ++i)
        if (cohort.event_star(i) != 0) event_times.push_back(u1(i));
    if (event_times.empty()) fail(ErrorCode::NoEvents, "no events for recalibration");

    std::vector<double> starts{0.0};
    for (double q : options.grid) {
        if (q == 0.0) continue;
        const double t = quantile(event_times, q);
        if (t > starts.back()) starts.push_back(t);
    }

    const auto validated = design.selected_rows();
    const Eigen::Index min_risk_set = cohort.p() + cohort.q() + 2;
    FitDiagnostics diagnostics;
    diagnostics.low_times = stage_one.low_times;
    diagnostics.time_shift = stage_one.shift;

    std::vector<detail::RsrcWindow> windows;
    windows.reserve(starts.size());
    CalibrationModel model = global;
    for (std::size_t k = 0; k < starts.size(); ++k) {
        if (k > 0) {
            std::vector<Eigen::Index> at_risk;
            for (auto i : validated)
                if (u1(i) >= starts[k]) at_risk.push_back(i);
            bool refit = static_cast<Eigen::Index>(at_risk.size()) >= min_risk_set;
            if (refit) {
                try {
                    CalibrationModel next = model;
                    if (spec.corrects_covariate()) {
                        next.zeta_x = detail::fit_x_on_rows(cohort, design, at_risk, options.weighting);
                    }
                    if (spec.corrects_outcome() && options.recalibrate_omega) {
                        next.zeta_omega = detail::fit_omega_on_rows(cohort, design, at_risk,
                                                                    spec.regress_omega_on, options.weighting);
                    }
                    model = std::move(next);
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::RankDeficientDesign) throw;
                    refit = false;
                }
            }
            if (!refit) ++diagnostics.fallback_windows;
        }
        detail::RsrcWindow w;
        w.start = starts[k];
        w.x_hat = spec.corrects_covariate() ? detail::predict_x(cohort, model.zeta_x) : cohort.x_star;
        if (spec.corrects_outcome()) {
            w.omega_hat = detail::predict_omega(cohort, model.zeta_omega, model.omega_regressor, w.x_hat);
        }
        windows.push_back(std::move(w));
    }

    // Final time: U* corrected by the model of the last window the subject
    // entered on the stage-one time scale.
    const double floor = detail::time_floor(cohort);
    Vector u2 = u1;
    std::vector<std::size_t> home(static_cast<std::size_t>(cohort.n()));
    for (Eigen::Index i = 0; i < cohort.n(); ++i) {
        const auto it = std::upper_bound(starts.begin(), starts.end(), u1(i));
        home[static_cast<std::size_t>(i)] = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - starts.begin() - 1));
        if (spec.corrects_outcome() && options.recalibrate_omega) {
            u2(i) = cohort.time_star(i) - windows[home[static_cast<std::size_t>(i)]].omega_hat(i) + stage_one.shift;
        }
    }
    if (spec.corrects_outcome() && options.recalibrate_omega) {
        // Second shift moves the window starts along with the times, so
        // window membership and episode order are unchanged.
        int low = 0;
        const double shift = detail::shift_times(u2, floor, low);
        for (std::size_t k = 1; k < starts.size(); ++k) starts[k] += shift;
        diagnostics.low_times += low;
        diagnostics.time_shift += shift;
    }

    // Counting-process episodes split at window starts.
    std::size_t episodes = 0;
    for (Eigen::Index i = 0; i < cohort.n(); ++i) {
        for (std::size_t k = 0; k < starts.size() && starts[k] < u2(i); ++k) ++episodes;
    }
    const Eigen::Index p = cohort.p();
    const Eigen::Index q = cohort.q();
    SurvivalData data;
    data.entry.resize(static_cast<Eigen::Index>(episodes));
    data.time.resize(static_cast<Eigen::Index>(episodes));
    data.event.resize(static_cast<Eigen::Index>(episodes));
    data.x.resize(static_cast<Eigen::Index>(episodes), p + q);
    data.weight = Vector::Ones(static_cast<Eigen::Index>(episodes));
    data.subject.reserve(episodes);
    Eigen::Index row = 0;
    for (Eigen::Index i = 0; i < cohort.n(); ++i) {
        for (std::size_t k = 0; k < starts.size() && starts[k] < u2(i); ++k) {
            const bool last = k + 1 == starts.size() || starts[k + 1] >= u2(i);
            data.entry(row) = starts[k];
            data.time(row) = last ? u2(i) : starts[k + 1];
            data.event(row) = last ? cohort.event_star(i) : 0;
            data.x.block(row, 0, 1, p) = windows[k].x_hat.row(i);
            data.x.block(row, p, 1, q) = cohort.z.row(i);
            data.subject.push_back(i);
            ++row;
        }
    }

    auto fit = fit_cox(data, options.cox);
    diagnostics.halvings = fit.diagnostics.halvings;
    diagnostics.loglik_path = std::move(fit.diagnostics.loglik_path);
    fit.diagnostics = std::move(diagnostics);
    return fit;
}

}  // namespace rakecal
