#pragma once

// Generalized raking with the exponential (raking) distance, and the
// Horvitz-Thompson, GRN and GRRC Cox estimators built on it.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>

#include "rakecal/calibration.hpp"
#include "rakecal/cohort.hpp"
#include "rakecal/errors.hpp"
#include "rakecal/numeric.hpp"
#include "rakecal/survival_core.hpp"

namespace rakecal {

enum class AuxiliarySource { NaiveInfluence, RCInfluence, Custom };

struct AuxiliaryMatrix {
    Matrix a;  // n x k, known for every phase-one subject
    AuxiliarySource source = AuxiliarySource::Custom;

    void validate() const {
        if (!a.allFinite()) fail(ErrorCode::NonFiniteInput, "auxiliary variables must be finite");
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            const double scale = a.col(j).cwiseAbs().maxCoeff();
            if (!(scale > 0.0)) {
                fail(ErrorCode::AuxiliaryDegenerate, "auxiliary column " + std::to_string(j) + " is identically zero");
            }
        }
    }

    /// Prepends a constant column, which pins the raked weights to sum to n.
    AuxiliaryMatrix with_intercept() const {
        AuxiliaryMatrix out{Matrix(a.rows(), a.cols() + 1), source};
        out.a << Vector::Ones(a.rows()), a;
        return out;
    }
};

struct RakingSolution {
    Vector lambda;
    Vector g;        // exp(-lambda' A_i), positive for every subject
    Vector weights;  // R_i g_i / pi_i, zero for unselected subjects
    double constraint_residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct RakingOptions {
    double tolerance = 1e-8;
    int max_iterations = 50;
};

namespace detail {

struct RakingState {
    Vector g;
    Vector f;      // sum_i R_i g_i/pi_i A_i - sum_i A_i
    double dual = 0.0;
};

inline RakingState raking_state(const Vector& lambda, const Matrix& a, const TwoPhaseDesign& design,
                                const Vector& totals) {
    RakingState s;
    s.g = (-(a * lambda)).array().exp().matrix();
    s.f = -totals;
    CompensatedSum dual;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        if (design.selected[static_cast<std::size_t>(i)] == 0) continue;
        const double w = s.g(i) / design.pi(i);
        s.f.noalias() += w * a.row(i).transpose();
        dual.add(w);
    }
    s.dual = dual.value() + lambda.dot(totals);
    return s;
}

}  // namespace detail

/// Solves the calibration equations sum A_i = sum R_i g_i/pi_i A_i with
/// g_i = exp(-lambda'A_i) by damped Newton on the convex dual, started at
/// the first-order solution B^-1 (sum R_i A_i/pi_i - sum A_i).
inline RakingSolution solve_raking(const TwoPhaseDesign& design, const AuxiliaryMatrix& aux,
                                   const RakingOptions& options = {}) {
    aux.validate();
    const Matrix& a = aux.a;
    const Eigen::Index n = a.rows();
    const Eigen::Index k = a.cols();
    if (design.size() != n || static_cast<Eigen::Index>(design.selected.size()) != n) {
        fail(ErrorCode::DimensionMismatch, "auxiliary rows differ from design size");
    }
    if (design.n_selected() == 0) fail(ErrorCode::EmptyValidation, "no validated subjects to rake");

    const Vector totals = a.colwise().sum().transpose();
    const double target = options.tolerance * (1.0 + max_abs(totals));

    const auto jacobian = [&](const Vector& g) {
        Matrix j = Matrix::Zero(k, k);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (design.selected[static_cast<std::size_t>(i)] == 0) continue;
            j.noalias() += (g(i) / design.pi(i)) * a.row(i).transpose() * a.row(i);
        }
        return j;
    };
    const auto newton_step = [&](const Vector& g, const Vector& f) -> Vector {
        Eigen::LDLT<Matrix> ldlt(jacobian(g));
        const Vector diag = ldlt.vectorD();
        if (ldlt.info() != Eigen::Success || !(diag.minCoeff() > 1e-12 * std::max(1.0, diag.cwiseAbs().maxCoeff()))) {
            fail(ErrorCode::SingularB, "raking Jacobian is singular");
        }
        return ldlt.solve(f);
    };

    RakingSolution sol;
    Vector lambda = Vector::Zero(k);
    auto state = detail::raking_state(lambda, a, design, totals);
    // First-order start: one Newton step from lambda = 0 uses B-hat itself.
    lambda = newton_step(state.g, state.f);
    auto started = detail::raking_state(lambda, a, design, totals);
    if (!(started.dual <= state.dual) || !started.f.allFinite()) {
        lambda.setZero();  // expansion overshoots; fall back to the origin
    } else {
        state = std::move(started);
    }

    for (int it = 0; it <= options.max_iterations; ++it) {
        sol.iterations = it;
        if (max_abs(state.f) <= target) {
            sol.converged = true;
            break;
        }
        if (it == options.max_iterations) break;
        const Vector step = newton_step(state.g, state.f);
        double scale = 1.0;
        auto trial = detail::raking_state(lambda + step, a, design, totals);
        for (int h = 0; h < 40 && (!std::isfinite(trial.dual) || trial.dual > state.dual); ++h) {
            scale *= 0.5;
            trial = detail::raking_state(lambda + scale * step, a, design, totals);
        }
        if (!std::isfinite(trial.dual) || trial.dual > state.dual + 1e-14 * std::abs(state.dual)) break;
        lambda += scale * step;
        state = std::move(trial);
    }

    sol.lambda = lambda;
    sol.g = state.g;
    sol.weights = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (design.selected[static_cast<std::size_t>(i)] != 0) sol.weights(i) = state.g(i) / design.pi(i);
    }
    sol.constraint_residual = max_abs(state.f);
    return sol;
}

struct RakingEstimate {
    CoxFit fit;
    RakingSolution raking;
    CoxFit phase_one_fit;
};

struct RakingEstimatorOptions {
    bool intercept = true;  // rake the weight total as well as the influence columns
    RakingOptions raking{};
    CoxOptions cox{};
};

/// Horvitz-Thompson: Cox fit on the validated records weighted by 1/pi.
inline CoxFit ht_estimate(const CohortData& cohort, const TwoPhaseDesign& design, const CoxOptions& options = {}) {
    design.validate(cohort);
    const Vector w = design.pi.cwiseInverse();
    return fit_cox(validated_data(cohort, design, w), options);
}

namespace detail {

inline RakingEstimate rake_and_fit(const CohortData& cohort, const TwoPhaseDesign& design, CoxFit phase_one,
                                   AuxiliarySource source, const RakingEstimatorOptions& options) {
    require_converged(phase_one, "phase-one Cox fit");
    AuxiliaryMatrix aux{phase_one.dfbetas, source};
    if (options.intercept) aux = aux.with_intercept();
    RakingEstimate out;
    out.raking = solve_raking(design, aux, options.raking);
    if (!out.raking.converged) fail(ErrorCode::NotConverged, "raking did not satisfy the calibration equations");
    out.fit = fit_cox(validated_data(cohort, design, out.raking.weights), options.cox);
    out.phase_one_fit = std::move(phase_one);
    return out;
}

}  // namespace detail

/// Generalized raking with auxiliaries from the naive phase-one fit.
inline RakingEstimate grn_estimate(const CohortData& cohort, const TwoPhaseDesign& design,
                                   const RakingEstimatorOptions& options = {}) {
    design.validate(cohort);
    auto naive = fit_cox(naive_data(cohort), options.cox);
    return detail::rake_and_fit(cohort, design, std::move(naive), AuxiliarySource::NaiveInfluence, options);
}

/// Generalized raking with auxiliaries from the regression-calibrated
/// phase-one fit (IPW calibration under unequal-probability designs).
inline RakingEstimate grrc_estimate(const CohortData& cohort, const TwoPhaseDesign& design,
                                    const ErrorModelSpec& spec, const RakingEstimatorOptions& options = {}) {
    auto rc = rc_fit(cohort, design, spec, design_weighting(design), options.cox);
    return detail::rake_and_fit(cohort, design, std::move(rc), AuxiliarySource::RCInfluence, options);
}

}  // namespace rakecal
