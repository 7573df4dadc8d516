#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace rakecal;
using testing_support::moment_form;
using testing_support::small_cohort;

namespace {

TwoPhaseDesign srs(const CohortData& c, Eigen::Index m, std::uint64_t seed) {
    return draw_validation(c, SamplingPlan::srs(m, seed));
}

Vector omega_of(const CohortData& c) {
    Vector w(c.n());
    for (Eigen::Index i = 0; i < c.n(); ++i) w(i) = c.omega_at(i);
    return w;
}

}  // namespace

TEST(Calibration, CovariateMomentFormEqualsLeastSquares) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto c = small_cohort(seed);
        const auto d = srs(c, 120, seed);
        const Matrix zeta = fit_x_calibration(c, d);
        const Vector oracle = moment_form(c.x_star, c.z, c.x.col(0), d.selected_rows());
        EXPECT_LT((zeta.col(0) - oracle).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Calibration, OutcomeMomentFormEqualsLeastSquares) {
    const auto c = small_cohort(4);
    const auto d = srs(c, 150, 4);
    for (auto regressor : {OmegaRegressor::TrueX, OmegaRegressor::ErrorProneX}) {
        const ErrorModelSpec spec{ErrorMode::Both, regressor};
        const Vector zeta = fit_omega_calibration(c, d, spec);
        const Matrix& block = regressor == OmegaRegressor::TrueX ? c.x : c.x_star;
        const Vector oracle = moment_form(block, c.z, omega_of(c), d.selected_rows());
        EXPECT_LT((zeta - oracle).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Calibration, ErrorFreeCovariateGivesIdentityMap) {
    auto c = small_cohort(5);
    c.x_star = c.x;
    const auto d = srs(c, 80, 5);
    const Matrix zeta = fit_x_calibration(c, d);
    EXPECT_NEAR(zeta(0, 0), 0.0, 1e-10);
    EXPECT_NEAR(zeta(1, 0), 1.0, 1e-10);
    EXPECT_NEAR(zeta(2, 0), 0.0, 1e-10);
    const auto cal = apply_rc(c, fit_calibration(c, d, ErrorModelSpec::for_mode(ErrorMode::CovariateOnly),
                                                 Weighting::Unweighted),
                              ErrorModelSpec::for_mode(ErrorMode::CovariateOnly));
    EXPECT_LT((cal.x_hat - c.x_star).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Calibration, NoOutcomeErrorGivesZeroOmegaModel) {
    auto c = small_cohort(6);
    c.time_star = c.time;
    const auto d = srs(c, 80, 6);
    const auto spec = ErrorModelSpec::for_mode(ErrorMode::OutcomeOnly);
    const Vector zeta = fit_omega_calibration(c, d, spec);
    EXPECT_LT(zeta.cwiseAbs().maxCoeff(), 1e-10);
    const auto cal = apply_rc(c, fit_calibration(c, d, spec, Weighting::Unweighted), spec);
    EXPECT_LT((cal.u_hat - c.time_star).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Calibration, ExactLinearOmegaIsRecovered) {
    auto c = small_cohort(7);
    const double g0 = 2.5, g1 = 0.2, g2 = -0.3;
    for (Eigen::Index i = 0; i < c.n(); ++i) {
        c.time_star(i) = c.time(i) + g0 + g1 * c.x(i, 0) + g2 * c.z(i, 0);
    }
    const auto d = srs(c, 60, 7);
    const Vector zeta = fit_omega_calibration(c, d, ErrorModelSpec::for_mode(ErrorMode::OutcomeOnly));
    EXPECT_NEAR(zeta(0), g0, 1e-8);
    EXPECT_NEAR(zeta(1), g1, 1e-8);
    EXPECT_NEAR(zeta(2), g2, 1e-8);
}

TEST(Calibration, SpecDefaultsFollowTheMode) {
    EXPECT_EQ(ErrorModelSpec::for_mode(ErrorMode::OutcomeOnly).regress_omega_on, OmegaRegressor::TrueX);
    EXPECT_EQ(ErrorModelSpec::for_mode(ErrorMode::Both).regress_omega_on, OmegaRegressor::ErrorProneX);
    EXPECT_EQ(ErrorModelSpec::for_mode(ErrorMode::CovariateOnly).regress_omega_on, OmegaRegressor::ErrorProneX);
}

TEST(ApplyRc, CovariateOnlyLeavesTimesUntouched) {
    const auto c = small_cohort(8);
    const auto d = srs(c, 100, 8);
    const auto spec = ErrorModelSpec::for_mode(ErrorMode::CovariateOnly);
    const auto cal = apply_rc(c, fit_calibration(c, d, spec, Weighting::Unweighted), spec);
    EXPECT_TRUE((cal.u_hat.array() == c.time_star.array()).all());
    EXPECT_TRUE((cal.event.array() == c.event_star.array()).all());
}

TEST(ApplyRc, IdentityModelReproducesTheNaiveFit) {
    const auto c = small_cohort(9);
    CalibrationModel model;
    model.zeta_x = (Matrix(3, 1) << 0.0, 1.0, 0.0).finished();
    model.zeta_omega = Vector::Zero(3);
    const auto spec = ErrorModelSpec::for_mode(ErrorMode::Both);
    const auto cal = apply_rc(c, model, spec);
    EXPECT_TRUE((cal.x_hat.array() == c.x_star.array()).all());
    EXPECT_TRUE((cal.u_hat.array() == c.time_star.array()).all());
    const auto a = fit_cox(calibrated_data(cal, c));
    const auto b = fit_cox(naive_data(c));
    EXPECT_TRUE((a.beta.array() == b.beta.array()).all());
}

TEST(ApplyRc, OutcomeAdjustmentIsTheLinearPrediction) {
    const auto c = small_cohort(10);
    const auto d = srs(c, 100, 10);
    const auto spec = ErrorModelSpec::for_mode(ErrorMode::Both);
    const auto model = fit_calibration(c, d, spec, Weighting::Unweighted);
    const auto cal = apply_rc(c, model, spec);
    Matrix reg(c.n(), 3);
    reg << Vector::Ones(c.n()), c.x_star, c.z;
    Vector expected = c.time_star - reg * model.zeta_omega;
    expected.array() += cal.shift;
    EXPECT_TRUE((cal.u_hat.array() == expected.array()).all());
}

TEST(ApplyRc, DimensionMismatchIsAnError) {
    const auto c = small_cohort(11);
    CalibrationModel model;
    model.zeta_x = Matrix::Zero(4, 1);
    try {
        apply_rc(c, model, ErrorModelSpec::for_mode(ErrorMode::CovariateOnly));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
    }
}

TEST(ApplyRc, LowTimesAreShiftedAboveTheFloor) {
    auto c = small_cohort(12);
    // A large systematic outcome error pushes some imputed times below zero.
    for (Eigen::Index i = 0; i < c.n(); ++i) c.time_star(i) = std::abs(c.time(i) + 1.0 + 2.0 * c.x(i, 0));
    const auto d = srs(c, 100, 12);
    const auto spec = ErrorModelSpec::for_mode(ErrorMode::OutcomeOnly);
    const auto cal = apply_rc(c, fit_calibration(c, d, spec, Weighting::Unweighted), spec);
    ASSERT_GT(cal.low_times, 0);
    EXPECT_GT(cal.shift, 0.0);
    EXPECT_NEAR(cal.u_hat.minCoeff(), 1e-8 * c.time_star.maxCoeff(), 1e-12);
    EXPECT_TRUE(cal.u_hat.allFinite());
    const auto fit = rc_fit(c, d, spec, Weighting::Unweighted);
    EXPECT_EQ(fit.diagnostics.low_times, cal.low_times);
}

TEST(Calibration, ShiftingAllTimesLeavesTheCoxFitUnchanged) {
    std::mt19937_64 rng(13);
    const auto d = testing_support::random_survival(rng, 80, 2);
    auto shifted = d;
    shifted.time.array() += 3.75;
    EXPECT_LT((fit_cox(d).beta - fit_cox(shifted).beta).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Calibration, ResidualsAreOrthogonalToRegressors) {
    const auto c = small_cohort(14);
    const auto d = srs(c, 150, 14);
    const Matrix zeta = fit_x_calibration(c, d);
    const auto rows = d.selected_rows();
    Vector dot = Vector::Zero(3);
    for (auto i : rows) {
        const Vector r = (Vector(3) << 1.0, c.x_star(i, 0), c.z(i, 0)).finished();
        dot += r * (c.x(i, 0) - r.dot(zeta.col(0)));
    }
    EXPECT_LT(dot.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Calibration, IpwEqualsUnweightedUnderEqualProbabilities) {
    const auto c = small_cohort(15);
    auto d = srs(c, 120, 15);
    const auto spec = ErrorModelSpec::for_mode(ErrorMode::Both);
    for (double pi : {1.0, 0.3}) {
        d.pi.setConstant(pi);
        const auto a = fit_calibration(c, d, spec, Weighting::Unweighted);
        const auto b = fit_calibration(c, d, spec, Weighting::InverseProbability);
        EXPECT_LT((a.zeta_x - b.zeta_x).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT((a.zeta_omega - b.zeta_omega).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Calibration, EmptyValidationIsAnError) {
    const auto c = small_cohort(16);
    auto d = TwoPhaseDesign::census(c.n());
    std::fill(d.selected.begin(), d.selected.end(), 0);
    try {
        fit_x_calibration(c, d);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyValidation);
    }
}

TEST(Calibration, ConstantRegressorIsRankDeficient) {
    auto c = small_cohort(17);
    c.x_star.setConstant(1.0);
    const auto d = srs(c, 50, 17);
    try {
        fit_x_calibration(c, d);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::RankDeficientDesign);
    }
}

TEST(Calibration, FitsAreDeterministic) {
    const auto c = small_cohort(18);
    const auto d = srs(c, 100, 18);
    const auto spec = ErrorModelSpec::for_mode(ErrorMode::Both);
    const auto a = rsrc_fit(c, d, spec);
    const auto b = rsrc_fit(c, d, spec);
    EXPECT_TRUE((a.beta.array() == b.beta.array()).all());
    EXPECT_TRUE((rc_fit(c, d, spec, Weighting::Unweighted).beta.array() ==
                 rc_fit(c, d, spec, Weighting::Unweighted).beta.array()).all());
}

TEST(Rsrc, SingleWindowEqualsRc) {
    for (std::uint64_t seed : {19u, 20u}) {
        const auto c = small_cohort(seed);
        const auto d = srs(c, 100, seed);
        for (auto mode : {ErrorMode::CovariateOnly, ErrorMode::OutcomeOnly, ErrorMode::Both}) {
            const auto spec = ErrorModelSpec::for_mode(mode);
            RsrcOptions opts;
            opts.grid = {0.0};
            const auto a = rsrc_fit(c, d, spec, opts);
            const auto b = rc_fit(c, d, spec, Weighting::Unweighted);
            EXPECT_LT((a.beta - b.beta).cwiseAbs().maxCoeff(), 1e-10);
        }
    }
}

TEST(Rsrc, ErrorFreeDataReproduceTheTrueFit) {
    const auto c = small_cohort(21, 400, false);
    ASSERT_TRUE((c.x_star.array() == c.x.array()).all());
    ASSERT_TRUE((c.time_star.array() == c.time.array()).all());
    const auto d = srs(c, 100, 21);
    const auto truth = fit_cox(true_data(c));
    const auto spec = ErrorModelSpec::for_mode(ErrorMode::Both);
    EXPECT_LT((rc_fit(c, d, spec, Weighting::Unweighted).beta - truth.beta).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((rsrc_fit(c, d, spec).beta - truth.beta).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((fit_cox(naive_data(c)).beta - truth.beta).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Rsrc, InvalidGridIsRejected) {
    const auto c = small_cohort(22);
    const auto d = srs(c, 100, 22);
    for (const std::vector<double>& grid : {std::vector<double>{}, {0.0, 0.5, 0.5}, {0.2, 0.1}, {0.0, 1.0}}) {
        RsrcOptions opts;
        opts.grid = grid;
        try {
            rsrc_fit(c, d, ErrorModelSpec::for_mode(ErrorMode::Both), opts);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
        }
    }
}

TEST(Rsrc, SmallLateRiskSetsFallBackToThePreviousWindow) {
    const auto c = small_cohort(23);
    const auto d = srs(c, 12, 23);
    RsrcOptions opts;
    opts.grid = {0.0, 0.3, 0.6, 0.9, 0.99};
    const auto fit = rsrc_fit(c, d, ErrorModelSpec::for_mode(ErrorMode::Both), opts);
    EXPECT_GT(fit.diagnostics.fallback_windows, 0);
    EXPECT_TRUE(fit.beta.allFinite());
}

TEST(Rsrc, FrozenOutcomeModelWithoutCovariateCorrectionEqualsRc) {
    // Every window then carries the same covariates and the stage-one times,
    // so splitting into episodes is the only difference from RC.
    const auto c = small_cohort(24);
    const auto d = TwoPhaseDesign::census(c.n());
    const auto spec = ErrorModelSpec::for_mode(ErrorMode::OutcomeOnly);
    RsrcOptions opts;
    opts.recalibrate_omega = false;
    const auto a = rsrc_fit(c, d, spec, opts);
    const auto b = rc_fit(c, d, spec, Weighting::Unweighted);
    EXPECT_LT((a.beta - b.beta).cwiseAbs().maxCoeff(), 1e-8);
}
