#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <optional>

#include "support.hpp"

using namespace rakecal;
using testing_support::small_cohort;

namespace {

template <class Fn>
std::optional<ErrorCode> code_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

Vector naive_beta(const CohortData& c, const TwoPhaseDesign&) { return fit_cox(naive_data(c)).beta; }

}  // namespace

TEST(DrawValidation, SrsOfTheWholeCohortSelectsEveryone) {
    const auto c = small_cohort(1, 150);
    const auto d = draw_validation(c, SamplingPlan::srs(150, 1));
    EXPECT_EQ(d.n_selected(), 150);
    EXPECT_TRUE((d.pi.array() == 1.0).all());
}

TEST(DrawValidation, SrsHasFixedSizeAndProbability) {
    const auto c = small_cohort(2, 2000);
    const auto d = draw_validation(c, SamplingPlan::srs(200, 2));
    EXPECT_EQ(d.n_selected(), 200);
    EXPECT_TRUE((d.pi.array() == 0.1).all());
    double ht = 0.0;
    for (auto i : d.selected_rows()) ht += 1.0 / d.pi(i);
    EXPECT_NEAR(ht, 2000.0, 1e-9);
}

TEST(DrawValidation, BernoulliHtTotalIsNearTheCohortSize) {
    const auto c = small_cohort(3, 2000);
    const auto d = draw_validation(c, SamplingPlan::bernoulli(0.2, 3));
    EXPECT_TRUE((d.pi.array() == 0.2).all());
    // sd of the HT count is sqrt(n (1 - p) / p) = 89.4
    EXPECT_NEAR(static_cast<double>(d.n_selected()) / 0.2, 2000.0, 4 * 89.4);
}

TEST(DrawValidation, CaseCohortAddsEveryCase) {
    const auto c = small_cohort(4, 1000);
    const auto d = draw_validation(c, SamplingPlan::case_cohort(0.07, 4));
    ASSERT_EQ(d.strata.size(), 1000u);
    Eigen::Index non_case_selected = 0;
    for (Eigen::Index i = 0; i < c.n(); ++i) {
        const auto s = static_cast<std::size_t>(i);
        if (c.event_star(i) != 0) {
            EXPECT_EQ(d.selected[s], 1);
            EXPECT_EQ(d.pi(i), 1.0);
            EXPECT_EQ(d.strata[s], 1);
        } else {
            EXPECT_DOUBLE_EQ(d.pi(i), 0.07);
            EXPECT_EQ(d.strata[s], 0);
            non_case_selected += d.selected[s];
        }
    }
    EXPECT_LE(non_case_selected, 70);
    EXPECT_GT(non_case_selected, 0);
}

TEST(DrawValidation, InvalidPlansAreRejected) {
    const auto c = small_cohort(5, 100);
    for (const auto& plan : {SamplingPlan::srs(0, 1), SamplingPlan::srs(101, 1), SamplingPlan::bernoulli(0.0, 1),
                             SamplingPlan::bernoulli(1.5, 1), SamplingPlan::case_cohort(0.0, 1),
                             SamplingPlan::case_cohort(0.001, 1)}) {
        EXPECT_EQ(code_of([&] { draw_validation(c, plan); }), ErrorCode::InvalidPlan);
    }
}

TEST(DrawValidation, DeterministicGivenTheSeed) {
    const auto c = small_cohort(6, 500);
    for (const auto& plan : {SamplingPlan::srs(50, 9), SamplingPlan::bernoulli(0.1, 9), SamplingPlan::case_cohort(0.1, 9)}) {
        EXPECT_EQ(draw_validation(c, plan).selected, draw_validation(c, plan).selected);
    }
    EXPECT_NE(draw_validation(c, SamplingPlan::srs(50, 9)).selected,
              draw_validation(c, SamplingPlan::srs(50, 10)).selected);
}

TEST(Resample, PreservesStratumSizes) {
    const auto c = small_cohort(7, 300);
    const auto d = draw_validation(c, SamplingPlan::srs(40, 7));
    auto rng = make_stream(7, 0);
    for (int rep = 0; rep < 20; ++rep) {
        const auto rows = stratified_resample(d, rng);
        ASSERT_EQ(rows.size(), 300u);
        const auto take = d.take(rows);
        EXPECT_EQ(take.n_selected(), 40);
        for (std::size_t r = 0; r < rows.size(); ++r) EXPECT_EQ(take.selected[r] != 0, r < 40);
    }
}

TEST(Bootstrap, ConstantEstimatorHasZeroSe) {
    const auto c = small_cohort(8, 200);
    const auto d = draw_validation(c, SamplingPlan::srs(40, 8));
    const Estimator constant = [](const CohortData&, const TwoPhaseDesign&) {
        return Vector((Vector(2) << 0.3, -1.7).finished());
    };
    const auto r = stratified_bootstrap(c, d, constant, {50, 8});
    EXPECT_TRUE((r.se.array() == 0.0).all());
    EXPECT_EQ(r.b_effective, 50);
}

TEST(Bootstrap, IdenticalSeedsGiveIdenticalReplicates) {
    const auto c = small_cohort(9, 200);
    const auto d = draw_validation(c, SamplingPlan::srs(40, 9));
    const Estimator est = naive_beta;
    const Vector a = bootstrap_replicate(c, d, est, 123, 0);
    const Vector b = bootstrap_replicate(c, d, est, 123, 0);
    EXPECT_TRUE((a.array() == b.array()).all());
    const auto r = summarize_replicates(est(c, d), {a, b}, 0.1);
    EXPECT_TRUE((r.se.array() == 0.0).all());
}

TEST(Bootstrap, ReplicatesDoNotDependOnThreadCount) {
    const auto c = small_cohort(10, 200);
    const auto d = draw_validation(c, SamplingPlan::srs(40, 10));
    const auto serial = stratified_bootstrap(c, d, naive_beta, {30, 77, 0.1, 1});
    const auto parallel = stratified_bootstrap(c, d, naive_beta, {30, 77, 0.1, 4});
    EXPECT_TRUE((serial.estimates.array() == parallel.estimates.array()).all());
    EXPECT_TRUE((serial.se.array() == parallel.se.array()).all());
}

TEST(Bootstrap, IntervalsAreConsistentWithTheDraws) {
    const auto c = small_cohort(11, 300);
    const auto d = draw_validation(c, SamplingPlan::srs(60, 11));
    const auto r = stratified_bootstrap(c, d, naive_beta, {60, 5});
    for (Eigen::Index j = 0; j < r.point.size(); ++j) {
        const Vector col = r.estimates.col(j);
        const double mean = col.mean();
        const double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(col.size() - 1));
        EXPECT_NEAR(r.se(j), sd, 1e-12);
        EXPECT_GE(r.ci_percentile(j, 0), col.minCoeff());
        EXPECT_LE(r.ci_percentile(j, 1), col.maxCoeff());
        EXPECT_LT(r.ci_percentile(j, 0), r.ci_percentile(j, 1));
        EXPECT_NEAR(r.ci_normal(j, 1) - r.point(j), 1.959963984540054 * r.se(j), 1e-12);
        EXPECT_NEAR(r.point(j) - r.ci_normal(j, 0), 1.959963984540054 * r.se(j), 1e-12);
    }
}

TEST(Bootstrap, FailedReplicatesAreDroppedAndCounted) {
    const auto c = small_cohort(12, 100);
    const auto d = draw_validation(c, SamplingPlan::srs(20, 12));
    std::atomic<int> calls{0};
    const Estimator flaky = [&](const CohortData&, const TwoPhaseDesign&) {
        // the first call is the point estimate; then every 20th replicate fails
        if (calls++ % 20 == 1) fail(ErrorCode::NoEvents, "no events");
        return Vector(Vector::Ones(1));
    };
    const auto r = stratified_bootstrap(c, d, flaky, {100, 1});
    EXPECT_EQ(r.failures, 5);
    EXPECT_EQ(r.b_effective, 95);
    EXPECT_EQ(r.estimates.rows(), 95);

    calls = 0;
    const Estimator fragile = [&](const CohortData&, const TwoPhaseDesign&) {
        if (calls++ % 5 == 1) fail(ErrorCode::NoEvents, "no events");
        return Vector(Vector::Ones(1));
    };
    EXPECT_EQ(code_of([&] { stratified_bootstrap(c, d, fragile, {100, 1}); }), ErrorCode::AllReplicatesFailed);
    EXPECT_EQ(code_of([&] { stratified_bootstrap(c, d, naive_beta, {1, 1}); }), ErrorCode::InvalidConfig);
}
