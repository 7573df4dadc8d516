#pragma once

// Validation-subset sampling plans and the stratified bootstrap.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rakecal/cohort.hpp"
#include "rakecal/errors.hpp"
#include "rakecal/numeric.hpp"

namespace rakecal {

struct SamplingPlan {
    enum class Kind { SRS, Bernoulli, CaseCohort };

    Kind kind = Kind::SRS;
    Eigen::Index m = 0;      // SRS sample size
    double fraction = 0.0;   // Bernoulli probability or subcohort fraction
    std::uint64_t seed = 0;

    static SamplingPlan srs(Eigen::Index m, std::uint64_t seed) { return {Kind::SRS, m, 0.0, seed}; }
    static SamplingPlan bernoulli(double p, std::uint64_t seed) { return {Kind::Bernoulli, 0, p, seed}; }
    static SamplingPlan case_cohort(double f, std::uint64_t seed) { return {Kind::CaseCohort, 0, f, seed}; }
};

namespace detail {

/// Exactly `m` of `n` indices, uniformly, via a partial Fisher-Yates shuffle.
template <class Rng>
std::vector<Eigen::Index> sample_without_replacement(Eigen::Index n, Eigen::Index m, Rng& rng) {
    std::vector<Eigen::Index> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), Eigen::Index{0});
    for (Eigen::Index i = 0; i < m; ++i) {
        std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
    }
    pool.resize(static_cast<std::size_t>(m));
    return pool;
}

}  // namespace detail

/// Draws the validation subset. Case-cohort: an SRS subcohort of
/// round(f n) plus every apparent case; cases have pi = 1 and non-cases pi
/// equal to the subcohort sampling fraction.
template <class Rng>
TwoPhaseDesign draw_validation(const CohortData& cohort, const SamplingPlan& plan, Rng& rng) {
    const Eigen::Index n = cohort.n();
    TwoPhaseDesign d;
    d.selected.assign(static_cast<std::size_t>(n), 0);
    d.pi = Vector(n);
    switch (plan.kind) {
        case SamplingPlan::Kind::SRS: {
            if (plan.m < 1 || plan.m > n) fail(ErrorCode::InvalidPlan, "SRS size must lie in [1, n]");
            for (auto i : detail::sample_without_replacement(n, plan.m, rng)) d.selected[static_cast<std::size_t>(i)] = 1;
            d.pi.setConstant(static_cast<double>(plan.m) / static_cast<double>(n));
            break;
        }
        case SamplingPlan::Kind::Bernoulli: {
            if (!(plan.fraction > 0.0 && plan.fraction <= 1.0)) fail(ErrorCode::InvalidPlan, "Bernoulli p must lie in (0, 1]");
            std::bernoulli_distribution coin(plan.fraction);
            for (Eigen::Index i = 0; i < n; ++i) d.selected[static_cast<std::size_t>(i)] = coin(rng) ? 1 : 0;
            d.pi.setConstant(plan.fraction);
            break;
        }
        case SamplingPlan::Kind::CaseCohort: {
            if (!(plan.fraction > 0.0 && plan.fraction <= 1.0)) fail(ErrorCode::InvalidPlan, "subcohort fraction must lie in (0, 1]");
            const auto size = static_cast<Eigen::Index>(std::llround(plan.fraction * static_cast<double>(n)));
            if (size < 1) fail(ErrorCode::InvalidPlan, "subcohort is empty");
            for (auto i : detail::sample_without_replacement(n, size, rng)) d.selected[static_cast<std::size_t>(i)] = 1;
            const double sub_pi = static_cast<double>(size) / static_cast<double>(n);
            d.strata.resize(static_cast<std::size_t>(n));
            for (Eigen::Index i = 0; i < n; ++i) {
                const bool is_case = cohort.event_star(i) != 0;
                d.strata[static_cast<std::size_t>(i)] = is_case ? 1 : 0;
                if (is_case) d.selected[static_cast<std::size_t>(i)] = 1;
                d.pi(i) = is_case ? 1.0 : sub_pi;
            }
            break;
        }
    }
    return d;
}

inline TwoPhaseDesign draw_validation(const CohortData& cohort, const SamplingPlan& plan) {
    auto rng = make_stream(plan.seed, 0);
    return draw_validation(cohort, plan, rng);
}

/// Any estimator mapping (cohort, design) to a coefficient vector.
using Estimator = std::function<Vector(const CohortData&, const TwoPhaseDesign&)>;

struct BootstrapOptions {
    int replicates = 300;
    std::uint64_t seed = 0;
    double max_failure_fraction = 0.10;
    unsigned threads = 1;
};

struct BootstrapResult {
    Vector point;            // estimator on the original data
    Matrix estimates;        // b_effective x k successful replicates
    Vector se;
    Matrix ci_percentile;    // k x 2
    Matrix ci_normal;        // k x 2, point +- 1.96 se
    int b_requested = 0;
    int b_effective = 0;
    int failures = 0;
};

/// Resample with replacement within the validated and unvalidated strata,
/// preserving both stratum sizes.
template <class Rng>
std::vector<Eigen::Index> stratified_resample(const TwoPhaseDesign& design, Rng& rng) {
    std::vector<Eigen::Index> validated;
    std::vector<Eigen::Index> other;
    for (std::size_t i = 0; i < design.selected.size(); ++i) {
        (design.selected[i] != 0 ? validated : other).push_back(static_cast<Eigen::Index>(i));
    }
    std::vector<Eigen::Index> rows;
    rows.reserve(design.selected.size());
    for (const auto* stratum : {&validated, &other}) {
        if (stratum->empty()) continue;
        std::uniform_int_distribution<std::size_t> pick(0, stratum->size() - 1);
        for (std::size_t j = 0; j < stratum->size(); ++j) rows.push_back((*stratum)[pick(rng)]);
    }
    return rows;
}

/// One bootstrap replicate drawn from its own stream.
inline Vector bootstrap_replicate(const CohortData& cohort, const TwoPhaseDesign& design,
                                  const Estimator& estimator, std::uint64_t stream_seed, std::uint64_t index) {
    auto rng = make_stream(stream_seed, index);
    const auto rows = stratified_resample(design, rng);
    return estimator(cohort.take(rows), design.take(rows));
}

inline BootstrapResult summarize_replicates(const Vector& point, const std::vector<std::optional<Vector>>& draws,
                                            double max_failure_fraction) {
    BootstrapResult r;
    r.point = point;
    r.b_requested = static_cast<int>(draws.size());
    const Eigen::Index k = point.size();
    std::vector<Vector> ok;
    for (const auto& d : draws)
        if (d && d->allFinite() && d->size() == k) ok.push_back(*d);
    r.b_effective = static_cast<int>(ok.size());
    r.failures = r.b_requested - r.b_effective;
    if (ok.size() < 2 ||
        static_cast<double>(r.failures) > max_failure_fraction * static_cast<double>(r.b_requested)) {
        fail(ErrorCode::AllReplicatesFailed, std::to_string(r.failures) + " of " +
                                                 std::to_string(r.b_requested) + " bootstrap replicates failed");
    }
    r.estimates.resize(static_cast<Eigen::Index>(ok.size()), k);
    for (std::size_t b = 0; b < ok.size(); ++b) r.estimates.row(static_cast<Eigen::Index>(b)) = ok[b].transpose();

    r.se = Vector(k);
    r.ci_percentile = Matrix(k, 2);
    r.ci_normal = Matrix(k, 2);
    for (Eigen::Index j = 0; j < k; ++j) {
        const Vector col = r.estimates.col(j);
        // Shifted by the first draw so identical draws give exactly zero.
        const Vector dev = col.array() - col(0);
        const double mean = dev.mean();
        CompensatedSum ss;
        for (Eigen::Index b = 0; b < dev.size(); ++b) ss.add((dev(b) - mean) * (dev(b) - mean));
        r.se(j) = std::sqrt(ss.value() / static_cast<double>(col.size() - 1));
        std::vector<double> values(col.data(), col.data() + col.size());
        r.ci_percentile(j, 0) = quantile(values, 0.025);
        r.ci_percentile(j, 1) = quantile(values, 0.975);
        r.ci_normal(j, 0) = point(j) - 1.959963984540054 * r.se(j);
        r.ci_normal(j, 1) = point(j) + 1.959963984540054 * r.se(j);
    }
    return r;
}

/// Stratified bootstrap: each replicate re-runs the full estimator pipeline
/// on a resample; failed replicates are dropped and counted.
inline BootstrapResult stratified_bootstrap(const CohortData& cohort, const TwoPhaseDesign& design,
                                            const Estimator& estimator, const BootstrapOptions& options) {
    if (options.replicates < 2) fail(ErrorCode::InvalidConfig, "bootstrap needs at least two replicates");
    const Vector point = estimator(cohort, design);
    std::vector<std::optional<Vector>> draws(static_cast<std::size_t>(options.replicates));
    parallel_for(draws.size(), options.threads, [&](std::size_t b) {
        try {
            draws[b] = bootstrap_replicate(cohort, design, estimator, options.seed, b);
        } catch (const Error&) {
            draws[b].reset();
        }
    });
    return summarize_replicates(point, draws, options.max_failure_fraction);
}

}  // namespace rakecal
