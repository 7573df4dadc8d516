#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "rakecal/rakecal.hpp"

namespace testing_support {

using rakecal::Matrix;
using rakecal::Vector;

/// Small random right-censored cohort with ties and unequal weights.
inline rakecal::SurvivalData random_survival(std::mt19937_64& rng, Eigen::Index n, Eigen::Index k,
                                             bool weighted = true, bool ties = true) {
    std::normal_distribution<double> norm;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    rakecal::SurvivalData d;
    d.x.resize(n, k);
    d.time.resize(n);
    d.event.resize(n);
    d.weight.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) d.x(i, j) = norm(rng);
        const double rate = std::exp(0.4 * d.x(i, 0));
        double t = -std::log(unif(rng)) / rate;
        if (ties) t = std::ceil(t * 4.0) / 4.0;
        d.time(i) = t;
        d.event(i) = unif(rng) < 0.75 ? 1 : 0;
        d.weight(i) = weighted ? 0.5 + unif(rng) : 1.0;
    }
    return d;
}

/// Breslow log partial likelihood written directly from its definition:
/// a double loop over events and risk sets, no sorting or accumulation.
inline double explicit_loglik(const Vector& beta, const rakecal::SurvivalData& d) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (d.event(i) == 0) continue;
        double denom = 0.0;
        for (Eigen::Index j = 0; j < d.size(); ++j) {
            const bool at_risk = d.time(j) >= d.time(i) && (!d.has_entry() || d.entry(j) < d.time(i));
            if (at_risk) denom += d.weight(j) * std::exp(d.x.row(j).dot(beta));
        }
        ll += d.weight(i) * (d.x.row(i).dot(beta) - std::log(denom));
    }
    return ll;
}

/// Score of the explicit likelihood for one covariate, also by definition.
inline double explicit_score_1d(double beta, const rakecal::SurvivalData& d) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (d.event(i) == 0) continue;
        double s0 = 0.0, s1 = 0.0;
        for (Eigen::Index j = 0; j < d.size(); ++j) {
            if (d.time(j) < d.time(i)) continue;
            const double r = d.weight(j) * std::exp(beta * d.x(j, 0));
            s0 += r;
            s1 += r * d.x(j, 0);
        }
        s += d.weight(i) * (d.x(i, 0) - s1 / s0);
    }
    return s;
}

/// Removes row `drop` from a survival data set.
inline rakecal::SurvivalData drop_row(const rakecal::SurvivalData& d, Eigen::Index drop) {
    rakecal::SurvivalData out;
    const Eigen::Index n = d.size() - 1;
    out.time.resize(n);
    out.event.resize(n);
    out.weight.resize(n);
    out.x.resize(n, d.x.cols());
    for (Eigen::Index i = 0, r = 0; i < d.size(); ++i) {
        if (i == drop) continue;
        out.time(r) = d.time(i);
        out.event(r) = d.event(i);
        out.weight(r) = d.weight(i);
        out.x.row(r) = d.x.row(i);
        ++r;
    }
    return out;
}

/// A small simulated two-phase cohort from the package generator.
inline rakecal::CohortData small_cohort(std::uint64_t seed, Eigen::Index n = 400, bool errors = true) {
    rakecal::ScenarioConfig c;
    c.n = n;
    c.censor_lower = 3.3;
    if (!errors) {
        c.sigma2_eps = 0.0;
        c.sigma2_nu = 0.0;
        c.sigma_eps_nu = 0.0;
        c.alpha = {0.0, 1.0, 0.0};
        c.gamma = {0.0, 0.0, 0.0};
    }
    const rakecal::ErrorSampler errs(c);
    auto rng = rakecal::make_stream(seed, 0);
    return rakecal::generate_cohort(c, errs, *c.censor_lower, rng);
}

/// Gaussian auxiliary columns with small nonzero means.
inline Matrix random_aux(std::mt19937_64& rng, Eigen::Index n, Eigen::Index k) {
    std::normal_distribution<double> norm;
    Matrix a(n, k);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < k; ++j) a(i, j) = norm(rng) + (j == 0 ? 0.3 : -0.2);
    return a;
}

/// Simple random validation sample of size m.
inline rakecal::TwoPhaseDesign random_srs(std::mt19937_64& rng, Eigen::Index n, Eigen::Index m) {
    rakecal::TwoPhaseDesign d;
    d.selected.assign(static_cast<std::size_t>(n), 0);
    for (auto i : rakecal::detail::sample_without_replacement(n, m, rng)) d.selected[static_cast<std::size_t>(i)] = 1;
    d.pi = Vector::Constant(n, static_cast<double>(m) / static_cast<double>(n));
    return d;
}

/// Dual of the raking problem: sum_R exp(-l'A_i)/pi_i + l' sum_i A_i.
inline double dual(const Vector& lambda, const Matrix& a, const rakecal::TwoPhaseDesign& d) {
    double v = lambda.dot(a.colwise().sum().transpose());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        if (d.selected[static_cast<std::size_t>(i)] != 0) v += std::exp(-a.row(i).dot(lambda)) / d.pi(i);
    }
    return v;
}

/// Minimizes the two-dimensional dual by exhaustive search on successively
/// finer grids, each centred on the previous minimum.
inline Vector grid_search_dual(const Matrix& a, const rakecal::TwoPhaseDesign& d) {
    Vector best = Vector::Zero(2);
    double half = 4.0, step = 0.01;
    for (int level = 0; level < 4; ++level) {
        const Vector centre = best;
        double best_v = dual(best, a, d);
        const int steps = static_cast<int>(std::lround(half / step));
        for (int u = -steps; u <= steps; ++u) {
            for (int v = -steps; v <= steps; ++v) {
                const Vector l = centre + step * Vector((Vector(2) << u, v).finished());
                const double val = dual(l, a, d);
                if (val < best_v) {
                    best_v = val;
                    best = l;
                }
            }
        }
        half = 4.0 * step;
        step /= 20.0;
    }
    return best;
}

/// Calibration coefficients written from plug-in moments: slope =
/// Sigma_WW^-1 Sigma_WY and intercept = mu_Y - slope' mu_W, with W = (block, Z).
inline Vector moment_form(const Matrix& block, const Matrix& z, const Vector& y, const std::vector<Eigen::Index>& rows) {
    const auto m = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index k = block.cols() + z.cols();
    Matrix w(m, k);
    Vector yy(m);
    for (Eigen::Index r = 0; r < m; ++r) {
        const auto i = rows[static_cast<std::size_t>(r)];
        w.row(r) << block.row(i), z.row(i);
        yy(r) = y(i);
    }
    const Vector mu_w = w.colwise().mean().transpose();
    const double mu_y = yy.mean();
    const Matrix wc = w.rowwise() - mu_w.transpose();
    const Vector yc = yy.array() - mu_y;
    const Matrix s_ww = wc.transpose() * wc / static_cast<double>(m - 1);
    const Vector s_wy = wc.transpose() * yc / static_cast<double>(m - 1);
    const Vector slope = s_ww.inverse() * s_wy;
    Vector out(1 + k);
    out << mu_y - slope.dot(mu_w), slope;
    return out;
}

}  // namespace testing_support
