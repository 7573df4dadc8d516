#pragma once

// Phase-one cohort data (error-prone outcome and covariates for everyone,
// validated values where available) and the two-phase sampling design.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "rakecal/errors.hpp"
#include "rakecal/numeric.hpp"
#include "rakecal/survival_core.hpp"

namespace rakecal {

struct CohortData {
    // Observed for every subject.
    Vector time_star;
    IntVector event_star;
    Matrix x_star;  // n x p
    Matrix z;       // n x q

    // Validated values; only rows with has_truth[i] != 0 are meaningful.
    Vector time;
    IntVector event;
    Matrix x;  // n x p
    std::vector<unsigned char> has_truth;

    // Explicit outcome error (time_star - time) when supplied by the data
    // source; otherwise derived from the validated time.
    std::optional<Vector> omega;

    Eigen::Index n() const { return time_star.size(); }
    Eigen::Index p() const { return x_star.cols(); }
    Eigen::Index q() const { return z.cols(); }

    double omega_at(Eigen::Index i) const {
        return omega ? (*omega)(i) : time_star(i) - time(i);
    }

    void validate() const {
        const Eigen::Index rows = n();
        if (rows == 0) fail(ErrorCode::EmptyDataset, "cohort has no records");
        if (event_star.size() != rows || x_star.rows() != rows || z.rows() != rows ||
            time.size() != rows || event.size() != rows || x.rows() != rows ||
            x.cols() != x_star.cols() || static_cast<Eigen::Index>(has_truth.size()) != rows ||
            (omega && omega->size() != rows)) {
            fail(ErrorCode::DimensionMismatch, "cohort columns have inconsistent shapes");
        }
        if (!time_star.allFinite() || !x_star.allFinite() || !z.allFinite()) {
            fail(ErrorCode::NonFiniteInput, "phase-one data contain non-finite values");
        }
        for (Eigen::Index i = 0; i < rows; ++i) {
            if (time_star(i) < 0.0) fail(ErrorCode::NonFiniteInput, "negative error-prone time");
            if (has_truth[static_cast<std::size_t>(i)] == 0) continue;
            if (!std::isfinite(time(i)) || time(i) < 0.0 || !x.row(i).allFinite()) {
                fail(ErrorCode::NonFiniteInput, "validated record " + std::to_string(i) + " is incomplete");
            }
        }
    }

    /// Row subset in the given order (duplicates allowed, as in resampling).
    CohortData take(const std::vector<Eigen::Index>& rows) const {
        CohortData out;
        const auto m = static_cast<Eigen::Index>(rows.size());
        out.time_star.resize(m);
        out.event_star.resize(m);
        out.x_star.resize(m, p());
        out.z.resize(m, q());
        out.time.resize(m);
        out.event.resize(m);
        out.x.resize(m, p());
        out.has_truth.resize(rows.size());
        if (omega) out.omega = Vector(m);
        for (Eigen::Index r = 0; r < m; ++r) {
            const Eigen::Index i = rows[static_cast<std::size_t>(r)];
            out.time_star(r) = time_star(i);
            out.event_star(r) = event_star(i);
            out.x_star.row(r) = x_star.row(i);
            out.z.row(r) = z.row(i);
            out.time(r) = time(i);
            out.event(r) = event(i);
            out.x.row(r) = x.row(i);
            out.has_truth[static_cast<std::size_t>(r)] = has_truth[static_cast<std::size_t>(i)];
            if (omega) (*out.omega)(r) = (*omega)(i);
        }
        return out;
    }

    bool fully_validated() const {
        for (auto h : has_truth)
            if (h == 0) return false;
        return true;
    }
};

/// Which subjects were validated (R) and with what known probability (pi).
struct TwoPhaseDesign {
    std::vector<unsigned char> selected;
    Vector pi;
    std::vector<int> strata;  // optional labels, e.g. case / non-case

    Eigen::Index size() const { return pi.size(); }

    Eigen::Index n_selected() const {
        Eigen::Index m = 0;
        for (auto s : selected) m += s != 0;
        return m;
    }

    std::vector<Eigen::Index> selected_rows() const {
        std::vector<Eigen::Index> rows;
        for (std::size_t i = 0; i < selected.size(); ++i)
            if (selected[i] != 0) rows.push_back(static_cast<Eigen::Index>(i));
        return rows;
    }

    /// True when every selection probability is the same (SRS / Bernoulli).
    bool equal_probability() const {
        return pi.size() == 0 || (pi.array() == pi(0)).all();
    }

    void validate(const CohortData& cohort) const {
        if (static_cast<Eigen::Index>(selected.size()) != cohort.n() || pi.size() != cohort.n() ||
            (!strata.empty() && static_cast<Eigen::Index>(strata.size()) != cohort.n())) {
            fail(ErrorCode::DimensionMismatch, "design length differs from cohort size");
        }
        for (Eigen::Index i = 0; i < pi.size(); ++i) {
            if (!(pi(i) > 0.0 && pi(i) <= 1.0)) {
                fail(ErrorCode::InvalidPlan, "sampling probability outside (0, 1]");
            }
            if (selected[static_cast<std::size_t>(i)] != 0 &&
                cohort.has_truth[static_cast<std::size_t>(i)] == 0) {
                fail(ErrorCode::SchemaError, "selected subject " + std::to_string(i) + " lacks validated data");
            }
        }
        if (n_selected() == 0) fail(ErrorCode::EmptyValidation, "no validated subjects");
    }

    TwoPhaseDesign take(const std::vector<Eigen::Index>& rows) const {
        TwoPhaseDesign out;
        out.selected.reserve(rows.size());
        out.pi.resize(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto i = rows[r];
            out.selected.push_back(selected[static_cast<std::size_t>(i)]);
            out.pi(static_cast<Eigen::Index>(r)) = pi(i);
            if (!strata.empty()) out.strata.push_back(strata[static_cast<std::size_t>(i)]);
        }
        return out;
    }

    /// Every subject validated with probability one.
    static TwoPhaseDesign census(Eigen::Index n) {
        TwoPhaseDesign d;
        d.selected.assign(static_cast<std::size_t>(n), 1);
        d.pi = Vector::Ones(n);
        return d;
    }
};

/// Survival data assembled from explicit columns; `z` is appended to `x`.
inline SurvivalData make_survival_data(const Vector& time, const IntVector& event, const Matrix& x,
                                       const Matrix& z, const Vector& weight) {
    SurvivalData d;
    d.time = time;
    d.event = event;
    d.x.resize(x.rows(), x.cols() + z.cols());
    d.x << x, z;
    d.weight = weight;
    return d;
}

/// (X*, Z, U*, Delta*) for every subject.
inline SurvivalData naive_data(const CohortData& c) {
    return make_survival_data(c.time_star, c.event_star, c.x_star, c.z, Vector::Ones(c.n()));
}

/// (X, Z, U, Delta) for every subject; requires validated data everywhere.
inline SurvivalData true_data(const CohortData& c) {
    if (!c.fully_validated()) {
        fail(ErrorCode::SchemaError, "true-data fit requires validated values for every subject");
    }
    return make_survival_data(c.time, c.event, c.x, c.z, Vector::Ones(c.n()));
}

/// Validated rows with the given per-row weights (indexed by cohort row).
inline SurvivalData validated_data(const CohortData& c, const TwoPhaseDesign& design,
                                   const Vector& weight) {
    const auto rows = design.selected_rows();
    const auto m = static_cast<Eigen::Index>(rows.size());
    SurvivalData d;
    d.time.resize(m);
    d.event.resize(m);
    d.x.resize(m, c.p() + c.q());
    d.weight.resize(m);
    for (Eigen::Index r = 0; r < m; ++r) {
        const Eigen::Index i = rows[static_cast<std::size_t>(r)];
        d.time(r) = c.time(i);
        d.event(r) = c.event(i);
        d.x.row(r) << c.x.row(i), c.z.row(i);
        d.weight(r) = weight(i);
    }
    return d;
}

}  // namespace rakecal
