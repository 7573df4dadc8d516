#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include "rakecal/errors.hpp"

namespace rakecal {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IntVector = Eigen::VectorXi;

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) {
            comp_ += (sum_ - t) + v;
        } else {
            comp_ += (v - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

inline double max_abs(const Eigen::Ref<const Vector>& v) {
    return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

/// Sample quantile, linear interpolation between order statistics
/// (the "type 7" definition). `values` need not be sorted.
inline double quantile(std::vector<double> values, double prob) {
    if (values.empty()) fail(ErrorCode::EmptyDataset, "quantile of empty sample");
    std::sort(values.begin(), values.end());
    if (prob <= 0.0) return values.front();
    if (prob >= 1.0) return values.back();
    const double h = (static_cast<double>(values.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Weighted least squares y ~ design via column-pivoted QR on the
/// sqrt(weight)-scaled system. Columns of `y` are fitted independently.
inline Matrix weighted_least_squares(const Matrix& design, const Matrix& y, const Vector& weight) {
    if (design.rows() != y.rows() || design.rows() != weight.size()) {
        fail(ErrorCode::DimensionMismatch, "least-squares inputs have inconsistent row counts");
    }
    if (design.rows() < design.cols()) {
        fail(ErrorCode::RankDeficientDesign, "fewer rows than regression coefficients");
    }
    const Vector sw = weight.cwiseSqrt();
    const Matrix wx = sw.asDiagonal() * design;
    const Matrix wy = sw.asDiagonal() * y;
    Eigen::ColPivHouseholderQR<Matrix> qr(wx);
    qr.setThreshold(1e-10);
    if (qr.rank() < design.cols()) {
        fail(ErrorCode::RankDeficientDesign, "regression design is rank deficient");
    }
    return qr.solve(wy);
}

/// Independent, reproducible stream for (seed, index): the same pair always
/// yields the same generator state regardless of scheduling.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      0x5eedu};
    return std::mt19937_64(seq);
}

/// Worker count: RAKECAL_THREADS if set, else hardware concurrency.
inline unsigned default_thread_count() {
    if (const char* env = std::getenv("RAKECAL_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

/// Runs fn(i) for i in [0, count) on up to `threads` workers. The first
/// exception thrown by any task is rethrown after all workers join.
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace rakecal
