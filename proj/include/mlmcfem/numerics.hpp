#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mlmcfem/errors.hpp"

namespace mlmcfem {

// Neumaier compensated summation. Accumulation is order-independent to
// roughly machine precision, which the estimators rely on for reproducible
// telescoping sums.
class NeumaierSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }

    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> values) {
    NeumaierSum s;
    for (double v : values) s.add(v);
    return s.value();
}

inline double mean(std::span<const double> values) {
    if (values.empty()) throw StatisticsError("mean of empty sample");
    return compensated_sum(values) / static_cast<double>(values.size());
}

// Unbiased sample standard deviation; zero for a single value.
inline double sample_stddev(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n == 0) throw StatisticsError("standard deviation of empty sample");
    if (n == 1) return 0.0;
    const double m = mean(values);
    NeumaierSum sq;
    for (double v : values) sq.add((v - m) * (v - m));
    return std::sqrt(sq.value() / static_cast<double>(n - 1));
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

// Ordinary least squares y = intercept + slope * x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n != y.size() || n < 2) throw DataError("line fit needs >= 2 matched points");
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx <= 0.0) throw DataError("line fit with degenerate abscissae");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r_squared = (syy > 0.0) ? (sxy * sxy) / (sxx * syy) : 1.0;
    return f;
}

// Fit error = C * h^p through log-log least squares; returns (p, C, r^2).
struct PowerFit {
    double exponent = 0.0;
    double prefactor = 0.0;
    double r_squared = 0.0;
};

inline PowerFit fit_power_law(std::span<const double> h, std::span<const double> value) {
    if (h.size() != value.size() || h.size() < 2)
        throw DataError("power-law fit needs >= 2 matched points");
    std::vector<double> lx(h.size()), ly(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
        if (!(h[i] > 0.0) || !(value[i] > 0.0))
            throw DataError("power-law fit requires strictly positive data");
        lx[i] = std::log(h[i]);
        ly[i] = std::log(value[i]);
    }
    const LineFit f = fit_line(lx, ly);
    return PowerFit{f.slope, std::exp(f.intercept), f.r_squared};
}

}  // namespace mlmcfem
