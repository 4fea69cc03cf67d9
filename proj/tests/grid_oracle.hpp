#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

// Independent optimum finder for the work-minimization problems: shrinking
// multi-resolution grid search over the log-variable box, feasibility checked
// on the raw constraints. Deliberately shares no code with the interior-point
// path.
namespace mlmcfem::testing {

struct GridOracleResult {
    std::vector<double> z;
    double objective = std::numeric_limits<double>::infinity();
    bool found = false;
};

inline GridOracleResult grid_search(
    const std::function<double(const std::vector<double>&)>& objective,
    const std::function<bool(const std::vector<double>&)>& feasible,
    std::vector<double> lo, std::vector<double> hi, int points_per_dim = 7,
    int rounds = 6) {
    const std::size_t n = lo.size();
    GridOracleResult best;

    for (int round = 0; round < rounds; ++round) {
        std::vector<std::size_t> idx(n, 0);
        std::vector<double> z(n);
        bool carry = false;
        while (!carry) {
            for (std::size_t d = 0; d < n; ++d) {
                const double t = points_per_dim == 1
                                     ? 0.5
                                     : double(idx[d]) / double(points_per_dim - 1);
                z[d] = lo[d] + t * (hi[d] - lo[d]);
            }
            if (feasible(z)) {
                const double f = objective(z);
                if (f < best.objective) {
                    best.objective = f;
                    best.z = z;
                    best.found = true;
                }
            }
            carry = true;
            for (std::size_t d = 0; d < n && carry; ++d) {
                idx[d] += 1;
                if (idx[d] < static_cast<std::size_t>(points_per_dim))
                    carry = false;
                else
                    idx[d] = 0;
            }
        }
        if (!best.found) return best;
        // shrink the box around the incumbent, keeping two grid cells of
        // slack so a sliver of feasible set next to the incumbent survives
        for (std::size_t d = 0; d < n; ++d) {
            const double span = (hi[d] - lo[d]) / double(points_per_dim - 1) * 2.2;
            lo[d] = best.z[d] - span;
            hi[d] = best.z[d] + span;
        }
    }
    if (!best.found) return best;

    // local refinement: pattern search with axis and pairwise-diagonal
    // moves (diagonals slide along an active constraint boundary)
    double step = 0.25;
    auto probe = [&](const std::vector<double>& z) {
        if (!feasible(z)) return false;
        const double f = objective(z);
        if (f >= best.objective) return false;
        best.objective = f;
        best.z = z;
        return true;
    };
    for (int sweep = 0; sweep < 600; ++sweep) {
        bool moved = false;
        for (std::size_t d = 0; d < n; ++d) {
            for (double dir : {+1.0, -1.0}) {
                std::vector<double> z = best.z;
                z[d] += dir * step;
                moved = probe(z) || moved;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                for (double si : {+1.0, -1.0}) {
                    for (double sj : {+1.0, -1.0}) {
                        std::vector<double> z = best.z;
                        z[i] += si * step;
                        z[j] += sj * step;
                        moved = probe(z) || moved;
                    }
                }
            }
        }
        if (!moved) {
            step *= 0.5;
            if (step < 1e-8) break;
        }
    }
    return best;
}

}  // namespace mlmcfem::testing
