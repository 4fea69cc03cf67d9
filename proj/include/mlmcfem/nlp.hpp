#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "mlmcfem/errors.hpp"

namespace mlmcfem {

// Smooth inequality-constrained program
//   minimize f(x)  subject to  g_i(x) >= 0, i = 1..m,
// with exact first and second derivatives.
struct NlpProblem {
    int n = 0;
    int m = 0;
    std::function<double(const Eigen::VectorXd&)> objective;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hessian;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> constraints;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> constraint_jacobian;
    // sum_i y_i * hess(g_i)(x)
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>
        weighted_constraint_hessian;
};

struct IpOptions {
    double mu_initial = 1.0;
    double mu_factor = 0.2;         // geometric barrier reduction
    double mu_final = 1.0e-12;
    double boundary_fraction = 0.995;
    double kkt_tol = 1.0e-9;        // final unperturbed residuals
    double upsilon_initial = 10.0;  // merit penalty on ||g - s||
    int max_stage_iterations = 80;
    int max_total_iterations = 8000;
};

// One barrier stage of the interior-point iteration.
struct IpStage {
    double mu = 0.0;
    int iterations = 0;
    double residual = 0.0;  // max KKT residual when the stage ended
};

// Interior-point state and convergence diagnostics.
struct IpDiagnostics {
    double stationarity = 0.0;    // ||grad f - A^T y||_inf
    double complementarity = 0.0; // ||S Y e||_inf at the final barrier
    double primal = 0.0;          // ||min(g, 0)||_inf
    int iterations = 0;
    double mu_final = 0.0;
    double upsilon = 0.0;
    bool converged = false;
    std::vector<IpStage> trace;   // per barrier stage
};

struct IpResult {
    Eigen::VectorXd x;
    Eigen::VectorXd slacks;
    Eigen::VectorXd multipliers;
    double objective = 0.0;
    IpDiagnostics diagnostics;
};

// Log-barrier interior-point method: Newton on the perturbed KKT system via
// the reduced (slack-eliminated) block system, fraction-to-boundary steps and
// a backtracking line search on the merit function
//   Psi(x, s) = f(x) - mu sum ln s_i + (upsilon/2) ||g(x) - s||.
IpResult interior_point_solve(const NlpProblem& problem, const Eigen::VectorXd& x0,
                              const IpOptions& options = {});

}  // namespace mlmcfem
