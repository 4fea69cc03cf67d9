#include "mlmcfem/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

#include <json.hpp>

#include "mlmcfem/parallel.hpp"
#include "mlmcfem/rng.hpp"

namespace mlmcfem {

// ---------------------------------------------------------------------------
// interior-point core
// ---------------------------------------------------------------------------

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double merit(const NlpProblem& p, const VectorXd& x, const VectorXd& s, double mu,
             double upsilon) {
    double psi = p.objective(x);
    for (int i = 0; i < s.size(); ++i) psi -= mu * std::log(s[i]);
    psi += 0.5 * upsilon * (p.constraints(x) - s).norm();
    return psi;
}

// primal-dual safeguard: keep the multipliers inside a corridor around the
// central path so the Newton model stays sane
void recenter_duals(VectorXd& y, const VectorXd& s, double mu) {
    constexpr double kappa = 1.0e4;
    for (int i = 0; i < y.size(); ++i)
        y[i] = std::min(std::max(y[i], mu / (kappa * s[i])), kappa * mu / s[i]);
}

}  // namespace

IpResult interior_point_solve(const NlpProblem& p, const VectorXd& x0,
                              const IpOptions& opt) {
    if (p.n <= 0 || p.m <= 0) throw DataError("interior-point problem needs n, m >= 1");
    if (x0.size() != p.n) throw DataError("start point has wrong dimension");

    VectorXd x = x0;
    VectorXd g = p.constraints(x);
    if ((g.array() <= 0.0).any())
        throw DataError("interior-point start must be strictly feasible");
    VectorXd s = g;
    double mu = opt.mu_initial;
    VectorXd y = (mu / s.array()).matrix();
    double upsilon = opt.upsilon_initial;

    IpResult res;
    IpDiagnostics& diag = res.diagnostics;

    int total_iter = 0;
    bool stalled = false;
    for (;;) {
        const double stage_tol = std::max(mu, 0.1 * opt.kkt_tol);
        bool stage_done = false;
        upsilon = opt.upsilon_initial;  // penalty does not carry across stages
        IpStage stage{mu, 0, 0.0};

        for (int it = 0; it < opt.max_stage_iterations && !stage_done; ++it) {
            if (++total_iter > opt.max_total_iterations)
                throw NonConvergenceError("interior-point iteration limit",
                                          diag.stationarity, diag.complementarity,
                                          diag.primal);

            g = p.constraints(x);
            const MatrixXd a = p.constraint_jacobian(x);
            const VectorXd grad = p.gradient(x);
            const VectorXd rd = grad - a.transpose() * y;
            const VectorXd rp = g - s;
            const VectorXd rc = (s.array() * y.array() - mu).matrix();

            // rounding floors: stationarity is a difference of large
            // gradients, complementarity of O(mu) products
            constexpr double eps_mach = std::numeric_limits<double>::epsilon();
            const double floor_rd =
                32.0 * eps_mach *
                (1.0 + grad.lpNorm<Eigen::Infinity>() +
                 (a.transpose() * y).lpNorm<Eigen::Infinity>());
            const double floor_rp = 32.0 * eps_mach *
                                    (1.0 + g.lpNorm<Eigen::Infinity>() +
                                     s.lpNorm<Eigen::Infinity>());
            auto beats = [&](double v_rd, double v_rc, double v_rp, double tol) {
                return v_rd <= std::max(tol, floor_rd) &&
                       v_rc <= std::max(tol, 32.0 * eps_mach * (1.0 + mu)) &&
                       v_rp <= std::max(tol, floor_rp);
            };
            const double err = std::max({rd.lpNorm<Eigen::Infinity>(),
                                         rc.lpNorm<Eigen::Infinity>(),
                                         rp.lpNorm<Eigen::Infinity>()});
#ifdef MLMCFEM_IP_TRACE
            std::printf("it %4d mu %.2e err %.3e (rd %.2e rc %.2e rp %.2e) f %.6e\n",
                        total_iter, mu, err, rd.lpNorm<Eigen::Infinity>(),
                        rc.lpNorm<Eigen::Infinity>(), rp.lpNorm<Eigen::Infinity>(),
                        p.objective(x));
#endif
            stage.residual = err;
            if (beats(rd.lpNorm<Eigen::Infinity>(), rc.lpNorm<Eigen::Infinity>(),
                      rp.lpNorm<Eigen::Infinity>(), stage_tol)) {
                stage_done = true;
                break;
            }
            stage.iterations += 1;

            const MatrixXd hess = p.hessian(x) - p.weighted_constraint_hessian(x, y);

            // condensed Newton system: slacks eliminated through the primal
            // block, multipliers recovered from the complementarity block;
            // inertia correction delta grows until a direction is accepted
            bool accepted = false;
            double delta = 0.0;
            const VectorXd sigma = (y.array() / s.array()).matrix();
            for (int attempt = 0; attempt < 16 && !accepted; ++attempt) {
                const MatrixXd cond = hess + delta * MatrixXd::Identity(p.n, p.n) +
                                      a.transpose() * sigma.asDiagonal() * a;
                const VectorXd rhs =
                    -rd - a.transpose() *
                              (rc.array() / s.array() + sigma.array() * rp.array())
                                  .matrix();

                Eigen::FullPivLU<MatrixXd> lu(cond);
                VectorXd dx = lu.solve(rhs);
                dx += lu.solve(VectorXd(rhs - cond * dx));
                const double linres = (cond * dx - rhs).lpNorm<Eigen::Infinity>();
                if (!dx.allFinite() ||
                    linres > 1e-8 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) {
                    delta = delta == 0.0 ? 1e-10 * (1.0 + hess.norm()) : delta * 100.0;
                    continue;
                }
                const VectorXd ds = a * dx + rp;
                const VectorXd dy =
                    -((rc.array() + y.array() * ds.array()) / s.array()).matrix();

                // fraction-to-boundary, primal and dual lengths independent
                double alpha_max = 1.0, alpha_dual = 1.0;
                for (int i = 0; i < p.m; ++i) {
                    if (ds[i] < 0.0)
                        alpha_max = std::min(alpha_max, -opt.boundary_fraction * s[i] / ds[i]);
                    if (dy[i] < 0.0)
                        alpha_dual = std::min(alpha_dual, -opt.boundary_fraction * y[i] / dy[i]);
                }

                // penalty large enough that the direction descends the merit;
                // the merit carries (upsilon/2) ||g - s||, directional
                // derivative smooth - (upsilon/2) ||rp||
                const double rp_norm = rp.norm();
                const double smooth = grad.dot(dx) - mu * (ds.array() / s.array()).sum();
                if (smooth - 0.5 * upsilon * rp_norm >= 0.0 && rp_norm > 1e-12)
                    upsilon = std::min(4.0 * std::abs(smooth) / rp_norm + 2.0, 1e10);
                const double descent = std::min(smooth - 0.5 * upsilon * rp_norm, 0.0);

                // a step is accepted on sufficient merit decrease, or on a
                // contraction of the perturbed KKT residual (pure recentering
                // steps near the central path are not merit descent steps)
                const double psi0 = merit(p, x, s, mu, upsilon);
                // residual acceptance measures progress above the floors
                auto kkt_residual = [&](const VectorXd& xq, const VectorXd& sq,
                                        const VectorXd& yq) {
                    const VectorXd rdq =
                        p.gradient(xq) - p.constraint_jacobian(xq).transpose() * yq;
                    const VectorXd rcq = (sq.array() * yq.array() - mu).matrix();
                    const VectorXd rpq = p.constraints(xq) - sq;
                    return std::max(
                        {std::max(rdq.lpNorm<Eigen::Infinity>() - floor_rd, 0.0),
                         rcq.lpNorm<Eigen::Infinity>(),
                         std::max(rpq.lpNorm<Eigen::Infinity>() - floor_rp, 0.0)});
                };

                double alpha = alpha_max;
                for (int ls = 0; ls < 60 && !accepted; ++ls) {
                    const VectorXd xn = x + alpha * dx;
                    const VectorXd sn = s + alpha * ds;
                    if ((sn.array() > 0.0).all()) {
                        const VectorXd yn = y + std::min(alpha, alpha_dual) * dy;
                        const double psi = merit(p, xn, sn, mu, upsilon);
                        const bool merit_ok =
                            descent < 0.0 &&
                            psi <= psi0 + 1e-4 * alpha * descent +
                                       8.0 * std::numeric_limits<double>::epsilon() *
                                           (1.0 + std::abs(psi0));
                        const bool residual_ok =
                            kkt_residual(xn, sn, yn) <= (1.0 - 1e-4 * alpha) * err;
                        if (merit_ok || residual_ok) {
                            x = xn;
                            s = sn;
                            y = yn;
                            recenter_duals(y, s, mu);
                            accepted = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                    if (alpha < 1e-12 * alpha_max) break;
                }
                if (!accepted)
                    delta = delta == 0.0 ? 1e-8 * (1.0 + hess.norm()) : delta * 100.0;
            }
            if (!accepted) {
                stalled = true;  // the final unperturbed check decides
                break;
            }
            diag.iterations = total_iter;
        }
        diag.trace.push_back(stage);

        if (stalled || mu <= opt.mu_final) break;
        mu = std::max(mu * opt.mu_factor, opt.mu_final);
    }

    g = p.constraints(x);
    const MatrixXd a = p.constraint_jacobian(x);
    const VectorXd grad_final = p.gradient(x);
    diag.stationarity = (grad_final - a.transpose() * y).lpNorm<Eigen::Infinity>();
    diag.complementarity = (s.array() * y.array()).matrix().lpNorm<Eigen::Infinity>();
    diag.primal = g.cwiseMin(0.0).lpNorm<Eigen::Infinity>();
    diag.mu_final = mu;
    diag.upsilon = upsilon;
    const double floor_final =
        32.0 * std::numeric_limits<double>::epsilon() *
        (1.0 + grad_final.lpNorm<Eigen::Infinity>() +
         (a.transpose() * y).lpNorm<Eigen::Infinity>());
    diag.converged = diag.stationarity <= std::max(opt.kkt_tol, floor_final) &&
                     diag.complementarity <= opt.kkt_tol && diag.primal <= opt.kkt_tol;
    if (!diag.converged)
        throw NonConvergenceError(std::string("interior-point did not meet the KKT "
                                              "tolerance") +
                                      (stalled ? " (line search stalled)" : ""),
                                  diag.stationarity, diag.complementarity, diag.primal);

    res.x = x;
    res.slacks = s;
    res.multipliers = y;
    res.objective = p.objective(x);
    return res;
}

// ---------------------------------------------------------------------------
// work-minimization problems in logarithmic variables
// ---------------------------------------------------------------------------

namespace {

// constant + linear . z + sum_k coef_k exp(expo_k . z); exact derivatives
struct ExpTerm {
    double coef;
    VectorXd expo;
};

struct GenFun {
    double constant = 0.0;
    VectorXd linear;
    std::vector<ExpTerm> terms;

    explicit GenFun(int n) : linear(VectorXd::Zero(n)) {}

    double value(const VectorXd& z) const {
        double v = constant + linear.dot(z);
        for (const auto& t : terms) v += t.coef * std::exp(t.expo.dot(z));
        return v;
    }
    VectorXd grad(const VectorXd& z) const {
        VectorXd g = linear;
        for (const auto& t : terms) g += t.coef * std::exp(t.expo.dot(z)) * t.expo;
        return g;
    }
    MatrixXd hess(const VectorXd& z) const {
        MatrixXd h = MatrixXd::Zero(z.size(), z.size());
        for (const auto& t : terms)
            h += t.coef * std::exp(t.expo.dot(z)) * (t.expo * t.expo.transpose());
        return h;
    }
};

struct LogProblem {
    GenFun objective;
    std::vector<GenFun> constraints;

    explicit LogProblem(int n) : objective(n) {}

    NlpProblem to_nlp() const {
        NlpProblem p;
        p.n = static_cast<int>(objective.linear.size());
        p.m = static_cast<int>(constraints.size());
        const LogProblem self = *this;  // capture by value
        p.objective = [self](const VectorXd& z) { return self.objective.value(z); };
        p.gradient = [self](const VectorXd& z) { return self.objective.grad(z); };
        p.hessian = [self](const VectorXd& z) { return self.objective.hess(z); };
        p.constraints = [self](const VectorXd& z) {
            VectorXd g(self.constraints.size());
            for (std::size_t i = 0; i < self.constraints.size(); ++i)
                g[i] = self.constraints[i].value(z);
            return g;
        };
        p.constraint_jacobian = [self](const VectorXd& z) {
            MatrixXd a(self.constraints.size(), z.size());
            for (std::size_t i = 0; i < self.constraints.size(); ++i)
                a.row(i) = self.constraints[i].grad(z).transpose();
            return a;
        };
        p.weighted_constraint_hessian = [self](const VectorXd& z, const VectorXd& y) {
            MatrixXd h = MatrixXd::Zero(z.size(), z.size());
            for (std::size_t i = 0; i < self.constraints.size(); ++i)
                h += y[static_cast<int>(i)] * self.constraints[i].hess(z);
            return h;
        };
        return p;
    }
};

VectorXd unit(int n, int j) {
    VectorXd e = VectorXd::Zero(n);
    e[j] = 1.0;
    return e;
}

// Variable layout: z = (m_0..m_L, t[, rho or rho_1..rho_L]).
// Geometric uses one rho; free uses one per level; L = 0 has none.
struct Layout {
    int levels;
    HierarchyVariant variant;
    int n;

    static Layout make(HierarchyVariant v, int levels) {
        Layout l;
        l.levels = levels;
        l.variant = v;
        if (v == HierarchyVariant::Mc || levels == 0)
            l.n = 2;
        else if (v == HierarchyVariant::MlmcGeometric)
            l.n = levels + 3;
        else
            l.n = 2 * levels + 2;
        return l;
    }
    int m_index(int level) const { return level; }
    int t_index() const { return variant == HierarchyVariant::Mc || levels == 0 ? 1 : levels + 1; }
    // exponent vector of log r_cumulative(level) in terms of z
    VectorXd cumulative_ratio(int level) const {
        VectorXd e = VectorXd::Zero(n);
        if (levels == 0 || level == 0 || variant == HierarchyVariant::Mc) return e;
        if (variant == HierarchyVariant::MlmcGeometric) {
            e[levels + 2] = static_cast<double>(level);
        } else {
            for (int i = 1; i <= level; ++i) e[levels + 1 + i] = 1.0;
        }
        return e;
    }
    int ratio_count() const {
        if (variant == HierarchyVariant::Mc || levels == 0) return 0;
        return variant == HierarchyVariant::MlmcGeometric ? 1 : levels;
    }
    int ratio_index(int i) const {  // i = 1..ratio_count
        return variant == HierarchyVariant::MlmcGeometric ? levels + 2 : levels + 1 + i;
    }
};

// The objective is normalized to 1 at the start point: the argmin of the
// work-minimization problems is invariant under cost scaling, and the
// normalized problem keeps the KKT system at machine-friendly scales.
LogProblem build_problem(const Layout& lay, const CostModel& cost, const ErrorModel& err,
                         double epsilon, const OptimizerOptions& opt,
                         const VectorXd& start, double* work_scale) {
    const int n = lay.n;
    const int levels = lay.variant == HierarchyVariant::Mc ? 0 : lay.levels;
    LogProblem prob(n);

    // objective: sum over levels and cost terms of mu_k M_l h_l^-gamma_k
    for (int l = 0; l <= levels; ++l) {
        const VectorXd logr = lay.cumulative_ratio(l);
        for (const auto& term : cost.terms) {
            VectorXd e = unit(n, lay.m_index(l)) - term.gamma * unit(n, lay.t_index()) +
                         term.gamma * logr;
            prob.objective.terms.push_back({term.mu, e});
        }
    }
    const double scale = prob.objective.value(start);
    for (auto& term : prob.objective.terms) term.coef /= scale;
    if (work_scale) *work_scale = scale;

    // accuracy: epsilon - c00 M0^-1/2 - c0 sum M_l^-1/2 h_{l-1}^beta - c1 h_L^alpha >= 0
    GenFun g1(n);
    g1.constant = epsilon;
    if (err.c00 > 0.0)
        g1.terms.push_back({-err.c00, -0.5 * unit(n, lay.m_index(0))});
    for (int l = 1; l <= levels; ++l) {
        if (err.c0 <= 0.0) break;
        VectorXd e = -0.5 * unit(n, lay.m_index(l)) + err.beta * unit(n, lay.t_index()) -
                     err.beta * lay.cumulative_ratio(l - 1);
        g1.terms.push_back({-err.c0, e});
    }
    if (err.c1 > 0.0) {
        VectorXd e = err.alpha * unit(n, lay.t_index()) -
                     err.alpha * lay.cumulative_ratio(levels);
        g1.terms.push_back({-err.c1, e});
    }
    prob.constraints.push_back(g1);

    // M_l >= 1
    for (int l = 0; l <= levels; ++l) {
        GenFun g(n);
        g.linear = unit(n, lay.m_index(l));
        prob.constraints.push_back(g);
    }
    // xi <= h0 <= h_max
    {
        GenFun glo(n);
        glo.constant = -std::log(opt.xi);
        glo.linear = unit(n, lay.t_index());
        prob.constraints.push_back(glo);
        GenFun ghi(n);
        ghi.constant = std::log(opt.h_max);
        ghi.linear = -unit(n, lay.t_index());
        prob.constraints.push_back(ghi);
    }
    // ratios >= 1
    for (int i = 1; i <= lay.ratio_count(); ++i) {
        GenFun g(n);
        g.linear = unit(n, lay.ratio_index(i));
        prob.constraints.push_back(g);
    }
    return prob;
}

// Strictly feasible start: mesh sizes eat a quarter of the budget, the
// statistical terms split another quarter, initial ratio 2.
VectorXd initial_point(const Layout& lay, const ErrorModel& err, double epsilon,
                       const OptimizerOptions& opt) {
    const int levels = lay.variant == HierarchyVariant::Mc ? 0 : lay.levels;
    VectorXd z = VectorXd::Zero(lay.n);
    const double log_r0 = std::log(2.0);
    for (int i = 1; i <= lay.ratio_count(); ++i) z[lay.ratio_index(i)] = log_r0;

    double t;
    if (err.c1 > 0.0) {
        t = std::log(epsilon / (4.0 * err.c1)) / err.alpha + levels * log_r0;
    } else {
        t = std::log(opt.h_max) - 0.5;
    }
    t = std::min(t, std::log(opt.h_max) - 1e-3);
    t = std::max(t, std::log(opt.xi) + 1e-3);
    z[lay.t_index()] = t;

    z[lay.m_index(0)] =
        err.c00 > 0.0 ? std::max(2.0 * std::log(4.0 * err.c00 / epsilon), std::log(1.5))
                      : std::log(1.5);
    for (int l = 1; l <= levels; ++l) {
        double m = std::log(1.5);
        if (err.c0 > 0.0) {
            const double log_h_prev = t - (l - 1) * log_r0;
            m = std::max(2.0 * (std::log(4.0 * levels * err.c0 / epsilon) +
                                err.beta * log_h_prev),
                         std::log(1.5));
        }
        z[lay.m_index(l)] = m;
    }
    return z;
}

struct SolveOutcome {
    IpResult ip;
    bool ok = false;
    std::string error;
};

SolveOutcome solve_with_multistart(const LogProblem& prob, const Layout& lay,
                                   const VectorXd& base, const OptimizerOptions& opt) {
    const NlpProblem nlp = prob.to_nlp();
    std::vector<VectorXd> starts{base};
    CounterRng rng(CounterRng::keyed(opt.seed, 0xF00D, lay.n).key());
    while (static_cast<int>(starts.size()) < std::max(1, opt.multistarts)) {
        VectorXd z = base;
        for (int j = 0; j < lay.n; ++j) z[j] += rng.next_unit() - 0.5;
        // keep only strictly feasible perturbations (bisect toward the base)
        for (int tries = 0; tries < 12; ++tries) {
            if ((nlp.constraints(z).array() > 0.0).all()) break;
            z = 0.5 * (z + base);
        }
        if ((nlp.constraints(z).array() > 0.0).all()) starts.push_back(z);
        if (!(nlp.constraints(base).array() > 0.0).all()) break;  // base infeasible
    }

    SolveOutcome best;
    std::string last_error = "no feasible start";
    std::mutex merge;
    parallel_for_indexed(starts.size(), opt.threads, [&](std::size_t i) {
        try {
            IpResult r = interior_point_solve(nlp, starts[i], opt.ip);
            std::lock_guard<std::mutex> lock(merge);
            if (!best.ok || r.objective < best.ip.objective) {
                best.ip = std::move(r);
                best.ok = true;
            }
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lock(merge);
            last_error = e.what();
        }
    });
    if (!best.ok) best.error = last_error;
    return best;
}

void check_feasible_epsilon(const ErrorModel& err, double epsilon,
                            const OptimizerOptions& opt) {
    const double floor = err.c1 * std::pow(opt.xi, err.alpha);
    if (!(epsilon > floor))
        throw InfeasibleError("tolerance " + std::to_string(epsilon) +
                                  " is at or below the discretization floor " +
                                  std::to_string(floor),
                              floor);
}

// fold the raw-variable stationarity into the diagnostics (chain rule:
// d/d chi = d/dz / chi with chi = e^z)
void include_raw_stationarity(IpDiagnostics* diag, const NlpProblem& nlp,
                              const IpResult& r) {
    const VectorXd rd = nlp.gradient(r.x) -
                        nlp.constraint_jacobian(r.x).transpose() * r.multipliers;
    double raw = 0.0;
    for (int j = 0; j < r.x.size(); ++j) raw = std::max(raw, std::abs(rd[j] / std::exp(r.x[j])));
    diag->stationarity = std::max(diag->stationarity, raw);
}

}  // namespace

double accuracy_margin(const ErrorModel& error, double epsilon, const MlmcPlan& plan) {
    return epsilon - rmse_bound_mlmc(error, plan);
}

McPlanSolution optimize_mc(const CostModel& cost, const ErrorModel& error, double epsilon,
                           const OptimizerOptions& options) {
    cost.validate();
    error.validate();
    check_feasible_epsilon(error, epsilon, options);

    McPlanSolution out;
    const Layout lay = Layout::make(HierarchyVariant::Mc, 0);
    const VectorXd start = initial_point(lay, error, epsilon, options);
    double work_scale = 1.0;
    const LogProblem prob =
        build_problem(lay, cost, error, epsilon, options, start, &work_scale);
    SolveOutcome sol = solve_with_multistart(prob, lay, start, options);
    if (!sol.ok)
        throw NonConvergenceError("MC optimization failed: " + sol.error, 0, 0, 0);

    out.diagnostics = sol.ip.diagnostics;
    include_raw_stationarity(&out.diagnostics, prob.to_nlp(), sol.ip);
    out.samples_continuous = std::exp(sol.ip.x[lay.m_index(0)]);
    out.h_continuous = std::exp(sol.ip.x[lay.t_index()]);
    out.plan.h = out.h_continuous;
    out.plan.samples = static_cast<long>(std::ceil(out.samples_continuous - 1e-9));
    // barrier iterates approach the boundary from inside; drop the slop the
    // ceiling may have picked up, keeping the smallest feasible integer
    auto margin_at = [&](long m) {
        MlmcPlan probe;
        probe.levels = 0;
        probe.h0 = out.plan.h;
        probe.samples = {m};
        return accuracy_margin(error, epsilon, probe);
    };
    while (out.plan.samples > 1 && margin_at(out.plan.samples - 1) >= 0.0)
        out.plan.samples -= 1;
    out.work_continuous = work_scale * sol.ip.objective;
    out.work = cost.work(static_cast<double>(out.plan.samples), out.plan.h);

    // rounding up can only help the accuracy constraint; re-verify anyway
    MlmcPlan as_mlmc;
    as_mlmc.levels = 0;
    as_mlmc.h0 = out.plan.h;
    as_mlmc.samples = {out.plan.samples};
    if (accuracy_margin(error, epsilon, as_mlmc) < -1e-9 * epsilon)
        throw NonConvergenceError("rounded MC plan violates the accuracy constraint",
                                  0, 0, 0);
    return out;
}

namespace {

MlmcPlanSolution optimize_mlmc(const CostModel& cost, const ErrorModel& error,
                               double epsilon, int levels, HierarchyVariant variant,
                               const OptimizerOptions& options) {
    cost.validate();
    error.validate();
    if (levels < 0) throw DataError("level count must be >= 0");
    check_feasible_epsilon(error, epsilon, options);

    const Layout lay = Layout::make(variant, levels);
    const VectorXd start = initial_point(lay, error, epsilon, options);
    double work_scale = 1.0;
    const LogProblem prob =
        build_problem(lay, cost, error, epsilon, options, start, &work_scale);
    SolveOutcome sol = solve_with_multistart(prob, lay, start, options);
    if (!sol.ok)
        throw NonConvergenceError("MLMC optimization failed: " + sol.error, 0, 0, 0);

    MlmcPlanSolution out;
    out.diagnostics = sol.ip.diagnostics;
    include_raw_stationarity(&out.diagnostics, prob.to_nlp(), sol.ip);

    MlmcPlan continuous;
    continuous.levels = levels;
    continuous.h0 = std::exp(sol.ip.x[lay.t_index()]);
    if (variant == HierarchyVariant::MlmcGeometric) {
        continuous.geometric = true;
        continuous.ratio =
            levels == 0 ? 1.0 : std::max(1.0, std::exp(sol.ip.x[lay.ratio_index(1)]));
    } else {
        continuous.geometric = false;
        continuous.ratios.clear();
        for (int i = 1; i <= levels; ++i)
            continuous.ratios.push_back(std::max(1.0, std::exp(sol.ip.x[lay.ratio_index(i)])));
    }
    out.samples_continuous.clear();
    for (int l = 0; l <= levels; ++l)
        out.samples_continuous.push_back(std::exp(sol.ip.x[lay.m_index(l)]));
    continuous.samples.assign(levels + 1, 1);

    out.plan = floor_samples(continuous, out.samples_continuous, cost, error, epsilon,
                             &out.repair_increments);
    out.work_continuous = work_scale * sol.ip.objective;
    out.work = cost.work(out.plan);
    return out;
}

}  // namespace

MlmcPlanSolution optimize_mlmc_geometric(const CostModel& cost, const ErrorModel& error,
                                         double epsilon, int levels,
                                         const OptimizerOptions& options) {
    return optimize_mlmc(cost, error, epsilon, levels, HierarchyVariant::MlmcGeometric,
                         options);
}

MlmcPlanSolution optimize_mlmc_free(const CostModel& cost, const ErrorModel& error,
                                    double epsilon, int levels,
                                    const OptimizerOptions& options) {
    return optimize_mlmc(cost, error, epsilon, levels, HierarchyVariant::MlmcFree,
                         options);
}

MlmcPlan floor_samples(const MlmcPlan& plan, const std::vector<double>& samples_continuous,
                       const CostModel& cost, const ErrorModel& error, double epsilon,
                       int* increments) {
    if (static_cast<int>(samples_continuous.size()) != plan.levels + 1)
        throw DataError("continuous sample vector does not match the plan");
    MlmcPlan floored = plan;
    floored.samples.resize(plan.levels + 1);
    for (int l = 0; l <= plan.levels; ++l)
        floored.samples[l] =
            std::max<long>(1, static_cast<long>(std::floor(samples_continuous[l] + 1e-9)));
    floored.validate();

    int applied = 0;
    const std::vector<double> h = floored.mesh_sizes();
    while (accuracy_margin(error, epsilon, floored) < -1e-12 * std::max(1.0, epsilon)) {
        // greedy: best constraint improvement per unit work
        int best_level = -1;
        double best_ratio = 0.0;
        const double margin = accuracy_margin(error, epsilon, floored);
        for (int l = 0; l <= floored.levels; ++l) {
            MlmcPlan trial = floored;
            trial.samples[l] += 1;
            const double gain = accuracy_margin(error, epsilon, trial) - margin;
            const double extra = cost.work(1.0, h[l]);
            if (gain > 0.0 && gain / extra > best_ratio) {
                best_ratio = gain / extra;
                best_level = l;
            }
        }
        if (best_level < 0)
            throw InfeasibleError("sample flooring cannot restore feasibility",
                                  error.c1 * std::pow(h[floored.levels], error.alpha));
        floored.samples[best_level] += 1;
        if (++applied > 1000000)
            throw NonConvergenceError("sample flooring did not terminate", 0, 0, 0);
    }
    if (increments) *increments = applied;
    return floored;
}

LevelSelection select_levels(const CostModel& cost, const ErrorModel& error, double epsilon,
                             HierarchyVariant variant, int max_levels,
                             const OptimizerOptions& options) {
    if (max_levels < 0) throw DataError("max level count must be >= 0");
    if (variant == HierarchyVariant::Mc)
        throw DataError("level selection applies to the MLMC variants");

    std::vector<LevelSweepEntry> curve(max_levels + 1);
    std::vector<MlmcPlanSolution> solutions(max_levels + 1);
    std::vector<char> ok(max_levels + 1, 0);
    std::vector<char> infeasible(max_levels + 1, 0);

    // the sweep runs concurrently; each L has an independent solver state
    OptimizerOptions per_level = options;
    per_level.threads = 1;
    parallel_for_indexed(static_cast<std::size_t>(max_levels + 1), options.threads,
                         [&](std::size_t l) {
                             LevelSweepEntry& e = curve[l];
                             e.levels = static_cast<int>(l);
                             try {
                                 solutions[l] = optimize_mlmc(cost, error, epsilon,
                                                              static_cast<int>(l), variant,
                                                              per_level);
                                 e.feasible = true;
                                 e.work = solutions[l].work;
                                 ok[l] = 1;
                             } catch (const InfeasibleError& err) {
                                 e.feasible = false;
                                 e.work = std::numeric_limits<double>::infinity();
                                 e.failure = err.what();
                                 infeasible[l] = 1;
                             } catch (const Error& err) {
                                 e.feasible = false;
                                 e.work = std::numeric_limits<double>::infinity();
                                 e.failure = err.what();
                             }
                         });

    LevelSelection sel;
    sel.curve = curve;
    int best = -1;
    for (int l = 0; l <= max_levels; ++l)
        if (ok[l] && (best < 0 || curve[l].work < curve[best].work)) best = l;
    if (best < 0) {
        bool all_infeasible = true;
        for (int l = 0; l <= max_levels; ++l) all_infeasible = all_infeasible && infeasible[l];
        if (all_infeasible)
            throw InfeasibleError("no level count in 0.." + std::to_string(max_levels) +
                                      " is feasible at tolerance " + std::to_string(epsilon),
                                  error.c1 * std::pow(options.xi, error.alpha));
        throw NonConvergenceError("level sweep failed: " + curve[0].failure, 0, 0, 0);
    }
    sel.best = solutions[best];
    sel.best_levels = best;
    return sel;
}

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json diagnostics_json(const IpDiagnostics& d) {
    ordered_json j;
    j["stationarity"] = d.stationarity;
    j["complementarity"] = d.complementarity;
    j["primal"] = d.primal;
    j["iterations"] = d.iterations;
    j["converged"] = d.converged;
    ordered_json trace = ordered_json::array();
    for (const auto& st : d.trace)
        trace.push_back({{"mu", st.mu}, {"iterations", st.iterations},
                         {"residual", st.residual}});
    j["trace"] = trace;
    return j;
}

}  // namespace

std::string to_json(const MlmcPlanSolution& s, double epsilon, HierarchyVariant variant) {
    ordered_json j;
    j["epsilon"] = epsilon;
    j["variant"] = variant_name(variant);
    j["plan"] = ordered_json::parse(to_json(s.plan));
    j["continuous"] = {{"h0", s.plan.h0}, {"samples", s.samples_continuous}};
    if (s.plan.geometric)
        j["continuous"]["ratio"] = s.plan.ratio;
    else
        j["continuous"]["ratios"] = s.plan.ratios;
    j["work"] = s.work;
    j["work_continuous"] = s.work_continuous;
    j["repair_increments"] = s.repair_increments;
    j["kkt"] = diagnostics_json(s.diagnostics);
    return j.dump(2);
}

std::string to_json(const McPlanSolution& s, double epsilon) {
    ordered_json j;
    j["epsilon"] = epsilon;
    j["variant"] = "mc";
    j["plan"] = {{"h", s.plan.h}, {"samples", s.plan.samples}};
    j["continuous"] = {{"h", s.h_continuous}, {"samples", s.samples_continuous}};
    j["work"] = s.work;
    j["work_continuous"] = s.work_continuous;
    j["kkt"] = diagnostics_json(s.diagnostics);
    return j.dump(2);
}

}  // namespace mlmcfem
