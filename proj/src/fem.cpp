#include "mlmcfem/fem.hpp"

#include <Eigen/SparseCholesky>
#include <chrono>
#include <cmath>
#include <ostream>

#include "mlmcfem/detail/p1.hpp"

namespace mlmcfem {

using detail::bernoulli;
using detail::dirichlet_flags;
using detail::element_geometry;
using detail::ElementGeometry;
using detail::exponential_edge_mean;
using detail::safe_cosh;
using detail::safe_exp;
using detail::safe_sinh;

namespace {

using Clock = std::chrono::steady_clock;

class ScopedTimer {
public:
    explicit ScopedTimer(double* acc) : acc_(acc), t0_(Clock::now()) {}
    ~ScopedTimer() {
        if (acc_)
            *acc_ += std::chrono::duration<double>(Clock::now() - t0_).count();
    }

private:
    double* acc_;
    Clock::time_point t0_;
};

}  // namespace

SampleFields nominal_fields(const TriMesh& mesh) {
    SampleFields f;
    f.permittivity.resize(mesh.n_triangles());
    for (int t = 0; t < mesh.n_triangles(); ++t)
        f.permittivity[t] = mesh.geometry.permittivity(mesh.subdomain[t]);
    f.charge_density.assign(mesh.vertices.size(), 0.0);
    return f;
}

BoundaryData make_boundary_data(const DeviceGeometry& geometry,
                                const PhysicalParams& params) {
    BoundaryData bc;
    bc.contacts.resize(geometry.contacts.size());
    bc.carrier_bound = 1.0;
    for (std::size_t i = 0; i < geometry.contacts.size(); ++i) {
        const ContactSegment& c = geometry.contacts[i];
        if (c.carrier_contact) {
            const OhmicBoundary ob = ohmic_boundary_values(params.doping, c.voltage, params);
            bc.contacts[i] = {ob.potential, ob.u, ob.v};
            bc.carrier_bound = std::max(bc.carrier_bound, carrier_bound_from(ob.u, ob.v));
        } else {
            bc.contacts[i] = {c.voltage, 1.0, 1.0};
        }
    }
    return bc;
}

PoissonSystem::PoissonSystem(const TriMesh& mesh, const SampleFields& fields,
                             const Eigen::VectorXd& u_frozen,
                             const Eigen::VectorXd& v_frozen,
                             const PhysicalParams& params, const BoundaryData& bc)
    : mesh_(&mesh), u0_(u_frozen), v0_(v_frozen), params_(params) {
    const int nv = mesh.n_vertices();
    if (static_cast<int>(fields.permittivity.size()) != mesh.n_triangles())
        throw AssemblyError("permittivity field size does not match element count");
    if (static_cast<int>(fields.charge_density.size()) != nv)
        throw AssemblyError("charge density size does not match vertex count");
    if (u0_.size() != nv || v0_.size() != nv)
        throw AssemblyError("frozen carrier fields size does not match vertex count");
    for (double a : fields.permittivity)
        if (!(a > 0.0) || !std::isfinite(a))
            throw AssemblyError("permittivity field is not uniformly elliptic");

    const std::vector<int> alias = mesh.interface_alias();
    std::vector<int> contact_of_node;
    const std::vector<char> dirichlet = dirichlet_flags(mesh, contact_of_node);

    jump_offset_.assign(nv, 0.0);
    is_plus_.assign(nv, 0);
    for (int p : mesh.interface_plus) {
        jump_offset_[p] = params.alpha_jump;
        is_plus_[p] = 1;
    }

    known_value_.assign(nv, 0.0);
    dof_of_node_.assign(nv, -1);
    n_dof_ = 0;
    for (int n = 0; n < nv; ++n) {
        if (alias[n] != n) continue;  // plus copies share the minus dof
        if (dirichlet[n]) {
            known_value_[n] = bc.contacts[contact_of_node[n]].potential;
        } else {
            dof_of_node_[n] = n_dof_++;
        }
    }
    for (int n = 0; n < nv; ++n)
        if (alias[n] != n) {
            dof_of_node_[n] = dof_of_node_[alias[n]];
            known_value_[n] = known_value_[alias[n]];
        }

    mass_si_.assign(nv, 0.0);
    mass_liq_.assign(nv, 0.0);
    std::vector<double> mass_full(nv, 0.0);
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const double third = mesh.triangle_area(t) / 3.0;
        for (int v : mesh.triangles[t]) {
            mass_full[v] += third;
            if (mesh.subdomain[t] == Subdomain::Si) mass_si_[v] += third;
            if (mesh.subdomain[t] == Subdomain::Liq) mass_liq_[v] += third;
        }
    }

    base_rhs_ = Eigen::VectorXd::Zero(n_dof_);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(mesh.n_triangles()) * 9 + n_dof_);
    for (int d = 0; d < n_dof_; ++d) trip.emplace_back(d, d, 0.0);

    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const ElementGeometry g = element_geometry(mesh, t);
        const double a_elem = fields.permittivity[t];
        const auto& tri = mesh.triangles[t];
        for (int a = 0; a < 3; ++a) {
            const int ra = dof_of_node_[tri[a]];
            if (ra < 0) continue;
            for (int b = 0; b < 3; ++b) {
                const double s =
                    a_elem * (g.grad_x[a] * g.grad_x[b] + g.grad_y[a] * g.grad_y[b]) *
                    g.area;
                const int nb = tri[b];
                const double constant_part =
                    jump_offset_[nb] + (dof_of_node_[nb] < 0 ? known_value_[nb] : 0.0);
                if (dof_of_node_[nb] >= 0) trip.emplace_back(ra, dof_of_node_[nb], s);
                if (constant_part != 0.0) base_rhs_[ra] -= s * constant_part;
            }
        }
    }

    // dopant charge (and any manufactured source) through the lumped mass
    for (int n = 0; n < nv; ++n) {
        const int d = dof_of_node_[n];
        if (d < 0) continue;
        const double c = fields.charge_density[n];
        if (c != 0.0) base_rhs_[d] += units::poisson_rhs_scale * c * mass_full[n];
    }

    // displacement jump across Gamma enters as a line source
    if (params.gamma_jump != 0.0) {
        for (const auto& ie : mesh.interface_edges) {
            const double half = 0.5 * params.gamma_jump * ie.length;
            if (dof_of_node_[ie.a_minus] >= 0) base_rhs_[dof_of_node_[ie.a_minus]] += half;
            if (dof_of_node_[ie.b_minus] >= 0) base_rhs_[dof_of_node_[ie.b_minus]] += half;
        }
    }

    stiffness_.resize(n_dof_, n_dof_);
    stiffness_.setFromTriplets(trip.begin(), trip.end());
    rhs_scale_ = std::max(1.0, base_rhs_.lpNorm<Eigen::Infinity>());
}

double PoissonSystem::node_value(int node, const Eigen::VectorXd& v_reduced) const {
    const int d = dof_of_node_[node];
    const double base = d >= 0 ? v_reduced[d] : known_value_[node];
    return base + jump_offset_[node];
}

void PoissonSystem::residual(const Eigen::VectorXd& v_reduced, Eigen::VectorXd& out) const {
    out = stiffness_ * v_reduced - base_rhs_;
    const double ut = params_.thermal_voltage;
    const double kq = units::poisson_rhs_scale;
    const double ni = params_.intrinsic_density;
    const double eta2 = 2.0 * params_.ionic_concentration;
    const double beta = params_.beta();
    const int nv = mesh_->n_vertices();
    for (int n = 0; n < nv; ++n) {
        const int d = dof_of_node_[n];
        if (d < 0) continue;
        if (mass_si_[n] == 0.0 && mass_liq_[n] == 0.0) continue;
        const double v = node_value(n, v_reduced);
        if (mass_si_[n] > 0.0) {
            const double r = kq * ni * (safe_exp(v / ut) * u0_[n] - safe_exp(-v / ut) * v0_[n]);
            out[d] += mass_si_[n] * r;
        }
        if (mass_liq_[n] > 0.0) {
            const double r = kq * eta2 * safe_sinh(beta * (v - params_.fermi_level));
            out[d] += mass_liq_[n] * r;
        }
    }
}

void PoissonSystem::jacobian(const Eigen::VectorXd& v_reduced,
                             Eigen::SparseMatrix<double>& out) const {
    out = stiffness_;
    const double ut = params_.thermal_voltage;
    const double kq = units::poisson_rhs_scale;
    const double ni = params_.intrinsic_density;
    const double eta2 = 2.0 * params_.ionic_concentration;
    const double beta = params_.beta();
    const int nv = mesh_->n_vertices();
    for (int n = 0; n < nv; ++n) {
        const int d = dof_of_node_[n];
        if (d < 0) continue;
        if (mass_si_[n] == 0.0 && mass_liq_[n] == 0.0) continue;
        const double v = node_value(n, v_reduced);
        double dr = 0.0;
        if (mass_si_[n] > 0.0)
            dr += mass_si_[n] * kq * ni *
                  (safe_exp(v / ut) * u0_[n] + safe_exp(-v / ut) * v0_[n]) / ut;
        if (mass_liq_[n] > 0.0)
            dr += mass_liq_[n] * kq * eta2 * beta *
                  safe_cosh(beta * (v - params_.fermi_level));
        if (dr != 0.0) out.coeffRef(d, d) += dr;
    }
}

Eigen::VectorXd PoissonSystem::reduce(const Eigen::VectorXd& v_full) const {
    Eigen::VectorXd red = Eigen::VectorXd::Zero(n_dof_);
    const int nv = mesh_->n_vertices();
    for (int n = 0; n < nv; ++n)
        if (dof_of_node_[n] >= 0 && !is_plus_[n]) red[dof_of_node_[n]] = v_full[n];
    return red;
}

Eigen::VectorXd PoissonSystem::expand(const Eigen::VectorXd& v_reduced) const {
    const int nv = mesh_->n_vertices();
    Eigen::VectorXd full(nv);
    for (int n = 0; n < nv; ++n) full[n] = node_value(n, v_reduced);
    return full;
}

PoissonSystem assemble_semilinear_poisson(const TriMesh& mesh, const SampleFields& fields,
                                          const Eigen::VectorXd& u_frozen,
                                          const Eigen::VectorXd& v_frozen,
                                          const PhysicalParams& params,
                                          const BoundaryData& bc) {
    return PoissonSystem(mesh, fields, u_frozen, v_frozen, params, bc);
}

NewtonResult solve_semilinear_poisson(const PoissonSystem& system,
                                      const Eigen::VectorXd& initial_guess_full,
                                      const SolverOptions& opts, CostBreakdown* cost) {
    NewtonResult res;
    Eigen::VectorXd v = system.reduce(initial_guess_full);
    Eigen::VectorXd f;
    Eigen::SparseMatrix<double> jac;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    bool analyzed = false;

    const double tol = opts.newton_tol * system.rhs_scale();
    double* at = cost ? &cost->poisson_assembly_s : nullptr;
    double* st = cost ? &cost->poisson_solve_s : nullptr;

    {
        ScopedTimer t(at);
        system.residual(v, f);
    }
    double fnorm = f.lpNorm<Eigen::Infinity>();
    res.residual_history.push_back(fnorm);
    int consecutive_bad = 0;

    for (int it = 0; it < opts.newton_max_iter; ++it) {
        if (fnorm <= tol) {
            res.converged = true;
            break;
        }
        {
            ScopedTimer t(at);
            system.jacobian(v, jac);
        }
        Eigen::VectorXd step;
        {
            ScopedTimer t(st);
            if (!analyzed) {
                ldlt.analyzePattern(jac);
                analyzed = true;
            }
            ldlt.factorize(jac);
            if (ldlt.info() != Eigen::Success)
                throw SolverError("Poisson Jacobian factorization failed",
                                  std::vector<double>(v.data(), v.data() + v.size()),
                                  res.residual_history);
            step = ldlt.solve(-f);
        }

        // step halving: keep the best residual among the damped candidates
        double best_norm = std::numeric_limits<double>::infinity();
        Eigen::VectorXd best_v, best_f;
        double scale = 1.0;
        for (int halv = 0; halv <= opts.newton_max_halvings; ++halv) {
            const Eigen::VectorXd cand = v + scale * step;
            Eigen::VectorXd fc;
            {
                ScopedTimer t(at);
                system.residual(cand, fc);
            }
            const double norm = fc.lpNorm<Eigen::Infinity>();
            if (norm < best_norm) {
                best_norm = norm;
                best_v = cand;
                best_f = fc;
            }
            if (norm < fnorm) break;
            if (halv > 0) res.halvings += 1;
            scale *= 0.5;
        }

        if (best_norm >= fnorm && fnorm > tol) {
            consecutive_bad += 1;
            if (consecutive_bad >= 5) {
                const Eigen::VectorXd full = system.expand(v);
                throw SolverError(
                    "Newton divergence: residual did not decrease for 5 damped steps",
                    std::vector<double>(full.data(), full.data() + full.size()),
                    res.residual_history);
            }
        } else {
            consecutive_bad = 0;
        }

        v = best_v;
        f = best_f;
        fnorm = best_norm;
        res.iterations += 1;
        res.residual_history.push_back(fnorm);
        if (fnorm <= tol) res.converged = true;
    }

    if (!res.converged) {
        const Eigen::VectorXd full = system.expand(v);
        throw SolverError("Newton did not reach tolerance in " +
                              std::to_string(opts.newton_max_iter) + " iterations",
                          std::vector<double>(full.data(), full.data() + full.size()),
                          res.residual_history);
    }
    res.potential = system.expand(v);
    return res;
}

namespace {

// delta_form assembles the right-hand side for the deviation w - 1: the
// neutral state drops out exactly, so the solve error scales with the
// deviation instead of the exponential matrix span.
ContinuitySystem assemble_continuity_impl(const TriMesh& mesh,
                                          const Eigen::VectorXd& v_full, Carrier carrier,
                                          const Eigen::VectorXd& u_frozen,
                                          const Eigen::VectorXd& v_frozen,
                                          const PhysicalParams& params,
                                          const BoundaryData& bc, bool delta_form) {
    const int nv = mesh.n_vertices();
    if (v_full.size() != nv || u_frozen.size() != nv || v_frozen.size() != nv)
        throw AssemblyError("field sizes do not match vertex count");

    std::vector<char> si_node(nv, 0);
    std::vector<double> mass_si(nv, 0.0);
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        if (mesh.subdomain[t] != Subdomain::Si) continue;
        const double third = mesh.triangle_area(t) / 3.0;
        for (int v : mesh.triangles[t]) {
            si_node[v] = 1;
            mass_si[v] += third;
        }
    }

    std::vector<int> contact_of_node;
    const std::vector<char> dirichlet = dirichlet_flags(mesh, contact_of_node);

    ContinuitySystem sys;
    sys.dof_of_node.assign(nv, -1);
    sys.fixed_value.assign(nv, 1.0);  // neutral value outside silicon
    int n_dof = 0;
    int n_fixed = 0;
    for (int n = 0; n < nv; ++n) {
        if (!si_node[n]) continue;
        const bool carrier_dirichlet =
            dirichlet[n] && mesh.geometry.contacts[contact_of_node[n]].carrier_contact;
        if (carrier_dirichlet) {
            const ContactBoundary& cb = bc.contacts[contact_of_node[n]];
            sys.fixed_value[n] = carrier == Carrier::Electron ? cb.u : cb.v;
            ++n_fixed;
        } else {
            sys.dof_of_node[n] = n_dof++;
        }
    }
    if (n_fixed == 0)
        throw ConfigError("carrier equation has an empty Dirichlet set");

    const double ut = params.thermal_voltage;
    const double mobility =
        (carrier == Carrier::Electron ? params.mobility_n : params.mobility_p) *
        units::cm2_to_nm2;
    const double vsign = carrier == Carrier::Electron ? 1.0 : -1.0;

    sys.rhs = Eigen::VectorXd::Zero(n_dof);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(mesh.n_triangles()) * 12 + n_dof);
    for (int d = 0; d < n_dof; ++d) trip.emplace_back(d, d, 0.0);

    const double shift = delta_form ? 1.0 : 0.0;
    auto scatter = [&](int na, int nb, double value) {
        const int da = sys.dof_of_node[na];
        if (da < 0) return;
        if (sys.dof_of_node[nb] >= 0)
            trip.emplace_back(da, sys.dof_of_node[nb], value);
        else
            sys.rhs[da] -= value * (sys.fixed_value[nb] - shift);
    };

    for (int t = 0; t < mesh.n_triangles(); ++t) {
        if (mesh.subdomain[t] != Subdomain::Si) continue;
        const ElementGeometry g = element_geometry(mesh, t);
        const auto& tri = mesh.triangles[t];
        for (int a = 0; a < 3; ++a) {
            for (int b = a + 1; b < 3; ++b) {
                const double s_ab =
                    (g.grad_x[a] * g.grad_x[b] + g.grad_y[a] * g.grad_y[b]) * g.area;
                const double coef = std::max(-s_ab, 0.0);  // Delaunay: -S_ab >= 0
                if (coef == 0.0) continue;
                const int na = tri[a], nb = tri[b];
                const double w = exponential_edge_mean(vsign * v_full[na] / ut,
                                                       vsign * v_full[nb] / ut);
                const double k = mobility * ut * coef * w;
                scatter(na, na, k);
                scatter(nb, nb, k);
                scatter(na, nb, -k);
                scatter(nb, na, -k);
            }
        }
    }

    // SRH with the denominator frozen at (u0, v0); numerator linear in the
    // unknown carrier. In delta form the rhs is m (1 - other0) / denom.
    for (int n = 0; n < nv; ++n) {
        if (!si_node[n] || mass_si[n] == 0.0) continue;
        const double denom =
            params.tau_p * (safe_exp(v_full[n] / ut) * u_frozen[n] + 1.0) +
            params.tau_n * (safe_exp(-v_full[n] / ut) * v_frozen[n] + 1.0);
        const double other0 = carrier == Carrier::Electron ? v_frozen[n] : u_frozen[n];
        const int d = sys.dof_of_node[n];
        if (d >= 0) {
            trip.emplace_back(d, d, mass_si[n] * other0 / denom);
            sys.rhs[d] += mass_si[n] * (1.0 - shift * other0) / denom;
        }
    }

    sys.matrix.resize(n_dof, n_dof);
    sys.matrix.setFromTriplets(trip.begin(), trip.end());
    return sys;
}

}  // namespace

ContinuitySystem assemble_continuity(const TriMesh& mesh, const Eigen::VectorXd& v_full,
                                     Carrier carrier, const Eigen::VectorXd& u_frozen,
                                     const Eigen::VectorXd& v_frozen,
                                     const PhysicalParams& params, const BoundaryData& bc) {
    return assemble_continuity_impl(mesh, v_full, carrier, u_frozen, v_frozen, params, bc,
                                    /*delta_form=*/false);
}

Eigen::VectorXd solve_continuity(const TriMesh& mesh, const Eigen::VectorXd& v_full,
                                 Carrier carrier, const Eigen::VectorXd& u_frozen,
                                 const Eigen::VectorXd& v_frozen,
                                 const PhysicalParams& params, const BoundaryData& bc,
                                 CostBreakdown* cost) {
    double* at = cost ? &cost->dd_assembly_s : nullptr;
    double* st = cost ? &cost->dd_solve_s : nullptr;

    ContinuitySystem sys = [&] {
        ScopedTimer t(at);
        return assemble_continuity_impl(mesh, v_full, carrier, u_frozen, v_frozen, params,
                                        bc, /*delta_form=*/true);
    }();

    Eigen::VectorXd w;
    {
        ScopedTimer t(st);
        // Jacobi equilibration: entries span exp(V/U_T) across the device
        const int n = static_cast<int>(sys.matrix.rows());
        Eigen::VectorXd d(n);
        for (int i = 0; i < n; ++i) {
            const double dii = sys.matrix.coeff(i, i);
            d[i] = dii > 0.0 ? 1.0 / std::sqrt(dii) : 1.0;
        }
        const Eigen::SparseMatrix<double> scaled =
            d.asDiagonal() * sys.matrix * d.asDiagonal();
        const Eigen::VectorXd rhs_scaled = d.asDiagonal() * sys.rhs;
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(scaled);
        if (ldlt.info() != Eigen::Success)
            throw SolverError("continuity factorization failed", {}, {});
        Eigen::VectorXd ws = ldlt.solve(rhs_scaled);
        for (int refine = 0; refine < 2; ++refine)
            ws += ldlt.solve(Eigen::VectorXd(rhs_scaled - scaled * ws));
        w = d.asDiagonal() * ws;
    }

    Eigen::VectorXd full(mesh.n_vertices());
    for (int n = 0; n < mesh.n_vertices(); ++n)
        full[n] = sys.dof_of_node[n] >= 0 ? 1.0 + w[sys.dof_of_node[n]]
                                          : sys.fixed_value[n];
    return full;
}

}  // namespace mlmcfem
