#include <algorithm>
#include <cmath>
#include <ostream>

#include "mlmcfem/detail/p1.hpp"
#include "mlmcfem/fem.hpp"

namespace mlmcfem {

namespace {

// 0.5 (c + sqrt(c^2 + 4 ni^2)) without cancellation for strongly negative c
// (nodal dopant charges reach |c| ~ 1e18 against ni ~ 1e10).
double equilibrium_density_root(double c, double ni) {
    const double root = std::sqrt(c * c + 4.0 * ni * ni);
    if (c >= 0.0) return 0.5 * (c + root);
    return 2.0 * ni * ni / (root - c);
}

// Potential box of the existence estimate, computed from the boundary data,
// the realized doping extremes and the solution of the linear problem.
void potential_bounds(const TriMesh& mesh, const SampleFields& fields,
                      const PhysicalParams& params, const BoundaryData& bc,
                      const Eigen::VectorXd& v_linear, double* lower, double* upper) {
    double vd_min = 1e300, vd_max = -1e300;
    for (std::size_t i = 0; i < mesh.geometry.contacts.size(); ++i) {
        vd_min = std::min(vd_min, bc.contacts[i].potential);
        vd_max = std::max(vd_max, bc.contacts[i].potential);
    }
    double c_lo = 0.0, c_hi = 0.0;
    for (double c : fields.charge_density) {
        c_lo = std::min(c_lo, c);
        c_hi = std::max(c_hi, c);
    }
    const double vl_min = v_linear.minCoeff();
    const double vl_max = v_linear.maxCoeff();
    const double ni = params.intrinsic_density;
    const double k = bc.carrier_bound;
    const double ut = params.thermal_voltage;

    double lo = std::min(vd_min, ut * std::log(equilibrium_density_root(c_lo, ni) /
                                               (k * ni)) -
                                     vl_max);
    double hi = std::max(vd_max, ut * std::log(k * equilibrium_density_root(c_hi, ni) /
                                               ni) -
                                     vl_min);
    if (params.ionic_concentration > 0.0) {
        lo = std::min(lo, params.fermi_level - vl_max);
        hi = std::max(hi, params.fermi_level - vl_min);
    }
    *lower = lo;
    *upper = hi;
}

void track_extremes(const Eigen::VectorXd& x, double* lo, double* hi) {
    *lo = std::min(*lo, x.minCoeff());
    *hi = std::max(*hi, x.maxCoeff());
}

}  // namespace

GummelResult gummel_iterate(const TriMesh& mesh, const SampleFields& fields,
                            const PhysicalParams& params, const BoundaryData& bc,
                            const SolverOptions& opts) {
    const int nv = mesh.n_vertices();
    GummelResult out;
    GummelStats& st = out.stats;

    Eigen::VectorXd u = Eigen::VectorXd::Ones(nv);
    Eigen::VectorXd v = Eigen::VectorXd::Ones(nv);

    // linear problem: used both for the existence box and as the initial guess
    Eigen::VectorXd v_pot;
    {
        PhysicalParams linear = params;
        linear.ionic_concentration = 0.0;
        const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(nv);
        PoissonSystem sys(mesh, fields, zeros, zeros, linear, bc);
        v_pot = solve_semilinear_poisson(sys, Eigen::VectorXd::Zero(nv), opts, &st.cost)
                    .potential;
    }
    potential_bounds(mesh, fields, params, bc, v_pot, &out.fields.v_lower,
                     &out.fields.v_upper);

    st.pot_min = v_pot.minCoeff();
    st.pot_max = v_pot.maxCoeff();
    st.u_min = st.u_max = 1.0;
    st.v_min = st.v_max = 1.0;

    bool converged = false;
    for (int it = 0; it < opts.gummel_max_iter && !converged; ++it) {
        // (1) semilinear Poisson with carriers frozen
        PoissonSystem sys(mesh, fields, u, v, params, bc);
        NewtonResult newton = solve_semilinear_poisson(sys, v_pot, opts, &st.cost);
        st.newton_iterations += newton.iterations;

        // (2) electron and (3) hole continuity, SRH frozen at previous sweep
        Eigen::VectorXd u_new =
            solve_continuity(mesh, newton.potential, Carrier::Electron, u, v, params, bc,
                             &st.cost);
        Eigen::VectorXd v_new =
            solve_continuity(mesh, newton.potential, Carrier::Hole, u, v, params, bc,
                             &st.cost);

        // (4) interface densities: configured constants, re-applied each sweep
        // through the next Poisson assembly (params.alpha_jump, gamma_jump).

        const double change = std::max({(newton.potential - v_pot).lpNorm<Eigen::Infinity>(),
                                        (u_new - u).lpNorm<Eigen::Infinity>(),
                                        (v_new - v).lpNorm<Eigen::Infinity>()});
        v_pot = newton.potential;
        u = u_new;
        v = v_new;
        st.iterations += 1;
        st.change_history.push_back(change);

        track_extremes(v_pot, &st.pot_min, &st.pot_max);
        track_extremes(u, &st.u_min, &st.u_max);
        track_extremes(v, &st.v_min, &st.v_max);
        converged = change < opts.gummel_tol;
    }
    if (!converged)
        throw IterationError("Gummel iteration did not converge in " +
                                 std::to_string(opts.gummel_max_iter) + " sweeps",
                             st.change_history);
    st.converged = true;

    const double slack = 1e-8 * std::max({1.0, std::abs(out.fields.v_lower),
                                          std::abs(out.fields.v_upper)});
    const double kb = bc.carrier_bound;
    st.bounds_violated = st.u_min < 1.0 / kb - 1e-8 || st.u_max > kb + 1e-8 ||
                         st.v_min < 1.0 / kb - 1e-8 || st.v_max > kb + 1e-8 ||
                         st.pot_min < out.fields.v_lower - slack ||
                         st.pot_max > out.fields.v_upper + slack;

    SolutionFields& f = out.fields;
    f.potential = v_pot;
    f.u = u;
    f.v = v;
    f.carrier_bound = bc.carrier_bound;
    f.n = Eigen::VectorXd::Zero(nv);
    f.p = Eigen::VectorXd::Zero(nv);
    std::vector<char> si_node(nv, 0);
    for (int t = 0; t < mesh.n_triangles(); ++t)
        if (mesh.subdomain[t] == Subdomain::Si)
            for (int vtx : mesh.triangles[t]) si_node[vtx] = 1;
    const double ni = params.intrinsic_density;
    const double ut = params.thermal_voltage;
    for (int n = 0; n < nv; ++n) {
        if (!si_node[n]) continue;
        f.n[n] = ni * std::exp(v_pot[n] / ut) * u[n];
        f.p[n] = ni * std::exp(-v_pot[n] / ut) * v[n];
    }
    return out;
}

namespace {

double mean_potential_over_si(const SolutionFields& fields, const TriMesh& mesh) {
    double num = 0.0, den = 0.0;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        if (mesh.subdomain[t] != Subdomain::Si) continue;
        const double area = mesh.triangle_area(t);
        const auto& tri = mesh.triangles[t];
        num += area * (fields.potential[tri[0]] + fields.potential[tri[1]] +
                       fields.potential[tri[2]]) /
               3.0;
        den += area;
    }
    return num / den;
}

// Discrete outward flux of one carrier through a contact: residual row sums
// of the un-eliminated continuity operator at the contact nodes.
double carrier_flux(const TriMesh& mesh, const SolutionFields& f, Carrier carrier,
                    const PhysicalParams& params, int contact_id) {
    const int nv = mesh.n_vertices();
    Eigen::VectorXd r = Eigen::VectorXd::Zero(nv);
    const Eigen::VectorXd& w = carrier == Carrier::Electron ? f.u : f.v;
    const double ut = params.thermal_voltage;
    const double mobility =
        (carrier == Carrier::Electron ? params.mobility_n : params.mobility_p) *
        units::cm2_to_nm2;
    const double vsign = carrier == Carrier::Electron ? 1.0 : -1.0;

    for (int t = 0; t < mesh.n_triangles(); ++t) {
        if (mesh.subdomain[t] != Subdomain::Si) continue;
        const detail::ElementGeometry g = detail::element_geometry(mesh, t);
        const auto& tri = mesh.triangles[t];
        for (int a = 0; a < 3; ++a) {
            for (int b = a + 1; b < 3; ++b) {
                const double s_ab =
                    (g.grad_x[a] * g.grad_x[b] + g.grad_y[a] * g.grad_y[b]) * g.area;
                const double coef = std::max(-s_ab, 0.0);
                if (coef == 0.0) continue;
                const int na = tri[a], nb = tri[b];
                const double wgt = detail::exponential_edge_mean(
                    vsign * f.potential[na] / ut, vsign * f.potential[nb] / ut);
                const double k = mobility * ut * coef * wgt;
                r[na] += k * (w[na] - w[nb]);
                r[nb] += k * (w[nb] - w[na]);
            }
        }
    }

    // SRH contribution to the residual rows
    const std::vector<double> mass_si = detail::lumped_si_mass(mesh);
    for (int n = 0; n < nv; ++n) {
        if (mass_si[n] == 0.0) continue;
        const double denom =
            params.tau_p * (detail::safe_exp(f.potential[n] / ut) * f.u[n] + 1.0) +
            params.tau_n * (detail::safe_exp(-f.potential[n] / ut) * f.v[n] + 1.0);
        r[n] += mass_si[n] * (f.u[n] * f.v[n] - 1.0) / denom;
    }

    double flux = 0.0;
    std::vector<char> seen(nv, 0);
    for (const auto& be : mesh.boundary_edges) {
        if (be.kind != EdgeKind::Dirichlet || be.contact_id != contact_id) continue;
        for (int n : {be.a, be.b}) {
            if (!seen[n]) {
                seen[n] = 1;
                flux += r[n];
            }
        }
    }
    return flux;
}

}  // namespace

double evaluate_qoi(const SolutionFields& fields, const TriMesh& mesh,
                    const PhysicalParams& params, const DopantModel& dopants,
                    const QoiSpec& spec) {
    if (spec.kind == QoiKind::MeanPotential) return mean_potential_over_si(fields, mesh);

    int contact_id = -1;
    for (std::size_t i = 0; i < mesh.geometry.contacts.size(); ++i)
        if (mesh.geometry.contacts[i].name == spec.contact) contact_id = static_cast<int>(i);
    if (contact_id < 0 || !mesh.geometry.contacts[contact_id].carrier_contact)
        throw ConfigError("unknown or non-carrier contact for flux QoI: " + spec.contact);

    // currents: J_n = -q (electron particle flux), J_p = +q (hole particle flux)
    const double fn = carrier_flux(mesh, fields, Carrier::Electron, params, contact_id);
    const double fp = carrier_flux(mesh, fields, Carrier::Hole, params, contact_id);
    const double scale = units::elementary_charge_C * params.intrinsic_density *
                         units::cm3_to_nm3 * dopants.effective_depth;
    return scale * (fp - fn);
}

void export_fields_csv(const SolutionFields& fields, const TriMesh& mesh,
                       std::ostream& out) {
    out << "node,x,y,V,u,v,n,p\n";
    for (int i = 0; i < mesh.n_vertices(); ++i) {
        out << i << "," << mesh.vertices[i].x << "," << mesh.vertices[i].y << ","
            << fields.potential[i] << "," << fields.u[i] << "," << fields.v[i] << ","
            << fields.n[i] << "," << fields.p[i] << "\n";
    }
}

}  // namespace mlmcfem
