#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mlmcfem/detail/p1.hpp"
#include "mlmcfem/fem.hpp"
#include "mlmcfem/rng.hpp"

using namespace mlmcfem;

namespace {

constexpr double kPi = 3.14159265358979323846;

// all-Dirichlet unit-height device with unit permittivities; used for
// manufactured-solution studies
DeviceGeometry unit_geometry() {
    DeviceGeometry g;
    g.width = 1.0;
    g.oxide_thickness = 0.3;
    g.si_thickness = 0.4;
    g.liq_thickness = 0.3;
    g.permittivity_ox = g.permittivity_si = g.permittivity_liq = 1.0;
    g.contacts = {
        {"bottom", BoundarySide::Bottom, 0, 0, 0.0, false},
        {"top", BoundarySide::Top, 0, 0, 0.0, false},
        {"left", BoundarySide::Left, 0.0, 1.0, 0.0, true},
        {"right", BoundarySide::Right, 0.0, 1.0, 0.0, true},
    };
    return g;
}

PhysicalParams inert_params() {
    PhysicalParams p;
    p.ionic_concentration = 0.0;
    p.doping = 0.0;
    return p;
}

BoundaryData uniform_bc(const DeviceGeometry& g, double value) {
    BoundaryData bc;
    bc.contacts.assign(g.contacts.size(), ContactBoundary{value, 1.0, 1.0});
    bc.carrier_bound = 1.0;
    return bc;
}

struct ErrorNorms {
    double l2 = 0.0;
    double h1 = 0.0;
};

// Discrete L2 / H1 errors against the exact solution, edge-midpoint
// quadrature (degree-2 exact) and the analytic gradient.
ErrorNorms error_vs(const TriMesh& mesh, const Eigen::VectorXd& vh,
                    double (*exact)(double, double),
                    void (*exact_grad)(double, double, double*, double*)) {
    ErrorNorms e;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const auto g = detail::element_geometry(mesh, t);
        const auto& tri = mesh.triangles[t];
        double ghx = 0, ghy = 0;
        for (int a = 0; a < 3; ++a) {
            ghx += vh[tri[a]] * g.grad_x[a];
            ghy += vh[tri[a]] * g.grad_y[a];
        }
        for (int a = 0; a < 3; ++a) {
            const int b = (a + 1) % 3;
            const Vec2& pa = mesh.vertices[tri[a]];
            const Vec2& pb = mesh.vertices[tri[b]];
            const double qx = 0.5 * (pa.x + pb.x), qy = 0.5 * (pa.y + pb.y);
            const double vh_q = 0.5 * (vh[tri[a]] + vh[tri[b]]);
            const double diff = vh_q - exact(qx, qy);
            double ex, ey;
            exact_grad(qx, qy, &ex, &ey);
            e.l2 += g.area / 3.0 * diff * diff;
            e.h1 += g.area / 3.0 * ((ghx - ex) * (ghx - ex) + (ghy - ey) * (ghy - ey));
        }
    }
    e.l2 = std::sqrt(e.l2);
    e.h1 = std::sqrt(e.h1);
    return e;
}

double sinsin(double x, double y) { return std::sin(kPi * x) * std::sin(kPi * y); }

void sinsin_grad(double x, double y, double* gx, double* gy) {
    *gx = kPi * std::cos(kPi * x) * std::sin(kPi * y);
    *gy = kPi * std::sin(kPi * x) * std::cos(kPi * y);
}

}  // namespace

TEST_CASE("ohmic boundary values") {
    PhysicalParams p;

    SUBCASE("intrinsic symmetric case") {
        const OhmicBoundary b = ohmic_boundary_values(0.0, 0.0, p);
        CHECK(b.n == doctest::Approx(p.intrinsic_density).epsilon(1e-14));
        CHECK(b.p == doctest::Approx(p.intrinsic_density).epsilon(1e-14));
        CHECK(b.potential == doctest::Approx(0.0).epsilon(1e-14));
        CHECK(b.u == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(b.v == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("n-type contact, quadratic oracle") {
        const double ni = p.intrinsic_density;
        const OhmicBoundary b = ohmic_boundary_values(3.0 * ni, 0.0, p);
        CHECK(b.n == doctest::Approx(ni * (3.0 + std::sqrt(13.0)) / 2.0).epsilon(1e-13));
        CHECK(b.n * b.p == doctest::Approx(ni * ni).epsilon(1e-13));
    }
    SUBCASE("u_D v_D = 1 for any doping and bias") {
        CounterRng rng(42);
        for (int i = 0; i < 50; ++i) {
            const double c = (rng.next_unit() - 0.3) * 1e18;
            const double u_applied = (rng.next_unit() - 0.5) * 0.8;
            const OhmicBoundary b = ohmic_boundary_values(c, u_applied, p);
            CHECK(b.u * b.v == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(b.n * b.p == doctest::Approx(p.intrinsic_density * p.intrinsic_density)
                                   .epsilon(1e-12));
            // space charge vanishes at the contact
            CHECK(c + b.p - b.n == doctest::Approx(0.0).scale(std::abs(c) + b.n).epsilon(1e-12));
        }
    }
}

TEST_CASE("linear Poisson reproduces a constant potential in one Newton step") {
    const DeviceGeometry g = default_device_geometry();
    const TriMesh mesh = build_device_mesh(g, 5.0);
    const SampleFields fields = nominal_fields(mesh);
    const PhysicalParams params = inert_params();
    const BoundaryData bc = uniform_bc(g, 0.7);
    const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(mesh.n_vertices());

    PoissonSystem sys(mesh, fields, zeros, zeros, params, bc);
    SolverOptions opts;
    const NewtonResult res = solve_semilinear_poisson(sys, zeros, opts);
    CHECK(res.converged);
    CHECK(res.iterations == 1);
    CHECK((res.potential.array() - 0.7).abs().maxCoeff() < 1e-9);
}

TEST_CASE("non-elliptic permittivity rejected") {
    const TriMesh mesh = build_device_mesh(default_device_geometry(), 6.0);
    SampleFields fields = nominal_fields(mesh);
    fields.permittivity[0] = -1.0;
    const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(mesh.n_vertices());
    CHECK_THROWS_AS(PoissonSystem(mesh, fields, zeros, zeros, inert_params(),
                                  uniform_bc(mesh.geometry, 0.0)),
                    AssemblyError);
}

TEST_CASE("manufactured solution converges at the P1 rates") {
    const DeviceGeometry g = unit_geometry();
    const PhysicalParams params = inert_params();

    std::vector<double> hs, l2s, h1s;
    for (double h : {0.12, 0.06, 0.03}) {
        const TriMesh mesh = build_device_mesh(g, h);
        SampleFields fields = nominal_fields(mesh);
        for (int n = 0; n < mesh.n_vertices(); ++n) {
            const Vec2& p = mesh.vertices[n];
            const double f = 2.0 * kPi * kPi * sinsin(p.x, p.y);
            fields.charge_density[n] = f / units::poisson_rhs_scale;
        }
        const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(mesh.n_vertices());
        PoissonSystem sys(mesh, fields, zeros, zeros, params, uniform_bc(g, 0.0));
        SolverOptions opts;
        const NewtonResult res = solve_semilinear_poisson(sys, zeros, opts);
        const ErrorNorms e = error_vs(mesh, res.potential, sinsin, sinsin_grad);
        hs.push_back(mesh.h);
        l2s.push_back(e.l2);
        h1s.push_back(e.h1);
    }
    const double slope_l2 = std::log(l2s[0] / l2s[2]) / std::log(hs[0] / hs[2]);
    const double slope_h1 = std::log(h1s[0] / h1s[2]) / std::log(hs[0] / hs[2]);
    CHECK(slope_l2 > 1.7);
    CHECK(slope_l2 < 2.3);
    CHECK(slope_h1 > 0.8);
    CHECK(slope_h1 < 1.2);
}

TEST_CASE("assembled Jacobian matches central finite differences") {
    const TriMesh mesh = build_device_mesh(default_device_geometry(), 6.0);
    const SampleFields fields = nominal_fields(mesh);
    PhysicalParams params;  // full nonlinearity: carriers + electrolyte
    const BoundaryData bc = make_boundary_data(mesh.geometry, params);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(mesh.n_vertices());

    PoissonSystem sys(mesh, fields, ones, ones, params, bc);
    CounterRng rng(7);
    Eigen::VectorXd v(sys.n_dof());
    for (int i = 0; i < sys.n_dof(); ++i) v[i] = 0.6 * (rng.next_unit() - 0.5);

    Eigen::SparseMatrix<double> jac;
    sys.jacobian(v, jac);
    const double eps = 1e-6;
    for (int dir = 0; dir < 10; ++dir) {
        Eigen::VectorXd d(sys.n_dof());
        for (int i = 0; i < sys.n_dof(); ++i) d[i] = rng.next_normal();
        d.normalize();
        Eigen::VectorXd fp, fm;
        sys.residual(v + eps * d, fp);
        sys.residual(v - eps * d, fm);
        const Eigen::VectorXd fd = (fp - fm) / (2.0 * eps);
        const Eigen::VectorXd jd = jac * d;
        const double rel = (fd - jd).lpNorm<Eigen::Infinity>() /
                           std::max(1e-30, jd.lpNorm<Eigen::Infinity>());
        CHECK(rel < 1e-6);
    }
}

TEST_CASE("electrolyte screening keeps the potential inside its boundary range") {
    DeviceGeometry g = default_device_geometry(0.1, 0.1, 0.1, 0.1);
    g.oxide_thickness = 2.0;
    g.si_thickness = 2.0;
    g.liq_thickness = 56.0;
    for (auto& c : g.contacts)
        if (c.side == BoundarySide::Left || c.side == BoundarySide::Right) {
            c.y_lo = g.si_y_lo();
            c.y_hi = g.si_y_hi();
        }
    PhysicalParams params = inert_params();
    params.ionic_concentration = 5e17;
    const BoundaryData bc = uniform_bc(g, 0.1);

    auto solve_at = [&](double h) {
        const TriMesh mesh = build_device_mesh(g, h);
        const SampleFields fields = nominal_fields(mesh);
        const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(mesh.n_vertices());
        PoissonSystem sys(mesh, fields, zeros, zeros, params, bc);
        SolverOptions opts;
        return std::make_pair(solve_semilinear_poisson(sys, zeros, opts), mesh);
    };

    const auto [coarse, mesh_c] = solve_at(1.8);
    CHECK(coarse.potential.maxCoeff() <= 0.1 + 1e-8);
    CHECK(coarse.potential.minCoeff() >= -1e-8);

    // value at mid-height of the liquid layer agrees with a finer solve
    const auto [fine, mesh_f] = solve_at(0.9);
    auto mid_value = [&](const TriMesh& mesh, const Eigen::VectorXd& v) {
        const double xm = mesh.geometry.width / 2;
        const double ym = mesh.geometry.gamma_y() + 28.0;
        double best = 1e300, val = 0;
        for (int n = 0; n < mesh.n_vertices(); ++n) {
            const double d = std::hypot(mesh.vertices[n].x - xm, mesh.vertices[n].y - ym);
            if (d < best) {
                best = d;
                val = v[n];
            }
        }
        return val;
    };
    CHECK(mid_value(mesh_c, coarse.potential) ==
          doctest::Approx(mid_value(mesh_f, fine.potential)).epsilon(0.0).scale(1.0).epsilon(0.02 * 0.1 + 1e-6));
}

TEST_CASE("steep electrolyte forcing needs and survives step halving") {
    DeviceGeometry g = default_device_geometry(0.75, 0.75, 0.75, 0.75);
    PhysicalParams params = inert_params();
    params.ionic_concentration = 1e19;
    const TriMesh mesh = build_device_mesh(g, 5.0);
    const SampleFields fields = nominal_fields(mesh);
    const BoundaryData bc = uniform_bc(g, 0.75);
    const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(mesh.n_vertices());
    PoissonSystem sys(mesh, fields, zeros, zeros, params, bc);
    SolverOptions opts;
    const NewtonResult res = solve_semilinear_poisson(sys, zeros, opts);
    CHECK(res.converged);
    CHECK(res.halvings >= 1);
}

TEST_CASE("potential jump and flux jump across the interface") {
    DeviceGeometry g = default_device_geometry(0.0, 0.0, 0.0, 0.0);
    TriMesh mesh = build_device_mesh(g, 5.0);
    // strip the side contacts so the problem is one-dimensional in y
    for (auto& be : mesh.boundary_edges)
        if (be.kind == EdgeKind::Dirichlet &&
            mesh.geometry.contacts[be.contact_id].name != "back_gate" &&
            mesh.geometry.contacts[be.contact_id].name != "top_electrode") {
            be.kind = EdgeKind::Neumann;
            be.contact_id = -1;
        }

    PhysicalParams params = inert_params();
    params.alpha_jump = 0.05;
    params.gamma_jump = 0.004;
    // unit permittivity so the 1D two-point solution is exact in P1
    DeviceGeometry flat = g;
    SampleFields fields = nominal_fields(mesh);
    for (auto& a : fields.permittivity) a = 1.0;

    const BoundaryData bc = uniform_bc(g, 0.0);
    const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(mesh.n_vertices());
    PoissonSystem sys(mesh, fields, zeros, zeros, params, bc);
    SolverOptions opts;
    const NewtonResult res = solve_semilinear_poisson(sys, zeros, opts);

    // analytic 1D solution: V = c1 y below Gamma, c2 (y - H) above, with
    // c2 (yg - H) - c1 yg = alpha and the flux convention c1 - c2 = gamma
    // (solid-side minus liquid-side displacement)
    const double yg = g.gamma_y(), hh = g.height();
    const double alpha = params.alpha_jump, gamma = params.gamma_jump;
    const double c1 = -(alpha + gamma * (yg - hh)) / hh;
    const double c2 = c1 - gamma;
    for (int n = 0; n < mesh.n_vertices(); ++n) {
        const double y = mesh.vertices[n].y;
        const bool plus_side =
            std::find(mesh.interface_plus.begin(), mesh.interface_plus.end(), n) !=
            mesh.interface_plus.end();
        const double expect = (y > yg || plus_side) ? c2 * (y - hh) : c1 * y;
        CHECK(res.potential[n] == doctest::Approx(expect).epsilon(0.0).scale(1.0).epsilon(1e-9));
    }
    // jump realized exactly across the duplicated interface nodes
    for (std::size_t k = 0; k < mesh.interface_minus.size(); ++k)
        CHECK(res.potential[mesh.interface_plus[k]] -
                  res.potential[mesh.interface_minus[k]] ==
              doctest::Approx(alpha).epsilon(1e-12));

    SUBCASE("jump also holds when the interface meets Dirichlet contacts") {
        // full contact set: the interface endpoints alias Dirichlet nodes
        const TriMesh full = build_device_mesh(g, 5.0);
        SampleFields f2 = nominal_fields(full);
        PoissonSystem sys2(full, f2, Eigen::VectorXd::Zero(full.n_vertices()),
                           Eigen::VectorXd::Zero(full.n_vertices()), params,
                           uniform_bc(g, 0.0));
        const NewtonResult r2 =
            solve_semilinear_poisson(sys2, Eigen::VectorXd::Zero(full.n_vertices()), opts);
        for (std::size_t k = 0; k < full.interface_minus.size(); ++k)
            CHECK(r2.potential[full.interface_plus[k]] -
                      r2.potential[full.interface_minus[k]] ==
                  doctest::Approx(alpha).epsilon(1e-12));
    }
}

TEST_CASE("continuity solve") {
    const DeviceGeometry g = default_device_geometry();
    const TriMesh mesh = build_device_mesh(g, 5.0);
    PhysicalParams params;
    const int nv = mesh.n_vertices();
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(nv);
    const Eigen::VectorXd zero_v = Eigen::VectorXd::Zero(nv);

    SUBCASE("thermal equilibrium is reproduced exactly") {
        BoundaryData bc = uniform_bc(g, 0.0);
        const Eigen::VectorXd w =
            solve_continuity(mesh, zero_v, Carrier::Electron, ones, ones, params, bc);
        CHECK((w.array() - 1.0).abs().maxCoeff() < 1e-12);
    }

    SUBCASE("zero recombination and zero field give the harmonic profile") {
        PhysicalParams frozen = params;
        frozen.tau_n = frozen.tau_p = 1e30;
        BoundaryData bc = uniform_bc(g, 0.0);
        bc.contacts[2].u = 1.0;  // source
        bc.contacts[3].u = 2.0;  // drain
        const Eigen::VectorXd w =
            solve_continuity(mesh, zero_v, Carrier::Electron, ones, ones, frozen, bc);
        std::vector<double> mass = detail::lumped_si_mass(mesh);
        for (int n = 0; n < nv; ++n) {
            if (mass[n] == 0.0) continue;
            const double expect = 1.0 + mesh.vertices[n].x / g.width;
            CHECK(w[n] == doctest::Approx(expect).epsilon(1e-9));
        }
    }

    SUBCASE("exponentially fitted scheme respects the boundary range") {
        Eigen::VectorXd ramp(nv);
        for (int n = 0; n < nv; ++n)
            ramp[n] = -0.5 + mesh.vertices[n].x / g.width;  // 1 V across 60 nm
        BoundaryData bc = uniform_bc(g, 0.0);
        bc.contacts[2].u = 0.8;
        bc.contacts[3].u = 1.2;
        const Eigen::VectorXd w =
            solve_continuity(mesh, ramp, Carrier::Electron, ones, ones, params, bc);
        std::vector<double> mass = detail::lumped_si_mass(mesh);
        for (int n = 0; n < nv; ++n) {
            if (mass[n] == 0.0) continue;
            CHECK(w[n] >= 0.8 - 1e-8);
            CHECK(w[n] <= 1.2 + 1e-8);
        }
    }

    SUBCASE("stiffness matrix is symmetric") {
        CounterRng rng(3);
        Eigen::VectorXd v(nv);
        for (int n = 0; n < nv; ++n) v[n] = 0.4 * (rng.next_unit() - 0.5);
        BoundaryData bc = uniform_bc(g, 0.0);
        const ContinuitySystem sys =
            assemble_continuity(mesh, v, Carrier::Hole, ones, ones, params, bc);
        const Eigen::SparseMatrix<double> diff =
            Eigen::SparseMatrix<double>(sys.matrix.transpose()) - sys.matrix;
        double rel = 0.0;
        for (int k = 0; k < diff.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(diff, k); it; ++it)
                rel = std::max(rel, std::abs(it.value()));
        CHECK(rel <= 1e-12 * sys.matrix.coeffs().abs().maxCoeff());
    }

    SUBCASE("empty carrier Dirichlet set is a configuration error") {
        TriMesh crippled = mesh;
        for (auto& c : crippled.geometry.contacts) c.carrier_contact = false;
        BoundaryData bc = uniform_bc(g, 0.0);
        CHECK_THROWS_AS(solve_continuity(crippled, zero_v, Carrier::Electron, ones, ones,
                                         params, bc),
                        ConfigError);
    }
}

TEST_CASE("Gummel iteration at equilibrium returns (V_e, 1, 1)") {
    const DeviceGeometry g = default_device_geometry(0.0, 0.0, 0.0, 0.0);
    const TriMesh mesh = build_device_mesh(g, 5.0);
    const SampleFields fields = nominal_fields(mesh);
    PhysicalParams params;
    const BoundaryData bc = make_boundary_data(g, params);
    SolverOptions opts;

    const GummelResult res = gummel_iterate(mesh, fields, params, bc, opts);
    CHECK(res.stats.converged);
    CHECK((res.fields.u.array() - 1.0).abs().maxCoeff() < 1e-6);
    CHECK((res.fields.v.array() - 1.0).abs().maxCoeff() < 1e-6);
    CHECK_FALSE(res.stats.bounds_violated);

    // Slotboom identity n p = n_i^2 u v holds pointwise by construction
    const double ni2 = params.intrinsic_density * params.intrinsic_density;
    for (int n = 0; n < mesh.n_vertices(); ++n) {
        if (res.fields.n[n] == 0.0) continue;
        CHECK(res.fields.n[n] * res.fields.p[n] ==
              doctest::Approx(ni2 * res.fields.u[n] * res.fields.v[n]).epsilon(1e-12));
    }
}

TEST_CASE("biased device stays inside the existence box") {
    const DeviceGeometry g = default_device_geometry();  // back gate at -1 V
    const TriMesh mesh = build_device_mesh(g, 5.0);
    const SampleFields fields = nominal_fields(mesh);
    PhysicalParams params;
    params.doping = 2e17;
    const BoundaryData bc = make_boundary_data(g, params);
    SolverOptions opts;

    const GummelResult res = gummel_iterate(mesh, fields, params, bc, opts);
    CHECK(res.stats.converged);
    CHECK_FALSE(res.stats.bounds_violated);
    CHECK(res.fields.v_lower <= res.fields.potential.minCoeff());
    CHECK(res.fields.potential.maxCoeff() <= res.fields.v_upper);
}

TEST_CASE("Gummel non-convergence carries the change history") {
    const DeviceGeometry g = default_device_geometry();
    const TriMesh mesh = build_device_mesh(g, 6.0);
    const SampleFields fields = nominal_fields(mesh);
    PhysicalParams params;
    const BoundaryData bc = make_boundary_data(g, params);
    SolverOptions opts;
    opts.gummel_max_iter = 1;
    opts.gummel_tol = 1e-30;
    try {
        gummel_iterate(mesh, fields, params, bc, opts);
        FAIL("expected an iteration error");
    } catch (const IterationError& e) {
        CHECK(e.residual_history.size() == 1);
    }
}

TEST_CASE("Gummel sweep count is stable under refinement") {
    const DeviceGeometry g = default_device_geometry();
    PhysicalParams params;
    const BoundaryData bc = make_boundary_data(g, params);
    SolverOptions opts;

    std::vector<int> iters;
    for (double h : {5.0, 2.5, 1.25}) {
        const TriMesh mesh = build_device_mesh(g, h);
        const SampleFields fields = nominal_fields(mesh);
        iters.push_back(gummel_iterate(mesh, fields, params, bc, opts).stats.iterations);
    }
    const auto [lo, hi] = std::minmax_element(iters.begin(), iters.end());
    CHECK(*hi - *lo <= 3);
}

TEST_CASE("quantity of interest") {
    const DeviceGeometry g = default_device_geometry(0.0, 0.0, 0.0, 0.0);
    const TriMesh mesh = build_device_mesh(g, 5.0);
    PhysicalParams params;
    DopantModel dopants;

    SUBCASE("constant field has mean equal to the constant") {
        SolutionFields f;
        f.potential = Eigen::VectorXd::Constant(mesh.n_vertices(), 0.31);
        f.u = f.v = Eigen::VectorXd::Ones(mesh.n_vertices());
        CHECK(evaluate_qoi(f, mesh, params, dopants, {QoiKind::MeanPotential, ""}) ==
              doctest::Approx(0.31).epsilon(1e-14));
    }

    SUBCASE("equilibrium contact flux vanishes") {
        const SampleFields fields = nominal_fields(mesh);
        const BoundaryData bc = make_boundary_data(g, params);
        SolverOptions opts;
        const GummelResult res = gummel_iterate(mesh, fields, params, bc, opts);
        const double flux = evaluate_qoi(res.fields, mesh, params, dopants,
                                         {QoiKind::ContactFlux, "drain"});
        CHECK(std::abs(flux) < 1e-10);
    }

    SUBCASE("unknown contact is a configuration error") {
        SolutionFields f;
        f.potential = Eigen::VectorXd::Zero(mesh.n_vertices());
        f.u = f.v = Eigen::VectorXd::Ones(mesh.n_vertices());
        CHECK_THROWS_AS(
            evaluate_qoi(f, mesh, params, dopants, {QoiKind::ContactFlux, "gate"}),
            ConfigError);
    }

    SUBCASE("mean of an interpolated analytic field converges at second order") {
        std::vector<double> hs, errs;
        const DeviceGeometry ug = unit_geometry();
        for (double h : {0.12, 0.06, 0.03}) {
            const TriMesh m = build_device_mesh(ug, h);
            SolutionFields f;
            f.potential.resize(m.n_vertices());
            for (int n = 0; n < m.n_vertices(); ++n)
                f.potential[n] = sinsin(m.vertices[n].x, m.vertices[n].y);
            f.u = f.v = Eigen::VectorXd::Ones(m.n_vertices());
            const double got =
                evaluate_qoi(f, m, params, dopants, {QoiKind::MeanPotential, ""});
            // integral of sin(pi x) sin(pi y) over the Si strip / its area
            const double ylo = ug.si_y_lo(), yhi = ug.si_y_hi();
            const double exact = (2.0 / kPi) * (std::cos(kPi * ylo) - std::cos(kPi * yhi)) /
                                 kPi / (ug.si_thickness * ug.width);
            hs.push_back(m.h);
            errs.push_back(std::abs(got - exact));
        }
        const double slope = std::log(errs[0] / errs[2]) / std::log(hs[0] / hs[2]);
        CHECK(slope > 1.6);
    }
}
