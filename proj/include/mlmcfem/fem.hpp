#pragma once

#include <Eigen/Sparse>
#include <vector>

#include "mlmcfem/config.hpp"
#include "mlmcfem/mesh.hpp"
#include "mlmcfem/physics.hpp"

namespace mlmcfem {

// One realization of the random coefficients on a given mesh.
struct SampleFields {
    std::vector<double> permittivity;    // relative, per element
    std::vector<double> charge_density;  // signed dopant charge, cm^-3, per node
};

// Nominal fields: subdomain permittivities, zero dopant charge.
SampleFields nominal_fields(const TriMesh& mesh);

// Dirichlet data for one solve, parallel to geometry.contacts.
struct ContactBoundary {
    double potential = 0.0;
    double u = 1.0;
    double v = 1.0;
};

struct BoundaryData {
    std::vector<ContactBoundary> contacts;
    double carrier_bound = 1.0;  // K of the carrier L-infinity estimate
};

BoundaryData make_boundary_data(const DeviceGeometry& geometry,
                                const PhysicalParams& params);

enum class ReactionKind : int { None = 0, Semiconductor = 1, Electrolyte = 2 };

// Wall-clock broken down by the four work components of one sample solve.
struct CostBreakdown {
    double poisson_assembly_s = 0.0;
    double poisson_solve_s = 0.0;
    double dd_assembly_s = 0.0;
    double dd_solve_s = 0.0;

    CostBreakdown& operator+=(const CostBreakdown& o) {
        poisson_assembly_s += o.poisson_assembly_s;
        poisson_solve_s += o.poisson_solve_s;
        dd_assembly_s += o.dd_assembly_s;
        dd_solve_s += o.dd_solve_s;
        return *this;
    }
};

// P1 Galerkin discretization of the semilinear Poisson block:
//   -div(A grad V) + reaction(V) = source,
// with Dirichlet rows eliminated symmetrically, the potential jump across
// Gamma folded into the reduced unknowns and the displacement jump applied
// as a line source. Residual and Jacobian are exposed for Newton.
class PoissonSystem {
public:
    PoissonSystem(const TriMesh& mesh, const SampleFields& fields,
                  const Eigen::VectorXd& u_frozen, const Eigen::VectorXd& v_frozen,
                  const PhysicalParams& params, const BoundaryData& bc);

    int n_dof() const { return n_dof_; }
    const TriMesh& mesh() const { return *mesh_; }

    // residual F(V) = K V - b + M r(V) on reduced dofs
    void residual(const Eigen::VectorXd& v_reduced, Eigen::VectorXd& out) const;
    // Jacobian K + M r'(V); sparsity identical across calls
    void jacobian(const Eigen::VectorXd& v_reduced,
                  Eigen::SparseMatrix<double>& out) const;

    Eigen::VectorXd reduce(const Eigen::VectorXd& v_full) const;
    Eigen::VectorXd expand(const Eigen::VectorXd& v_reduced) const;

    double rhs_scale() const { return rhs_scale_; }
    const Eigen::SparseMatrix<double>& stiffness() const { return stiffness_; }

private:
    const TriMesh* mesh_;
    int n_dof_ = 0;
    std::vector<int> dof_of_node_;       // -1 where the value is known
    std::vector<double> known_value_;    // Dirichlet value via the alias node
    std::vector<double> jump_offset_;    // + alpha on Gamma plus copies
    std::vector<char> is_plus_;          // Gamma plus copy marker
    std::vector<ReactionKind> reaction_;
    std::vector<double> mass_si_, mass_liq_;
    Eigen::VectorXd u0_, v0_;
    Eigen::SparseMatrix<double> stiffness_;
    Eigen::VectorXd base_rhs_;
    PhysicalParams params_;
    double rhs_scale_ = 1.0;

    double node_value(int node, const Eigen::VectorXd& v_reduced) const;
    friend class GummelDriver;
};

struct NewtonResult {
    Eigen::VectorXd potential;  // full nodal vector
    int iterations = 0;
    int halvings = 0;
    bool converged = false;
    std::vector<double> residual_history;
};

PoissonSystem assemble_semilinear_poisson(const TriMesh& mesh, const SampleFields& fields,
                                          const Eigen::VectorXd& u_frozen,
                                          const Eigen::VectorXd& v_frozen,
                                          const PhysicalParams& params,
                                          const BoundaryData& bc);

// Damped Newton: step halving on residual increase, divergence error after
// five consecutive failed damped steps.
NewtonResult solve_semilinear_poisson(const PoissonSystem& system,
                                      const Eigen::VectorXd& initial_guess_full,
                                      const SolverOptions& opts,
                                      CostBreakdown* cost = nullptr);

enum class Carrier : int { Electron = 0, Hole = 1 };

// Exponentially fitted (Scharfetter-Gummel) continuity system with the SRH
// denominator frozen at (u0, v0); symmetric by construction.
struct ContinuitySystem {
    Eigen::SparseMatrix<double> matrix;
    Eigen::VectorXd rhs;
    std::vector<int> dof_of_node;      // -1 outside silicon or Dirichlet
    std::vector<double> fixed_value;   // boundary value where dof < 0
};

ContinuitySystem assemble_continuity(const TriMesh& mesh, const Eigen::VectorXd& v_full,
                                     Carrier carrier, const Eigen::VectorXd& u_frozen,
                                     const Eigen::VectorXd& v_frozen,
                                     const PhysicalParams& params, const BoundaryData& bc);

Eigen::VectorXd solve_continuity(const TriMesh& mesh, const Eigen::VectorXd& v_full,
                                 Carrier carrier, const Eigen::VectorXd& u_frozen,
                                 const Eigen::VectorXd& v_frozen,
                                 const PhysicalParams& params, const BoundaryData& bc,
                                 CostBreakdown* cost = nullptr);

struct SolutionFields {
    Eigen::VectorXd potential;   // V, all nodes
    Eigen::VectorXd u, v;        // Slotboom variables (1 outside silicon)
    Eigen::VectorXd n, p;        // carrier densities, cm^-3 (0 outside silicon)
    double carrier_bound = 1.0;  // K
    double v_lower = 0.0;        // potential bounds from the existence estimate
    double v_upper = 0.0;
};

struct GummelStats {
    int iterations = 0;
    int newton_iterations = 0;
    bool converged = false;
    std::vector<double> change_history;  // sup-norm change per sweep
    CostBreakdown cost;
    double u_min = 1.0, u_max = 1.0;
    double v_min = 1.0, v_max = 1.0;
    double pot_min = 0.0, pot_max = 0.0;
    bool bounds_violated = false;  // any iterate left the L-infinity box
};

struct GummelResult {
    SolutionFields fields;
    GummelStats stats;
};

// Fixed-point sweep: semilinear Poisson for V, electron and hole continuity,
// interface-density update; stops when the sup-norm change drops below tol.
GummelResult gummel_iterate(const TriMesh& mesh, const SampleFields& fields,
                            const PhysicalParams& params, const BoundaryData& bc,
                            const SolverOptions& opts);

double evaluate_qoi(const SolutionFields& fields, const TriMesh& mesh,
                    const PhysicalParams& params, const DopantModel& dopants,
                    const QoiSpec& spec);

// CSV export of a converged solution (node id, x, y, V, u, v, n, p).
void export_fields_csv(const SolutionFields& fields, const TriMesh& mesh,
                       std::ostream& out);

}  // namespace mlmcfem
