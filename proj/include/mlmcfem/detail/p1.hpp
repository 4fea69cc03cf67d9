#pragma once

#include <cmath>
#include <vector>

#include "mlmcfem/mesh.hpp"

namespace mlmcfem::detail {

inline double safe_exp(double x) {
    if (x > 250.0) x = 250.0;
    if (x < -250.0) x = -250.0;
    return std::exp(x);
}

inline double safe_sinh(double x) {
    if (x > 250.0) x = 250.0;
    if (x < -250.0) x = -250.0;
    return std::sinh(x);
}

inline double safe_cosh(double x) {
    if (x > 250.0) x = 250.0;
    if (x < -250.0) x = -250.0;
    return std::cosh(x);
}

// Bernoulli function x / (e^x - 1), stable near zero.
inline double bernoulli(double x) {
    if (std::abs(x) < 1.0e-5) return 1.0 - 0.5 * x + x * x / 12.0;
    if (x > 700.0) return 0.0;
    return x / std::expm1(x);
}

// Exponential mean of e^s along an edge with endpoint exponents sa, sb: the
// two-point flux with this coefficient is exact for linear potentials.
inline double exponential_edge_mean(double sa, double sb) {
    const double lo = std::min(sa, sb);
    const double d = std::abs(sa - sb);
    return safe_exp(lo) * bernoulli(-d);
}

struct ElementGeometry {
    double area;
    double grad_x[3];
    double grad_y[3];
};

inline ElementGeometry element_geometry(const TriMesh& mesh, int t) {
    const auto& tri = mesh.triangles[t];
    const Vec2& p0 = mesh.vertices[tri[0]];
    const Vec2& p1 = mesh.vertices[tri[1]];
    const Vec2& p2 = mesh.vertices[tri[2]];
    const double det = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
    ElementGeometry g;
    g.area = 0.5 * det;
    g.grad_x[0] = (p1.y - p2.y) / det;
    g.grad_x[1] = (p2.y - p0.y) / det;
    g.grad_x[2] = (p0.y - p1.y) / det;
    g.grad_y[0] = (p2.x - p1.x) / det;
    g.grad_y[1] = (p0.x - p2.x) / det;
    g.grad_y[2] = (p1.x - p0.x) / det;
    return g;
}

inline std::vector<char> dirichlet_flags(const TriMesh& mesh,
                                         std::vector<int>& contact_of_node) {
    std::vector<char> flag(mesh.vertices.size(), 0);
    contact_of_node.assign(mesh.vertices.size(), -1);
    for (const auto& be : mesh.boundary_edges) {
        if (be.kind != EdgeKind::Dirichlet) continue;
        flag[be.a] = 1;
        flag[be.b] = 1;
        contact_of_node[be.a] = be.contact_id;
        contact_of_node[be.b] = be.contact_id;
    }
    return flag;
}

inline std::vector<double> lumped_si_mass(const TriMesh& mesh) {
    std::vector<double> mass(mesh.vertices.size(), 0.0);
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        if (mesh.subdomain[t] != Subdomain::Si) continue;
        const double third = mesh.triangle_area(t) / 3.0;
        for (int v : mesh.triangles[t]) mass[v] += third;
    }
    return mass;
}

}  // namespace mlmcfem::detail
