#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mlmcfem/geometry.hpp"

namespace mlmcfem {

enum class EdgeKind : int { Dirichlet = 0, Neumann = 1, Interface = 2 };

struct BoundaryEdge {
    int a = 0;
    int b = 0;
    EdgeKind kind = EdgeKind::Neumann;
    int contact_id = -1;  // index into geometry.contacts for Dirichlet edges
};

// One edge of the silicon/liquid interface Gamma, referenced by the node ids
// on the solid (minus) side. Liquid triangles use duplicated (plus) copies of
// these nodes so the potential may jump across Gamma.
struct InterfaceEdge {
    int a_minus = 0;
    int b_minus = 0;
    double length = 0.0;
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

// Conforming P1 triangulation of the layered device. Immutable after
// construction; safe to share across concurrent samplers.
struct TriMesh {
    DeviceGeometry geometry;

    std::vector<Vec2> vertices;
    std::vector<std::array<int, 3>> triangles;   // CCW orientation
    std::vector<Subdomain> subdomain;            // per triangle
    std::vector<BoundaryEdge> boundary_edges;
    std::vector<InterfaceEdge> interface_edges;

    // interface_plus[k] duplicates interface_minus[k] geometrically; solid
    // and liquid sides of Gamma reference the respective copies.
    std::vector<int> interface_minus;
    std::vector<int> interface_plus;

    double h = 0.0;         // max triangle diameter (nm)
    double target_h = 0.0;  // size the generator aimed for
    int level = 0;

    int n_vertices() const { return static_cast<int>(vertices.size()); }
    int n_triangles() const { return static_cast<int>(triangles.size()); }

    double triangle_area(int t) const;
    Vec2 centroid(int t) const;

    // Maps plus copies to their minus originals; identity elsewhere.
    std::vector<int> interface_alias() const;
};

// Meshes the device with structured right triangles, edges aligned with the
// subdomain interfaces. Realized h is within a factor 1.5 of h_target.
TriMesh build_device_mesh(const DeviceGeometry& geometry, double h_target);

// Re-meshes at target size h/ratio (arbitrary real ratio >= 1); the realized
// size satisfies |h' - h/ratio| <= 0.25 h/ratio.
TriMesh refine_to(const TriMesh& mesh, double ratio);

// max_K h_K / rho_K with rho_K the inradius.
double shape_regularity(const TriMesh& mesh);

// Throws MeshError when any TriMesh invariant fails (orientation, conformity,
// tag/interface alignment).
void validate_mesh(const TriMesh& mesh);

// Plain-text dump: vertex list, triangle list with subdomain tags, boundary
// edge list with tags.
void export_mesh_text(const TriMesh& mesh, std::ostream& out);

}  // namespace mlmcfem
