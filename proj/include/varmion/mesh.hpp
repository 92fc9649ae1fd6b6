#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "varmion/common.hpp"

namespace varmion {

enum class Side : int { left = 0, right = 1, bottom = 2, top = 3 };

Side side_from_string(const std::string& s);
std::string side_to_string(Side s);

using SideSet = std::set<Side>;

struct BoundaryEdge {
    int a, b;       // node indices, oriented so the domain lies left of a->b
    Side side;
    int triangle;   // adjacent triangle index
};

// Structured triangulation of the unit square. n_per_side cells per axis,
// each cell split along the lower-left to upper-right diagonal. Nodes are
// row-major: node(ix, iy) = iy*(n+1) + ix at coordinates (ix*h, iy*h).
struct Mesh {
    int n_per_side = 0;
    Eigen::Matrix<double, Eigen::Dynamic, 2> nodes;          // q x 2
    std::vector<std::array<int, 3>> triangles;               // CCW
    std::vector<BoundaryEdge> boundary_edges;
    SideSet gamma_eta_spec;
    SideSet gamma_g_spec;

    int node_count() const { return static_cast<int>(nodes.rows()); }
    double h() const { return 1.0 / n_per_side; }

    bool node_on_side(int i, Side s) const;
    // Nodes lying on any edge of the given side set, ascending index order.
    std::vector<int> nodes_on(const SideSet& sides) const;
    std::vector<int> gamma_g_nodes() const { return nodes_on(gamma_g_spec); }
    std::vector<int> gamma_eta_nodes() const { return nodes_on(gamma_eta_spec); }
    // Complement of gamma_g nodes, ascending.
    std::vector<int> free_nodes() const;

    double triangle_area(int t) const;
    // Constant P1 basis gradients on triangle t; rows follow triangle vertex order.
    Eigen::Matrix<double, 3, 2> p1_gradients(int t) const;

    // Containing triangle and barycentric weights for a point of the closed
    // unit square. Points on cell edges resolve to one triangle.
    void locate(double x, double y, int& tri, Eigen::Vector3d& bary) const;
    // P1 interpolation of a nodal field at (x, y).
    double interpolate(const Eigen::VectorXd& nodal, double x, double y) const;
};

// gamma_eta may be empty (all-Dirichlet); remaining sides form gamma_g.
Mesh build_unit_square_mesh(int n_per_side, const SideSet& gamma_eta);

}  // namespace varmion
