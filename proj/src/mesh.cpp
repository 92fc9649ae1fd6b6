#include "varmion/mesh.hpp"

#include <cmath>
#include <cstdlib>

namespace varmion {

LogLevel log_level() {
    static LogLevel lvl = [] {
        const char* e = std::getenv("VARMION_LOG");
        if (!e) return LogLevel::info;
        std::string s(e);
        if (s == "error") return LogLevel::error;
        if (s == "debug") return LogLevel::debug;
        if (s == "info") return LogLevel::info;
        std::fprintf(stderr, "[error] VARMION_LOG must be error|info|debug, got '%s'\n", s.c_str());
        return LogLevel::info;
    }();
    return lvl;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

Side side_from_string(const std::string& s) {
    if (s == "left") return Side::left;
    if (s == "right") return Side::right;
    if (s == "bottom") return Side::bottom;
    if (s == "top") return Side::top;
    throw ConfigError("unknown boundary side '" + s + "'");
}

std::string side_to_string(Side s) {
    switch (s) {
        case Side::left: return "left";
        case Side::right: return "right";
        case Side::bottom: return "bottom";
        case Side::top: return "top";
    }
    return "?";
}

bool Mesh::node_on_side(int i, Side s) const {
    const double x = nodes(i, 0), y = nodes(i, 1);
    const double eps = 1e-14;
    switch (s) {
        case Side::left: return x < eps;
        case Side::right: return x > 1.0 - eps;
        case Side::bottom: return y < eps;
        case Side::top: return y > 1.0 - eps;
    }
    return false;
}

std::vector<int> Mesh::nodes_on(const SideSet& sides) const {
    std::vector<int> out;
    for (int i = 0; i < node_count(); ++i) {
        for (Side s : sides) {
            if (node_on_side(i, s)) {
                out.push_back(i);
                break;
            }
        }
    }
    return out;
}

std::vector<int> Mesh::free_nodes() const {
    std::vector<int> out;
    for (int i = 0; i < node_count(); ++i) {
        bool on_g = false;
        for (Side s : gamma_g_spec)
            if (node_on_side(i, s)) {
                on_g = true;
                break;
            }
        if (!on_g) out.push_back(i);
    }
    return out;
}

double Mesh::triangle_area(int t) const {
    const auto& tri = triangles[static_cast<std::size_t>(t)];
    const auto a = nodes.row(tri[0]), b = nodes.row(tri[1]), c = nodes.row(tri[2]);
    return 0.5 * ((b(0) - a(0)) * (c(1) - a(1)) - (c(0) - a(0)) * (b(1) - a(1)));
}

Eigen::Matrix<double, 3, 2> Mesh::p1_gradients(int t) const {
    const auto& tri = triangles[static_cast<std::size_t>(t)];
    const auto a = nodes.row(tri[0]), b = nodes.row(tri[1]), c = nodes.row(tri[2]);
    const double det = (b(0) - a(0)) * (c(1) - a(1)) - (c(0) - a(0)) * (b(1) - a(1));
    Eigen::Matrix<double, 3, 2> g;
    g(0, 0) = (b(1) - c(1)) / det;
    g(0, 1) = (c(0) - b(0)) / det;
    g(1, 0) = (c(1) - a(1)) / det;
    g(1, 1) = (a(0) - c(0)) / det;
    g(2, 0) = (a(1) - b(1)) / det;
    g(2, 1) = (b(0) - a(0)) / det;
    return g;
}

void Mesh::locate(double x, double y, int& tri, Eigen::Vector3d& bary) const {
    if (x < -1e-12 || x > 1.0 + 1e-12 || y < -1e-12 || y > 1.0 + 1e-12)
        throw MismatchError("point outside the unit square");
    const int n = n_per_side;
    const double hx = x * n, hy = y * n;
    int ix = std::min(n - 1, std::max(0, static_cast<int>(std::floor(hx))));
    int iy = std::min(n - 1, std::max(0, static_cast<int>(std::floor(hy))));
    const double lx = hx - ix, ly = hy - iy;
    // cell (ix,iy) holds triangles 2*(iy*n+ix) lower and +1 upper,
    // split along the diagonal (ix,iy)-(ix+1,iy+1)
    const int cell = iy * n + ix;
    const bool lower = ly <= lx;
    tri = 2 * cell + (lower ? 0 : 1);
    if (lower) {
        // vertices (ix,iy), (ix+1,iy), (ix+1,iy+1)
        bary << 1.0 - lx, lx - ly, ly;
    } else {
        // vertices (ix,iy), (ix+1,iy+1), (ix,iy+1)
        bary << 1.0 - ly, lx, ly - lx;
    }
}

double Mesh::interpolate(const Eigen::VectorXd& nodal, double x, double y) const {
    int t;
    Eigen::Vector3d b;
    locate(x, y, t, b);
    const auto& tri = triangles[static_cast<std::size_t>(t)];
    return b(0) * nodal(tri[0]) + b(1) * nodal(tri[1]) + b(2) * nodal(tri[2]);
}

Mesh build_unit_square_mesh(int n_per_side, const SideSet& gamma_eta) {
    if (n_per_side < 1) throw ConfigError("mesh: n_per_side must be >= 1");
    SideSet all{Side::left, Side::right, Side::bottom, Side::top};
    for (Side s : gamma_eta)
        if (!all.count(s)) throw ConfigError("mesh: bad gamma_eta side");
    if (gamma_eta.size() == all.size()) throw ConfigError("mesh: gamma_eta must leave a Dirichlet part");

    Mesh m;
    m.n_per_side = n_per_side;
    m.gamma_eta_spec = gamma_eta;
    for (Side s : all)
        if (!gamma_eta.count(s)) m.gamma_g_spec.insert(s);

    const int n = n_per_side;
    const int q = (n + 1) * (n + 1);
    m.nodes.resize(q, 2);
    const double h = 1.0 / n;
    for (int iy = 0; iy <= n; ++iy)
        for (int ix = 0; ix <= n; ++ix) {
            const int id = iy * (n + 1) + ix;
            m.nodes(id, 0) = ix * h;
            m.nodes(id, 1) = iy * h;
        }

    auto node = [n](int ix, int iy) { return iy * (n + 1) + ix; };
    m.triangles.reserve(static_cast<std::size_t>(2 * n * n));
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            const int a = node(ix, iy), b = node(ix + 1, iy);
            const int c = node(ix + 1, iy + 1), d = node(ix, iy + 1);
            m.triangles.push_back({a, b, c});
            m.triangles.push_back({a, c, d});
        }

    // Boundary edges oriented counterclockwise around the square.
    auto tri_of_cell = [n](int ix, int iy, bool lower) { return 2 * (iy * n + ix) + (lower ? 0 : 1); };
    for (int ix = 0; ix < n; ++ix)
        m.boundary_edges.push_back({node(ix, 0), node(ix + 1, 0), Side::bottom, tri_of_cell(ix, 0, true)});
    for (int iy = 0; iy < n; ++iy)
        m.boundary_edges.push_back({node(n, iy), node(n, iy + 1), Side::right, tri_of_cell(n - 1, iy, true)});
    for (int ix = n; ix > 0; --ix)
        m.boundary_edges.push_back({node(ix, n), node(ix - 1, n), Side::top, tri_of_cell(ix - 1, n - 1, false)});
    for (int iy = n; iy > 0; --iy)
        m.boundary_edges.push_back({node(0, iy), node(0, iy - 1), Side::left, tri_of_cell(0, iy - 1, false)});
    return m;
}

}  // namespace varmion
