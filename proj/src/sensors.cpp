#include "varmion/sensors.hpp"

#include <cmath>

namespace varmion {

namespace {

// Substream ids are part of the on-disk reproducibility contract.
constexpr std::uint64_t kSensorStream = 901;
constexpr std::uint64_t kOutputStream = 902;

bool on_boundary(const Mesh& mesh, int i) {
    for (Side s : {Side::left, Side::right, Side::bottom, Side::top})
        if (mesh.node_on_side(i, s)) return true;
    return false;
}

int side_hits(const Mesh& mesh, int i) {
    int hits = 0;
    for (Side s : {Side::left, Side::right, Side::bottom, Side::top})
        if (mesh.node_on_side(i, s)) ++hits;
    return hits;
}

}  // namespace

Eigen::MatrixXd interior_sensor_points(const SensorLayoutConfig& cfg, std::uint64_t seed) {
    if (cfg.count <= 0) throw ConfigError("sensor count must be positive");
    if (cfg.layout == "uniform_grid") {
        const int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cfg.count))));
        if (s * s != cfg.count)
            throw ConfigError("uniform_grid needs a square sensor count, got " + std::to_string(cfg.count));
        Eigen::MatrixXd pts(cfg.count, 2);
        for (int iy = 0; iy < s; ++iy)
            for (int ix = 0; ix < s; ++ix) {
                pts(iy * s + ix, 0) = (ix + 0.5) / s;
                pts(iy * s + ix, 1) = (iy + 0.5) / s;
            }
        return pts;
    }
    if (cfg.layout == "random") {
        Rng rng = Rng::stream(seed, kSensorStream);
        Eigen::MatrixXd pts(cfg.count, 2);
        for (int i = 0; i < cfg.count; ++i) {
            pts(i, 0) = rng.uniform();
            pts(i, 1) = rng.uniform();
        }
        return pts;
    }
    throw ConfigError("unknown sensor layout '" + cfg.layout + "'");
}

Eigen::MatrixXd boundary_sensor_points(const SideSet& gamma_eta, int per_side) {
    if (per_side <= 0) throw ConfigError("boundary sensors per side must be positive");
    Eigen::MatrixXd pts(per_side * static_cast<int>(gamma_eta.size()), 2);
    int row = 0;
    for (Side s : {Side::left, Side::right, Side::bottom, Side::top}) {
        if (!gamma_eta.count(s)) continue;
        for (int i = 0; i < per_side; ++i) {
            const double t = (i + 0.5) / per_side;
            switch (s) {
                case Side::left: pts.row(row) << 0.0, t; break;
                case Side::right: pts.row(row) << 1.0, t; break;
                case Side::bottom: pts.row(row) << t, 0.0; break;
                case Side::top: pts.row(row) << t, 1.0; break;
            }
            ++row;
        }
    }
    return pts;
}

OutputNodes select_output_nodes(const Mesh& mesh, const OutputNodesConfig& cfg, std::uint64_t seed) {
    OutputNodes out;
    const int q = mesh.node_count();

    if (cfg.recipe == "mesh_nodes") {
        out.ids.resize(static_cast<std::size_t>(q));
        for (int i = 0; i < q; ++i) out.ids[static_cast<std::size_t>(i)] = i;
    } else if (cfg.recipe == "random_mesh_nodes") {
        if (cfg.count > q)
            throw ConfigError("asked for " + std::to_string(cfg.count) + " output nodes, mesh has " +
                              std::to_string(q));
        std::vector<int> ids(static_cast<std::size_t>(q));
        for (int i = 0; i < q; ++i) ids[static_cast<std::size_t>(i)] = i;
        Rng rng = Rng::stream(seed, kOutputStream);
        shuffle(ids, rng);
        out.ids.assign(ids.begin(), ids.begin() + cfg.count);
    } else if (cfg.recipe == "interior_random_plus_boundary") {
        std::vector<int> interior;
        for (int i = 0; i < q; ++i)
            if (!on_boundary(mesh, i)) interior.push_back(i);
        if (cfg.count > static_cast<int>(interior.size()))
            throw ConfigError("asked for " + std::to_string(cfg.count) + " interior output nodes, mesh has " +
                              std::to_string(interior.size()));
        Rng rng = Rng::stream(seed, kOutputStream);
        shuffle(interior, rng);
        out.ids.assign(interior.begin(), interior.begin() + cfg.count);
        for (int i = 0; i < q; ++i)
            if (on_boundary(mesh, i) && side_hits(mesh, i) < 2) out.ids.push_back(i);
    } else {
        throw ConfigError("unknown output node recipe '" + cfg.recipe + "'");
    }

    const auto L = static_cast<Eigen::Index>(out.ids.size());
    out.points.resize(L, 2);
    for (Eigen::Index l = 0; l < L; ++l) out.points.row(l) = mesh.nodes.row(out.ids[static_cast<std::size_t>(l)]);
    out.weights = Eigen::VectorXd::Constant(L, 1.0 / static_cast<double>(L));
    return out;
}

std::vector<int> match_output_nodes(const Mesh& mesh, const Eigen::MatrixXd& points) {
    std::vector<int> ids(static_cast<std::size_t>(points.rows()));
    const double h = mesh.h();
    const int n = mesh.n_per_side;
    for (Eigen::Index l = 0; l < points.rows(); ++l) {
        const int ix = static_cast<int>(std::lround(points(l, 0) / h));
        const int iy = static_cast<int>(std::lround(points(l, 1) / h));
        const int id = iy * (n + 1) + ix;
        if (ix < 0 || ix > n || iy < 0 || iy > n || (mesh.nodes.row(id) - points.row(l)).norm() > 1e-9)
            throw MismatchError("output point " + std::to_string(l) + " is not a mesh node");
        ids[static_cast<std::size_t>(l)] = id;
    }
    return ids;
}

}  // namespace varmion
