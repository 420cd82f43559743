#include "clab/graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <unordered_map>

#include "json.hpp"

#include "clab/errors.hpp"

namespace clab {

KernelSpec KernelSpec::make(KernelShape shape, int m) {
    if (m != 1 && m != 2) throw InvalidArgument("kernel dimension must be 1 or 2");
    KernelSpec k;
    k.shape = shape;
    k.dim = m;
    if (shape == KernelShape::Indicator) k.c = m == 1 ? 0.5 : 1.0 / std::numbers::pi;
    else k.c = m == 1 ? 1.0 : 3.0 / std::numbers::pi;
    k.sigma = surface_tension(k, m);
    return k;
}

double KernelSpec::operator()(double t) const {
    if (t < 0 || t > 1) return 0.0;
    return shape == KernelShape::Indicator ? c : c * (1.0 - t);
}

std::string KernelSpec::name() const { return shape == KernelShape::Indicator ? "indicator" : "triangle"; }

KernelShape parse_kernel_shape(const std::string& name) {
    if (name == "indicator") return KernelShape::Indicator;
    if (name == "triangle") return KernelShape::Triangle;
    throw InvalidArgument("unknown kernel '" + name + "' (expected indicator or triangle)");
}

double surface_tension(const KernelSpec& kernel, int m) {
    // 1D: c int_{-1}^{1} x^2 p(|x|) dx;  2D: c pi int_0^1 r^3 p(r) dr.
    const bool tri = kernel.shape == KernelShape::Triangle;
    if (m == 1) return kernel.c * (tri ? 1.0 / 6.0 : 2.0 / 3.0);
    if (m == 2) return kernel.c * std::numbers::pi * (tri ? 1.0 / 20.0 : 1.0 / 4.0);
    throw InvalidArgument("surface_tension supports m = 1 or 2");
}

namespace {

using CellKey = std::array<std::int64_t, 4>;

struct CellHash {
    std::size_t operator()(const CellKey& k) const noexcept {
        std::uint64_t h = 1469598103934665603ULL;
        for (auto v : k) h = (h ^ static_cast<std::uint64_t>(v)) * 1099511628211ULL;
        return static_cast<std::size_t>(h);
    }
};

}  // namespace

WeightedGraph build_graph(const PointCloud& cloud, double h, const KernelSpec& kernel) {
    if (!(h > 0)) throw InvalidArgument("build_graph needs h > 0");
    const int n = static_cast<int>(cloud.rows());
    const int d = static_cast<int>(cloud.cols());
    if (d > 4) throw InvalidArgument("build_graph supports ambient dimension <= 4");

    auto key_of = [&](int i) {
        CellKey k{0, 0, 0, 0};
        for (int a = 0; a < d; ++a) k[a] = static_cast<std::int64_t>(std::floor(cloud(i, a) / h));
        return k;
    };
    std::unordered_map<CellKey, std::vector<int>, CellHash> cells;
    for (int i = 0; i < n; ++i) cells[key_of(i)].push_back(i);

    int offsets = 1;
    for (int a = 0; a < d; ++a) offsets *= 3;

    const double scale = 1.0 / (n * std::pow(h, kernel.dim));
    std::vector<Eigen::Triplet<double>> trips;
    std::vector<int> nbrs;
    for (int i = 0; i < n; ++i) {
        const CellKey base = key_of(i);
        nbrs.clear();
        for (int o = 0; o < offsets; ++o) {
            CellKey k = base;
            int code = o;
            for (int a = 0; a < d; ++a) {
                k[a] += code % 3 - 1;
                code /= 3;
            }
            auto it = cells.find(k);
            if (it == cells.end()) continue;
            for (int j : it->second) {
                if (j >= i) nbrs.push_back(j);
            }
        }
        std::sort(nbrs.begin(), nbrs.end());
        for (int j : nbrs) {
            const double dist = (cloud.row(i) - cloud.row(j)).norm();
            if (dist > h) continue;
            const double w = scale * kernel(dist / h);
            if (w <= 0) continue;
            trips.emplace_back(i, j, w);
            if (j != i) trips.emplace_back(j, i, w);
        }
    }
    WeightedGraph g;
    g.n = n;
    g.h = h;
    g.m = kernel.dim;
    g.weights.resize(n, n);
    g.weights.setFromTriplets(trips.begin(), trips.end());
    g.weights.makeCompressed();
    return g;
}

SparseMatrix graph_laplacian(const WeightedGraph& graph, double sigma) {
    if (!(sigma > 0)) throw InvalidArgument("graph_laplacian needs sigma > 0");
    const double f = 2.0 / (sigma * graph.h * graph.h);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(graph.weights.nonZeros() + graph.n);
    for (int col = 0; col < graph.weights.outerSize(); ++col) {
        double degree = 0.0;
        for (SparseMatrix::InnerIterator it(graph.weights, col); it; ++it) {
            if (it.row() == col) continue;
            degree += it.value();
            trips.emplace_back(static_cast<int>(it.row()), col, -f * it.value());
        }
        trips.emplace_back(col, col, f * degree);
    }
    SparseMatrix lap(graph.n, graph.n);
    lap.setFromTriplets(trips.begin(), trips.end());
    lap.makeCompressed();
    return lap;
}

int connected_components(const WeightedGraph& graph) {
    std::vector<int> parent(graph.n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    int components = graph.n;
    for (int col = 0; col < graph.weights.outerSize(); ++col) {
        for (SparseMatrix::InnerIterator it(graph.weights, col); it; ++it) {
            if (it.value() <= 0) continue;
            const int a = find(static_cast<int>(it.row()));
            const int b = find(col);
            if (a != b) {
                parent[std::max(a, b)] = std::min(a, b);
                --components;
            }
        }
    }
    return components;
}

std::string graph_to_json(const WeightedGraph& graph) {
    nlohmann::json trips = nlohmann::json::array();
    for (int col = 0; col < graph.weights.outerSize(); ++col) {
        for (SparseMatrix::InnerIterator it(graph.weights, col); it; ++it) {
            if (it.row() <= col) trips.push_back({it.row(), col, it.value()});
        }
    }
    nlohmann::json j{{"n", graph.n}, {"h", graph.h}, {"m", graph.m}, {"triplets", trips}};
    return j.dump();
}

}  // namespace clab
