#pragma once

#include <string>

#include <Eigen/Sparse>

#include "clab/manifold.hpp"

namespace clab {

enum class KernelShape { Indicator, Triangle };

/// Radial interaction kernel eta(t) = c * profile(t) on [0, 1], normalized so
/// that its integral over R^m equals 1.
struct KernelSpec {
    KernelShape shape = KernelShape::Indicator;
    int dim = 1;
    double c = 0.5;
    double sigma = 1.0 / 3.0;

    /// Normalized kernel for intrinsic dimension m (1 or 2).
    static KernelSpec make(KernelShape shape, int m);

    double operator()(double t) const;
    std::string name() const;
};

KernelShape parse_kernel_shape(const std::string& name);

/// sigma_eta = int |x . e_1|^2 eta(|x|) dx in closed form.
double surface_tension(const KernelSpec& kernel, int m);

using SparseMatrix = Eigen::SparseMatrix<double>;

struct WeightedGraph {
    int n = 0;
    double h = 0;
    int m = 1;
    SparseMatrix weights;  // symmetric, includes the diagonal eta(0)/(n h^m)
};

/// w_ij = eta(|x_i - x_j| / h) / (n h^m) over ambient Euclidean distances,
/// found with a uniform cell list of side h.
WeightedGraph build_graph(const PointCloud& cloud, double h, const KernelSpec& kernel);

/// (2 / (sigma h^2)) (D - W). Diagonal weights cancel and are dropped.
SparseMatrix graph_laplacian(const WeightedGraph& graph, double sigma);

/// Number of connected components of the positive-weight graph.
int connected_components(const WeightedGraph& graph);

inline bool check_connected(const WeightedGraph& graph) { return connected_components(graph) <= 1; }

/// Debug dump {n, h, triplets: [[i, j, w], ...]} (upper triangle incl. diagonal).
std::string graph_to_json(const WeightedGraph& graph);

}  // namespace clab
