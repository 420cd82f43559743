#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clab/manifold.hpp"

namespace clab {

/// The assignment is a perfect capacitated matching under threshold
/// `threshold_upper`; none exists under `threshold_lower`. Their gap bounds
/// how far eps_hat is from the optimal bottleneck on this aux sample.
struct TransportDiagnostics {
    double threshold_lower = 0;
    double threshold_upper = 0;
};

/// Balanced partition of an auxiliary sample into n equal-mass cells, one
/// per cloud point. cell i holds aux indices members[offset[i] .. offset[i+1]).
struct TransportPlan {
    int n = 0;
    int G = 0;
    int per_cell = 0;
    PointCloud centers;
    PointCloud aux;
    std::vector<int> assignment;  // aux index -> center
    std::vector<int> offsets;     // size n + 1
    std::vector<int> members;     // aux indices grouped by cell, ascending within a cell
    std::vector<double> distance; // geodesic aux -> assigned center
    double eps_hat = 0;
    double max_cell_diam = 0;
    TransportDiagnostics diagnostics;

    std::string summary_json() const;
};

/// Capacity-constrained assignment of G = g_factor * n i.i.d. aux points
/// minimizing the largest aux-to-center geodesic distance.
TransportPlan balanced_cells(const PointCloud& cloud, const ManifoldModel& manifold, int g_factor,
                             std::uint64_t seed);

/// Same construction on caller-supplied aux points; G must be a multiple of n.
TransportPlan balanced_cells(const PointCloud& cloud, const ManifoldModel& manifold, const PointCloud& aux);

/// Cell means of aux-point values: (P_n u)_i. Works column-wise on G x k input.
Eigen::MatrixXd spatial_discretize(const TransportPlan& plan, const Eigen::MatrixXd& aux_values);
Eigen::VectorXd spatial_discretize(const TransportPlan& plan, const Eigen::VectorXd& aux_values);

/// Cellwise-constant extension P_n* v sampled on the aux points (G x k).
Eigen::MatrixXd spatial_extend(const TransportPlan& plan, const Eigen::MatrixXd& v);
Eigen::VectorXd spatial_extend(const TransportPlan& plan, const Eigen::VectorXd& v);

/// P_n* v at an arbitrary manifold point: the cell value if the point is one
/// of the aux points, else the value at the nearest center (counted as a
/// fallback in `fallbacks` when given).
double evaluate_extension(const TransportPlan& plan, const ManifoldModel& manifold, const Eigen::VectorXd& v,
                          std::span<const double> point, int* fallbacks = nullptr);

/// ||u - P_n* v||_{L2} with the aux grid as quadrature.
double tl2_distance(const TransportPlan& plan, const Eigen::VectorXd& u_aux, const Eigen::VectorXd& v);

}  // namespace clab
