#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace clab {

/// Point clouds store one ambient point per row.
using PointCloud = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ManifoldKind { Circle, Sphere2, FlatTorus2 };

/// Analytic compact manifold without boundary, embedded in R^d.
///
/// The flat torus [0,L1)x[0,L2) is embedded isometrically in R^4 as a product
/// of two circles of radii L1/(2 pi) and L2/(2 pi).
struct ManifoldModel {
    ManifoldKind kind = ManifoldKind::Circle;
    double radius = 1.0;
    std::array<double, 2> lengths{0.0, 0.0};

    int dim = 1;
    int ambient_dim = 2;
    double volume = 0.0;
    double curvature_bound = 0.0;
    double reach = 0.0;
    double injectivity_radius = 0.0;

    static ManifoldModel circle(double radius = 1.0);
    static ManifoldModel sphere2(double radius = 1.0);
    static ManifoldModel flat_torus2(double length1, double length2);

    std::string name() const;
};

/// Label of a real eigenfunction. Meaning of (i, j, phase) per kind:
///   circle: i = frequency, phase 0 = cos, 1 = sin;
///   sphere: i = degree l, j = order m (m < 0 selects sin(|m| phi));
///   torus:  (i, j) = lattice frequency (p, q), phase 0 = cos, 1 = sin.
struct Mode {
    double raw_eigenvalue = 0.0;
    int i = 0;
    int j = 0;
    int phase = 0;
};

struct SpectrumBlock {
    int first = 0;          // 0-based index of the first eigenvalue in the block
    int multiplicity = 1;   // true multiplicity, even if the table truncates the block
    double eigenvalue = 0;  // volume-normalized
    double gap = 0;         // distance to the nearest distinct eigenvalue

    int last() const { return first + multiplicity - 1; }
};

/// First `size()` volume-normalized Laplace-Beltrami eigenvalues (with
/// multiplicity) of a manifold, grouped into multiplicity blocks.
/// All indices are 0-based.
struct SpectrumTable {
    std::vector<double> eigenvalues;
    std::vector<Mode> modes;
    std::vector<SpectrumBlock> blocks;
    std::vector<int> block_index;  // eigenvalue index -> position in `blocks`
    double volume = 1.0;
    int dim = 1;
    double beta_star = 0.0;

    int size() const { return static_cast<int>(eigenvalues.size()); }
    const SpectrumBlock& block_of(int k) const;
    /// Last index of the block containing k. Can be >= size().
    int block_end(int k) const { return block_of(k).last(); }
    double gap(int k) const { return block_of(k).gap; }
    /// Minimum gap over indices 0..K-1.
    double min_gap(int K) const;
    /// Weyl counting function N(lambda): eigenvalues <= lambda, with multiplicity.
    /// Exact for lambda up to the last stored block's eigenvalue.
    int counting(double lambda) const;
};

struct QuadratureGrid {
    PointCloud points;
    Eigen::VectorXd weights;
};

struct ProductSphereGapReport {
    double a_sq_inv = 0;
    double lambda_max = 0;
    int value_count = 0;              // distinct combined eigenvalues <= lambda_max
    double min_gap = 0;               // minimum positive gap between them
    std::array<int, 2> lower_degrees{};  // (l1, l2) realizing the lower value
    std::array<int, 2> upper_degrees{};  // (l1, l2) realizing the upper value
    double lower_value = 0;
    double upper_value = 0;
    /// First (i, j) in increasing i with 0 < |2i - 2j a^-2| < threshold.
    struct Witness {
        int i;
        int j;
        double gap;
    };
    std::optional<Witness> witness;
    double witness_threshold = 0;
};

/// n i.i.d. points uniform w.r.t. the normalized volume measure.
/// Throws InvalidArgument if n < 2.
PointCloud sample_points(const ManifoldModel& manifold, int n, std::uint64_t seed);

/// Distance of x from the manifold's defining constraint set.
double constraint_residual(const ManifoldModel& manifold, std::span<const double> x);

/// Ambient point from intrinsic coordinates: circle (theta), sphere
/// (polar, azimuth), torus (x in [0,L1), y in [0,L2)).
Eigen::VectorXd embed(const ManifoldModel& manifold, std::span<const double> coords);

double geodesic_distance(const ManifoldModel& manifold, std::span<const double> x, std::span<const double> y);

SpectrumTable continuum_spectrum(const ManifoldModel& manifold, int count);

/// phi_k(x) for the requested indices; column c holds indices[c].
/// Throws std::out_of_range when an index is not in the table.
Eigen::MatrixXd eval_eigenfunctions(const ManifoldModel& manifold, const SpectrumTable& table,
                                    std::span<const int> indices, const PointCloud& points);

/// All table eigenfunctions at the given points (points x table.size()).
Eigen::MatrixXd eval_eigenfunctions(const ManifoldModel& manifold, const SpectrumTable& table,
                                    const PointCloud& points);

/// Probability quadrature. Circle: `resolution` uniform nodes. Sphere and
/// torus: a sqrt(resolution) x sqrt(resolution) tensor grid (Gauss-Legendre
/// in cos(theta) times uniform azimuth on the sphere; uniform on the torus).
QuadratureGrid quadrature_grid(const ManifoldModel& manifold, int resolution);

/// Least-squares slope of log(max_{j<=k} 1/gap_j) against log k over the
/// table's complete blocks, floored at 0.
double estimate_beta_star(const SpectrumTable& table);

/// omega_m Vol / (2 pi)^m, the Weyl constant for raw (un-normalized) eigenvalues.
double weyl_constant(const ManifoldModel& manifold);

/// For each complete block b: N(lambda_b) * raw_lambda_b^{-m/2}. Block 0 (lambda = 0) is skipped.
std::vector<double> weyl_ratios(const ManifoldModel& manifold, const SpectrumTable& table);

/// Un-normalized spectrum of S^2 x aS^2: values l1(l1+1) + a^-2 l2(l2+1).
ProductSphereGapReport product_sphere_gap_scan(double a_sq_inv, double lambda_max,
                                               double witness_threshold = 0.1);

}  // namespace clab
