#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clab/graph.hpp"
#include "clab/manifold.hpp"
#include "clab/transport.hpp"

namespace clab {

enum class EigenSolverKind { Auto, Dense, Iterative };

/// Matrices up to this size go to the dense solver under EigenSolverKind::Auto.
inline constexpr int kDenseSolverLimit = 512;

/// Lowest eigenpairs of a graph Laplacian. Eigenvectors are orthonormal in
/// L2(mu_n), i.e. each column has Euclidean norm sqrt(n), and carry a fixed
/// sign (largest-magnitude entry positive).
struct DiscreteSpectrum {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;  // n x count
    std::string solver;
    int iterations = 0;
    double max_residual = 0;  // max_k ||L phi_k - lambda_k phi_k||_{mu_n} / (1 + lambda_k)

    int n() const { return static_cast<int>(eigenvectors.rows()); }
    int size() const { return static_cast<int>(eigenvalues.size()); }
};

DiscreteSpectrum lowest_eigenpairs(const SparseMatrix& laplacian, int count,
                                   EigenSolverKind kind = EigenSolverKind::Auto);

/// Closed range [first, last] of 0-based eigenvalue indices.
struct IndexBlock {
    int first = 0;
    int last = 0;
    int size() const { return last - first + 1; }
};

struct BlockPartition {
    std::vector<IndexBlock> blocks;
    int straddles = 0;  // discrete clusters crossing a continuum block boundary
};

/// Partition of indices 0..K-1 by continuum multiplicity blocks (the final
/// block is cut at K if K is not a block end). Discrete eigenvalues only feed
/// the straddle count.
BlockPartition detect_blocks(const Eigen::VectorXd& discrete, const SpectrumTable& table, int K);

/// Discrete eigenvectors aligned blockwise to the continuum reference basis.
///
/// rotation is block diagonal; column k of Phi * rotation is the continuum
/// representative matched to discrete eigenvector k. aligned_vectors =
/// V * rotation^T is the discrete basis matched to the continuum basis.
struct SpectralFrame {
    int n = 0;
    int K = 0;
    Eigen::VectorXd discrete_eigenvalues;    // lambda_k^(n), k < K
    Eigen::VectorXd continuum_eigenvalues;   // lambda_k, k < K
    Eigen::MatrixXd eigenvectors;            // V, n x K
    Eigen::MatrixXd rotation;                // K x K, orthogonal, block diagonal
    Eigen::MatrixXd aligned_vectors;         // n x K
    BlockPartition partition;
    std::vector<double> delta_phi_per_k;     // ||P_n* phi_k^(n) - phi_k^(.,n)||
    double delta_phi = 0;                    // max over k
    double min_singular_value = 0;           // smallest cross-Gram singular value over blocks
};

/// Procrustes alignment of the first K discrete eigenvectors against the
/// continuum basis sampled at the plan's aux points (G x >=K).
/// Throws DegenerateAlignment when a block's cross-Gram is rank deficient.
SpectralFrame align_blocks(const DiscreteSpectrum& discrete, const Eigen::MatrixXd& continuum_on_aux,
                           const TransportPlan& plan, const SpectrumTable& table, int K);

/// delta = eps / h + (1 + sqrt(lambda)) h + (K_curv + 1 / R^2) h^2.
double delta_bound(double eps, double h, double lambda, double curvature, double reach);

struct EigenvalueRow {
    int k = 0;  // 0-based
    double lambda_disc = 0;
    double lambda_cont = 0;
    double rel_err = 0;  // absolute error for k = 0
    double delta = 0;
    double ratio = 0;    // rel_err / delta
};

/// Rotates the eigenvectors inside every discrete cluster (eigenvalues within
/// 1e-6 (1 + lambda)) by a random orthogonal matrix; singletons get a random sign.
DiscreteSpectrum randomize_degenerate_basis(const DiscreteSpectrum& spectrum, std::uint64_t seed);

/// Consecutive discrete eigenvalues closer than 1e-6 (1 + lambda) share a cluster.
std::vector<IndexBlock> discrete_clusters(const Eigen::VectorXd& eigenvalues);

std::vector<EigenvalueRow> eigenvalue_report(const Eigen::VectorXd& discrete, const SpectrumTable& table, int K,
                                             double eps, double h, const ManifoldModel& manifold);

}  // namespace clab
