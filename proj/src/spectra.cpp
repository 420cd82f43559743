#include "clab/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/SparseCholesky>

#include "clab/errors.hpp"
#include "clab/rng.hpp"

namespace clab {

namespace {

constexpr double kClusterTol = 1e-6;
constexpr double kResidualTol = 1e-10;
constexpr int kMaxIterations = 3000;

void fix_signs(Eigen::MatrixXd& vectors) {
    for (int k = 0; k < vectors.cols(); ++k) {
        Eigen::Index arg = 0;
        vectors.col(k).cwiseAbs().maxCoeff(&arg);
        if (vectors(arg, k) < 0) vectors.col(k) *= -1.0;
    }
}

// Residuals ||L x - theta x|| / (1 + theta) for unit columns x.
Eigen::VectorXd residuals(const SparseMatrix& lap, const Eigen::MatrixXd& x, const Eigen::VectorXd& theta, int count) {
    Eigen::MatrixXd r = lap * x.leftCols(count) - x.leftCols(count) * theta.head(count).asDiagonal();
    Eigen::VectorXd out(count);
    for (int k = 0; k < count; ++k) out[k] = r.col(k).norm() / (1.0 + std::abs(theta[k]));
    return out;
}

DiscreteSpectrum dense_solve(const SparseMatrix& lap, int count) {
    const Eigen::MatrixXd dense(lap);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
    if (es.info() != Eigen::Success) throw NumericalFailure("dense symmetric eigensolver failed");
    DiscreteSpectrum out;
    out.solver = "dense";
    out.eigenvalues = es.eigenvalues().head(count);
    Eigen::MatrixXd x = es.eigenvectors().leftCols(count);
    out.max_residual = residuals(lap, x, out.eigenvalues, count).maxCoeff();
    out.eigenvectors = x;
    return out;
}

// Shift-invert subspace iteration with Rayleigh-Ritz extraction.
DiscreteSpectrum iterative_solve(const SparseMatrix& lap, int count) {
    const int n = static_cast<int>(lap.rows());
    const int block = std::min(n, count + std::max(10, count));
    const double shift = 1e-3 * lap.diagonal().mean() + 1e-12;
    SparseMatrix shifted = lap;
    for (int i = 0; i < n; ++i) shifted.coeffRef(i, i) += shift;
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(shifted);
    if (ldlt.info() != Eigen::Success) throw NumericalFailure("iterative eigensolver: factorization of L + shift failed");

    Rng rng(0x5eed);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd x(n, block);
    for (int j = 0; j < block; ++j) {
        for (int i = 0; i < n; ++i) x(i, j) = gauss(rng);
    }
    x.col(0).setOnes();

    Eigen::VectorXd theta;
    Eigen::VectorXd res;
    for (int it = 1; it <= kMaxIterations; ++it) {
        Eigen::MatrixXd y = ldlt.solve(x);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(y);
        Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, block);
        Eigen::MatrixXd h = q.transpose() * (lap * q);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (h + h.transpose()));
        theta = es.eigenvalues();
        x = q * es.eigenvectors();
        res = residuals(lap, x, theta, count);
        if (res.maxCoeff() <= kResidualTol) {
            DiscreteSpectrum out;
            out.solver = "shift-invert";
            out.iterations = it;
            out.eigenvalues = theta.head(count);
            out.eigenvectors = x.leftCols(count);
            out.max_residual = res.maxCoeff();
            return out;
        }
    }
    std::ostringstream os;
    os << "iterative eigensolver did not converge in " << kMaxIterations << " iterations (n = " << n
       << ", count = " << count << ", max scaled residual " << res.maxCoeff() << ")";
    throw NumericalFailure(os.str());
}

}  // namespace

DiscreteSpectrum lowest_eigenpairs(const SparseMatrix& laplacian, int count, EigenSolverKind kind) {
    const int n = static_cast<int>(laplacian.rows());
    if (count < 1 || count > n) throw InvalidArgument("lowest_eigenpairs needs 1 <= count <= n");
    if (kind == EigenSolverKind::Auto) kind = n <= kDenseSolverLimit ? EigenSolverKind::Dense : EigenSolverKind::Iterative;
    DiscreteSpectrum out = kind == EigenSolverKind::Dense ? dense_solve(laplacian, count) : iterative_solve(laplacian, count);
    fix_signs(out.eigenvectors);
    out.eigenvectors *= std::sqrt(static_cast<double>(n));
    return out;
}

std::vector<IndexBlock> discrete_clusters(const Eigen::VectorXd& eigenvalues) {
    std::vector<IndexBlock> out;
    for (int k = 0; k < eigenvalues.size(); ++k) {
        if (!out.empty() &&
            std::abs(eigenvalues[k] - eigenvalues[k - 1]) <= kClusterTol * (1.0 + std::abs(eigenvalues[k - 1]))) {
            out.back().last = k;
        } else {
            out.push_back({k, k});
        }
    }
    return out;
}

BlockPartition detect_blocks(const Eigen::VectorXd& discrete, const SpectrumTable& table, int K) {
    if (K < 1 || K > table.size()) throw InvalidArgument("detect_blocks: K outside the continuum table");
    BlockPartition part;
    for (const auto& b : table.blocks) {
        if (b.first >= K) break;
        part.blocks.push_back({b.first, std::min(b.last(), K - 1)});
    }
    for (std::size_t i = 0; i + 1 < part.blocks.size(); ++i) {
        const int e = part.blocks[i].last;
        if (e + 1 < discrete.size() &&
            std::abs(discrete[e + 1] - discrete[e]) <= kClusterTol * (1.0 + std::abs(discrete[e]))) {
            ++part.straddles;
        }
    }
    return part;
}

SpectralFrame align_blocks(const DiscreteSpectrum& discrete, const Eigen::MatrixXd& continuum_on_aux,
                           const TransportPlan& plan, const SpectrumTable& table, int K) {
    if (discrete.size() < K) throw InvalidState("align_blocks: discrete spectrum shorter than K");
    if (continuum_on_aux.cols() < K || continuum_on_aux.rows() != plan.G) {
        throw InvalidArgument("align_blocks: continuum basis must be G x (>= K)");
    }
    if (discrete.n() != plan.n) throw InvalidArgument("align_blocks: spectrum and plan resolutions differ");

    SpectralFrame f;
    f.n = plan.n;
    f.K = K;
    f.discrete_eigenvalues = discrete.eigenvalues.head(K);
    f.continuum_eigenvalues = Eigen::Map<const Eigen::VectorXd>(table.eigenvalues.data(), K);
    f.eigenvectors = discrete.eigenvectors.leftCols(K);
    f.partition = detect_blocks(discrete.eigenvalues, table, K);
    f.rotation = Eigen::MatrixXd::Zero(K, K);
    f.min_singular_value = std::numeric_limits<double>::infinity();

    const Eigen::MatrixXd phi = continuum_on_aux.leftCols(K);
    // Cross-Gram <P_n phi_j, V_k>_{mu_n} = <phi_j, P_n* V_k>_{mu} on the aux grid.
    const Eigen::MatrixXd pn_phi = spatial_discretize(plan, phi);
    for (const auto& b : f.partition.blocks) {
        const Eigen::MatrixXd m =
            pn_phi.middleCols(b.first, b.size()).transpose() * f.eigenvectors.middleCols(b.first, b.size()) / plan.n;
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const double smin = svd.singularValues().minCoeff();
        f.min_singular_value = std::min(f.min_singular_value, smin);
        if (smin < 1e-8) {
            std::ostringstream os;
            os << "cross-Gram of block [" << b.first << ", " << b.last << "] is rank deficient (smallest singular value "
               << smin << ")";
            throw DegenerateAlignment(os.str());
        }
        f.rotation.block(b.first, b.first, b.size(), b.size()) = svd.matrixU() * svd.matrixV().transpose();
    }
    f.aligned_vectors = f.eigenvectors * f.rotation.transpose();

    const Eigen::MatrixXd lifted = spatial_extend(plan, f.eigenvectors);
    const Eigen::MatrixXd reps = phi * f.rotation;
    f.delta_phi_per_k.resize(K);
    f.delta_phi = 0;
    for (int k = 0; k < K; ++k) {
        f.delta_phi_per_k[k] = std::sqrt((lifted.col(k) - reps.col(k)).squaredNorm() / plan.G);
        f.delta_phi = std::max(f.delta_phi, f.delta_phi_per_k[k]);
    }
    return f;
}

double delta_bound(double eps, double h, double lambda, double curvature, double reach) {
    if (!(h > 0) || !(reach > 0)) throw InvalidArgument("delta_bound needs h > 0 and reach > 0");
    return eps / h + (1.0 + std::sqrt(std::max(lambda, 0.0))) * h + (curvature + 1.0 / (reach * reach)) * h * h;
}

std::vector<EigenvalueRow> eigenvalue_report(const Eigen::VectorXd& discrete, const SpectrumTable& table, int K,
                                             double eps, double h, const ManifoldModel& manifold) {
    if (K > discrete.size() || K > table.size()) throw InvalidArgument("eigenvalue_report: K exceeds a spectrum");
    std::vector<EigenvalueRow> rows;
    for (int k = 0; k < K; ++k) {
        EigenvalueRow r;
        r.k = k;
        r.lambda_disc = discrete[k];
        r.lambda_cont = table.eigenvalues[k];
        const double err = std::abs(r.lambda_disc - r.lambda_cont);
        r.rel_err = r.lambda_cont > 0 ? err / r.lambda_cont : err;
        r.delta = delta_bound(eps, h, r.lambda_cont, manifold.curvature_bound, manifold.reach);
        r.ratio = r.rel_err / r.delta;
        rows.push_back(r);
    }
    return rows;
}

DiscreteSpectrum randomize_degenerate_basis(const DiscreteSpectrum& spectrum, std::uint64_t seed) {
    DiscreteSpectrum out = spectrum;
    Rng rng(seed);
    std::normal_distribution<double> gauss;
    for (const auto& c : discrete_clusters(spectrum.eigenvalues)) {
        Eigen::MatrixXd g(c.size(), c.size());
        for (int i = 0; i < g.rows(); ++i) {
            for (int j = 0; j < g.cols(); ++j) g(i, j) = gauss(rng);
        }
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
        Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(c.size(), c.size());
        out.eigenvectors.middleCols(c.first, c.size()) = spectrum.eigenvectors.middleCols(c.first, c.size()) * q;
    }
    return out;
}

}  // namespace clab
