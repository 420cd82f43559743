#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clab/manifold.hpp"
#include "clab/spectra.hpp"

namespace clab {

// ---- cutoff schedule ------------------------------------------------------

struct LadderLevel {
    int n = 0;
    double h = 0;
    double eps_hat = 0;
};

struct CutoffRecord {
    int n = 0;
    double h = 0;
    double eps_hat = 0;
    int k_tilde_formula = 0;  // before overrides and the monotone envelope
    int k_tilde = 0;          // 1-based mode index
    int K = 0;                // number of modes kept: 1-based block end of k_tilde
    bool h_admissible = true;
};

/// fixed_k_tilde > 0 replaces the formula; otherwise the formula value is
/// multiplied by `scale` before flooring.
struct CutoffOptions {
    int fixed_k_tilde = 0;
    double scale = 1.0;
};

struct CutoffSchedule {
    std::vector<CutoffRecord> levels;
    std::vector<std::string> warnings;

    int K_max() const;
    int K_min() const;
    const CutoffRecord& at(int n) const;
};

/// floor(h^{-m/(2 m beta + m + 1)}) if beta + (m+1)/(2m) >= 1, else floor(h^{-1/2}); capped at n.
int k_tilde_formula(double h, int m, double beta_star, int n, double scale = 1.0);

/// (m+5) eps < h < min{1, i0/10, 1/sqrt(m K), R/sqrt(27 m)}.
bool h_admissible(const ManifoldModel& manifold, double eps, double h);

/// Levels must have strictly increasing n. k_tilde is made nondecreasing
/// along the ladder by a running maximum.
CutoffSchedule cutoff_schedule(std::span<const LadderLevel> ladder, const ManifoldModel& manifold,
                               double beta_star, const SpectrumTable& table, const CutoffOptions& options = {});

// ---- signals --------------------------------------------------------------

enum class Basis { Continuum, Discrete };

/// Coefficients in an L2-orthonormal basis: the continuum eigenbasis, or the
/// aligned discrete basis (SpectralFrame::aligned_vectors) at resolution n.
struct SpectralSignal {
    Basis basis = Basis::Continuum;
    int n = 0;  // resolution for discrete signals, 0 for continuum
    Eigen::VectorXd coeffs;

    static SpectralSignal continuum(Eigen::VectorXd coeffs);
    static SpectralSignal discrete(int n, Eigen::VectorXd coeffs);

    int size() const { return static_cast<int>(coeffs.size()); }
    bool same_space(const SpectralSignal& other) const;
    double l2_norm() const { return coeffs.norm(); }
};

struct ParameterTriple {
    SpectralSignal a;
    SpectralSignal b;
    SpectralSignal c;
    double alpha = 1.0;
};

/// sum_k (1 + sqrt(lambda_k))^{2 alpha} u_k v_k for a diagonal (eigen)basis.
double h_alpha_inner(const SpectralSignal& u, const SpectralSignal& v, double alpha, const Eigen::VectorXd& eigenvalues);
double h_alpha_norm(const SpectralSignal& u, double alpha, const Eigen::VectorXd& eigenvalues);

/// Discrete H^alpha inner product built from the graph eigenvalues. In the
/// aligned basis its Gram matrix is R diag((1 + sqrt(lambda^(n)))^{2 alpha}) R^T.
Eigen::MatrixXd discrete_metric(const SpectralFrame& frame, double alpha);
double h_alpha_inner(const SpectralSignal& u, const SpectralSignal& v, double alpha, const SpectralFrame& frame);
double h_alpha_norm(const SpectralSignal& u, double alpha, const SpectralFrame& frame);

/// Coefficientwise product.
SpectralSignal convolve(const SpectralSignal& b, const SpectralSignal& u);

/// S_{n,alpha}: truncation to the frame's K modes followed by the eigenvalue
/// ratio scaling ((1 + sqrt(lambda_k)) / (1 + sqrt(lambda_k^(n))))^alpha,
/// applied in the discrete eigenbasis. alpha = 0 gives S_n.
SpectralSignal spectral_discretize(const SpectralSignal& v, double alpha, const SpectralFrame& frame);

/// S*_{n,alpha}: inverse scaling, zero-padded to k_cont continuum coefficients.
SpectralSignal spectral_extend(const SpectralSignal& w, double alpha, const SpectralFrame& frame, int k_cont);

/// The K x K matrix of S_{n,alpha} restricted to the first K continuum modes.
Eigen::MatrixXd discretize_matrix(const SpectralFrame& frame, double alpha);

/// Q_{n,alpha} theta = (S_{n,alpha} a, S_n b, S_{n,alpha} c).
ParameterTriple param_project(const ParameterTriple& theta, const SpectralFrame& frame);
/// Q*_{n,alpha}.
ParameterTriple param_extend(const ParameterTriple& theta, const SpectralFrame& frame, int k_cont);

/// Radial projection onto the unit ball of the given norm.
SpectralSignal project_to_ball(const SpectralSignal& v, double alpha, const Eigen::VectorXd& eigenvalues);
SpectralSignal project_to_ball(const SpectralSignal& v, double alpha, const SpectralFrame& frame);

}  // namespace clab
