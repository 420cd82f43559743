#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clab/manifold.hpp"
#include "clab/spectral_ops.hpp"
#include "clab/spectra.hpp"
#include "clab/transport.hpp"

namespace clab {

enum class ActivationKind { ReLU, Tanh, Softplus };

/// Pointwise activation with Lipschitz constant L and linear growth
/// |sigma(x)| <= C (|x| + 1).
struct Activation {
    ActivationKind kind = ActivationKind::Tanh;
    double lipschitz = 1.0;
    double growth = 1.0;

    static Activation make(ActivationKind kind);
    double operator()(double x) const;
    double derivative(double x) const;
    Eigen::ArrayXd apply(const Eigen::ArrayXd& x) const;
    std::string name() const;
};

ActivationKind parse_activation(const std::string& name);

/// Orthonormal basis sampled on a weighted point set: column k holds the k-th
/// basis function at each point. Integrals are sum_p weights[p] f(p).
struct SynthesisGrid {
    Eigen::MatrixXd basis;
    Eigen::VectorXd weights;

    int points() const { return static_cast<int>(basis.rows()); }
    int modes() const { return static_cast<int>(basis.cols()); }
    Eigen::VectorXd synthesize(const Eigen::VectorXd& coeffs) const;
};

/// Aligned discrete basis with the empirical measure (weights 1/n).
SynthesisGrid discrete_grid(const SpectralFrame& frame);
/// Continuum eigenfunctions on the transport aux points (weights 1/G).
SynthesisGrid aux_grid(const ManifoldModel& manifold, const SpectrumTable& table, const TransportPlan& plan);
/// Continuum eigenfunctions on the manifold's product quadrature.
SynthesisGrid quadrature_synthesis(const ManifoldModel& manifold, const SpectrumTable& table, int resolution);

/// psi(u, (a, b, c)) = <a, sigma(b * u + c)> on a synthesis grid. All four
/// coefficient vectors must have the same length, at most grid.modes().
double response(const Eigen::VectorXd& u, const ParameterTriple& theta, const SynthesisGrid& grid,
                const Activation& act);

/// psi_n on the graph; u, a, b, c are discrete signals of the frame's resolution.
double response_discrete(const SpectralSignal& u, const ParameterTriple& theta, const SpectralFrame& frame,
                         const Activation& act);
/// Same with the input given by nodal values (its b-filtered part only sees
/// the first K aligned coefficients).
double response_discrete_nodal(const Eigen::VectorXd& u_nodal, const ParameterTriple& theta,
                               const SpectralFrame& frame, const Activation& act);

double response_continuum(const SpectralSignal& u, const ParameterTriple& theta, const SynthesisGrid& grid,
                          const Activation& act);

struct ResponseGradient {
    double value = 0;
    Eigen::VectorXd da;
    Eigen::VectorXd db;
    Eigen::VectorXd dc;
};

/// psi and its coefficient gradients on a synthesis grid.
ResponseGradient response_gradient(const Eigen::VectorXd& u, const ParameterTriple& theta, const SynthesisGrid& grid,
                                   const Activation& act);

struct Atom {
    double omega = 0;
    ParameterTriple theta;
};

/// Finite signed measure over parameter triples.
struct MeasureNetwork {
    Basis basis = Basis::Continuum;
    int n = 0;
    double alpha = 1.0;
    std::vector<Atom> atoms;

    double tv_mass() const;
    std::string to_json() const;
    static MeasureNetwork from_json(const std::string& text);
};

/// f(u) = sum_j omega_j psi(u, theta_j).
double network_eval(const MeasureNetwork& net, const SpectralSignal& u, const SynthesisGrid& grid,
                    const Activation& act);

/// D random triples: Gaussian coefficients on the first `band` modes with
/// per-mode scale (1 + sqrt(lambda_k))^{-decay}, zero above, each component
/// projected onto its ball (H^alpha for a and c, L2 for b). Signals have
/// eigenvalues.size() coefficients.
std::vector<ParameterTriple> sample_parameters(const Eigen::VectorXd& eigenvalues, int band, double alpha, int count,
                                               std::uint64_t seed, double decay);

/// Random continuum signal with the same per-mode decay (no projection).
SpectralSignal sample_signal(const Eigen::VectorXd& eigenvalues, double decay, std::uint64_t seed);

/// Consistent discretization of continuum signals: cell averages (P_n) or
/// spectral truncation (S_n).
enum class Restriction { Cellwise, Spectral };

Restriction parse_restriction(const std::string& name);
std::string restriction_name(Restriction r);

/// R_n u expressed in the frame's aligned basis (K coefficients). `aux` must
/// be the continuum basis on the plan's aux points.
SpectralSignal restrict_signal(const SpectralSignal& u, Restriction r, const SpectralFrame& frame,
                               const TransportPlan& plan, const SynthesisGrid& aux);

}  // namespace clab
