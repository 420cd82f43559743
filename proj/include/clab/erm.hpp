#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clab/gcnn.hpp"
#include "clab/spectral_ops.hpp"

namespace clab {

enum class Loss { Squared, Logistic };
enum class MeasureClass { Signed, Probability };

Loss parse_loss(const std::string& name);
MeasureClass parse_measure_class(const std::string& name);

struct TrainingSet {
    std::vector<SpectralSignal> signals;  // continuum
    Eigen::VectorXd labels;
    std::string teacher;

    int l() const { return static_cast<int>(signals.size()); }
};

/// l signals with per-mode decay, labelled by the teacher evaluated on `grid`.
TrainingSet make_training_set(const MeasureNetwork& teacher, const SynthesisGrid& grid, const Activation& act,
                              const Eigen::VectorXd& eigenvalues, double decay, int l, std::uint64_t seed);

struct ErmProblem {
    Eigen::MatrixXd features;  // l x D, entry (k, d) = psi(u_k, theta_d)
    Eigen::VectorXd labels;
    double zeta = 0;
    Loss loss = Loss::Squared;
    std::string level;  // "continuum" or "n=<n> R=<P|S>"
};

/// Responses of every (signal, atom) pair on a synthesis grid.
Eigen::MatrixXd feature_matrix(const std::vector<Eigen::VectorXd>& signals, const std::vector<ParameterTriple>& atoms,
                               const SynthesisGrid& grid, const Activation& act);

ErmProblem assemble_continuum(const TrainingSet& set, const std::vector<ParameterTriple>& dictionary,
                              const SynthesisGrid& grid, const Activation& act);

/// Discrete columns psi_n(R_n u_k, Q_{n,alpha} theta_d).
ErmProblem assemble_discrete(const TrainingSet& set, const std::vector<ParameterTriple>& dictionary,
                             const SpectralFrame& frame, const TransportPlan& plan, const SynthesisGrid& aux,
                             Restriction restriction, const Activation& act);

double soft_threshold(double x, double t);

/// Smallest zeta for which omega = 0 minimizes the squared-loss problem:
/// max_d |(2/l) Psi^T y|_d.
double zeta_max(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels);

/// (1/l) sum loss(Psi omega, y) + zeta ||omega||_1.
double erm_objective(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels, const Eigen::VectorXd& omega,
                     double zeta, Loss loss);

/// Largest violation of the l1 subgradient optimality conditions.
double optimality_residual(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels, const Eigen::VectorXd& omega,
                           double zeta, Loss loss);

struct SolverOptions {
    double rel_tol = 1e-10;
    int max_iterations = 50000;
    MeasureClass measure = MeasureClass::Signed;
    bool polish = true;  // active-set Newton refinement for squared loss
};

struct SolveResult {
    Eigen::VectorXd omega;
    double objective = 0;
    int iterations = 0;
    int restarts = 0;
    bool objective_monotone_after_restart = true;
    double certificate = 0;  // optimality_residual at omega (signed class only)
    std::vector<int> support;
};

/// Accelerated proximal gradient with backtracking and function-value
/// restarts. The probability class minimizes the loss over the simplex
/// (omega >= 0, sum omega = 1) instead of adding the TV penalty.
SolveResult solve_l1(const ErmProblem& problem, const SolverOptions& options = {});

/// Indices with |omega_j| > 1e-8 max |omega|.
std::vector<int> support_of(const Eigen::VectorXd& omega);

/// (1/l) sum loss(f(u_k), y_k) + zeta TV(net), evaluated on `grid`.
/// For a discrete network pass the restricted signals and the discrete grid.
double erm_value(const MeasureNetwork& net, const std::vector<SpectralSignal>& signals, const Eigen::VectorXd& labels,
                 double zeta, const SynthesisGrid& grid, const Activation& act, Loss loss = Loss::Squared);

// ---- training ladder ------------------------------------------------------

struct LevelFeatures {
    int n = 0;
    int K = 0;
    Eigen::MatrixXd train;            // l x D discrete features
    Eigen::MatrixXd heldout_lifted;   // h x D continuum features of the atoms Q*Q theta_d
};

struct TrainLadderInput {
    Eigen::MatrixXd continuum_train;    // l x D
    Eigen::MatrixXd continuum_heldout;  // h x D
    Eigen::VectorXd labels;
    std::vector<LevelFeatures> levels;
    double zeta_rel = 1e-3;
    Loss loss = Loss::Squared;
    SolverOptions solver;
};

struct TrainLevelReport {
    int n = 0;
    int K = 0;
    double J_min = 0;
    double J_gap = 0;  // |J_min - continuum J_min|
    int support = 0;
    double certificate = 0;
    int iterations = 0;
    std::vector<double> heldout_gaps;
    Eigen::VectorXd omega;
};

struct TrainLadderReport {
    double zeta = 0;
    double label_scale = 0;  // max |y|
    double J_min = 0;        // continuum
    int support = 0;
    double certificate = 0;
    Eigen::VectorXd omega;
    std::vector<TrainLevelReport> levels;
};

/// Solves the continuum problem and each level's discrete problem with the
/// same zeta = zeta_rel * zeta_max(continuum); compares minima and held-out
/// predictions of the lifted networks.
TrainLadderReport train_ladder(const TrainLadderInput& input);

// ---- particle mode --------------------------------------------------------

struct ParticleOptions {
    int steps = 200;
    double step = 0.05;
    double zeta = 0;
};

struct ParticleResult {
    std::vector<Atom> atoms;
    std::vector<double> objective;  // per step
};

/// Projected gradient descent on weights and parameters of all atoms for the
/// squared loss. `project` maps a triple back into the parameter set.
ParticleResult particle_descent(std::vector<Atom> atoms, const std::vector<Eigen::VectorXd>& signals,
                                const Eigen::VectorXd& labels, const SynthesisGrid& grid, const Activation& act,
                                const std::function<ParameterTriple(const ParameterTriple&)>& project,
                                const ParticleOptions& options);

}  // namespace clab
