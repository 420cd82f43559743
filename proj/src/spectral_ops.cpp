#include "clab/spectral_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "clab/errors.hpp"

namespace clab {

int CutoffSchedule::K_max() const {
    int k = 0;
    for (const auto& r : levels) k = std::max(k, r.K);
    return k;
}

int CutoffSchedule::K_min() const {
    int k = std::numeric_limits<int>::max();
    for (const auto& r : levels) k = std::min(k, r.K);
    return levels.empty() ? 0 : k;
}

const CutoffRecord& CutoffSchedule::at(int n) const {
    for (const auto& r : levels) {
        if (r.n == n) return r;
    }
    throw InvalidArgument("cutoff schedule has no level n = " + std::to_string(n));
}

int k_tilde_formula(double h, int m, double beta_star, int n, double scale) {
    if (!(h > 0) || m < 1) throw InvalidArgument("k_tilde_formula needs h > 0 and m >= 1");
    const double exponent =
        beta_star + (m + 1.0) / (2.0 * m) >= 1.0 ? m / (2.0 * m * beta_star + m + 1.0) : 0.5;
    // The relative nudge keeps exact powers such as 0.04^{-1/2} = 5 from flooring down.
    const double value = scale * std::pow(h, -exponent) * (1.0 + 1e-12);
    const int k = static_cast<int>(std::floor(std::min(value, 1e9)));
    return std::clamp(k, 1, n);
}

bool h_admissible(const ManifoldModel& manifold, double eps, double h) {
    const double m = manifold.dim;
    double upper = std::min(1.0, manifold.injectivity_radius / 10.0);
    if (manifold.curvature_bound > 0) upper = std::min(upper, 1.0 / std::sqrt(m * manifold.curvature_bound));
    upper = std::min(upper, manifold.reach / std::sqrt(27.0 * m));
    return (m + 5.0) * eps < h && h < upper;
}

CutoffSchedule cutoff_schedule(std::span<const LadderLevel> ladder, const ManifoldModel& manifold, double beta_star,
                               const SpectrumTable& table, const CutoffOptions& options) {
    if (ladder.empty()) throw InvalidArgument("cutoff_schedule: empty ladder");
    CutoffSchedule out;
    int running = 0;
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        const auto& lv = ladder[i];
        if (i > 0 && lv.n <= ladder[i - 1].n) throw InvalidArgument("cutoff_schedule: ladder n must increase");
        CutoffRecord r;
        r.n = lv.n;
        r.h = lv.h;
        r.eps_hat = lv.eps_hat;
        r.k_tilde_formula = k_tilde_formula(lv.h, manifold.dim, beta_star, lv.n, options.scale);
        r.k_tilde = options.fixed_k_tilde > 0 ? std::min(options.fixed_k_tilde, lv.n) : r.k_tilde_formula;
        r.k_tilde = std::max(r.k_tilde, running);
        running = r.k_tilde;
        if (r.k_tilde > table.size()) {
            throw InvalidArgument("cutoff_schedule: continuum table has " + std::to_string(table.size()) +
                                  " modes, cutoff needs " + std::to_string(r.k_tilde));
        }
        r.K = table.block_end(r.k_tilde - 1) + 1;
        if (r.K > lv.n) {
            r.K = table.block_of(r.k_tilde - 1).first;
            r.k_tilde = r.K;
            out.warnings.push_back("n = " + std::to_string(lv.n) + ": cutoff block exceeds n, dropped to K = " +
                                   std::to_string(r.K));
        }
        r.h_admissible = h_admissible(manifold, lv.eps_hat, lv.h);
        if (!r.h_admissible) {
            std::ostringstream os;
            os << "n = " << lv.n << ": h = " << lv.h << " with eps = " << lv.eps_hat
               << " is outside the admissible bandwidth range";
            out.warnings.push_back(os.str());
        }
        out.levels.push_back(r);
    }
    return out;
}

SpectralSignal SpectralSignal::continuum(Eigen::VectorXd coeffs) {
    return {Basis::Continuum, 0, std::move(coeffs)};
}

SpectralSignal SpectralSignal::discrete(int n, Eigen::VectorXd coeffs) {
    if (n < 1) throw InvalidArgument("discrete signal needs n >= 1");
    return {Basis::Discrete, n, std::move(coeffs)};
}

bool SpectralSignal::same_space(const SpectralSignal& other) const {
    return basis == other.basis && n == other.n && size() == other.size();
}

namespace {

void require_same(const SpectralSignal& u, const SpectralSignal& v, const char* what) {
    if (!u.same_space(v)) throw InvalidArgument(std::string(what) + ": signals live in different bases");
}

Eigen::VectorXd sobolev_weights(const Eigen::VectorXd& eigenvalues, int count, double alpha) {
    if (eigenvalues.size() < count) throw InvalidArgument("eigenvalue table shorter than the signal");
    Eigen::VectorXd w(count);
    for (int k = 0; k < count; ++k) w[k] = std::pow(1.0 + std::sqrt(std::max(eigenvalues[k], 0.0)), 2.0 * alpha);
    return w;
}

void require_frame(const SpectralFrame& frame) {
    if (frame.discrete_eigenvalues.size() < frame.K || frame.continuum_eigenvalues.size() < frame.K ||
        frame.rotation.rows() != frame.K) {
        throw InvalidState("spectral frame is missing eigenvalues or rotation for its K");
    }
}

// Diagonal eigenvalue-ratio scaling in the discrete eigenbasis.
Eigen::VectorXd ratio_scaling(const SpectralFrame& frame, double alpha) {
    require_frame(frame);
    Eigen::VectorXd d(frame.K);
    for (int k = 0; k < frame.K; ++k) {
        const double cont = 1.0 + std::sqrt(std::max(frame.continuum_eigenvalues[k], 0.0));
        const double disc = 1.0 + std::sqrt(std::max(frame.discrete_eigenvalues[k], 0.0));
        d[k] = std::pow(cont / disc, alpha);
    }
    return d;
}

}  // namespace

double h_alpha_inner(const SpectralSignal& u, const SpectralSignal& v, double alpha, const Eigen::VectorXd& eigenvalues) {
    require_same(u, v, "h_alpha_inner");
    const Eigen::VectorXd w = sobolev_weights(eigenvalues, u.size(), alpha);
    return (u.coeffs.array() * w.array() * v.coeffs.array()).sum();
}

double h_alpha_norm(const SpectralSignal& u, double alpha, const Eigen::VectorXd& eigenvalues) {
    return std::sqrt(std::max(h_alpha_inner(u, u, alpha, eigenvalues), 0.0));
}

Eigen::MatrixXd discrete_metric(const SpectralFrame& frame, double alpha) {
    require_frame(frame);
    const Eigen::VectorXd w = sobolev_weights(frame.discrete_eigenvalues, frame.K, alpha);
    return frame.rotation * w.asDiagonal() * frame.rotation.transpose();
}

double h_alpha_inner(const SpectralSignal& u, const SpectralSignal& v, double alpha, const SpectralFrame& frame) {
    require_same(u, v, "h_alpha_inner");
    if (u.basis != Basis::Discrete || u.n != frame.n || u.size() != frame.K) {
        throw InvalidArgument("h_alpha_inner: signal does not belong to the frame");
    }
    return u.coeffs.dot(discrete_metric(frame, alpha) * v.coeffs);
}

double h_alpha_norm(const SpectralSignal& u, double alpha, const SpectralFrame& frame) {
    return std::sqrt(std::max(h_alpha_inner(u, u, alpha, frame), 0.0));
}

SpectralSignal convolve(const SpectralSignal& b, const SpectralSignal& u) {
    require_same(b, u, "convolve");
    SpectralSignal out = u;
    out.coeffs = b.coeffs.cwiseProduct(u.coeffs);
    return out;
}

Eigen::MatrixXd discretize_matrix(const SpectralFrame& frame, double alpha) {
    const Eigen::VectorXd d = ratio_scaling(frame, alpha);
    return frame.rotation * d.asDiagonal() * frame.rotation.transpose();
}

SpectralSignal spectral_discretize(const SpectralSignal& v, double alpha, const SpectralFrame& frame) {
    if (v.basis != Basis::Continuum) throw InvalidArgument("spectral_discretize expects a continuum signal");
    Eigen::VectorXd head = Eigen::VectorXd::Zero(frame.K);
    const int m = std::min(frame.K, v.size());
    head.head(m) = v.coeffs.head(m);
    return SpectralSignal::discrete(frame.n, discretize_matrix(frame, alpha) * head);
}

SpectralSignal spectral_extend(const SpectralSignal& w, double alpha, const SpectralFrame& frame, int k_cont) {
    if (w.basis != Basis::Discrete || w.n != frame.n || w.size() != frame.K) {
        throw InvalidArgument("spectral_extend: signal does not belong to the frame");
    }
    if (k_cont < frame.K) throw InvalidArgument("spectral_extend: continuum truncation below K");
    const Eigen::VectorXd d = ratio_scaling(frame, alpha);
    const Eigen::MatrixXd inv = frame.rotation * d.cwiseInverse().asDiagonal() * frame.rotation.transpose();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(k_cont);
    out.head(frame.K) = inv * w.coeffs;
    return SpectralSignal::continuum(std::move(out));
}

ParameterTriple param_project(const ParameterTriple& theta, const SpectralFrame& frame) {
    return {spectral_discretize(theta.a, theta.alpha, frame), spectral_discretize(theta.b, 0.0, frame),
            spectral_discretize(theta.c, theta.alpha, frame), theta.alpha};
}

ParameterTriple param_extend(const ParameterTriple& theta, const SpectralFrame& frame, int k_cont) {
    return {spectral_extend(theta.a, theta.alpha, frame, k_cont), spectral_extend(theta.b, 0.0, frame, k_cont),
            spectral_extend(theta.c, theta.alpha, frame, k_cont), theta.alpha};
}

namespace {

SpectralSignal radial(const SpectralSignal& v, double norm) {
    if (norm <= 1.0) return v;
    SpectralSignal out = v;
    out.coeffs /= norm;
    return out;
}

}  // namespace

SpectralSignal project_to_ball(const SpectralSignal& v, double alpha, const Eigen::VectorXd& eigenvalues) {
    return radial(v, h_alpha_norm(v, alpha, eigenvalues));
}

SpectralSignal project_to_ball(const SpectralSignal& v, double alpha, const SpectralFrame& frame) {
    return radial(v, h_alpha_norm(v, alpha, frame));
}

}  // namespace clab
