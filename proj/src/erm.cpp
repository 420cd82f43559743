#include "clab/erm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "clab/errors.hpp"
#include "clab/rng.hpp"

namespace clab {

Loss parse_loss(const std::string& name) {
    if (name == "squared") return Loss::Squared;
    if (name == "logistic") return Loss::Logistic;
    throw InvalidArgument("unknown loss '" + name + "' (expected squared or logistic)");
}

MeasureClass parse_measure_class(const std::string& name) {
    if (name == "signed") return MeasureClass::Signed;
    if (name == "probability") return MeasureClass::Probability;
    throw InvalidArgument("unknown measure class '" + name + "' (expected signed or probability)");
}

TrainingSet make_training_set(const MeasureNetwork& teacher, const SynthesisGrid& grid, const Activation& act,
                              const Eigen::VectorXd& eigenvalues, double decay, int l, std::uint64_t seed) {
    if (l < 1) throw InvalidArgument("make_training_set needs l >= 1");
    TrainingSet set;
    set.labels.resize(l);
    for (int k = 0; k < l; ++k) {
        set.signals.push_back(sample_signal(eigenvalues, decay, mix_seed(seed, {static_cast<std::uint64_t>(k)})));
        set.labels[k] = network_eval(teacher, set.signals.back(), grid, act);
    }
    std::ostringstream os;
    os << "measure network, " << teacher.atoms.size() << " atoms, TV " << teacher.tv_mass();
    set.teacher = os.str();
    return set;
}

Eigen::MatrixXd feature_matrix(const std::vector<Eigen::VectorXd>& signals, const std::vector<ParameterTriple>& atoms,
                               const SynthesisGrid& grid, const Activation& act) {
    Eigen::MatrixXd out(signals.size(), atoms.size());
    for (std::size_t d = 0; d < atoms.size(); ++d) {
        const auto& th = atoms[d];
        const auto k = th.a.size();
        if (th.b.size() != k || th.c.size() != k || k > grid.modes()) {
            throw InvalidArgument("feature_matrix: atom does not fit the synthesis grid");
        }
        const auto B = grid.basis.leftCols(k);
        const Eigen::ArrayXd wa = grid.weights.array() * (B * th.a.coeffs).array();
        const Eigen::VectorXd c = B * th.c.coeffs;
        for (std::size_t s = 0; s < signals.size(); ++s) {
            if (signals[s].size() != k) throw InvalidArgument("feature_matrix: signal length differs from atom");
            const Eigen::ArrayXd pre = (B * th.b.coeffs.cwiseProduct(signals[s]) + c).array();
            out(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(d)) = (wa * act.apply(pre)).sum();
        }
    }
    return out;
}

namespace {

std::vector<Eigen::VectorXd> coefficient_list(const std::vector<SpectralSignal>& signals) {
    std::vector<Eigen::VectorXd> out;
    out.reserve(signals.size());
    for (const auto& s : signals) out.push_back(s.coeffs);
    return out;
}

}  // namespace

ErmProblem assemble_continuum(const TrainingSet& set, const std::vector<ParameterTriple>& dictionary,
                              const SynthesisGrid& grid, const Activation& act) {
    if (dictionary.empty()) throw InvalidArgument("assemble_continuum: empty dictionary");
    ErmProblem p;
    p.features = feature_matrix(coefficient_list(set.signals), dictionary, grid, act);
    p.labels = set.labels;
    p.level = "continuum";
    return p;
}

ErmProblem assemble_discrete(const TrainingSet& set, const std::vector<ParameterTriple>& dictionary,
                             const SpectralFrame& frame, const TransportPlan& plan, const SynthesisGrid& aux,
                             Restriction restriction, const Activation& act) {
    if (dictionary.empty()) throw InvalidArgument("assemble_discrete: empty dictionary");
    std::vector<Eigen::VectorXd> signals;
    for (const auto& u : set.signals) signals.push_back(restrict_signal(u, restriction, frame, plan, aux).coeffs);
    std::vector<ParameterTriple> projected;
    projected.reserve(dictionary.size());
    for (const auto& th : dictionary) projected.push_back(param_project(th, frame));
    ErmProblem p;
    p.features = feature_matrix(signals, projected, discrete_grid(frame), act);
    p.labels = set.labels;
    p.level = "n=" + std::to_string(frame.n) + " R=" + restriction_name(restriction);
    return p;
}

double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

double zeta_max(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels) {
    if (features.rows() == 0 || features.cols() == 0) return 0.0;
    return (2.0 / features.rows() * (features.transpose() * labels)).cwiseAbs().maxCoeff();
}

namespace {

double loss_value(const Eigen::VectorXd& f, const Eigen::VectorXd& y, Loss loss) {
    const double l = static_cast<double>(y.size());
    if (loss == Loss::Squared) return (f - y).squaredNorm() / l;
    double s = 0;
    for (Eigen::Index k = 0; k < y.size(); ++k) {
        const double m = -y[k] * f[k];
        s += m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
    }
    return s / l;
}

// d loss / d f.
Eigen::VectorXd loss_gradient(const Eigen::VectorXd& f, const Eigen::VectorXd& y, Loss loss) {
    const double l = static_cast<double>(y.size());
    if (loss == Loss::Squared) return 2.0 / l * (f - y);
    Eigen::VectorXd g(y.size());
    for (Eigen::Index k = 0; k < y.size(); ++k) g[k] = -y[k] / (1.0 + std::exp(y[k] * f[k])) / l;
    return g;
}

double smooth_lipschitz(const Eigen::MatrixXd& features, Loss loss) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(features);
    const double s = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
    const double l = static_cast<double>(features.rows());
    return std::max((loss == Loss::Squared ? 2.0 : 0.25) * s * s / l, 1e-12);
}

// Euclidean projection onto {w >= 0, sum w = 1}.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
    std::vector<double> u(v.data(), v.data() + v.size());
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumsum = 0;
    double tau = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        cumsum += u[i];
        const double t = (cumsum - 1.0) / static_cast<double>(i + 1);
        if (u[i] - t > 0) tau = t;
    }
    return (v.array() - tau).cwiseMax(0.0).matrix();
}

}  // namespace

double erm_objective(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels, const Eigen::VectorXd& omega,
                     double zeta, Loss loss) {
    return loss_value(features * omega, labels, loss) + zeta * omega.lpNorm<1>();
}

double optimality_residual(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels, const Eigen::VectorXd& omega,
                           double zeta, Loss loss) {
    const Eigen::VectorXd g = features.transpose() * loss_gradient(features * omega, labels, loss);
    double r = 0;
    for (Eigen::Index j = 0; j < g.size(); ++j) {
        if (omega[j] != 0.0) r = std::max(r, std::abs(g[j] + zeta * (omega[j] > 0 ? 1.0 : -1.0)));
        else r = std::max(r, std::abs(g[j]) - zeta);
    }
    return r;
}

std::vector<int> support_of(const Eigen::VectorXd& omega) {
    std::vector<int> s;
    if (omega.size() == 0) return s;
    const double cut = 1e-8 * omega.cwiseAbs().maxCoeff();
    for (Eigen::Index j = 0; j < omega.size(); ++j) {
        if (std::abs(omega[j]) > cut) s.push_back(static_cast<int>(j));
    }
    return s;
}

namespace {

struct FistaState {
    Eigen::VectorXd x;
    int iterations = 0;
    int restarts = 0;
    bool monotone = true;
};

void fista(const ErmProblem& p, const SolverOptions& opt, FistaState& st, int budget) {
    const auto& A = p.features;
    const auto& y = p.labels;
    const bool simplex = opt.measure == MeasureClass::Probability;
    const double zeta = simplex ? 0.0 : p.zeta;
    auto smooth = [&](const Eigen::VectorXd& w) { return loss_value(A * w, y, p.loss); };
    auto total = [&](const Eigen::VectorXd& w) { return smooth(w) + zeta * w.lpNorm<1>(); };
    auto prox = [&](const Eigen::VectorXd& v, double step) -> Eigen::VectorXd {
        if (simplex) return project_simplex(v);
        return v.unaryExpr([&](double x) { return soft_threshold(x, step * zeta); });
    };

    double L = smooth_lipschitz(A, p.loss);
    Eigen::VectorXd x = st.x;
    Eigen::VectorXd yk = x;
    double t = 1.0;
    double F = total(x);
    bool just_restarted = true;
    for (int it = 0; it < budget; ++it) {
        ++st.iterations;
        const Eigen::VectorXd f = A * yk;
        const double fy = loss_value(f, y, p.loss);
        const Eigen::VectorXd g = A.transpose() * loss_gradient(f, y, p.loss);
        Eigen::VectorXd z;
        for (;;) {
            z = prox(yk - g / L, 1.0 / L);
            const Eigen::VectorXd dz = z - yk;
            if (smooth(z) <= fy + g.dot(dz) + 0.5 * L * dz.squaredNorm() + 1e-14 * std::abs(fy)) break;
            L *= 2.0;
            if (L > 1e30) throw NumericalFailure("proximal gradient line search failed (step below 1e-30)");
        }
        const double Fz = total(z);
        if (Fz > F && !just_restarted) {
            // Function-value restart: drop momentum and retry from the last accepted iterate.
            ++st.restarts;
            yk = x;
            t = 1.0;
            just_restarted = true;
            continue;
        }
        if (Fz > F * (1.0 + 1e-15) + 1e-300) st.monotone = false;
        const double change = std::abs(F - Fz);
        const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        yk = z + ((t - 1.0) / tn) * (z - x);
        x = z;
        t = tn;
        just_restarted = false;
        const double Fprev = F;
        F = std::min(F, Fz);
        if (change <= opt.rel_tol * std::max(std::abs(Fprev), 1e-300)) break;
    }
    st.x = x;
}

// Newton step on the current support of a squared-loss lasso iterate.
bool polish_support(const ErmProblem& p, Eigen::VectorXd& x) {
    std::vector<int> S;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        if (x[j] != 0.0) S.push_back(static_cast<int>(j));
    }
    if (S.empty()) return false;
    const double l = static_cast<double>(p.labels.size());
    Eigen::MatrixXd As(p.features.rows(), S.size());
    Eigen::VectorXd s(S.size());
    for (std::size_t i = 0; i < S.size(); ++i) {
        As.col(static_cast<Eigen::Index>(i)) = p.features.col(S[i]);
        s[static_cast<Eigen::Index>(i)] = x[S[i]] > 0 ? 1.0 : -1.0;
    }
    const Eigen::MatrixXd G = As.transpose() * As;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
    const Eigen::VectorXd w = ldlt.solve(As.transpose() * p.labels - 0.5 * l * p.zeta * s);
    if ((G * w - (As.transpose() * p.labels - 0.5 * l * p.zeta * s)).norm() > 1e-8 * (1.0 + w.norm() * G.norm())) {
        return false;
    }
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (w[i] * s[i] <= 0) return false;
    }
    Eigen::VectorXd cand = Eigen::VectorXd::Zero(x.size());
    for (std::size_t i = 0; i < S.size(); ++i) cand[S[i]] = w[static_cast<Eigen::Index>(i)];
    const double before = erm_objective(p.features, p.labels, x, p.zeta, p.loss);
    const double after = erm_objective(p.features, p.labels, cand, p.zeta, p.loss);
    if (after > before + 1e-12 * std::max(1.0, std::abs(before))) return false;
    x = cand;
    return true;
}

// Moves a squared-loss iterate along null directions of its active columns
// until they are linearly independent. Psi omega is unchanged and the l1 norm
// does not grow, so at most rank(Psi) atoms remain.
void reduce_support(const ErmProblem& p, Eigen::VectorXd& x) {
    for (;;) {
        std::vector<int> S;
        for (Eigen::Index j = 0; j < x.size(); ++j) {
            if (x[j] != 0.0) S.push_back(static_cast<int>(j));
        }
        if (S.empty()) return;
        Eigen::MatrixXd As(p.features.rows(), S.size());
        for (std::size_t i = 0; i < S.size(); ++i) As.col(static_cast<Eigen::Index>(i)) = p.features.col(S[i]);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(As);
        lu.setThreshold(1e-10);
        if (lu.rank() == static_cast<Eigen::Index>(S.size())) return;
        Eigen::VectorXd d = lu.kernel().col(0);
        double sd = 0;
        for (std::size_t i = 0; i < S.size(); ++i) sd += (x[S[i]] > 0 ? 1.0 : -1.0) * d[static_cast<Eigen::Index>(i)];
        if (sd > 0) d = -d;
        // First coordinate to reach zero along d.
        double t = std::numeric_limits<double>::infinity();
        std::size_t hit = 0;
        for (std::size_t i = 0; i < S.size(); ++i) {
            const double di = d[static_cast<Eigen::Index>(i)];
            if (x[S[i]] * di < 0 && -x[S[i]] / di < t) {
                t = -x[S[i]] / di;
                hit = i;
            }
        }
        if (!std::isfinite(t)) {
            // d points away from every coordinate; the opposite direction must hit one (sd == 0 at optimality).
            d = -d;
            for (std::size_t i = 0; i < S.size(); ++i) {
                const double di = d[static_cast<Eigen::Index>(i)];
                if (x[S[i]] * di < 0 && -x[S[i]] / di < t) {
                    t = -x[S[i]] / di;
                    hit = i;
                }
            }
        }
        const double before = erm_objective(p.features, p.labels, x, p.zeta, p.loss);
        Eigen::VectorXd cand = x;
        for (std::size_t i = 0; i < S.size(); ++i) cand[S[i]] += t * d[static_cast<Eigen::Index>(i)];
        cand[S[hit]] = 0.0;
        // Guard against kernels that are only numerically null.
        if (erm_objective(p.features, p.labels, cand, p.zeta, p.loss) > before + 1e-12 * std::max(1.0, before)) return;
        x = cand;
    }
}

}  // namespace

SolveResult solve_l1(const ErmProblem& problem, const SolverOptions& options) {
    const auto D = problem.features.cols();
    if (problem.features.rows() != problem.labels.size()) throw InvalidArgument("solve_l1: features and labels differ");
    if (D == 0) throw InvalidArgument("solve_l1: empty dictionary");
    if (problem.zeta < 0) throw InvalidArgument("solve_l1: zeta must be >= 0");
    if (!problem.features.allFinite() || !problem.labels.allFinite()) {
        throw InvalidArgument("solve_l1: non-finite features or labels");
    }
    const bool simplex = options.measure == MeasureClass::Probability;

    FistaState st;
    st.x = simplex ? Eigen::VectorXd::Constant(D, 1.0 / static_cast<double>(D)) : Eigen::VectorXd::Zero(D);
    fista(problem, options, st, options.max_iterations);

    if (!simplex && problem.loss == Loss::Squared && options.polish) {
        const double target = 1e-6 * (problem.features.transpose() * problem.labels).cwiseAbs().maxCoeff();
        const auto rows = static_cast<std::size_t>(problem.features.rows());
        for (int round = 0; round < 20; ++round) {
            reduce_support(problem, st.x);
            if (optimality_residual(problem.features, problem.labels, st.x, problem.zeta, problem.loss) <= target &&
                support_of(st.x).size() <= rows) {
                break;
            }
            polish_support(problem, st.x);
            if (optimality_residual(problem.features, problem.labels, st.x, problem.zeta, problem.loss) <= target) break;
            // The support is still wrong: more first-order iterations, then retry.
            SolverOptions more = options;
            more.rel_tol = 0;
            fista(problem, more, st, 2000);
        }
    }

    SolveResult r;
    r.omega = st.x;
    r.objective = erm_objective(problem.features, problem.labels, st.x, simplex ? 0.0 : problem.zeta, problem.loss);
    r.iterations = st.iterations;
    r.restarts = st.restarts;
    r.objective_monotone_after_restart = st.monotone;
    r.certificate =
        simplex ? 0.0 : optimality_residual(problem.features, problem.labels, st.x, problem.zeta, problem.loss);
    r.support = support_of(st.x);
    return r;
}

double erm_value(const MeasureNetwork& net, const std::vector<SpectralSignal>& signals, const Eigen::VectorXd& labels,
                 double zeta, const SynthesisGrid& grid, const Activation& act, Loss loss) {
    if (static_cast<Eigen::Index>(signals.size()) != labels.size()) {
        throw InvalidArgument("erm_value: signals and labels differ in count");
    }
    Eigen::VectorXd f(labels.size());
    for (std::size_t k = 0; k < signals.size(); ++k) {
        f[static_cast<Eigen::Index>(k)] = network_eval(net, signals[k], grid, act);
    }
    return loss_value(f, labels, loss) + zeta * net.tv_mass();
}

TrainLadderReport train_ladder(const TrainLadderInput& in) {
    const auto D = in.continuum_train.cols();
    TrainLadderReport rep;
    rep.zeta = in.zeta_rel * zeta_max(in.continuum_train, in.labels);
    rep.label_scale = in.labels.size() ? in.labels.cwiseAbs().maxCoeff() : 0.0;

    ErmProblem cont{in.continuum_train, in.labels, rep.zeta, in.loss, "continuum"};
    const SolveResult cs = solve_l1(cont, in.solver);
    rep.J_min = cs.objective;
    rep.support = static_cast<int>(cs.support.size());
    rep.certificate = cs.certificate;
    rep.omega = cs.omega;
    const Eigen::VectorXd f_cont = in.continuum_heldout * cs.omega;

    for (const auto& lv : in.levels) {
        if (lv.train.cols() != D || lv.heldout_lifted.cols() != D) {
            throw InvalidArgument("train_ladder: level features use a different dictionary size");
        }
        ErmProblem p{lv.train, in.labels, rep.zeta, in.loss, "n=" + std::to_string(lv.n)};
        const SolveResult s = solve_l1(p, in.solver);
        TrainLevelReport r;
        r.n = lv.n;
        r.K = lv.K;
        r.J_min = s.objective;
        r.J_gap = std::abs(s.objective - rep.J_min);
        r.support = static_cast<int>(s.support.size());
        r.certificate = s.certificate;
        r.iterations = s.iterations;
        r.omega = s.omega;
        const Eigen::VectorXd f_lift = lv.heldout_lifted * s.omega;
        for (Eigen::Index k = 0; k < f_lift.size(); ++k) r.heldout_gaps.push_back(std::abs(f_lift[k] - f_cont[k]));
        rep.levels.push_back(std::move(r));
    }
    return rep;
}

ParticleResult particle_descent(std::vector<Atom> atoms, const std::vector<Eigen::VectorXd>& signals,
                                const Eigen::VectorXd& labels, const SynthesisGrid& grid, const Activation& act,
                                const std::function<ParameterTriple(const ParameterTriple&)>& project,
                                const ParticleOptions& options) {
    const int l = static_cast<int>(signals.size());
    if (l != labels.size()) throw InvalidArgument("particle_descent: signals and labels differ in count");
    ParticleResult out;
    for (int step = 0; step <= options.steps; ++step) {
        std::vector<std::vector<ResponseGradient>> grads(atoms.size());
        Eigen::VectorXd f = Eigen::VectorXd::Zero(l);
        for (std::size_t j = 0; j < atoms.size(); ++j) {
            for (int k = 0; k < l; ++k) {
                grads[j].push_back(response_gradient(signals[k], atoms[j].theta, grid, act));
                f[k] += atoms[j].omega * grads[j].back().value;
            }
        }
        const Eigen::VectorXd r = 2.0 / l * (f - labels);
        double tv = 0;
        for (const auto& a : atoms) tv += std::abs(a.omega);
        out.objective.push_back((f - labels).squaredNorm() / l + options.zeta * tv);
        if (step == options.steps) break;
        for (std::size_t j = 0; j < atoms.size(); ++j) {
            double gw = 0;
            ParameterTriple g = atoms[j].theta;
            g.a.coeffs.setZero();
            g.b.coeffs.setZero();
            g.c.coeffs.setZero();
            for (int k = 0; k < l; ++k) {
                const auto& rg = grads[j][k];
                gw += r[k] * rg.value;
                g.a.coeffs += r[k] * atoms[j].omega * rg.da;
                g.b.coeffs += r[k] * atoms[j].omega * rg.db;
                g.c.coeffs += r[k] * atoms[j].omega * rg.dc;
            }
            Atom& at = atoms[j];
            at.omega = soft_threshold(at.omega - options.step * gw, options.step * options.zeta);
            at.theta.a.coeffs -= options.step * g.a.coeffs;
            at.theta.b.coeffs -= options.step * g.b.coeffs;
            at.theta.c.coeffs -= options.step * g.c.coeffs;
            at.theta = project(at.theta);
        }
    }
    out.atoms = std::move(atoms);
    return out;
}

}  // namespace clab
