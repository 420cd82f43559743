#include "clab/gcnn.hpp"

#include <cmath>
#include <random>

#include "json.hpp"

#include "clab/errors.hpp"
#include "clab/rng.hpp"

namespace clab {

Activation Activation::make(ActivationKind kind) {
    // All three satisfy |sigma(x)| <= |x| + log 2, hence C = 1 in the L2 growth bound.
    return {kind, 1.0, 1.0};
}

double Activation::operator()(double x) const {
    switch (kind) {
        case ActivationKind::ReLU: return x > 0 ? x : 0.0;
        case ActivationKind::Tanh: return std::tanh(x);
        case ActivationKind::Softplus: return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    }
    return 0.0;
}

double Activation::derivative(double x) const {
    switch (kind) {
        case ActivationKind::ReLU: return x > 0 ? 1.0 : 0.0;
        case ActivationKind::Tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case ActivationKind::Softplus: return 1.0 / (1.0 + std::exp(-x));
    }
    return 0.0;
}

Eigen::ArrayXd Activation::apply(const Eigen::ArrayXd& x) const {
    return x.unaryExpr([this](double v) { return (*this)(v); });
}

std::string Activation::name() const {
    switch (kind) {
        case ActivationKind::ReLU: return "relu";
        case ActivationKind::Tanh: return "tanh";
        case ActivationKind::Softplus: return "softplus";
    }
    return "?";
}

ActivationKind parse_activation(const std::string& name) {
    if (name == "relu") return ActivationKind::ReLU;
    if (name == "tanh") return ActivationKind::Tanh;
    if (name == "softplus") return ActivationKind::Softplus;
    throw InvalidArgument("unknown activation '" + name + "' (expected relu, tanh or softplus)");
}

Eigen::VectorXd SynthesisGrid::synthesize(const Eigen::VectorXd& coeffs) const {
    if (coeffs.size() > modes()) throw InvalidArgument("synthesis grid has fewer modes than the signal");
    return basis.leftCols(coeffs.size()) * coeffs;
}

SynthesisGrid discrete_grid(const SpectralFrame& frame) {
    if (frame.aligned_vectors.cols() != frame.K) throw InvalidState("frame has no aligned basis");
    return {frame.aligned_vectors, Eigen::VectorXd::Constant(frame.n, 1.0 / frame.n)};
}

SynthesisGrid aux_grid(const ManifoldModel& manifold, const SpectrumTable& table, const TransportPlan& plan) {
    return {eval_eigenfunctions(manifold, table, plan.aux), Eigen::VectorXd::Constant(plan.G, 1.0 / plan.G)};
}

SynthesisGrid quadrature_synthesis(const ManifoldModel& manifold, const SpectrumTable& table, int resolution) {
    QuadratureGrid q = quadrature_grid(manifold, resolution);
    return {eval_eigenfunctions(manifold, table, q.points), q.weights};
}

namespace {

void check_triple(const Eigen::VectorXd& u, const ParameterTriple& theta, const SynthesisGrid& grid) {
    const auto k = u.size();
    if (theta.a.size() != k || theta.b.size() != k || theta.c.size() != k) {
        throw InvalidArgument("response: signal and parameter lengths differ");
    }
    if (k > grid.modes()) throw InvalidArgument("response: more coefficients than synthesis modes");
}

}  // namespace

double response(const Eigen::VectorXd& u, const ParameterTriple& theta, const SynthesisGrid& grid,
                const Activation& act) {
    check_triple(u, theta, grid);
    const auto k = u.size();
    const auto B = grid.basis.leftCols(k);
    const Eigen::VectorXd pre = B * (theta.b.coeffs.cwiseProduct(u) + theta.c.coeffs);
    const Eigen::VectorXd a = B * theta.a.coeffs;
    return (grid.weights.array() * a.array() * act.apply(pre.array())).sum();
}

double response_discrete(const SpectralSignal& u, const ParameterTriple& theta, const SpectralFrame& frame,
                         const Activation& act) {
    for (const SpectralSignal* s : {&u, &theta.a, &theta.b, &theta.c}) {
        if (s->basis != Basis::Discrete || s->n != frame.n || s->size() != frame.K) {
            throw InvalidArgument("response_discrete: signal does not match the frame resolution");
        }
    }
    return response(u.coeffs, theta, discrete_grid(frame), act);
}

double response_discrete_nodal(const Eigen::VectorXd& u_nodal, const ParameterTriple& theta,
                               const SpectralFrame& frame, const Activation& act) {
    if (u_nodal.size() != frame.n) throw InvalidArgument("response_discrete_nodal: u has the wrong length");
    const Eigen::VectorXd coeffs = frame.aligned_vectors.transpose() * u_nodal / frame.n;
    return response_discrete(SpectralSignal::discrete(frame.n, coeffs), theta, frame, act);
}

double response_continuum(const SpectralSignal& u, const ParameterTriple& theta, const SynthesisGrid& grid,
                          const Activation& act) {
    for (const SpectralSignal* s : {&u, &theta.a, &theta.b, &theta.c}) {
        if (s->basis != Basis::Continuum) throw InvalidArgument("response_continuum expects continuum signals");
    }
    return response(u.coeffs, theta, grid, act);
}

ResponseGradient response_gradient(const Eigen::VectorXd& u, const ParameterTriple& theta, const SynthesisGrid& grid,
                                   const Activation& act) {
    check_triple(u, theta, grid);
    const auto k = u.size();
    const auto B = grid.basis.leftCols(k);
    const Eigen::ArrayXd pre = (B * (theta.b.coeffs.cwiseProduct(u) + theta.c.coeffs)).array();
    const Eigen::ArrayXd a = (B * theta.a.coeffs).array();
    const Eigen::ArrayXd s = act.apply(pre);
    const Eigen::ArrayXd ds = pre.unaryExpr([&](double x) { return act.derivative(x); });
    const Eigen::ArrayXd w = grid.weights.array();
    ResponseGradient g;
    g.value = (w * a * s).sum();
    g.da = B.transpose() * (w * s).matrix();
    g.dc = B.transpose() * (w * a * ds).matrix();
    g.db = g.dc.cwiseProduct(u);
    return g;
}

double MeasureNetwork::tv_mass() const {
    double m = 0;
    for (const auto& at : atoms) m += std::abs(at.omega);
    return m;
}

namespace {

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

SpectralSignal from_vec(Basis basis, int n, const std::vector<double>& v) {
    Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    return basis == Basis::Continuum ? SpectralSignal::continuum(c) : SpectralSignal::discrete(n, c);
}

}  // namespace

std::string MeasureNetwork::to_json() const {
    nlohmann::json atoms_json = nlohmann::json::array();
    for (const auto& at : atoms) {
        atoms_json.push_back({{"omega", at.omega},
                              {"a", to_vec(at.theta.a.coeffs)},
                              {"b", to_vec(at.theta.b.coeffs)},
                              {"c", to_vec(at.theta.c.coeffs)}});
    }
    nlohmann::json j{{"basis", basis == Basis::Continuum ? "continuum" : "discrete"},
                     {"n", n},
                     {"alpha", alpha},
                     {"atoms", atoms_json}};
    return j.dump();
}

MeasureNetwork MeasureNetwork::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    MeasureNetwork net;
    const std::string basis = j.at("basis").get<std::string>();
    if (basis != "continuum" && basis != "discrete") throw InvalidArgument("network basis must be continuum or discrete");
    net.basis = basis == "continuum" ? Basis::Continuum : Basis::Discrete;
    net.n = j.value("n", 0);
    net.alpha = j.at("alpha").get<double>();
    for (const auto& a : j.at("atoms")) {
        Atom at;
        at.omega = a.at("omega").get<double>();
        at.theta.alpha = net.alpha;
        at.theta.a = from_vec(net.basis, net.n, a.at("a").get<std::vector<double>>());
        at.theta.b = from_vec(net.basis, net.n, a.at("b").get<std::vector<double>>());
        at.theta.c = from_vec(net.basis, net.n, a.at("c").get<std::vector<double>>());
        net.atoms.push_back(std::move(at));
    }
    return net;
}

double network_eval(const MeasureNetwork& net, const SpectralSignal& u, const SynthesisGrid& grid,
                    const Activation& act) {
    if (u.basis != net.basis || (net.basis == Basis::Discrete && u.n != net.n)) {
        throw InvalidArgument("network_eval: signal and network bases differ");
    }
    double f = 0;
    for (const auto& at : net.atoms) f += at.omega * response(u.coeffs, at.theta, grid, act);
    return f;
}

namespace {

Eigen::VectorXd decayed_gaussian(const Eigen::VectorXd& eigenvalues, int band, double decay, Rng& rng) {
    std::normal_distribution<double> gauss;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(eigenvalues.size());
    for (int k = 0; k < band; ++k) {
        v[k] = gauss(rng) * std::pow(1.0 + std::sqrt(std::max(eigenvalues[k], 0.0)), -decay);
    }
    return v;
}

}  // namespace

std::vector<ParameterTriple> sample_parameters(const Eigen::VectorXd& eigenvalues, int band, double alpha, int count,
                                               std::uint64_t seed, double decay) {
    if (count < 1) throw InvalidArgument("sample_parameters needs count >= 1");
    if (band < 1 || band > eigenvalues.size()) throw InvalidArgument("sample_parameters: band outside the table");
    Rng rng(seed);
    std::vector<ParameterTriple> out;
    out.reserve(count);
    for (int d = 0; d < count; ++d) {
        ParameterTriple t;
        t.alpha = alpha;
        t.a = project_to_ball(SpectralSignal::continuum(decayed_gaussian(eigenvalues, band, decay, rng)), alpha,
                              eigenvalues);
        t.b = project_to_ball(SpectralSignal::continuum(decayed_gaussian(eigenvalues, band, decay, rng)), 0.0,
                              eigenvalues);
        t.c = project_to_ball(SpectralSignal::continuum(decayed_gaussian(eigenvalues, band, decay, rng)), alpha,
                              eigenvalues);
        out.push_back(std::move(t));
    }
    return out;
}

SpectralSignal sample_signal(const Eigen::VectorXd& eigenvalues, double decay, std::uint64_t seed) {
    Rng rng(seed);
    return SpectralSignal::continuum(
        decayed_gaussian(eigenvalues, static_cast<int>(eigenvalues.size()), decay, rng));
}

Restriction parse_restriction(const std::string& name) {
    if (name == "P") return Restriction::Cellwise;
    if (name == "S") return Restriction::Spectral;
    throw InvalidArgument("unknown restriction '" + name + "' (expected P or S)");
}

std::string restriction_name(Restriction r) { return r == Restriction::Cellwise ? "P" : "S"; }

SpectralSignal restrict_signal(const SpectralSignal& u, Restriction r, const SpectralFrame& frame,
                               const TransportPlan& plan, const SynthesisGrid& aux) {
    if (u.basis != Basis::Continuum) throw InvalidArgument("restrict_signal expects a continuum signal");
    if (r == Restriction::Spectral) return spectral_discretize(u, 0.0, frame);
    if (aux.points() != plan.G) throw InvalidArgument("restrict_signal: aux grid does not match the plan");
    const Eigen::VectorXd nodal = spatial_discretize(plan, aux.synthesize(u.coeffs));
    return SpectralSignal::discrete(frame.n, frame.aligned_vectors.transpose() * nodal / frame.n);
}

}  // namespace clab
