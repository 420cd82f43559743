#include <cmath>

#include "doctest.h"

#include "clab/errors.hpp"
#include "clab/gcnn.hpp"
#include "fixtures.hpp"

using namespace clab;

namespace {

ParameterTriple continuum_triple(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                                 double alpha = 0.5) {
    return {SpectralSignal::continuum(a), SpectralSignal::continuum(b), SpectralSignal::continuum(c), alpha};
}

Eigen::VectorXd unit(int size, int k, double value = 1.0) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(size);
    v[k] = value;
    return v;
}

}  // namespace

TEST_CASE("activations") {
    const auto relu = Activation::make(ActivationKind::ReLU);
    const auto tanh = Activation::make(ActivationKind::Tanh);
    const auto soft = Activation::make(ActivationKind::Softplus);
    CHECK(relu(-2.0) == 0.0);
    CHECK(relu(1.5) == 1.5);
    CHECK(tanh(0.3) == doctest::Approx(std::tanh(0.3)));
    CHECK(soft(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(soft(800.0) == doctest::Approx(800.0));
    for (const auto& a : {relu, tanh, soft}) {
        CHECK(a.lipschitz == 1.0);
        for (double x : {-3.0, -0.7, 0.2, 2.5}) {
            const double fd = (a(x + 1e-6) - a(x - 1e-6)) / 2e-6;
            CHECK(a.derivative(x) == doctest::Approx(fd).epsilon(1e-6));
            CHECK(std::abs(a(x)) <= a.growth * (std::abs(x) + 1.0));
        }
    }
    CHECK(parse_activation("relu") == ActivationKind::ReLU);
    CHECK_THROWS_AS(parse_activation("sigmoid"), InvalidArgument);
}

TEST_CASE("ReLU response of constants is exact") {
    const auto m = ManifoldModel::circle();
    const auto table = continuum_spectrum(m, 5);
    const auto grid = quadrature_synthesis(m, table, 256);
    // phi_0 = 1 under the normalized measure: a = 1, b = 0, c = 1 gives <1, relu(1)> = 1.
    const auto th = continuum_triple(unit(5, 0), Eigen::VectorXd::Zero(5), unit(5, 0));
    const auto u = SpectralSignal::continuum(Eigen::VectorXd::Ones(5));
    CHECK(response_continuum(u, th, grid, Activation::make(ActivationKind::ReLU)) == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("single-mode tanh response has a closed form") {
    const auto m = ManifoldModel::circle();
    const auto table = continuum_spectrum(m, 5);
    const auto grid = quadrature_synthesis(m, table, 2048);
    const auto act = Activation::make(ActivationKind::Tanh);
    for (double b0 : {-1.0, 0.3, 2.0}) {
        for (double u0 : {0.5, -1.5}) {
            const auto th = continuum_triple(unit(5, 0, 2.0), unit(5, 0, b0), Eigen::VectorXd::Zero(5));
            const auto u = SpectralSignal::continuum(unit(5, 0, u0));
            CHECK(response_continuum(u, th, grid, act) == doctest::Approx(2.0 * std::tanh(b0 * u0)).epsilon(1e-13));
        }
    }
    // a orthogonal to a constant pre-activation: zero response.
    const auto th = continuum_triple(unit(5, 1), unit(5, 0), unit(5, 0, 0.4));
    CHECK(std::abs(response_continuum(SpectralSignal::continuum(unit(5, 0)), th, grid, act)) < 1e-13);
}

TEST_CASE("response is Lipschitz in theta and bounded") {
    const auto m = ManifoldModel::circle();
    const auto table = continuum_spectrum(m, 9);
    const auto grid = quadrature_synthesis(m, table, 4096);
    const auto act = Activation::make(ActivationKind::Tanh);
    Rng rng(5);
    for (int t = 0; t < 40; ++t) {
        const Eigen::VectorXd u = testing::gaussian(rng, 9, 0.5);
        const auto th = continuum_triple(testing::gaussian(rng, 9), testing::gaussian(rng, 9), testing::gaussian(rng, 9));
        const auto tp = continuum_triple(th.a.coeffs + testing::gaussian(rng, 9, 0.1),
                                         th.b.coeffs + testing::gaussian(rng, 9, 0.1),
                                         th.c.coeffs + testing::gaussian(rng, 9, 0.1));
        const double d = std::abs(response(u, th, grid, act) - response(u, tp, grid, act));
        // |sigma| <= 1 for tanh; |sigma(x) - sigma(y)| <= |x - y| and ||b * u||_2 <= ||b||_inf ||u||_2.
        const double bound = (th.a.coeffs - tp.a.coeffs).norm() +
                             tp.a.coeffs.norm() * ((th.b.coeffs - tp.b.coeffs).cwiseAbs().maxCoeff() * u.norm() +
                                                   (th.c.coeffs - tp.c.coeffs).norm());
        CHECK(d <= bound + 1e-12);
        const double pre = th.b.coeffs.cwiseAbs().maxCoeff() * u.norm() + th.c.coeffs.norm();
        CHECK(std::abs(response(u, th, grid, act)) <= th.a.coeffs.norm() * act.growth * (pre + 1.0) + 1e-12);
    }
}

TEST_CASE("response gradient matches finite differences") {
    const auto m = ManifoldModel::circle();
    const auto table = continuum_spectrum(m, 5);
    const auto grid = quadrature_synthesis(m, table, 512);
    const auto act = Activation::make(ActivationKind::Softplus);
    Rng rng(8);
    const Eigen::VectorXd u = testing::gaussian(rng, 5);
    auto th = continuum_triple(testing::gaussian(rng, 5), testing::gaussian(rng, 5), testing::gaussian(rng, 5));
    const auto g = response_gradient(u, th, grid, act);
    CHECK(g.value == doctest::Approx(response(u, th, grid, act)).epsilon(1e-14));
    const double e = 1e-6;
    for (int k = 0; k < 5; ++k) {
        for (auto* part : {&th.a, &th.b, &th.c}) {
            part->coeffs[k] += e;
            const double up = response(u, th, grid, act);
            part->coeffs[k] -= 2 * e;
            const double down = response(u, th, grid, act);
            part->coeffs[k] += e;
            const Eigen::VectorXd& analytic = part == &th.a ? g.da : (part == &th.b ? g.db : g.dc);
            CHECK(analytic[k] == doctest::Approx((up - down) / (2 * e)).epsilon(1e-6));
        }
    }
}

TEST_CASE("discrete response equals the step-function lift on the aux grid") {
    const auto L = testing::circle_level(300, 5, 21);
    const auto& f = L.frame;
    const auto disc = discrete_grid(f);
    Rng rng(2);
    for (const auto kind : {ActivationKind::Tanh, ActivationKind::ReLU}) {
        const auto act = Activation::make(kind);
        for (int t = 0; t < 10; ++t) {
            ParameterTriple th{SpectralSignal::discrete(f.n, testing::gaussian(rng, 5)),
                               SpectralSignal::discrete(f.n, testing::gaussian(rng, 5)),
                               SpectralSignal::discrete(f.n, testing::gaussian(rng, 5)), 0.5};
            const auto u = SpectralSignal::discrete(f.n, testing::gaussian(rng, 5));
            const double direct = response_discrete(u, th, f, act);
            // <P_n* a, sigma(P_n*(b *_n u + c))> with the aux points as quadrature.
            const Eigen::VectorXd a_lift = spatial_extend(L.plan, disc.synthesize(th.a.coeffs));
            const Eigen::VectorXd pre = disc.synthesize(th.b.coeffs.cwiseProduct(u.coeffs) + th.c.coeffs);
            const Eigen::VectorXd pre_lift = spatial_extend(L.plan, pre);
            const double lifted = (a_lift.array() * act.apply(pre_lift.array())).sum() / L.plan.G;
            CHECK(std::abs(direct - lifted) < 1e-10);
            // Nodal input route.
            CHECK(std::abs(response_discrete_nodal(disc.synthesize(u.coeffs), th, f, act) - direct) < 1e-10);
        }
    }
}

TEST_CASE("restriction operators") {
    const auto L = testing::circle_level(300, 5, 4);
    const auto& f = L.frame;
    const Eigen::VectorXd lambda = Eigen::Map<const Eigen::VectorXd>(L.table.eigenvalues.data(), L.table.size());
    const auto u = sample_signal(lambda, 1.0, 12);
    const auto s = restrict_signal(u, Restriction::Spectral, f, L.plan, L.aux);
    CHECK((s.coeffs - spectral_discretize(u, 0.0, f).coeffs).cwiseAbs().maxCoeff() < 1e-14);
    const auto p = restrict_signal(u, Restriction::Cellwise, f, L.plan, L.aux);
    const Eigen::VectorXd nodal = spatial_discretize(L.plan, L.aux.synthesize(u.coeffs));
    CHECK((p.coeffs - f.aligned_vectors.transpose() * nodal / f.n).cwiseAbs().maxCoeff() < 1e-13);
    // Both restrictions roughly preserve low-frequency content.
    CHECK((p.coeffs - s.coeffs).norm() < 0.5 * u.l2_norm());
    CHECK(parse_restriction("P") == Restriction::Cellwise);
    CHECK(restriction_name(Restriction::Spectral) == "S");
    CHECK_THROWS_AS(parse_restriction("Q"), InvalidArgument);
}

TEST_CASE("network evaluation is linear in the measure") {
    const auto m = ManifoldModel::circle();
    const auto table = continuum_spectrum(m, 5);
    const Eigen::VectorXd lambda = Eigen::Map<const Eigen::VectorXd>(table.eigenvalues.data(), 5);
    const auto grid = quadrature_synthesis(m, table, 512);
    const auto act = Activation::make(ActivationKind::Tanh);
    const auto atoms = sample_parameters(lambda, 5, 0.5, 3, 99, 1.0);
    const auto u = sample_signal(lambda, 1.0, 3);

    MeasureNetwork net;
    net.alpha = 0.5;
    for (int j = 0; j < 3; ++j) net.atoms.push_back({0.5 * (j + 1) - 1.0, atoms[j]});
    double expect = 0;
    for (const auto& at : net.atoms) expect += at.omega * response_continuum(u, at.theta, grid, act);
    CHECK(network_eval(net, u, grid, act) == doctest::Approx(expect).epsilon(1e-14));
    CHECK(net.tv_mass() == doctest::Approx(0.5 + 0.0 + 0.5));

    // Splitting an atom into two copies does not change the network.
    MeasureNetwork split = net;
    split.atoms[0].omega *= 0.25;
    split.atoms.push_back({net.atoms[0].omega * 0.75, atoms[0]});
    CHECK(network_eval(split, u, grid, act) == doctest::Approx(expect).epsilon(1e-13));

    const auto back = MeasureNetwork::from_json(net.to_json());
    CHECK(back.atoms.size() == 3);
    CHECK(network_eval(back, u, grid, act) == doctest::Approx(expect).epsilon(1e-14));
    CHECK_THROWS_AS(network_eval(net, SpectralSignal::discrete(10, u.coeffs), grid, act), InvalidArgument);
}

TEST_CASE("sampled parameters respect band and balls") {
    const auto table = continuum_spectrum(ManifoldModel::sphere2(), 16);
    const Eigen::VectorXd lambda = Eigen::Map<const Eigen::VectorXd>(table.eigenvalues.data(), 16);
    const auto ps = sample_parameters(lambda, 4, 0.5, 50, 1, 1.0);
    REQUIRE(ps.size() == 50);
    for (const auto& p : ps) {
        CHECK(p.a.size() == 16);
        CHECK(p.a.coeffs.tail(12).isZero());
        CHECK(p.b.coeffs.tail(12).isZero());
        CHECK(h_alpha_norm(p.a, 0.5, lambda) <= 1.0 + 1e-12);
        CHECK(h_alpha_norm(p.c, 0.5, lambda) <= 1.0 + 1e-12);
        CHECK(p.b.l2_norm() <= 1.0 + 1e-12);
    }
    const auto again = sample_parameters(lambda, 4, 0.5, 50, 1, 1.0);
    CHECK(again[17].c.coeffs == ps[17].c.coeffs);
}
