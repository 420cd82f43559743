#include <cmath>

#include "doctest.h"

#include "clab/erm.hpp"
#include "clab/errors.hpp"
#include "fixtures.hpp"

using namespace clab;

namespace {

Eigen::MatrixXd random_features(Rng& rng, int l, int D) {
    Eigen::MatrixXd F(l, D);
    for (int d = 0; d < D; ++d) F.col(d) = testing::gaussian(rng, l);
    return F;
}

}  // namespace

TEST_CASE("soft threshold") {
    CHECK(soft_threshold(2.5, 1.0) == 1.5);
    CHECK(soft_threshold(-2.5, 1.0) == -1.5);
    CHECK(soft_threshold(0.7, 1.0) == 0.0);
    CHECK(soft_threshold(-1.0, 1.0) == 0.0);
}

TEST_CASE("orthogonal design has a closed-form minimizer") {
    Rng rng(1);
    for (int t = 0; t < 10; ++t) {
        const int l = 12, D = 6;
        // Columns orthogonal with Psi^T Psi = l I, so omega_d = soft((1/l) psi_d^T y, zeta / 2).
        const Eigen::MatrixXd Q = testing::random_orthogonal(rng, l).leftCols(D) * std::sqrt(double(l));
        const Eigen::VectorXd y = testing::gaussian(rng, l);
        const double zeta = 0.3 * zeta_max(Q, y);
        const auto res = solve_l1({Q, y, zeta, Loss::Squared, "test"});
        const Eigen::VectorXd c = Q.transpose() * y / l;
        for (int d = 0; d < D; ++d) CHECK(res.omega[d] == doctest::Approx(soft_threshold(c[d], zeta / 2)).epsilon(1e-9));
        CHECK(res.objective == doctest::Approx(erm_objective(Q, y, res.omega, zeta, Loss::Squared)));
    }
}

TEST_CASE("zeta >= zeta_max gives the zero measure") {
    Rng rng(2);
    const auto F = random_features(rng, 16, 64);
    const Eigen::VectorXd y = testing::gaussian(rng, 16);
    const double zm = zeta_max(F, y);
    CHECK(zm == doctest::Approx((2.0 / 16) * (F.transpose() * y).cwiseAbs().maxCoeff()));
    const auto res = solve_l1({F, y, zm * 1.0001, Loss::Squared, "test"});
    CHECK(res.omega.isZero());
    CHECK(res.support.empty());
    CHECK(res.objective == doctest::Approx(y.squaredNorm() / 16));
}

TEST_CASE("vanishing zeta interpolates when l < D") {
    Rng rng(3);
    const auto F = random_features(rng, 8, 40);
    const Eigen::VectorXd y = testing::gaussian(rng, 8);
    const auto res = solve_l1({F, y, 1e-8 * zeta_max(F, y), Loss::Squared, "test"});
    CHECK((F * res.omega - y).norm() < 1e-3 * y.norm());
    CHECK(res.support.size() <= 8);
}

TEST_CASE("solver certificates and support bound on random problems") {
    Rng rng(4);
    for (int t = 0; t < 8; ++t) {
        const int l = 16, D = 128;
        const auto F = random_features(rng, l, D);
        const Eigen::VectorXd y = testing::gaussian(rng, l);
        const ErmProblem p{F, y, 1e-3 * zeta_max(F, y), Loss::Squared, "test"};
        const auto res = solve_l1(p);
        CAPTURE(t);
        CHECK(res.certificate < 1e-6 * (F.transpose() * y).cwiseAbs().maxCoeff());
        CHECK(res.certificate == doctest::Approx(optimality_residual(F, y, res.omega, p.zeta, Loss::Squared)));
        CHECK(static_cast<int>(res.support.size()) <= l);
        CHECK(res.objective_monotone_after_restart);
        // No random nearby point does better.
        for (int k = 0; k < 20; ++k) {
            const Eigen::VectorXd w = res.omega + testing::gaussian(rng, D, 1e-3);
            CHECK(erm_objective(F, y, w, p.zeta, Loss::Squared) >= res.objective - 1e-12);
        }
    }
}

TEST_CASE("logistic loss and probability class") {
    Rng rng(5);
    const auto F = random_features(rng, 20, 30);
    Eigen::VectorXd y = testing::gaussian(rng, 20);
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = y[i] > 0 ? 1.0 : -1.0;
    const ErmProblem p{F, y, 0.05, Loss::Logistic, "test"};
    SolverOptions tight;
    tight.rel_tol = 1e-15;
    const auto res = solve_l1(p, tight);
    CHECK(optimality_residual(F, y, res.omega, p.zeta, Loss::Logistic) < 1e-6);

    SolverOptions simplex;
    simplex.measure = MeasureClass::Probability;
    const auto pr = solve_l1({F, testing::gaussian(rng, 20), 0.0, Loss::Squared, "test"}, simplex);
    CHECK(pr.omega.minCoeff() >= 0.0);
    CHECK(pr.omega.sum() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(parse_measure_class("probability") == MeasureClass::Probability);
    CHECK(parse_loss("squared") == Loss::Squared);
    CHECK_THROWS_AS(parse_loss("hinge"), InvalidArgument);
}

TEST_CASE("solver input validation") {
    const Eigen::MatrixXd F = Eigen::MatrixXd::Ones(3, 2);
    CHECK_THROWS_AS(solve_l1({F, Eigen::VectorXd::Ones(4), 0.1, Loss::Squared, "bad"}), InvalidArgument);
    CHECK_THROWS_AS(solve_l1({F, Eigen::VectorXd::Ones(3), -1.0, Loss::Squared, "bad"}), InvalidArgument);
    Eigen::MatrixXd G = F;
    G(0, 0) = std::nan("");
    CHECK_THROWS_AS(solve_l1({G, Eigen::VectorXd::Ones(3), 0.1, Loss::Squared, "bad"}), InvalidArgument);
}

TEST_CASE("objective from features equals the network functional") {
    const auto m = ManifoldModel::circle();
    const auto table = continuum_spectrum(m, 9);
    const Eigen::VectorXd lambda = Eigen::Map<const Eigen::VectorXd>(table.eigenvalues.data(), 9);
    const auto grid = quadrature_synthesis(m, table, 512);
    const auto act = Activation::make(ActivationKind::Tanh);
    const auto dict = sample_parameters(lambda, 5, 0.5, 32, 10, 1.0);

    MeasureNetwork teacher;
    teacher.alpha = 0.5;
    teacher.atoms = {{1.0, dict[0]}, {-0.5, dict[1]}};
    const auto set = make_training_set(teacher, grid, act, lambda, 1.0, 10, 11);
    REQUIRE(set.l() == 10);
    for (int k = 0; k < 10; ++k) CHECK(set.labels[k] == doctest::Approx(network_eval(teacher, set.signals[k], grid, act)));

    const auto prob = assemble_continuum(set, dict, grid, act);
    const double zeta = 1e-3 * zeta_max(prob.features, prob.labels);
    const ErmProblem p{prob.features, prob.labels, zeta, Loss::Squared, "continuum"};
    const auto res = solve_l1(p);
    MeasureNetwork net;
    net.alpha = 0.5;
    for (int d : res.support) net.atoms.push_back({res.omega[d], dict[d]});
    CHECK(erm_value(net, set.signals, set.labels, zeta, grid, act) == doctest::Approx(res.objective).epsilon(1e-9));

    // The teacher is feasible, so the minimum is below its objective.
    CHECK(res.objective <= erm_value(teacher, set.signals, set.labels, zeta, grid, act) + 1e-12);

    // Lower semicontinuity: vanishing atom perturbations cannot undercut the minimum.
    Rng rng(12);
    double prev = 1e300;
    for (double eps : {1e-2, 1e-4, 1e-6, 1e-9}) {
        MeasureNetwork moved = net;
        for (auto& at : moved.atoms) {
            at.theta.a.coeffs += testing::gaussian(rng, 9, eps);
            at.theta.c.coeffs += testing::gaussian(rng, 9, eps);
        }
        const double J = erm_value(moved, set.signals, set.labels, zeta, grid, act);
        const double dev = std::abs(J - res.objective);
        CHECK(dev <= prev + 1e-12);
        prev = dev;
        if (eps <= 1e-9) CHECK(J >= res.objective - 1e-8);
    }
}

TEST_CASE("train_ladder reproduces the continuum on identical features") {
    Rng rng(6);
    const auto F = random_features(rng, 16, 64);
    const auto H = random_features(rng, 8, 64);
    const Eigen::VectorXd y = testing::gaussian(rng, 16);
    TrainLadderInput in;
    in.continuum_train = F;
    in.continuum_heldout = H;
    in.labels = y;
    in.levels = {{100, 3, F, H}, {200, 3, F + 0.01 * random_features(rng, 16, 64), H}};
    const auto rep = train_ladder(in);
    CHECK(rep.zeta == doctest::Approx(1e-3 * zeta_max(F, y)));
    CHECK(rep.label_scale == doctest::Approx(y.cwiseAbs().maxCoeff()));
    REQUIRE(rep.levels.size() == 2);
    CHECK(rep.levels[0].J_gap < 1e-12);
    for (double g : rep.levels[0].heldout_gaps) CHECK(g < 1e-6);
    CHECK(rep.levels[1].J_gap > 0);
    in.levels[0].train = Eigen::MatrixXd::Ones(16, 3);
    CHECK_THROWS_AS(train_ladder(in), InvalidArgument);
}
