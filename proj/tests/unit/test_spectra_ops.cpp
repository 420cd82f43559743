#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"

#include "clab/errors.hpp"
#include "clab/spectral_ops.hpp"
#include "clab/spectra.hpp"
#include "fixtures.hpp"

using namespace clab;

namespace {

constexpr double kPi = std::numbers::pi;

// Synthetic frame on the circle table: random eigenvalue perturbations and a
// random block-diagonal rotation. No graph needed for operator algebra.
SpectralFrame synthetic_frame(Rng& rng, const SpectrumTable& table, int K, int n = 100) {
    SpectralFrame f;
    f.n = n;
    f.K = K;
    f.continuum_eigenvalues = Eigen::Map<const Eigen::VectorXd>(table.eigenvalues.data(), K);
    f.discrete_eigenvalues = f.continuum_eigenvalues;
    for (int k = 1; k < K; ++k) f.discrete_eigenvalues[k] *= 1.0 + 0.2 * std::tanh(testing::gaussian(rng, 1)[0]);
    f.rotation = Eigen::MatrixXd::Zero(K, K);
    for (int k = 0; k < K;) {
        const auto& b = table.block_of(k);
        const int size = std::min(b.last(), K - 1) - k + 1;
        f.rotation.block(k, k, size, size) = testing::random_orthogonal(rng, size);
        k += size;
    }
    return f;
}

}  // namespace

TEST_CASE("cutoff formula examples") {
    // beta + (m+1)/(2m) < 1 selects h^{-1/2}: 0.04^{-1/2} = 5 exactly.
    CHECK(k_tilde_formula(0.04, 2, 0.0, 1000) == 5);
    // m = 1, beta = 0: exponent 1 / 2 as well.
    CHECK(k_tilde_formula(0.04, 1, 0.0, 1000) == 5);
    // m = 1, beta = 1: exponent 1/4, 0.0001^{-1/4} = 10.
    CHECK(k_tilde_formula(1e-4, 1, 1.0, 1000) == 10);
    CHECK(k_tilde_formula(0.04, 2, 0.0, 3) == 3);
    CHECK(k_tilde_formula(0.04, 2, 0.0, 1000, 2.0) == 10);
}

TEST_CASE("cutoff schedule completes multiplicity blocks and is monotone") {
    const auto m = ManifoldModel::circle();
    const auto table = continuum_spectrum(m, 21);
    const std::vector<LadderLevel> ladder{{100, 0.04, 0.001}, {200, 0.09, 0.001}, {400, 0.01, 0.001}};
    const auto s = cutoff_schedule(ladder, m, 0.0, table);
    // K~ = 5 is the sine of frequency 2, which already ends its block.
    CHECK(s.levels[0].k_tilde == 5);
    CHECK(s.levels[0].K == 5);
    // h = 0.09 gives K~ = 3 but the running maximum keeps 5.
    CHECK(s.levels[1].k_tilde_formula == 3);
    CHECK(s.levels[1].k_tilde == 5);
    CHECK(s.levels[2].k_tilde == 10);
    CHECK(s.levels[2].K == 11);
    CHECK(s.K_max() == 11);
    CHECK(s.K_min() == 5);

    const auto fixed = cutoff_schedule(ladder, m, 0.0, table, {.fixed_k_tilde = 4});
    for (const auto& r : fixed.levels) CHECK(r.K == 5);

    const std::vector<LadderLevel> bad{{200, 0.1, 0.01}, {100, 0.1, 0.01}};
    CHECK_THROWS_AS(cutoff_schedule(bad, m, 0.0, table), InvalidArgument);
}

TEST_CASE("bandwidth admissibility on the unit circle") {
    const auto m = ManifoldModel::circle();
    // Upper limit is min{1, pi/10, R/sqrt(27)} = 1/sqrt(27) ~ 0.192.
    CHECK(h_admissible(m, 0.01, 0.1));
    CHECK_FALSE(h_admissible(m, 0.01, 0.3));
    CHECK_FALSE(h_admissible(m, 0.05, 0.1));
}

TEST_CASE("H^alpha norm examples") {
    const Eigen::VectorXd lambda = (Eigen::VectorXd(2) << 0.0, 4.0).finished();
    const auto e1 = SpectralSignal::continuum(Eigen::Vector2d(0, 1));
    CHECK(h_alpha_inner(e1, e1, 0.5, lambda) == doctest::Approx(3.0));
    CHECK(h_alpha_norm(e1, 1.0, lambda) == doctest::Approx(3.0));
    const auto e0 = SpectralSignal::continuum(Eigen::Vector2d(2, 0));
    CHECK(h_alpha_norm(e0, 1.0, lambda) == doctest::Approx(2.0));
    const auto d = SpectralSignal::discrete(10, Eigen::Vector2d(1, 1));
    CHECK_THROWS_AS(h_alpha_inner(e1, d, 0.5, lambda), InvalidArgument);
}

TEST_CASE("convolution is coefficientwise") {
    const auto b = SpectralSignal::continuum(Eigen::Vector3d(1, 2, -1));
    const auto u = SpectralSignal::continuum(Eigen::Vector3d(3, 0.5, 4));
    CHECK(convolve(b, u).coeffs.isApprox(Eigen::Vector3d(3, 1, -4)));
}

TEST_CASE("S_{n,alpha} and S*_{n,alpha} identities on random frames") {
    const auto table = continuum_spectrum(ManifoldModel::circle(), 13);
    Rng rng(42);
    for (int trial = 0; trial < 30; ++trial) {
        const int K = (trial % 3 == 0) ? 3 : (trial % 3 == 1 ? 5 : 7);
        const double alpha = 0.25 + 0.25 * (trial % 4);
        const auto f = synthetic_frame(rng, table, K);
        const Eigen::VectorXd lambda = Eigen::Map<const Eigen::VectorXd>(table.eigenvalues.data(), 13);
        const auto v = SpectralSignal::continuum(testing::gaussian(rng, 13));
        const auto w = SpectralSignal::discrete(f.n, testing::gaussian(rng, K));
        const auto sv = spectral_discretize(v, alpha, f);
        const auto sw = spectral_extend(w, alpha, f, 13);
        CAPTURE(trial);
        // H^alpha adjointness: <S v, w>_n = <v, S* w>.
        CHECK(std::abs(h_alpha_inner(sv, w, alpha, f) - h_alpha_inner(v, sw, alpha, lambda)) < 1e-12);
        // S* S is the K-truncation.
        Eigen::VectorXd trunc = v.coeffs;
        trunc.tail(13 - K).setZero();
        CHECK((spectral_extend(sv, alpha, f, 13).coeffs - trunc).cwiseAbs().maxCoeff() < 1e-12);
        // S S* is the identity on discrete signals.
        CHECK((spectral_discretize(sw, alpha, f).coeffs - w.coeffs).cwiseAbs().maxCoeff() < 1e-12);
        // S is an H^alpha isometry on the first K modes.
        const auto head = SpectralSignal::continuum(trunc);
        CHECK(h_alpha_norm(spectral_discretize(head, alpha, f), alpha, f) ==
              doctest::Approx(h_alpha_norm(head, alpha, lambda)).epsilon(1e-12));
        // alpha = 0 is a plain L2 isometry.
        CHECK(spectral_discretize(head, 0.0, f).l2_norm() == doctest::Approx(trunc.norm()).epsilon(1e-12));
    }
}

TEST_CASE("Q Q* is the identity on discrete triples") {
    const auto table = continuum_spectrum(ManifoldModel::circle(), 13);
    Rng rng(7);
    const auto f = synthetic_frame(rng, table, 5);
    for (int t = 0; t < 10; ++t) {
        ParameterTriple th{SpectralSignal::discrete(f.n, testing::gaussian(rng, 5)),
                           SpectralSignal::discrete(f.n, testing::gaussian(rng, 5)),
                           SpectralSignal::discrete(f.n, testing::gaussian(rng, 5)), 0.5};
        const auto back = param_project(param_extend(th, f, 13), f);
        CHECK((back.a.coeffs - th.a.coeffs).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((back.b.coeffs - th.b.coeffs).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((back.c.coeffs - th.c.coeffs).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("operators refuse signals from the wrong space") {
    const auto table = continuum_spectrum(ManifoldModel::circle(), 13);
    Rng rng(1);
    const auto f = synthetic_frame(rng, table, 3);
    const auto w = SpectralSignal::discrete(f.n, Eigen::Vector3d(1, 2, 3));
    CHECK_THROWS_AS(spectral_discretize(w, 0.5, f), InvalidArgument);
    CHECK_THROWS_AS(spectral_extend(w, 0.5, f, 2), InvalidArgument);
    CHECK_THROWS_AS(spectral_extend(SpectralSignal::discrete(f.n + 1, w.coeffs), 0.5, f, 13), InvalidArgument);
    SpectralFrame empty;
    empty.K = 3;
    CHECK_THROWS_AS(spectral_discretize(SpectralSignal::continuum(Eigen::Vector3d(1, 1, 1)), 0.5, empty), InvalidState);
}

TEST_CASE("project_to_ball is the identity inside and radial outside") {
    const auto table = continuum_spectrum(ManifoldModel::circle(), 5);
    const Eigen::VectorXd lambda = Eigen::Map<const Eigen::VectorXd>(table.eigenvalues.data(), 5);
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        const auto v = SpectralSignal::continuum(testing::gaussian(rng, 5, 0.1 + 0.2 * (t % 5)));
        const auto p = project_to_ball(v, 0.5, lambda);
        const double nv = h_alpha_norm(v, 0.5, lambda);
        if (nv <= 1.0) {
            CHECK(p.coeffs == v.coeffs);
        } else {
            CHECK(h_alpha_norm(p, 0.5, lambda) == doctest::Approx(1.0).epsilon(1e-12));
            CHECK((p.coeffs * nv - v.coeffs).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("delta bound and eigenvalue report") {
    CHECK(delta_bound(0.01, 0.1, 4.0, 1.0, 1.0) == doctest::Approx(0.1 + 0.3 + 0.02));
    const auto m = ManifoldModel::circle();
    const auto table = continuum_spectrum(m, 5);
    Eigen::VectorXd disc(5);
    disc << 1e-3, 1.1 / (2 * kPi), 0.9 / (2 * kPi), 4.0 / (2 * kPi), 4.4 / (2 * kPi);
    const auto rows = eigenvalue_report(disc, table, 5, 0.01, 0.1, m);
    REQUIRE(rows.size() == 5);
    CHECK(rows[0].rel_err == doctest::Approx(1e-3));
    CHECK(rows[1].rel_err == doctest::Approx(0.1));
    CHECK(rows[2].rel_err == doctest::Approx(0.1));
    CHECK(rows[3].rel_err == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rows[4].rel_err == doctest::Approx(0.1));
    CHECK(rows[4].delta == doctest::Approx(delta_bound(0.01, 0.1, table.eigenvalues[4], m.curvature_bound, m.reach)));
    CHECK(rows[4].ratio == doctest::Approx(rows[4].rel_err / rows[4].delta));
}

TEST_CASE("block detection follows continuum multiplicities") {
    const auto table = continuum_spectrum(ManifoldModel::circle(), 9);
    Eigen::VectorXd disc(9);
    disc << 0, 0.15, 0.17, 0.6, 0.7, 1.4, 1.45, 2.5, 2.6;
    const auto p = detect_blocks(disc, table, 6);
    REQUIRE(p.blocks.size() == 4);
    CHECK(p.blocks[0].size() == 1);
    CHECK(p.blocks[1].first == 1);
    CHECK(p.blocks[1].last == 2);
    CHECK(p.blocks[3].first == 5);
    CHECK(p.blocks[3].last == 5);

    Eigen::VectorXd clustered(4);
    clustered << 0, 1, 1 + 1e-9, 2;
    const auto c = discrete_clusters(clustered);
    REQUIRE(c.size() == 3);
    CHECK(c[1].size() == 2);
}

TEST_CASE("aligned basis on a circle graph") {
    const auto L = testing::circle_level(400, 5, 17);
    const auto& f = L.frame;
    // Rotation is orthogonal and block diagonal.
    CHECK((f.rotation * f.rotation.transpose() - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(f.rotation(0, 1) == 0.0);
    CHECK(f.rotation(1, 3) == 0.0);
    // Aligned vectors stay L2(mu_n)-orthonormal.
    const Eigen::MatrixXd gram = f.aligned_vectors.transpose() * f.aligned_vectors / 400.0;
    CHECK((gram - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(f.delta_phi < 0.5);
    CHECK(f.min_singular_value > 0.5);

    // Re-randomizing degenerate discrete clusters leaves the aligned basis unchanged.
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto shuffled = randomize_degenerate_basis(L.spectrum, s);
        const auto g = align_blocks(shuffled, L.aux.basis, L.plan, L.table, 5);
        CHECK((g.aligned_vectors - f.aligned_vectors).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(std::abs(g.delta_phi - f.delta_phi) < 1e-10);
    }
}
