#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include "doctest.h"

#include "clab/errors.hpp"
#include "clab/graph.hpp"
#include "clab/spectra.hpp"
#include "clab/transport.hpp"
#include "fixtures.hpp"

using namespace clab;

namespace {

constexpr double kPi = std::numbers::pi;

// Midpoint rule for int_0^1 f(r) dr.
double integrate01(const std::function<double(double)>& f, int steps = 200000) {
    double s = 0;
    for (int i = 0; i < steps; ++i) s += f((i + 0.5) / steps);
    return s / steps;
}

// Mass and second moment of a radial kernel by numeric quadrature.
std::pair<double, double> kernel_moments(const KernelSpec& k, int m) {
    if (m == 1) {
        return {2 * integrate01([&](double r) { return k(r); }), 2 * integrate01([&](double r) { return r * r * k(r); })};
    }
    return {2 * kPi * integrate01([&](double r) { return r * k(r); }),
            kPi * integrate01([&](double r) { return r * r * r * k(r); })};
}

}  // namespace

TEST_CASE("kernel constants match closed forms and numeric moments") {
    struct Case {
        KernelShape shape;
        int m;
        double c;
        double sigma;
    };
    const Case cases[] = {
        {KernelShape::Indicator, 1, 0.5, 1.0 / 3.0},
        {KernelShape::Indicator, 2, 1.0 / kPi, 0.25},
        {KernelShape::Triangle, 1, 1.0, 1.0 / 6.0},
        {KernelShape::Triangle, 2, 3.0 / kPi, 3.0 / 20.0},
    };
    for (const auto& cs : cases) {
        const auto k = KernelSpec::make(cs.shape, cs.m);
        CAPTURE(k.name());
        CAPTURE(cs.m);
        CHECK(k.c == doctest::Approx(cs.c).epsilon(1e-14));
        CHECK(k.sigma == doctest::Approx(cs.sigma).epsilon(1e-14));
        CHECK(surface_tension(k, cs.m) == doctest::Approx(cs.sigma).epsilon(1e-14));
        const auto [mass, second] = kernel_moments(k, cs.m);
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));
        CHECK(second == doctest::Approx(cs.sigma).epsilon(1e-8));
        CHECK(k(1.5) == 0.0);
    }
    CHECK(parse_kernel_shape("triangle") == KernelShape::Triangle);
    CHECK_THROWS_AS(parse_kernel_shape("gauss"), InvalidArgument);
}

TEST_CASE("complete graphs have spectrum {0, c n w}") {
    for (int n = 2; n <= 6; ++n) {
        // n points inside an arc much shorter than h: every pair interacts with weight eta(t) = c.
        PointCloud cloud(n, 2);
        for (int i = 0; i < n; ++i) cloud.row(i) << std::cos(0.01 * i), std::sin(0.01 * i);
        const double h = 0.5;
        const auto kernel = KernelSpec::make(KernelShape::Indicator, 1);
        const auto g = build_graph(cloud, h, kernel);
        const double w = kernel.c / (n * h);
        const auto L = graph_laplacian(g, kernel.sigma);
        const auto spec = lowest_eigenpairs(L, n, EigenSolverKind::Dense);
        const double top = 2.0 / (kernel.sigma * h * h) * n * w;
        CAPTURE(n);
        CHECK(std::abs(spec.eigenvalues[0]) < 1e-12);
        for (int k = 1; k < n; ++k) CHECK(std::abs(spec.eigenvalues[k] - top) < 1e-12 * top);
        CHECK(connected_components(g) == 1);
    }
}

TEST_CASE("graph weights are symmetric and scaled by 1/(n h^m)") {
    const auto m = ManifoldModel::circle();
    const auto cloud = sample_points(m, 300, 3);
    const auto kernel = KernelSpec::make(KernelShape::Triangle, 1);
    const double h = 0.2;
    const auto g = build_graph(cloud, h, kernel);
    const Eigen::MatrixXd W(g.weights);
    CHECK((W - W.transpose()).cwiseAbs().maxCoeff() == 0.0);
    for (int i = 0; i < 300; i += 37) {
        for (int j = 0; j < 300; j += 11) {
            const double d = (cloud.row(i) - cloud.row(j)).norm();
            CHECK(W(i, j) == doctest::Approx(kernel(d / h) / (300 * h)).epsilon(1e-13));
        }
    }
    const Eigen::MatrixXd L(graph_laplacian(g, kernel.sigma));
    CHECK(L.rowwise().sum().cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("disconnected clouds are detected") {
    PointCloud cloud(4, 2);
    cloud << 1, 0, 0.999, 0.04, -1, 0, -0.999, 0.04;
    const auto g = build_graph(cloud, 0.1, KernelSpec::make(KernelShape::Indicator, 1));
    CHECK(connected_components(g) == 2);
    CHECK_FALSE(check_connected(g));
}

TEST_CASE("dense and iterative eigensolvers agree at n = 512") {
    const auto m = ManifoldModel::circle();
    const auto cloud = sample_points(m, 512, 11);
    const auto kernel = KernelSpec::make(KernelShape::Indicator, 1);
    const auto L = graph_laplacian(build_graph(cloud, 0.3, kernel), kernel.sigma);
    const auto dense = lowest_eigenpairs(L, 12, EigenSolverKind::Dense);
    const auto iter = lowest_eigenpairs(L, 12, EigenSolverKind::Iterative);
    CHECK((dense.eigenvalues - iter.eigenvalues).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(iter.max_residual < 1e-9);
    // Eigenvectors: L2(mu_n)-orthonormal.
    const Eigen::MatrixXd gram = iter.eigenvectors.transpose() * iter.eigenvectors / 512.0;
    CHECK((gram - Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("balanced cells match a brute-force bottleneck assignment") {
    const auto m = ManifoldModel::circle();
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const int n = 3;
        const auto cloud = sample_points(m, n, 100 + seed);
        const auto aux = sample_points(m, 2 * n, 200 + seed);
        const auto plan = balanced_cells(cloud, m, aux);
        // Enumerate all 3^6 assignments with capacity 2 per center.
        double best = std::numeric_limits<double>::infinity();
        for (int code = 0; code < 729; ++code) {
            int c = code;
            int load[3] = {0, 0, 0};
            double worst = 0;
            for (int g = 0; g < 6; ++g, c /= 3) {
                const int center = c % 3;
                ++load[center];
                const Eigen::VectorXd x = aux.row(g).transpose();
                const Eigen::VectorXd y = cloud.row(center).transpose();
                worst = std::max(worst, geodesic_distance(m, {x.data(), 2}, {y.data(), 2}));
            }
            if (load[0] == 2 && load[1] == 2 && load[2] == 2) best = std::min(best, worst);
        }
        CAPTURE(seed);
        CHECK(plan.eps_hat == doctest::Approx(best).epsilon(1e-12));
        for (int i = 0; i < n; ++i) CHECK(plan.offsets[i + 1] - plan.offsets[i] == 2);
    }
}

TEST_CASE("P_n and P_n* are adjoint and P_n* is an isometry") {
    const auto m = ManifoldModel::sphere2();
    const auto cloud = sample_points(m, 80, 5);
    const auto plan = balanced_cells(cloud, m, 16, 6);
    CHECK(plan.G == 80 * 16);
    Rng rng(9);
    for (int t = 0; t < 20; ++t) {
        const Eigen::VectorXd u = testing::gaussian(rng, plan.G);
        const Eigen::VectorXd v = testing::gaussian(rng, plan.n);
        const double lhs = spatial_discretize(plan, u).dot(v) / plan.n;
        const double rhs = u.dot(spatial_extend(plan, v)) / plan.G;
        CHECK(std::abs(lhs - rhs) < 1e-12);
        CHECK(std::sqrt(spatial_extend(plan, v).squaredNorm() / plan.G) ==
              doctest::Approx(std::sqrt(v.squaredNorm() / plan.n)).epsilon(1e-13));
        CHECK((spatial_discretize(plan, spatial_extend(plan, v)) - v).cwiseAbs().maxCoeff() < 1e-13);
        CHECK(tl2_distance(plan, spatial_extend(plan, v), v) < 1e-13);
    }
    // Every aux point sits within eps_hat of its center.
    CHECK(*std::max_element(plan.distance.begin(), plan.distance.end()) <= plan.eps_hat);
    CHECK(plan.diagnostics.threshold_lower <= plan.eps_hat);
}

TEST_CASE("transport rejects aux sizes that are not multiples of n") {
    const auto m = ManifoldModel::circle();
    const auto cloud = sample_points(m, 4, 1);
    const auto aux = sample_points(m, 10, 2);
    CHECK_THROWS_AS(balanced_cells(cloud, m, aux), InvalidArgument);
}
