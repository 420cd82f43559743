#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "clab/gcnn.hpp"
#include "clab/graph.hpp"
#include "clab/manifold.hpp"
#include "clab/rng.hpp"
#include "clab/spectra.hpp"
#include "clab/transport.hpp"

namespace testing {

// One resolution of the circle pipeline, built the same way the lab does.
struct Level {
    clab::ManifoldModel manifold;
    clab::SpectrumTable table;
    clab::PointCloud cloud;
    clab::TransportPlan plan;
    clab::DiscreteSpectrum spectrum;
    clab::SpectralFrame frame;
    clab::SynthesisGrid aux;
};

inline Level circle_level(int n, int K, std::uint64_t seed, double h = 0.35, int table_size = 13) {
    Level L;
    L.manifold = clab::ManifoldModel::circle();
    L.table = clab::continuum_spectrum(L.manifold, table_size);
    L.cloud = clab::sample_points(L.manifold, n, seed);
    L.plan = clab::balanced_cells(L.cloud, L.manifold, 16, seed + 1);
    const auto kernel = clab::KernelSpec::make(clab::KernelShape::Indicator, 1);
    const auto graph = clab::build_graph(L.cloud, h, kernel);
    L.spectrum = clab::lowest_eigenpairs(clab::graph_laplacian(graph, kernel.sigma), K);
    L.aux = clab::aux_grid(L.manifold, L.table, L.plan);
    L.frame = clab::align_blocks(L.spectrum, L.aux.basis, L.plan, L.table, K);
    return L;
}

inline Eigen::VectorXd gaussian(clab::Rng& rng, Eigen::Index size, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Eigen::VectorXd v(size);
    for (Eigen::Index i = 0; i < size; ++i) v[i] = g(rng);
    return v;
}

// Orthogonal matrix from the QR factor of a Gaussian matrix.
inline Eigen::MatrixXd random_orthogonal(clab::Rng& rng, int k) {
    Eigen::MatrixXd g(k, k);
    for (int j = 0; j < k; ++j) g.col(j) = gaussian(rng, k);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    return qr.householderQ() * Eigen::MatrixXd::Identity(k, k);
}

}  // namespace testing
