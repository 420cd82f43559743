#include "clab/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "clab/errors.hpp"
#include "clab/rng.hpp"

namespace clab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double a) {
    a = std::fmod(a, kTwoPi);
    if (a < 0) a += kTwoPi;
    return a;
}

bool same_value(double a, double b) {
    return std::abs(a - b) <= 1e-12 * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

double torus_radius(const ManifoldModel& m, int axis) { return m.lengths[axis] / kTwoPi; }

// All modes with raw eigenvalue <= bound, sorted by (eigenvalue, label).
std::vector<Mode> enumerate_modes(const ManifoldModel& m, double bound) {
    std::vector<Mode> modes;
    switch (m.kind) {
        case ManifoldKind::Circle: {
            const int jmax = static_cast<int>(std::floor(std::sqrt(bound) * m.radius)) + 1;
            for (int j = 0; j <= jmax; ++j) {
                const double lam = (j / m.radius) * (j / m.radius);
                if (lam > bound) break;
                modes.push_back({lam, j, 0, 0});
                if (j > 0) modes.push_back({lam, j, 0, 1});
            }
            break;
        }
        case ManifoldKind::Sphere2: {
            const double r2 = m.radius * m.radius;
            for (int l = 0;; ++l) {
                const double lam = l * (l + 1.0) / r2;
                if (lam > bound) break;
                modes.push_back({lam, l, 0, 0});
                for (int k = 1; k <= l; ++k) {
                    modes.push_back({lam, l, k, 0});
                    modes.push_back({lam, l, -k, 0});
                }
            }
            break;
        }
        case ManifoldKind::FlatTorus2: {
            const double w1 = kTwoPi / m.lengths[0];
            const double w2 = kTwoPi / m.lengths[1];
            const int pmax = static_cast<int>(std::floor(std::sqrt(bound) / w1)) + 1;
            const int qmax = static_cast<int>(std::floor(std::sqrt(bound) / w2)) + 1;
            for (int p = 0; p <= pmax; ++p) {
                for (int q = -qmax; q <= qmax; ++q) {
                    // half lattice: p > 0, or p == 0 and q >= 0
                    if (p == 0 && q < 0) continue;
                    const double lam = (w1 * p) * (w1 * p) + (w2 * q) * (w2 * q);
                    if (lam > bound) continue;
                    modes.push_back({lam, p, q, 0});
                    if (p != 0 || q != 0) modes.push_back({lam, p, q, 1});
                }
            }
            break;
        }
    }
    std::stable_sort(modes.begin(), modes.end(), [](const Mode& a, const Mode& b) {
        if (!same_value(a.raw_eigenvalue, b.raw_eigenvalue)) return a.raw_eigenvalue < b.raw_eigenvalue;
        if (a.i != b.i) return a.i < b.i;
        if (a.j != b.j) return std::abs(a.j) != std::abs(b.j) ? std::abs(a.j) < std::abs(b.j) : a.j > b.j;
        return a.phase < b.phase;
    });
    return modes;
}

// Unit-sphere coordinates: z = cos(polar), azimuth.
void sphere_angles(const ManifoldModel& m, std::span<const double> x, double& z, double& azimuth) {
    const double norm = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
    z = std::clamp(x[2] / norm, -1.0, 1.0);
    azimuth = std::atan2(x[1], x[0]);
    (void)m;
}

// Schmidt-like normalized associated Legendre sqrt((l-m)!/(l+m)!) P_l^m(z),
// no Condon-Shortley phase. out[l][m] for 0 <= m <= l <= lmax.
void legendre_table(int lmax, double z, std::vector<std::vector<double>>& out) {
    out.assign(lmax + 1, {});
    for (int l = 0; l <= lmax; ++l) out[l].assign(l + 1, 0.0);
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    out[0][0] = 1.0;
    for (int m = 1; m <= lmax; ++m) out[m][m] = out[m - 1][m - 1] * std::sqrt((2.0 * m - 1.0) / (2.0 * m)) * s;
    for (int m = 0; m < lmax; ++m) out[m + 1][m] = z * std::sqrt(2.0 * m + 1.0) * out[m][m];
    for (int m = 0; m <= lmax; ++m) {
        for (int l = m + 2; l <= lmax; ++l) {
            const double a = (2.0 * l - 1.0) * z * out[l - 1][m];
            const double b = std::sqrt((l - 1.0) * (l - 1.0) - 1.0 * m * m) * out[l - 2][m];
            out[l][m] = (a - b) / std::sqrt(1.0 * l * l - 1.0 * m * m);
        }
    }
}

void torus_angles(const ManifoldModel& m, std::span<const double> x, double& t1, double& t2) {
    (void)m;
    t1 = wrap_angle(std::atan2(x[1], x[0]));
    t2 = wrap_angle(std::atan2(x[3], x[2]));
}

// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
void gauss_legendre(int q, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.assign(q, 0.0);
    weights.assign(q, 0.0);
    for (int i = 0; i < (q + 1) / 2; ++i) {
        double x = std::cos(kPi * (i + 0.75) / (q + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= q; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (q == 1) p0 = 1.0;
            dp = q * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= q; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = q * (x * p1 - p0) / (x * x - 1.0);
        nodes[i] = -x;
        nodes[q - 1 - i] = x;
        weights[i] = weights[q - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
}

}  // namespace

ManifoldModel ManifoldModel::circle(double radius) {
    if (!(radius > 0)) throw InvalidArgument("circle radius must be positive");
    ManifoldModel m;
    m.kind = ManifoldKind::Circle;
    m.radius = radius;
    m.dim = 1;
    m.ambient_dim = 2;
    m.volume = kTwoPi * radius;
    m.curvature_bound = 0.0;
    m.reach = radius;
    m.injectivity_radius = kPi * radius;
    return m;
}

ManifoldModel ManifoldModel::sphere2(double radius) {
    if (!(radius > 0)) throw InvalidArgument("sphere radius must be positive");
    ManifoldModel m;
    m.kind = ManifoldKind::Sphere2;
    m.radius = radius;
    m.dim = 2;
    m.ambient_dim = 3;
    m.volume = 4.0 * kPi * radius * radius;
    m.curvature_bound = 1.0 / (radius * radius);
    m.reach = radius;
    m.injectivity_radius = kPi * radius;
    return m;
}

ManifoldModel ManifoldModel::flat_torus2(double length1, double length2) {
    if (!(length1 > 0 && length2 > 0)) throw InvalidArgument("torus lengths must be positive");
    ManifoldModel m;
    m.kind = ManifoldKind::FlatTorus2;
    m.lengths = {length1, length2};
    m.dim = 2;
    m.ambient_dim = 4;
    m.volume = length1 * length2;
    m.curvature_bound = 0.0;
    m.reach = std::min(length1, length2) / kTwoPi;
    m.injectivity_radius = 0.5 * std::min(length1, length2);
    return m;
}

std::string ManifoldModel::name() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind) {
        case ManifoldKind::Circle: os << "circle(r=" << radius << ")"; break;
        case ManifoldKind::Sphere2: os << "sphere2(r=" << radius << ")"; break;
        case ManifoldKind::FlatTorus2: os << "flat_torus2(L=" << lengths[0] << "," << lengths[1] << ")"; break;
    }
    return os.str();
}

const SpectrumBlock& SpectrumTable::block_of(int k) const {
    if (k < 0 || k >= size()) throw std::out_of_range("eigenvalue index outside spectrum table");
    return blocks[block_index[k]];
}

double SpectrumTable::min_gap(int K) const {
    double g = std::numeric_limits<double>::infinity();
    for (int k = 0; k < std::min(K, size()); ++k) g = std::min(g, gap(k));
    return g;
}

int SpectrumTable::counting(double lambda) const {
    int count = 0;
    for (const auto& b : blocks) {
        if (b.eigenvalue <= lambda + 1e-12 * std::max(1.0, std::abs(lambda))) count += b.multiplicity;
    }
    return count;
}

PointCloud sample_points(const ManifoldModel& manifold, int n, std::uint64_t seed) {
    if (n < 2) throw InvalidArgument("sample_points needs n >= 2");
    Rng rng(seed);
    std::uniform_real_distribution<double> unif(0.0, kTwoPi);
    std::normal_distribution<double> gauss(0.0, 1.0);
    PointCloud cloud(n, manifold.ambient_dim);
    for (int i = 0; i < n; ++i) {
        switch (manifold.kind) {
            case ManifoldKind::Circle: {
                const double t = unif(rng);
                cloud(i, 0) = manifold.radius * std::cos(t);
                cloud(i, 1) = manifold.radius * std::sin(t);
                break;
            }
            case ManifoldKind::Sphere2: {
                double g[3];
                double norm = 0.0;
                do {
                    for (double& v : g) v = gauss(rng);
                    norm = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
                } while (norm < 1e-12);
                for (int d = 0; d < 3; ++d) cloud(i, d) = manifold.radius * g[d] / norm;
                break;
            }
            case ManifoldKind::FlatTorus2: {
                const double t1 = unif(rng);
                const double t2 = unif(rng);
                const double r1 = torus_radius(manifold, 0), r2 = torus_radius(manifold, 1);
                cloud(i, 0) = r1 * std::cos(t1);
                cloud(i, 1) = r1 * std::sin(t1);
                cloud(i, 2) = r2 * std::cos(t2);
                cloud(i, 3) = r2 * std::sin(t2);
                break;
            }
        }
    }
    return cloud;
}

double constraint_residual(const ManifoldModel& manifold, std::span<const double> x) {
    if (static_cast<int>(x.size()) != manifold.ambient_dim) {
        throw InvalidArgument("point dimension does not match the manifold's ambient dimension");
    }
    switch (manifold.kind) {
        case ManifoldKind::Circle: return std::abs(std::hypot(x[0], x[1]) - manifold.radius);
        case ManifoldKind::Sphere2:
            return std::abs(std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) - manifold.radius);
        case ManifoldKind::FlatTorus2:
            return std::max(std::abs(std::hypot(x[0], x[1]) - torus_radius(manifold, 0)),
                            std::abs(std::hypot(x[2], x[3]) - torus_radius(manifold, 1)));
    }
    return 0.0;
}

Eigen::VectorXd embed(const ManifoldModel& manifold, std::span<const double> coords) {
    Eigen::VectorXd x(manifold.ambient_dim);
    switch (manifold.kind) {
        case ManifoldKind::Circle:
            x << manifold.radius * std::cos(coords[0]), manifold.radius * std::sin(coords[0]);
            break;
        case ManifoldKind::Sphere2: {
            const double st = std::sin(coords[0]);
            x << manifold.radius * st * std::cos(coords[1]), manifold.radius * st * std::sin(coords[1]),
                manifold.radius * std::cos(coords[0]);
            break;
        }
        case ManifoldKind::FlatTorus2: {
            const double t1 = kTwoPi * coords[0] / manifold.lengths[0];
            const double t2 = kTwoPi * coords[1] / manifold.lengths[1];
            const double r1 = torus_radius(manifold, 0), r2 = torus_radius(manifold, 1);
            x << r1 * std::cos(t1), r1 * std::sin(t1), r2 * std::cos(t2), r2 * std::sin(t2);
            break;
        }
    }
    return x;
}

double geodesic_distance(const ManifoldModel& manifold, std::span<const double> x, std::span<const double> y) {
    const double tol = 1e-8 * std::max(1.0, manifold.kind == ManifoldKind::FlatTorus2
                                                  ? std::max(manifold.lengths[0], manifold.lengths[1])
                                                  : manifold.radius);
    if (constraint_residual(manifold, x) > tol || constraint_residual(manifold, y) > tol) {
        throw InvalidArgument("geodesic_distance: point is not on the manifold");
    }
    switch (manifold.kind) {
        case ManifoldKind::Circle: {
            const double cross = x[0] * y[1] - x[1] * y[0];
            const double dot = x[0] * y[0] + x[1] * y[1];
            return manifold.radius * std::abs(std::atan2(cross, dot));
        }
        case ManifoldKind::Sphere2: {
            const double cx = x[1] * y[2] - x[2] * y[1];
            const double cy = x[2] * y[0] - x[0] * y[2];
            const double cz = x[0] * y[1] - x[1] * y[0];
            const double dot = x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
            return manifold.radius * std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), dot);
        }
        case ManifoldKind::FlatTorus2: {
            double s1, s2, t1, t2;
            torus_angles(manifold, x, s1, s2);
            torus_angles(manifold, y, t1, t2);
            double d1 = std::abs(s1 - t1);
            double d2 = std::abs(s2 - t2);
            d1 = std::min(d1, kTwoPi - d1) * torus_radius(manifold, 0);
            d2 = std::min(d2, kTwoPi - d2) * torus_radius(manifold, 1);
            return std::hypot(d1, d2);
        }
    }
    return 0.0;
}

SpectrumTable continuum_spectrum(const ManifoldModel& manifold, int count) {
    if (count < 1) throw InvalidArgument("continuum_spectrum needs count >= 1");
    // Grow the raw-eigenvalue bound until the table's last block and the block
    // after it are complete (the latter fixes the last gap).
    double bound = 4.0;
    std::vector<Mode> modes;
    for (;;) {
        modes = enumerate_modes(manifold, bound);
        if (static_cast<int>(modes.size()) > count) {
            const double last = modes[count - 1].raw_eigenvalue;
            int distinct_after = 0;
            double prev = last;
            for (std::size_t i = count; i < modes.size(); ++i) {
                if (!same_value(modes[i].raw_eigenvalue, prev)) {
                    ++distinct_after;
                    prev = modes[i].raw_eigenvalue;
                }
            }
            // two further distinct values: the next block is complete and closed
            if (distinct_after >= 2) break;
        }
        bound *= 2.0;
    }

    SpectrumTable table;
    table.volume = manifold.volume;
    table.dim = manifold.dim;

    // Blocks over all enumerated modes.
    std::vector<SpectrumBlock> all;
    for (int i = 0; i < static_cast<int>(modes.size()); ++i) {
        if (all.empty() || !same_value(modes[i].raw_eigenvalue, modes[all.back().first].raw_eigenvalue)) {
            all.push_back({i, 1, modes[i].raw_eigenvalue / manifold.volume, 0.0});
        } else {
            ++all.back().multiplicity;
        }
    }
    for (std::size_t b = 0; b + 1 < all.size(); ++b) {
        double g = all[b + 1].eigenvalue - all[b].eigenvalue;
        if (b > 0) g = std::min(g, all[b].eigenvalue - all[b - 1].eigenvalue);
        all[b].gap = g;
    }
    for (const auto& b : all) {
        if (b.first >= count) break;
        table.blocks.push_back(b);
    }
    table.eigenvalues.resize(count);
    table.modes.assign(modes.begin(), modes.begin() + count);
    table.block_index.resize(count);
    for (int bi = 0; bi < static_cast<int>(table.blocks.size()); ++bi) {
        const auto& b = table.blocks[bi];
        for (int k = b.first; k <= b.last() && k < count; ++k) {
            table.eigenvalues[k] = b.eigenvalue;
            table.block_index[k] = bi;
        }
    }
    table.beta_star = estimate_beta_star(table);
    return table;
}

Eigen::MatrixXd eval_eigenfunctions(const ManifoldModel& manifold, const SpectrumTable& table,
                                    std::span<const int> indices, const PointCloud& points) {
    int max_l = 0;
    for (int k : indices) {
        if (k < 0 || k >= table.size()) throw std::out_of_range("eigenfunction index outside spectrum table");
        max_l = std::max(max_l, table.modes[k].i);
    }
    const int np = static_cast<int>(points.rows());
    const int nk = static_cast<int>(indices.size());
    Eigen::MatrixXd out(np, nk);
    const double sqrt2 = std::numbers::sqrt2;
    std::vector<std::vector<double>> leg;
    for (int p = 0; p < np; ++p) {
        std::span<const double> x(points.row(p).data(), points.cols());
        switch (manifold.kind) {
            case ManifoldKind::Circle: {
                const double t = std::atan2(x[1], x[0]);
                for (int c = 0; c < nk; ++c) {
                    const Mode& md = table.modes[indices[c]];
                    if (md.i == 0) out(p, c) = 1.0;
                    else out(p, c) = sqrt2 * (md.phase == 0 ? std::cos(md.i * t) : std::sin(md.i * t));
                }
                break;
            }
            case ManifoldKind::Sphere2: {
                double z, az;
                sphere_angles(manifold, x, z, az);
                legendre_table(max_l, z, leg);
                for (int c = 0; c < nk; ++c) {
                    const Mode& md = table.modes[indices[c]];
                    const int l = md.i, m = std::abs(md.j);
                    const double base = std::sqrt(2.0 * l + 1.0) * leg[l][m];
                    if (md.j == 0) out(p, c) = base;
                    else if (md.j > 0) out(p, c) = sqrt2 * base * std::cos(m * az);
                    else out(p, c) = sqrt2 * base * std::sin(m * az);
                }
                break;
            }
            case ManifoldKind::FlatTorus2: {
                double t1, t2;
                torus_angles(manifold, x, t1, t2);
                for (int c = 0; c < nk; ++c) {
                    const Mode& md = table.modes[indices[c]];
                    const double arg = md.i * t1 + md.j * t2;
                    if (md.i == 0 && md.j == 0) out(p, c) = 1.0;
                    else out(p, c) = sqrt2 * (md.phase == 0 ? std::cos(arg) : std::sin(arg));
                }
                break;
            }
        }
    }
    return out;
}

Eigen::MatrixXd eval_eigenfunctions(const ManifoldModel& manifold, const SpectrumTable& table,
                                    const PointCloud& points) {
    std::vector<int> idx(table.size());
    for (int k = 0; k < table.size(); ++k) idx[k] = k;
    return eval_eigenfunctions(manifold, table, idx, points);
}

QuadratureGrid quadrature_grid(const ManifoldModel& manifold, int resolution) {
    if (resolution < 4) throw InvalidArgument("quadrature resolution too small");
    QuadratureGrid q;
    switch (manifold.kind) {
        case ManifoldKind::Circle: {
            q.points.resize(resolution, 2);
            q.weights = Eigen::VectorXd::Constant(resolution, 1.0 / resolution);
            for (int i = 0; i < resolution; ++i) {
                const double t = kTwoPi * i / resolution;
                q.points(i, 0) = manifold.radius * std::cos(t);
                q.points(i, 1) = manifold.radius * std::sin(t);
            }
            break;
        }
        case ManifoldKind::Sphere2: {
            const int side = std::max(2, static_cast<int>(std::lround(std::sqrt(resolution))));
            std::vector<double> z, w;
            gauss_legendre(side, z, w);
            q.points.resize(side * side, 3);
            q.weights.resize(side * side);
            int r = 0;
            for (int a = 0; a < side; ++a) {
                const double s = std::sqrt(std::max(0.0, 1.0 - z[a] * z[a]));
                for (int b = 0; b < side; ++b, ++r) {
                    const double az = kTwoPi * b / side;
                    q.points(r, 0) = manifold.radius * s * std::cos(az);
                    q.points(r, 1) = manifold.radius * s * std::sin(az);
                    q.points(r, 2) = manifold.radius * z[a];
                    q.weights(r) = 0.5 * w[a] / side;
                }
            }
            break;
        }
        case ManifoldKind::FlatTorus2: {
            const int side = std::max(2, static_cast<int>(std::lround(std::sqrt(resolution))));
            q.points.resize(side * side, 4);
            q.weights = Eigen::VectorXd::Constant(side * side, 1.0 / (side * side));
            const double r1 = torus_radius(manifold, 0), r2 = torus_radius(manifold, 1);
            int r = 0;
            for (int a = 0; a < side; ++a) {
                for (int b = 0; b < side; ++b, ++r) {
                    const double t1 = kTwoPi * a / side, t2 = kTwoPi * b / side;
                    q.points(r, 0) = r1 * std::cos(t1);
                    q.points(r, 1) = r1 * std::sin(t1);
                    q.points(r, 2) = r2 * std::cos(t2);
                    q.points(r, 3) = r2 * std::sin(t2);
                }
            }
            break;
        }
    }
    return q;
}

double estimate_beta_star(const SpectrumTable& table) {
    std::vector<double> xs, ys;
    double envelope = 0.0;
    for (const auto& b : table.blocks) {
        if (b.last() >= table.size() || !(b.gap > 0)) continue;
        envelope = std::max(envelope, 1.0 / b.gap);
        xs.push_back(std::log(b.first + 1.0));
        ys.push_back(std::log(envelope));
    }
    if (xs.size() < 2) return 0.0;
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    const double slope = sxx > 0 ? sxy / sxx : 0.0;
    // envelope is nondecreasing, so an exactly flat envelope gives slope 0 up to rounding
    return slope > 1e-12 ? slope : 0.0;
}

double weyl_constant(const ManifoldModel& manifold) {
    const double ball = manifold.dim == 1 ? 2.0 : kPi;
    return ball * manifold.volume / std::pow(kTwoPi, manifold.dim);
}

std::vector<double> weyl_ratios(const ManifoldModel& manifold, const SpectrumTable& table) {
    std::vector<double> out;
    for (const auto& b : table.blocks) {
        if (b.eigenvalue <= 0 || b.last() >= table.size()) continue;
        const double raw = b.eigenvalue * manifold.volume;
        out.push_back((b.last() + 1.0) * std::pow(raw, -0.5 * manifold.dim));
    }
    return out;
}

ProductSphereGapReport product_sphere_gap_scan(double a_sq_inv, double lambda_max, double witness_threshold) {
    if (!(a_sq_inv > 0) || !(lambda_max > 0)) throw InvalidArgument("product_sphere_gap_scan needs positive inputs");
    ProductSphereGapReport rep;
    rep.a_sq_inv = a_sq_inv;
    rep.lambda_max = lambda_max;
    rep.witness_threshold = witness_threshold;

    struct Value {
        double v;
        int l1, l2;
    };
    std::vector<Value> values;
    for (int l1 = 0; l1 * (l1 + 1.0) <= lambda_max; ++l1) {
        for (int l2 = 0;; ++l2) {
            const double v = l1 * (l1 + 1.0) + a_sq_inv * l2 * (l2 + 1.0);
            if (v > lambda_max) break;
            values.push_back({v, l1, l2});
        }
    }
    std::sort(values.begin(), values.end(), [](const Value& a, const Value& b) {
        if (a.v != b.v) return a.v < b.v;
        return a.l1 != b.l1 ? a.l1 < b.l1 : a.l2 < b.l2;
    });
    auto distinct = [](double a, double b) { return std::abs(a - b) > 1e-9 * std::max(1.0, std::abs(b)); };
    std::vector<Value> uniq;
    for (const auto& v : values) {
        if (uniq.empty() || distinct(v.v, uniq.back().v)) uniq.push_back(v);
    }
    rep.value_count = static_cast<int>(uniq.size());
    rep.min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < uniq.size(); ++i) {
        const double g = uniq[i + 1].v - uniq[i].v;
        if (g < rep.min_gap) {
            rep.min_gap = g;
            rep.lower_degrees = {uniq[i].l1, uniq[i].l2};
            rep.upper_degrees = {uniq[i + 1].l1, uniq[i + 1].l2};
            rep.lower_value = uniq[i].v;
            rep.upper_value = uniq[i + 1].v;
        }
    }

    // Resonant pair: l1(l1+1) + a^-2 (j-1) j  versus  (i-1) i + a^-2 j (j+1), gap |2i - 2j a^-2|.
    for (int i = 1; (i - 1.0) * i <= lambda_max && !rep.witness; ++i) {
        for (int j = 1;; ++j) {
            const double v1 = i * (i + 1.0) + a_sq_inv * (j - 1.0) * j;
            const double v2 = (i - 1.0) * i + a_sq_inv * j * (j + 1.0);
            if (std::min(v1, v2) > lambda_max) break;
            if (std::max(v1, v2) > lambda_max) continue;
            const double g = std::abs(2.0 * i - 2.0 * j * a_sq_inv);
            if (g > 1e-9 && g < witness_threshold) {
                rep.witness = ProductSphereGapReport::Witness{i, j, g};
                break;
            }
        }
    }
    return rep;
}

}  // namespace clab
