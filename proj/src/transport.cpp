#include "clab/transport.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <unordered_map>

#include "json.hpp"

#include "clab/errors.hpp"
#include "clab/rng.hpp"

namespace clab {

namespace {

double geodesic_rows(const ManifoldModel& m, const PointCloud& a, int i, const PointCloud& b, int j) {
    return geodesic_distance(m, std::span<const double>(a.row(i).data(), a.cols()),
                             std::span<const double>(b.row(j).data(), b.cols()));
}

// Uniform ambient grid over the centers for radius queries by chord length.
// Chord length never exceeds geodesic length, so a chord query of radius r
// returns a superset of the geodesic r-ball.
class CenterIndex {
public:
    CenterIndex(const PointCloud& centers, double side) : centers_(centers), side_(side) {
        for (int i = 0; i < centers.rows(); ++i) cells_[key(centers.row(i).data())].push_back(i);
    }

    std::vector<int> within(const double* x, double r) const {
        const int d = static_cast<int>(centers_.cols());
        const int R = std::max(1, static_cast<int>(std::ceil(r / side_)));
        const int span = 2 * R + 1;
        long total = 1;
        for (int a = 0; a < d; ++a) total *= span;
        std::vector<int> out;
        const Key base = key(x);
        // Fall back to a full scan when the block has more cells than there are centers.
        if (total > 4L * centers_.rows() + 64) {
            for (int c = 0; c < centers_.rows(); ++c) {
                if (chord(x, c) <= r) out.push_back(c);
            }
            return out;
        }
        for (long o = 0; o < total; ++o) {
            Key kk = base;
            long code = o;
            for (int a = 0; a < d; ++a) {
                kk[a] += code % span - R;
                code /= span;
            }
            auto it = cells_.find(kk);
            if (it == cells_.end()) continue;
            for (int c : it->second) {
                if (chord(x, c) <= r) out.push_back(c);
            }
        }
        return out;
    }

private:
    using Key = std::array<std::int64_t, 4>;
    struct KeyHash {
        std::size_t operator()(const Key& k) const noexcept {
            std::uint64_t h = 1469598103934665603ULL;
            for (auto v : k) h = (h ^ static_cast<std::uint64_t>(v)) * 1099511628211ULL;
            return static_cast<std::size_t>(h);
        }
    };
    Key key(const double* x) const {
        Key k{0, 0, 0, 0};
        for (int a = 0; a < centers_.cols(); ++a) k[a] = static_cast<std::int64_t>(std::floor(x[a] / side_));
        return k;
    }
    double chord(const double* x, int c) const {
        double s = 0;
        for (int a = 0; a < centers_.cols(); ++a) s += (x[a] - centers_(c, a)) * (x[a] - centers_(c, a));
        return std::sqrt(s);
    }

    const PointCloud& centers_;
    double side_;
    std::unordered_map<Key, std::vector<int>, KeyHash> cells_;
};

// Capacitated bipartite matching aux -> centers restricted to edges of
// length <= tau, grown by layered augmenting paths. Paths are searched on
// the center graph: c -> c2 whenever some member of c has a usable edge to
// c2, tracked by per-pair member counts.
class BottleneckMatcher {
public:
    using NeighborFn = std::function<std::vector<int>(int center, double radius)>;

    BottleneckMatcher(int G, int n, int capacity, const std::vector<std::vector<int>>& edges,
                      const std::vector<std::vector<double>>& dist, NeighborFn neighbors)
        : cap_(capacity),
          assign_(G, -1),
          slot_(G, -1),
          members_(n),
          edges_(edges),
          dist_(dist),
          neighbors_(std::move(neighbors)) {}

    // Grows the matching to maximum size under threshold tau. Returns the size.
    int maximize(double tau) {
        prepare(tau);
        const int G = static_cast<int>(assign_.size());
        for (;;) {
            if (!bfs()) break;
            iter_.assign(members_.size(), 0);
            int grown = 0;
            for (int a = 0; a < G; ++a) {
                if (assign_[a] < 0 && augment(a)) ++grown;
            }
            if (grown == 0) break;
        }
        return matched_;
    }

    const std::vector<int>& assignment() const { return assign_; }

    std::vector<int> snapshot() const { return assign_; }

    void restore(const std::vector<int>& state) {
        for (auto& m : members_) m.clear();
        assign_.assign(assign_.size(), -1);
        matched_ = 0;
        tracking_ = false;
        for (int a = 0; a < static_cast<int>(state.size()); ++a) {
            if (state[a] >= 0) move(a, state[a]);
        }
    }

private:
    void prepare(double tau) {
        tau_ = tau;
        const int n = static_cast<int>(members_.size());
        const int G = static_cast<int>(assign_.size());
        usable_.resize(G);
        for (int a = 0; a < G; ++a) {
            usable_[a] = static_cast<int>(std::upper_bound(dist_[a].begin(), dist_[a].end(), tau) - dist_[a].begin());
        }
        scratch_owner_ = -1;
        nb_.assign(n, {});
        count_.assign(n, {});
        for (int c = 0; c < n; ++c) {
            nb_[c] = neighbors_(c, 2.0 * tau * (1.0 + 1e-9));
            std::sort(nb_[c].begin(), nb_[c].end());
            count_[c].assign(nb_[c].size(), 0);
        }
        scratch_.assign(n, -1);
        tracking_ = true;
        for (int c = 0; c < n; ++c) {
            for (int a : members_[c]) track(a, c, +1);
        }
    }

    // scratch_ maps a center id to its slot in nb_[c] for the most recent c.
    void track(int a, int c, int delta) {
        if (scratch_owner_ != c) {
            if (scratch_owner_ >= 0) {
                for (int c2 : nb_[scratch_owner_]) scratch_[c2] = -1;
            }
            for (std::size_t j = 0; j < nb_[c].size(); ++j) scratch_[nb_[c][j]] = static_cast<int>(j);
            scratch_owner_ = c;
        }
        for (int t = 0; t < usable_[a]; ++t) count_[c][scratch_[edges_[a][t]]] += delta;
    }

    bool bfs() {
        const int G = static_cast<int>(assign_.size());
        layer_.assign(members_.size(), -1);
        std::vector<int> queue;
        for (int a = 0; a < G; ++a) {
            if (assign_[a] >= 0) continue;
            for (int t = 0; t < usable_[a]; ++t) {
                const int c = edges_[a][t];
                if (layer_[c] < 0) {
                    layer_[c] = 1;
                    queue.push_back(c);
                }
            }
        }
        int found = -1;
        for (std::size_t head = 0; head < queue.size(); ++head) {
            const int c = queue[head];
            if (found >= 0 && layer_[c] >= found) break;
            if (static_cast<int>(members_[c].size()) < cap_) {
                found = layer_[c];
                continue;
            }
            for (std::size_t j = 0; j < nb_[c].size(); ++j) {
                const int c2 = nb_[c][j];
                if (count_[c][j] > 0 && layer_[c2] < 0) {
                    layer_[c2] = layer_[c] + 1;
                    queue.push_back(c2);
                }
            }
        }
        return found >= 0;
    }

    // Frees one slot in center c by pushing a member one layer further.
    bool make_room(int c) {
        if (static_cast<int>(members_[c].size()) < cap_) return true;
        for (int& j = iter_[c]; j < static_cast<int>(nb_[c].size()); ++j) {
            const int c2 = nb_[c][j];
            if (count_[c][j] == 0 || layer_[c2] != layer_[c] + 1) continue;
            if (!make_room(c2)) continue;
            // Push the member that gains least by staying: min d(b,c2)^2 - d(b,c)^2.
            int best = -1;
            double best_cost = 0;
            for (int b : members_[c]) {
                const auto first = edges_[b].begin();
                const auto pos = std::find(first, first + usable_[b], c2);
                if (pos == first + usable_[b]) continue;
                const double to = dist_[b][pos - first];
                const double from = dist_[b][std::find(first, first + usable_[b], c) - first];
                const double cost = to * to - from * from;
                if (best < 0 || cost < best_cost) {
                    best = b;
                    best_cost = cost;
                }
            }
            move(best, c2);
            return true;
        }
        layer_[c] = -2;
        return false;
    }

    bool augment(int a) {
        for (int t = 0; t < usable_[a]; ++t) {
            const int c = edges_[a][t];
            if (layer_[c] == 1 && make_room(c)) {
                move(a, c);
                return true;
            }
        }
        return false;
    }

    void move(int a, int c) {
        const int old = assign_[a];
        if (old >= 0) {
            auto& m = members_[old];
            const int last = m.back();
            m[slot_[a]] = last;
            slot_[last] = slot_[a];
            m.pop_back();
            if (tracking_) track(a, old, -1);
            --matched_;
        }
        assign_[a] = c;
        slot_[a] = static_cast<int>(members_[c].size());
        members_[c].push_back(a);
        if (tracking_) track(a, c, +1);
        ++matched_;
    }

    int cap_;
    double tau_ = 0;
    int matched_ = 0;
    bool tracking_ = false;
    int scratch_owner_ = -1;
    std::vector<int> scratch_;
    std::vector<int> assign_;
    std::vector<int> slot_;
    std::vector<std::vector<int>> members_;
    std::vector<int> usable_;
    std::vector<std::vector<int>> nb_;
    std::vector<std::vector<int>> count_;
    std::vector<int> layer_;
    std::vector<int> iter_;
    const std::vector<std::vector<int>>& edges_;
    const std::vector<std::vector<double>>& dist_;
    NeighborFn neighbors_;
};

void finalize(TransportPlan& plan, const ManifoldModel& manifold) {
    plan.offsets.assign(plan.n + 1, 0);
    for (int g = 0; g < plan.G; ++g) ++plan.offsets[plan.assignment[g] + 1];
    for (int i = 0; i < plan.n; ++i) plan.offsets[i + 1] += plan.offsets[i];
    plan.members.assign(plan.G, 0);
    std::vector<int> fill(plan.offsets.begin(), plan.offsets.end() - 1);
    for (int g = 0; g < plan.G; ++g) plan.members[fill[plan.assignment[g]]++] = g;

    plan.eps_hat = *std::max_element(plan.distance.begin(), plan.distance.end());
    plan.max_cell_diam = 0;
    for (int i = 0; i < plan.n; ++i) {
        for (int p = plan.offsets[i]; p < plan.offsets[i + 1]; ++p) {
            for (int q = p + 1; q < plan.offsets[i + 1]; ++q) {
                plan.max_cell_diam = std::max(
                    plan.max_cell_diam, geodesic_rows(manifold, plan.aux, plan.members[p], plan.aux, plan.members[q]));
            }
        }
    }
}

}  // namespace

TransportPlan balanced_cells(const PointCloud& cloud, const ManifoldModel& manifold, int g_factor,
                             std::uint64_t seed) {
    if (g_factor < 16) throw InvalidArgument("balanced_cells needs g_factor >= 16");
    const int n = static_cast<int>(cloud.rows());
    return balanced_cells(cloud, manifold, sample_points(manifold, g_factor * n, seed));
}

TransportPlan balanced_cells(const PointCloud& cloud, const ManifoldModel& manifold, const PointCloud& aux) {
    const int n = static_cast<int>(cloud.rows());
    const int G = static_cast<int>(aux.rows());
    if (n < 1 || G < n || G % n != 0) throw InvalidArgument("aux sample size must be a positive multiple of n");
    if (cloud.cols() != manifold.ambient_dim || aux.cols() != manifold.ambient_dim) {
        throw InvalidArgument("point dimension does not match the manifold");
    }

    TransportPlan plan;
    plan.n = n;
    plan.G = G;
    plan.per_cell = G / n;
    plan.centers = cloud;
    plan.aux = aux;

    const double side = std::pow(4.0 * manifold.volume / n, 1.0 / manifold.dim);
    const double diameter = manifold.kind == ManifoldKind::FlatTorus2
                                ? 0.5 * std::hypot(manifold.lengths[0], manifold.lengths[1])
                                : std::numbers::pi * manifold.radius;

    std::vector<std::vector<int>> edges(G);
    std::vector<std::vector<double>> dist(G);
    // Center-to-center lists within twice the edge radius, sorted by length.
    std::vector<std::vector<std::pair<double, int>>> center_nb(n);
    auto build_edges = [&](double radius) {
        const CenterIndex index(cloud, radius);
        for (int c = 0; c < n; ++c) {
            center_nb[c].clear();
            for (int c2 : index.within(cloud.row(c).data(), 2.0 * radius * (1.0 + 1e-9))) {
                center_nb[c].emplace_back(geodesic_rows(manifold, cloud, c, cloud, c2), c2);
            }
            std::sort(center_nb[c].begin(), center_nb[c].end());
        }
        for (int g = 0; g < G; ++g) {
            std::vector<std::pair<double, int>> found;
            for (int c : index.within(aux.row(g).data(), radius)) {
                const double d = geodesic_rows(manifold, aux, g, cloud, c);
                if (d <= radius) found.emplace_back(d, c);
            }
            std::sort(found.begin(), found.end());
            edges[g].resize(found.size());
            dist[g].resize(found.size());
            for (std::size_t t = 0; t < found.size(); ++t) {
                edges[g][t] = found[t].second;
                dist[g][t] = found[t].first;
            }
        }
    };

    // Lower bound: every aux point needs at least its nearest center.
    double radius = 4.0 * side;
    double lower = 0;
    for (;;) {
        build_edges(radius);
        bool covered = true;
        lower = 0;
        for (int g = 0; g < G && covered; ++g) {
            if (edges[g].empty()) covered = false;
            else lower = std::max(lower, dist[g][0]);
        }
        if (covered) break;
        radius *= 2;
    }

    BottleneckMatcher matcher(G, n, plan.per_cell, edges, dist, [&](int c, double r) {
        std::vector<int> out;
        for (const auto& [d, c2] : center_nb[c]) {
            if (d > r) break;
            out.push_back(c2);
        }
        return out;
    });

    // Grow the threshold geometrically until the matching is perfect, then bisect.
    double lo = 0, tau = lower;
    auto lo_state = matcher.snapshot();
    for (;;) {
        if (tau > radius && radius < diameter) {
            radius = std::min(2.0 * radius, diameter * 1.000001);
            build_edges(radius);
        }
        if (matcher.maximize(std::min(tau, radius)) == G) break;
        lo = std::min(tau, radius);
        lo_state = matcher.snapshot();
        if (radius >= diameter && tau >= radius) {
            throw NumericalFailure("balanced_cells: no perfect capacitated assignment at full diameter");
        }
        tau *= 1.25;
    }
    double hi = std::min(tau, radius);
    auto hi_state = matcher.snapshot();
    for (int it = 0; it < 12 && hi - lo > 1e-3 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        matcher.restore(lo_state);
        if (matcher.maximize(mid) == G) {
            hi = mid;
            hi_state = matcher.snapshot();
        } else {
            lo = mid;
            lo_state = matcher.snapshot();
        }
    }
    matcher.restore(hi_state);
    plan.diagnostics.threshold_lower = lo;
    plan.diagnostics.threshold_upper = hi;

    plan.assignment = matcher.assignment();
    plan.distance.resize(G);
    for (int g = 0; g < G; ++g) plan.distance[g] = geodesic_rows(manifold, aux, g, cloud, plan.assignment[g]);

    finalize(plan, manifold);
    return plan;
}

std::string TransportPlan::summary_json() const {
    nlohmann::json j{{"n", n},
                     {"G", G},
                     {"eps_hat", eps_hat},
                     {"max_cell_diam", max_cell_diam},
                     {"threshold_lower", diagnostics.threshold_lower},
                     {"threshold_upper", diagnostics.threshold_upper}};
    return j.dump();
}

Eigen::MatrixXd spatial_discretize(const TransportPlan& plan, const Eigen::MatrixXd& aux_values) {
    if (aux_values.rows() != plan.G) throw InvalidArgument("spatial_discretize expects one row per aux point");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(plan.n, aux_values.cols());
    for (int i = 0; i < plan.n; ++i) {
        for (int p = plan.offsets[i]; p < plan.offsets[i + 1]; ++p) out.row(i) += aux_values.row(plan.members[p]);
    }
    return out / plan.per_cell;
}

Eigen::VectorXd spatial_discretize(const TransportPlan& plan, const Eigen::VectorXd& aux_values) {
    return spatial_discretize(plan, Eigen::MatrixXd(aux_values)).col(0);
}

Eigen::MatrixXd spatial_extend(const TransportPlan& plan, const Eigen::MatrixXd& v) {
    if (v.rows() != plan.n) throw InvalidArgument("spatial_extend expects one row per cloud point");
    Eigen::MatrixXd out(plan.G, v.cols());
    for (int g = 0; g < plan.G; ++g) out.row(g) = v.row(plan.assignment[g]);
    return out;
}

Eigen::VectorXd spatial_extend(const TransportPlan& plan, const Eigen::VectorXd& v) {
    return spatial_extend(plan, Eigen::MatrixXd(v)).col(0);
}

double evaluate_extension(const TransportPlan& plan, const ManifoldModel& manifold, const Eigen::VectorXd& v,
                          std::span<const double> point, int* fallbacks) {
    if (v.size() != plan.n) throw InvalidArgument("evaluate_extension expects a length-n signal");
    for (int g = 0; g < plan.G; ++g) {
        bool same = true;
        for (int a = 0; a < plan.aux.cols() && same; ++a) same = plan.aux(g, a) == point[a];
        if (same) return v[plan.assignment[g]];
    }
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int c = 0; c < plan.n; ++c) {
        const double d = geodesic_distance(manifold, point, std::span<const double>(plan.centers.row(c).data(), plan.centers.cols()));
        if (d < bd) {
            bd = d;
            best = c;
        }
    }
    if (fallbacks) ++*fallbacks;
    return v[best];
}

double tl2_distance(const TransportPlan& plan, const Eigen::VectorXd& u_aux, const Eigen::VectorXd& v) {
    if (u_aux.size() != plan.G) throw InvalidArgument("tl2_distance expects u on the aux points");
    return std::sqrt((u_aux - spatial_extend(plan, v)).squaredNorm() / plan.G);
}

}  // namespace clab
