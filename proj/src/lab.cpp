#include "clab/lab.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "clab/csv.hpp"
#include "clab/graph.hpp"
#include "clab/rng.hpp"
#include "clab/transport.hpp"

namespace clab {

namespace {

using nlohmann::json;

// Runs body(i) for i in [0, count) on `threads` workers. Results go to
// caller-owned slots, so output does not depend on scheduling. The exception
// of the lowest failing index is rethrown.
template <class Body>
void parallel_for(int count, int threads, Body&& body) {
    std::vector<std::exception_ptr> errors(count);
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < count; i = next++) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int t = std::max(1, std::min(threads, count));
    if (t == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < t; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what) : std::runtime_error(what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

template <class F>
void in_stage(const std::string& name, F&& f) {
    try {
        f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const auto m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct Cell {
    int rep = 0;
    int level = 0;
    int n = 0;
    std::uint64_t seed = 0;
    TransportPlan plan;
    double h = 0;
    DiscreteSpectrum spectrum;
    SpectralFrame frame;
    SynthesisGrid aux;
    LadderRow row;
    std::vector<EigenvalueRow> eigen;
};

struct Shared {
    ManifoldModel manifold;
    KernelSpec kernel;
    Activation act;
    SpectrumTable table;  // at least k_cont and eigen_count modes
    Eigen::VectorXd cont_eigenvalues;  // first k_cont
    int k_cont = 0;
    int band = 0;
    std::vector<CutoffSchedule> schedules;  // per repetition
    SynthesisGrid quadrature;
};

class Pipeline {
public:
    Pipeline(const ExperimentConfig& cfg, int threads) : cfg_(cfg), threads_(threads) {}

    void foundation();
    void ops_check();
    void response_conv();
    void train_ladder_stage();
    void gap_demo();

    LabResults results;
    std::vector<std::pair<std::string, std::string>> csvs;  // (file name, contents)

private:
    std::vector<Cell*> cells_of(int rep);
    ParameterTriple random_discrete_triple(const SpectralFrame& frame, Rng& rng) const;
    void add_csv(const std::string& name, const CsvWriter& w) { csvs.emplace_back(name, w.text()); }

    const ExperimentConfig& cfg_;
    int threads_;
    Shared sh_;
    std::vector<Cell> cells_;  // rep-major, then ladder order
};

std::vector<Cell*> Pipeline::cells_of(int rep) {
    std::vector<Cell*> out;
    for (auto& c : cells_) {
        if (c.rep == rep) out.push_back(&c);
    }
    return out;
}

void Pipeline::foundation() {
    sh_.manifold = cfg_.manifold.model();
    sh_.kernel = KernelSpec::make(parse_kernel_shape(cfg_.kernel), sh_.manifold.dim);
    sh_.act = Activation::make(parse_activation(cfg_.activation));
    const int reps = static_cast<int>(cfg_.seeds.size());
    const int levels = static_cast<int>(cfg_.ladder.size());
    cells_.resize(static_cast<std::size_t>(reps * levels));
    for (int r = 0; r < reps; ++r) {
        for (int l = 0; l < levels; ++l) {
            Cell& c = cells_[static_cast<std::size_t>(r * levels + l)];
            c.rep = r;
            c.level = l;
            c.n = cfg_.ladder[static_cast<std::size_t>(l)];
            c.seed = cfg_.seeds[static_cast<std::size_t>(r)];
        }
    }

    // Samples are nested along the ladder: one stream per repetition, and a
    // level of size n takes its first n draws.
    in_stage("transport", [&] {
        parallel_for(static_cast<int>(cells_.size()), threads_, [&](int i) {
            Cell& c = cells_[static_cast<std::size_t>(i)];
            const PointCloud cloud =
                sample_points(sh_.manifold, c.n, stage_seed(cfg_.master_seed, SeedStage::Sample, 0, c.seed));
            const PointCloud aux = sample_points(sh_.manifold, cfg_.aux_factor * c.n,
                                                 stage_seed(cfg_.master_seed, SeedStage::AuxPoints, 0, c.seed));
            c.plan = balanced_cells(cloud, sh_.manifold, aux);
            c.h = cfg_.h_explicit.empty() ? std::sqrt(c.plan.eps_hat)
                                          : cfg_.h_explicit[static_cast<std::size_t>(c.level)];
        });
    });

    in_stage("cutoff", [&] {
        const SpectrumTable probe = continuum_spectrum(sh_.manifold, std::max(cfg_.eigen_count, 8));
        int kt_max = 1;
        for (const auto& c : cells_) {
            const int kt = cfg_.cutoff.fixed_k_tilde > 0
                               ? cfg_.cutoff.fixed_k_tilde
                               : k_tilde_formula(c.h, sh_.manifold.dim, probe.beta_star, c.n, cfg_.cutoff.scale);
            kt_max = std::max(kt_max, kt);
        }
        const SpectrumTable sized = continuum_spectrum(sh_.manifold, std::max(4 * kt_max + 4, cfg_.eigen_count));
        int K_max = 0;
        int K_min = std::numeric_limits<int>::max();
        for (int r = 0; r < reps; ++r) {
            std::vector<LadderLevel> ladder;
            for (const Cell* c : cells_of(r)) ladder.push_back({c->n, c->h, c->plan.eps_hat});
            sh_.schedules.push_back(cutoff_schedule(ladder, sh_.manifold, sized.beta_star, sized, cfg_.cutoff));
            K_max = std::max(K_max, sh_.schedules.back().K_max());
            K_min = std::min(K_min, sh_.schedules.back().K_min());
            for (const auto& w : sh_.schedules.back().warnings) {
                results.warnings.push_back("seed " + std::to_string(cfg_.seeds[static_cast<std::size_t>(r)]) + ": " + w);
            }
        }
        sh_.k_cont = cfg_.k_cont > 0 ? std::max(cfg_.k_cont, K_max) : sized.block_end(4 * K_max - 1) + 1;
        sh_.band = cfg_.dictionary_band > 0 ? std::min(cfg_.dictionary_band, sh_.k_cont) : K_min;
        sh_.table = continuum_spectrum(sh_.manifold, std::max(sh_.k_cont, cfg_.eigen_count));
        sh_.cont_eigenvalues =
            Eigen::Map<const Eigen::VectorXd>(sh_.table.eigenvalues.data(), sh_.k_cont);
        sh_.quadrature = quadrature_synthesis(sh_.manifold, sh_.table, cfg_.quadrature);
        sh_.quadrature.basis.conservativeResize(Eigen::NoChange, sh_.k_cont);
    });

    in_stage("spectra", [&] {
        parallel_for(static_cast<int>(cells_.size()), threads_, [&](int i) {
            Cell& c = cells_[static_cast<std::size_t>(i)];
            const CutoffRecord& cut = sh_.schedules[static_cast<std::size_t>(c.rep)].at(c.n);
            const WeightedGraph g = build_graph(c.plan.centers, c.h, sh_.kernel);
            const int components = connected_components(g);
            if (components > 1) {
                throw StageError("spectra", "seed " + std::to_string(c.seed) + ", n = " + std::to_string(c.n) +
                                                ": graph has " + std::to_string(components) +
                                                " components at h = " + std::to_string(c.h));
            }
            const SparseMatrix lap = graph_laplacian(g, sh_.kernel.sigma);
            const int count = std::min(c.n, std::max(cfg_.eigen_count, cut.K));
            c.spectrum = lowest_eigenpairs(lap, count);
            c.aux = aux_grid(sh_.manifold, sh_.table, c.plan);
            c.aux.basis.conservativeResize(Eigen::NoChange, sh_.k_cont);
            try {
                c.frame = align_blocks(c.spectrum, c.aux.basis, c.plan, sh_.table, cut.K);
            } catch (const DegenerateAlignment& e) {
                throw StageError("frame", "seed " + std::to_string(c.seed) + ", n = " + std::to_string(c.n) + ": " +
                                              e.what());
            }
            const int reported = std::min(count, cfg_.eigen_count);
            c.eigen = eigenvalue_report(c.spectrum.eigenvalues, sh_.table, reported, c.plan.eps_hat, c.h, sh_.manifold);

            const DiscreteSpectrum shuffled = randomize_degenerate_basis(
                c.spectrum, stage_seed(cfg_.master_seed, SeedStage::Checks, static_cast<std::uint64_t>(c.n), c.seed));
            const SpectralFrame again = align_blocks(shuffled, c.aux.basis, c.plan, sh_.table, cut.K);

            LadderRow& r = c.row;
            r.seed = c.seed;
            r.n = c.n;
            r.eps_hat = c.plan.eps_hat;
            r.h = c.h;
            r.h_admissible = cut.h_admissible;
            r.k_tilde = cut.k_tilde;
            r.K = cut.K;
            r.components = components;
            r.solver = c.spectrum.solver;
            r.iterations = c.spectrum.iterations;
            r.max_residual = c.spectrum.max_residual;
            std::vector<double> rel, ratio;
            for (const auto& e : c.eigen) {
                if (e.k >= 1) {
                    rel.push_back(e.rel_err);
                    ratio.push_back(e.ratio);
                }
            }
            r.median_rel_err = median(rel);
            r.median_ratio = median(ratio);
            r.delta_phi = c.frame.delta_phi;
            r.min_singular_value = c.frame.min_singular_value;
            r.straddles = c.frame.partition.straddles;
            r.basis_invariance = std::max((again.aligned_vectors - c.frame.aligned_vectors).cwiseAbs().maxCoeff(),
                                          std::abs(again.delta_phi - c.frame.delta_phi));
            r.transport_lower = c.plan.diagnostics.threshold_lower;
            r.transport_upper = c.plan.diagnostics.threshold_upper;
            r.max_cell_diam = c.plan.max_cell_diam;
        });
    });

    CsvWriter ladder({"seed", "n", "eps_hat", "h", "h_admissible", "k_tilde", "K", "components", "solver",
                      "solver_iterations", "solver_residual", "median_rel_err", "median_ratio", "delta_phi",
                      "min_singular_value", "straddles", "basis_invariance", "transport_lower", "transport_upper",
                      "max_cell_diam"});
    CsvWriter align({"seed", "n", "k", "delta_phi"});
    for (const auto& c : cells_) {
        const auto& r = c.row;
        results.ladder.push_back(r);
        ladder.add(r.seed).add(r.n).add(r.eps_hat).add(r.h).add(r.h_admissible).add(r.k_tilde).add(r.K);
        ladder.add(r.components).add(r.solver).add(r.iterations).add(r.max_residual).add(r.median_rel_err);
        ladder.add(r.median_ratio).add(r.delta_phi).add(r.min_singular_value).add(r.straddles);
        ladder.add(r.basis_invariance).add(r.transport_lower).add(r.transport_upper).add(r.max_cell_diam);
        ladder.end_row();
        for (int k = 0; k < c.frame.K; ++k) {
            results.alignment.push_back({c.seed, c.n, k + 1, c.frame.delta_phi_per_k[static_cast<std::size_t>(k)]});
            align.add(c.seed).add(c.n).add(k + 1).add(c.frame.delta_phi_per_k[static_cast<std::size_t>(k)]).end_row();
        }
        for (const auto& e : c.eigen) results.spectra.push_back({c.seed, c.n, e});
    }
    add_csv("ladder.csv", ladder);
    add_csv("alignment.csv", align);
}

void write_spectra(Pipeline& p, const std::vector<int>& ladder) {
    for (int n : ladder) {
        CsvWriter w({"seed", "n", "k", "lambda_disc", "lambda_cont", "rel_err", "delta", "ratio"});
        for (const auto& s : p.results.spectra) {
            if (s.n != n) continue;
            const auto& e = s.row;
            w.add(s.seed).add(s.n).add(e.k + 1).add(e.lambda_disc).add(e.lambda_cont).add(e.rel_err);
            w.add(e.delta).add(e.ratio).end_row();
        }
        p.csvs.emplace_back("spectra_n" + std::to_string(n) + ".csv", w.text());
    }
}

ParameterTriple Pipeline::random_discrete_triple(const SpectralFrame& frame, Rng& rng) const {
    std::normal_distribution<double> gauss;
    auto draw = [&](double alpha) {
        Eigen::VectorXd v(frame.K);
        for (int k = 0; k < frame.K; ++k) v[k] = gauss(rng);
        return project_to_ball(SpectralSignal::discrete(frame.n, v), alpha, frame);
    };
    ParameterTriple t;
    t.alpha = cfg_.alpha;
    t.a = draw(cfg_.alpha);
    t.b = draw(0.0);
    t.c = draw(cfg_.alpha);
    return t;
}

void Pipeline::ops_check() {
    std::vector<std::vector<OpsRow>> rows(cells_.size());
    in_stage("ops-check", [&] {
        parallel_for(static_cast<int>(cells_.size()), threads_, [&](int i) {
            const Cell& c = cells_[static_cast<std::size_t>(i)];
            const auto& f = c.frame;
            const auto& plan = c.plan;
            const double alpha = cfg_.alpha;
            const int kc = sh_.k_cont;
            Rng rng(mix_seed(stage_seed(cfg_.master_seed, SeedStage::Checks, static_cast<std::uint64_t>(c.n), c.seed),
                             {1}));
            std::normal_distribution<double> gauss;
            auto gaussian = [&](Eigen::Index size) {
                Eigen::VectorXd v(size);
                for (Eigen::Index k = 0; k < size; ++k) v[k] = gauss(rng);
                return v;
            };
            auto continuum = [&] {
                return sample_signal(sh_.cont_eigenvalues, 1.0, rng());
            };

            double pn_adjoint = 0, pn_isometry = 0, act_commutes = 0, s_adjoint = 0, s_roundtrip = 0;
            double q_roundtrip = 0, s_alpha_gap = 0, commutation = 0, norm_p = 0, norm_s = 0;
            const SynthesisGrid disc = discrete_grid(f);
            for (int d = 0; d < cfg_.ops_draws; ++d) {
                const Eigen::VectorXd u_aux = gaussian(plan.G);
                const Eigen::VectorXd v = gaussian(plan.n);
                const Eigen::VectorXd pu = spatial_discretize(plan, u_aux);
                const Eigen::VectorXd pv = spatial_extend(plan, v);
                pn_adjoint = std::max(pn_adjoint, std::abs(pu.dot(v) / plan.n - u_aux.dot(pv) / plan.G));
                pn_isometry = std::max(pn_isometry,
                                       std::abs(std::sqrt(pv.squaredNorm() / plan.G) - std::sqrt(v.squaredNorm() / plan.n)));
                const Eigen::VectorXd lhs = sh_.act.apply(pv.array()).matrix();
                const Eigen::VectorXd rhs = spatial_extend(plan, Eigen::VectorXd(sh_.act.apply(v.array()).matrix()));
                act_commutes = std::max(act_commutes, (lhs - rhs).cwiseAbs().maxCoeff());

                const SpectralSignal vc = continuum();
                const SpectralSignal w = SpectralSignal::discrete(f.n, gaussian(f.K));
                const SpectralSignal sv = spectral_discretize(vc, alpha, f);
                const SpectralSignal sw = spectral_extend(w, alpha, f, kc);
                s_adjoint = std::max(s_adjoint, std::abs(h_alpha_inner(sv, w, alpha, f) -
                                                         h_alpha_inner(vc, sw, alpha, sh_.cont_eigenvalues)));
                const SpectralSignal back = spectral_extend(sv, alpha, f, kc);
                Eigen::VectorXd trunc = vc.coeffs;
                trunc.tail(kc - f.K).setZero();
                s_roundtrip = std::max(s_roundtrip, (back.coeffs - trunc).cwiseAbs().maxCoeff());

                const ParameterTriple tn = random_discrete_triple(f, rng);
                const ParameterTriple tq = param_project(param_extend(tn, f, kc), f);
                q_roundtrip = std::max({q_roundtrip, (tq.a.coeffs - tn.a.coeffs).cwiseAbs().maxCoeff(),
                                        (tq.b.coeffs - tn.b.coeffs).cwiseAbs().maxCoeff(),
                                        (tq.c.coeffs - tn.c.coeffs).cwiseAbs().maxCoeff()});

                const double va = h_alpha_norm(vc, alpha, sh_.cont_eigenvalues);
                const SpectralSignal s0 = spectral_discretize(vc, 0.0, f);
                s_alpha_gap = std::max(s_alpha_gap, (s0.coeffs - sv.coeffs).squaredNorm() / (va * va));

                // P_n*(S_n b *_n P_n u) against (S*_n S_n b) * (P_n* P_n u) on the aux grid.
                const SpectralSignal b = continuum();
                const SpectralSignal u = continuum();
                const Eigen::VectorXd nodal = spatial_discretize(plan, c.aux.synthesize(u.coeffs));
                const Eigen::VectorXd u_n = f.aligned_vectors.transpose() * nodal / f.n;
                const Eigen::VectorXd b_n = spectral_discretize(b, 0.0, f).coeffs;
                const Eigen::VectorXd left = spatial_extend(plan, Eigen::VectorXd(disc.synthesize(b_n.cwiseProduct(u_n))));
                const Eigen::VectorXd step = spatial_extend(plan, nodal);
                const Eigen::VectorXd step_coeffs = c.aux.basis.transpose() * step / plan.G;
                Eigen::VectorXd b_trunc = b.coeffs;
                b_trunc.tail(kc - f.K).setZero();
                const Eigen::VectorXd right = c.aux.synthesize(b_trunc.cwiseProduct(step_coeffs));
                const double diff = std::sqrt((left - right).squaredNorm() / plan.G);
                commutation = std::max(commutation, diff / (b.l2_norm() * u.l2_norm()));

                norm_p = std::max(norm_p, std::sqrt(nodal.squaredNorm() / plan.n) / u.l2_norm());
                norm_s = std::max(norm_s, spectral_discretize(u, 0.0, f).l2_norm() / u.l2_norm());
            }
            auto& out = rows[static_cast<std::size_t>(i)];
            auto add = [&](const char* name, double value) { out.push_back({c.seed, c.n, name, value}); };
            add("pn_adjoint", pn_adjoint);
            add("pn_isometry", pn_isometry);
            add("activation_commutes", act_commutes);
            add("s_adjoint", s_adjoint);
            add("s_roundtrip", s_roundtrip);
            add("q_roundtrip", q_roundtrip);
            add("s_alpha_gap", s_alpha_gap);
            add("commutation", commutation);
            add("commutation_over_delta_phi", commutation / (2.0 * std::max(norm_p, norm_s) * f.delta_phi));
            add("restriction_norm_P", norm_p);
            add("restriction_norm_S", norm_s);
        });
    });
    CsvWriter w({"seed", "n", "check", "value"});
    for (const auto& rs : rows) {
        for (const auto& r : rs) {
            results.ops.push_back(r);
            w.add(r.seed).add(r.n).add(r.check).add(r.value).end_row();
        }
    }
    add_csv("ops_check.csv", w);
}

void Pipeline::response_conv() {
    const int reps = static_cast<int>(cfg_.seeds.size());
    std::vector<std::vector<ParameterTriple>> dictionaries(reps);
    std::vector<std::vector<SpectralSignal>> signals(reps);
    std::vector<std::vector<HighFrequencyRow>> hf(reps);
    in_stage("response-conv", [&] {
        parallel_for(reps, threads_, [&](int r) {
            const std::uint64_t s = cfg_.seeds[static_cast<std::size_t>(r)];
            dictionaries[r] = sample_parameters(sh_.cont_eigenvalues, sh_.band, cfg_.alpha, cfg_.responses.dictionary,
                                                stage_seed(cfg_.master_seed, SeedStage::Dictionary, 0, s),
                                                cfg_.responses.decay);
            for (int k = 0; k < cfg_.responses.signals; ++k) {
                signals[r].push_back(sample_signal(
                    sh_.cont_eigenvalues, cfg_.responses.decay,
                    mix_seed(stage_seed(cfg_.master_seed, SeedStage::Signals, 0, s), {static_cast<std::uint64_t>(k)})));
            }
            // High-frequency insensitivity uses a full-band dictionary.
            const auto full = sample_parameters(sh_.cont_eigenvalues, sh_.k_cont, cfg_.alpha, cfg_.responses.dictionary,
                                                stage_seed(cfg_.master_seed, SeedStage::Dictionary, 2, s),
                                                cfg_.responses.decay);
            const Eigen::VectorXd zero = Eigen::VectorXd::Zero(sh_.k_cont);
            for (std::size_t d = 0; d < full.size(); ++d) {
                const double base = response(zero, full[d], sh_.quadrature, sh_.act);
                for (int k = sh_.k_cont / 2; k <= sh_.k_cont; ++k) {
                    if (k < 1) continue;
                    Eigen::VectorXd e = Eigen::VectorXd::Zero(sh_.k_cont);
                    e[k - 1] = 1.0;
                    const double dev = std::abs(response(e, full[d], sh_.quadrature, sh_.act) - base);
                    const double bound = full[d].a.l2_norm() * sh_.act.lipschitz * std::abs(full[d].b.coeffs[k - 1]);
                    hf[r].push_back({s, static_cast<int>(d), k, dev, bound});
                }
            }
        });

        std::vector<std::vector<ResponseRow>> rows(cells_.size());
        parallel_for(static_cast<int>(cells_.size()), threads_, [&](int i) {
            const Cell& c = cells_[static_cast<std::size_t>(i)];
            const auto& dict = dictionaries[static_cast<std::size_t>(c.rep)];
            const SynthesisGrid disc = discrete_grid(c.frame);
            std::vector<ParameterTriple> projected;
            for (const auto& th : dict) projected.push_back(param_project(th, c.frame));
            const auto& sig = signals[static_cast<std::size_t>(c.rep)];
            for (std::size_t s = 0; s < sig.size(); ++s) {
                std::vector<double> cont(dict.size());
                for (std::size_t d = 0; d < dict.size(); ++d) cont[d] = response(sig[s].coeffs, dict[d], c.aux, sh_.act);
                for (Restriction rn : cfg_.responses.restrictions) {
                    const SpectralSignal un = restrict_signal(sig[s], rn, c.frame, c.plan, c.aux);
                    ResponseRow row{c.seed, c.n, restriction_name(rn), static_cast<int>(s), sig[s].l2_norm(), 0, 0};
                    for (std::size_t d = 0; d < dict.size(); ++d) {
                        const double e = std::abs(response(un.coeffs, projected[d], disc, sh_.act) - cont[d]);
                        row.sup_error = std::max(row.sup_error, e);
                        if (d == 0) row.first_atom_error = e;
                    }
                    rows[static_cast<std::size_t>(i)].push_back(row);
                }
            }
        });
        for (const auto& rs : rows) results.responses.insert(results.responses.end(), rs.begin(), rs.end());
    });

    CsvWriter w({"seed", "n", "restriction", "signal", "norm_u", "sup_error", "first_atom_error"});
    for (const auto& r : results.responses) {
        w.add(r.seed).add(r.n).add(r.restriction).add(r.signal).add(r.norm_u).add(r.sup_error);
        w.add(r.first_atom_error).end_row();
    }
    add_csv("response_conv.csv", w);
    CsvWriter h({"seed", "n", "atom", "k", "deviation", "bound"});
    for (const auto& rs : hf) {
        for (const auto& r : rs) {
            results.high_frequency.push_back(r);
            h.add(r.seed).add(0).add(r.atom).add(r.k).add(r.deviation).add(r.bound).end_row();
        }
    }
    add_csv("high_frequency.csv", h);
}

void Pipeline::train_ladder_stage() {
    const int reps = static_cast<int>(cfg_.seeds.size());
    const auto& tc = cfg_.training;
    struct RepData {
        std::vector<ParameterTriple> dictionary;
        TrainingSet set;
        std::vector<Eigen::VectorXd> heldout;
        Eigen::MatrixXd cont_train, cont_heldout;
        TrainLadderReport report;
        std::vector<ParticleRow> particle;
    };
    std::vector<RepData> data(reps);
    std::vector<LevelFeatures> levels(cells_.size());
    in_stage("train-ladder", [&] {
        parallel_for(reps, threads_, [&](int r) {
            const std::uint64_t s = cfg_.seeds[static_cast<std::size_t>(r)];
            RepData& rd = data[static_cast<std::size_t>(r)];
            rd.dictionary = sample_parameters(sh_.cont_eigenvalues, sh_.band, cfg_.alpha, tc.dictionary,
                                              stage_seed(cfg_.master_seed, SeedStage::Dictionary, 1, s), tc.decay);
            MeasureNetwork teacher;
            teacher.alpha = cfg_.alpha;
            Rng rng(stage_seed(cfg_.master_seed, SeedStage::Teacher, 0, s));
            std::normal_distribution<double> gauss;
            for (int a = 0; a < tc.teacher_atoms; ++a) teacher.atoms.push_back({gauss(rng), rd.dictionary[static_cast<std::size_t>(a)]});
            rd.set = make_training_set(teacher, sh_.quadrature, sh_.act, sh_.cont_eigenvalues, tc.decay, tc.l,
                                       stage_seed(cfg_.master_seed, SeedStage::Signals, 1, s));
            if (tc.loss == Loss::Logistic) {
                for (Eigen::Index k = 0; k < rd.set.labels.size(); ++k) rd.set.labels[k] = rd.set.labels[k] >= 0 ? 1.0 : -1.0;
            }
            for (int k = 0; k < tc.heldout; ++k) {
                rd.heldout.push_back(sample_signal(sh_.cont_eigenvalues, tc.decay,
                                                   mix_seed(stage_seed(cfg_.master_seed, SeedStage::Heldout, 0, s),
                                                            {static_cast<std::uint64_t>(k)}))
                                         .coeffs);
            }
            std::vector<Eigen::VectorXd> train;
            for (const auto& u : rd.set.signals) train.push_back(u.coeffs);
            rd.cont_train = feature_matrix(train, rd.dictionary, sh_.quadrature, sh_.act);
            rd.cont_heldout = feature_matrix(rd.heldout, rd.dictionary, sh_.quadrature, sh_.act);
        });

        parallel_for(static_cast<int>(cells_.size()), threads_, [&](int i) {
            const Cell& c = cells_[static_cast<std::size_t>(i)];
            const RepData& rd = data[static_cast<std::size_t>(c.rep)];
            LevelFeatures& lf = levels[static_cast<std::size_t>(i)];
            lf.n = c.n;
            lf.K = c.frame.K;
            lf.train = assemble_discrete(rd.set, rd.dictionary, c.frame, c.plan, c.aux, tc.restriction, sh_.act).features;
            std::vector<ParameterTriple> lifted;
            for (const auto& th : rd.dictionary) lifted.push_back(param_extend(param_project(th, c.frame), c.frame, sh_.k_cont));
            lf.heldout_lifted = feature_matrix(rd.heldout, lifted, sh_.quadrature, sh_.act);
        });

        parallel_for(reps, threads_, [&](int r) {
            RepData& rd = data[static_cast<std::size_t>(r)];
            TrainLadderInput in;
            in.continuum_train = rd.cont_train;
            in.continuum_heldout = rd.cont_heldout;
            in.labels = rd.set.labels;
            in.zeta_rel = tc.zeta_rel;
            in.loss = tc.loss;
            in.solver.measure = tc.measure;
            for (std::size_t i = 0; i < cells_.size(); ++i) {
                if (cells_[i].rep == r) in.levels.push_back(levels[i]);
            }
            rd.report = train_ladder(in);
            if (tc.particle) {
                // Exploration only: projected descent from the teacher-sized prefix of the dictionary.
                std::vector<Atom> init;
                for (int a = 0; a < std::max(1, 2 * tc.teacher_atoms) && a < tc.dictionary; ++a) {
                    init.push_back({0.0, rd.dictionary[static_cast<std::size_t>(a)]});
                }
                auto project = [&](const ParameterTriple& t) {
                    return ParameterTriple{project_to_ball(t.a, t.alpha, sh_.cont_eigenvalues),
                                           project_to_ball(t.b, 0.0, sh_.cont_eigenvalues),
                                           project_to_ball(t.c, t.alpha, sh_.cont_eigenvalues), t.alpha};
                };
                std::vector<Eigen::VectorXd> train;
                for (const auto& u : rd.set.signals) train.push_back(u.coeffs);
                ParticleOptions po;
                po.steps = tc.particle_steps;
                po.zeta = rd.report.zeta;
                const ParticleResult pr = particle_descent(init, train, rd.set.labels, sh_.quadrature, sh_.act, project, po);
                for (std::size_t k = 0; k < pr.objective.size(); ++k) {
                    rd.particle.push_back({cfg_.seeds[static_cast<std::size_t>(r)], 0, static_cast<int>(k), pr.objective[k]});
                }
            }
        });
    });

    CsvWriter w({"seed", "n", "K", "zeta", "J_min", "J_cont_min", "J_gap", "support", "certificate", "heldout_gap_max",
                 "label_scale"});
    CsvWriter hw({"seed", "n", "signal", "gap"});
    CsvWriter pw({"seed", "n", "step", "objective"});
    for (int r = 0; r < reps; ++r) {
        const auto& rep = data[static_cast<std::size_t>(r)].report;
        const std::uint64_t s = cfg_.seeds[static_cast<std::size_t>(r)];
        TrainRow cont{s, 0, sh_.k_cont, rep.zeta, rep.J_min, rep.J_min, 0.0, rep.support, rep.certificate, 0.0,
                      rep.label_scale};
        std::vector<TrainRow> rows{cont};
        for (const auto& lv : rep.levels) {
            const double gap = lv.heldout_gaps.empty() ? 0.0 : *std::max_element(lv.heldout_gaps.begin(), lv.heldout_gaps.end());
            rows.push_back({s, lv.n, lv.K, rep.zeta, lv.J_min, rep.J_min, lv.J_gap, lv.support, lv.certificate, gap,
                            rep.label_scale});
            for (std::size_t k = 0; k < lv.heldout_gaps.size(); ++k) {
                results.heldout.push_back({s, lv.n, static_cast<int>(k), lv.heldout_gaps[k]});
                hw.add(s).add(lv.n).add(static_cast<int>(k)).add(lv.heldout_gaps[k]).end_row();
            }
        }
        for (const auto& t : rows) {
            results.training.push_back(t);
            w.add(t.seed).add(t.n).add(t.K).add(t.zeta).add(t.J_min).add(t.J_cont_min).add(t.J_gap).add(t.support);
            w.add(t.certificate).add(t.heldout_gap_max).add(t.label_scale).end_row();
        }
        for (const auto& p : data[static_cast<std::size_t>(r)].particle) {
            results.particle.push_back(p);
            pw.add(p.seed).add(p.n).add(p.step).add(p.objective).end_row();
        }
    }
    add_csv("train_ladder.csv", w);
    add_csv("heldout.csv", hw);
    if (tc.particle) add_csv("particle.csv", pw);
}

void Pipeline::gap_demo() {
    in_stage("gap-demo", [&] {
        results.gap = product_sphere_gap_scan(cfg_.gap.a_sq_inv, cfg_.gap.lambda_max, cfg_.gap.witness_threshold);
    });
    const auto& g = *results.gap;
    CsvWriter w({"seed", "n", "a_sq_inv", "lambda_max", "value_count", "min_gap", "lower_l1", "lower_l2", "upper_l1",
                 "upper_l2", "witness_i", "witness_j", "witness_gap"});
    w.add(cfg_.master_seed).add(0).add(g.a_sq_inv).add(g.lambda_max).add(g.value_count).add(g.min_gap);
    w.add(g.lower_degrees[0]).add(g.lower_degrees[1]).add(g.upper_degrees[0]).add(g.upper_degrees[1]);
    if (g.witness) w.add(g.witness->i).add(g.witness->j).add(g.witness->gap);
    else w.add("").add("").add("");
    w.end_row();
    add_csv("gap_demo.csv", w);
}

bool wants(const ExperimentConfig& cfg, const std::string& stage) {
    return std::find(cfg.stages.begin(), cfg.stages.end(), stage) != cfg.stages.end();
}

json environment() {
    return json{{"compiler", __VERSION__},
                {"cplusplus", static_cast<long>(__cplusplus)},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)},
                {"hardware_threads", std::thread::hardware_concurrency()}};
}

}  // namespace

RunReport run(const ExperimentConfig& cfg, int threads, bool write_files) {
    RunReport rep;
    Pipeline p(cfg, threads);
    json timings = json::object();
    auto timed = [&](const std::string& name, auto&& f) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        timings[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    try {
        const bool ladder = wants(cfg, "spectra") || wants(cfg, "ops-check") || wants(cfg, "response-conv") ||
                            wants(cfg, "train-ladder");
        if (ladder) timed("ladder", [&] { p.foundation(); });
        if (wants(cfg, "spectra")) timed("spectra", [&] { write_spectra(p, cfg.ladder); });
        if (wants(cfg, "ops-check")) timed("ops-check", [&] { p.ops_check(); });
        if (wants(cfg, "response-conv")) timed("response-conv", [&] { p.response_conv(); });
        if (wants(cfg, "train-ladder")) timed("train-ladder", [&] { p.train_ladder_stage(); });
        if (wants(cfg, "gap-demo")) timed("gap-demo", [&] { p.gap_demo(); });
    } catch (const StageError& e) {
        rep.failed_stage = e.stage();
        rep.error = e.what();
    } catch (const std::exception& e) {
        rep.failed_stage = "setup";
        rep.error = e.what();
    }

    rep.results = std::move(p.results);
    rep.manifest = json{
        {"config", config_to_json(cfg)},
        {"threads", threads},
        {"seeding",
         "stream seed = mix_seed(master_seed, {stage, n, seed}); mix_seed folds each tag t into s = splitmix64(master) "
         "as s = splitmix64(s ^ splitmix64(t)). Stage tags: sample 1, aux points 2, dictionary 3, signals 4, "
         "teacher 5, held-out 6, checks 7. Samples use n = 0 so that levels of one seed are nested."},
        {"environment", environment()},
        {"wall_clock_seconds", timings},
        {"warnings", rep.results.warnings},
        {"status", rep.ok() ? "ok" : "failed"},
    };
    if (!rep.results.training.empty()) {
        json seeds = json::array();
        for (const auto& t : rep.results.training) {
            if (t.n == 0) {
                seeds.push_back({{"seed", t.seed}, {"zeta", t.zeta}, {"J_min", t.J_min}, {"support", t.support},
                                 {"label_scale", t.label_scale}, {"levels", json::array()}});
                continue;
            }
            std::vector<double> gaps;
            for (const auto& h : rep.results.heldout) {
                if (h.seed == t.seed && h.n == t.n) gaps.push_back(h.gap);
            }
            seeds.back()["levels"].push_back({{"n", t.n}, {"K", t.K}, {"J_min", t.J_min}, {"support", t.support},
                                              {"zeta", t.zeta}, {"heldout_gaps", gaps}});
        }
        rep.manifest["training"] = {
            {"caveat", "dictionary gap: minima are over signed weights on a fixed shared dictionary, not over all "
                       "measures"},
            {"seeds", seeds}};
    }
    if (!rep.ok()) {
        rep.manifest["failed_stage"] = rep.failed_stage;
        rep.manifest["error"] = rep.error;
    }

    std::vector<std::string> names;
    for (const auto& [name, text] : p.csvs) names.push_back(name);
    rep.manifest["csv"] = names;
    rep.csv_contents = p.csvs;
    if (write_files) {
        namespace fs = std::filesystem;
        fs::create_directories(cfg.output_dir);
        for (const auto& [name, text] : p.csvs) {
            const std::string path = (fs::path(cfg.output_dir) / name).string();
            std::ofstream out(path, std::ios::binary);
            out << text;
            rep.csv_paths.push_back(path);
        }
        std::ofstream m(fs::path(cfg.output_dir) / "manifest.json", std::ios::binary);
        m << rep.manifest.dump(2) << '\n';
    } else {
        rep.csv_paths = names;
    }
    return rep;
}

}  // namespace clab
