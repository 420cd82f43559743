#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "clab/erm.hpp"
#include "clab/errors.hpp"
#include "clab/gcnn.hpp"
#include "clab/manifold.hpp"
#include "clab/spectral_ops.hpp"
#include "clab/spectra.hpp"

namespace clab {

/// Malformed experiment configuration; field() names the offending key path.
class ConfigError : public InvalidArgument {
public:
    ConfigError(std::string field, const std::string& message)
        : InvalidArgument(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct ManifoldSpec {
    std::string kind = "circle";  // circle | sphere | torus
    double radius = 1.0;
    std::array<double, 2> lengths{1.0, 1.0};

    ManifoldModel model() const;
};

struct ResponseSpec {
    int dictionary = 64;
    int signals = 8;
    double decay = 1.0;
    std::vector<Restriction> restrictions{Restriction::Cellwise, Restriction::Spectral};
};

struct TrainingSpec {
    int l = 16;
    int dictionary = 256;
    double zeta_rel = 1e-3;
    int heldout = 8;
    int teacher_atoms = 4;
    double decay = 1.0;
    Restriction restriction = Restriction::Spectral;
    Loss loss = Loss::Squared;
    MeasureClass measure = MeasureClass::Signed;
    bool particle = false;
    int particle_steps = 100;
};

struct GapDemoSpec {
    double a_sq_inv = 2.0;
    double lambda_max = 1e4;
    double witness_threshold = 0.1;
};

inline const std::vector<std::string> kAllStages{"spectra", "ops-check", "response-conv", "train-ladder", "gap-demo"};

struct ExperimentConfig {
    ManifoldSpec manifold;
    std::vector<int> ladder{250, 500, 1000, 2000};
    std::vector<double> h_explicit;  // empty: h_n = sqrt(eps_hat_n)
    std::string kernel = "indicator";
    double alpha = 0.5;
    std::string activation = "tanh";
    CutoffOptions cutoff;
    int eigen_count = 11;
    int aux_factor = 16;
    int k_cont = 0;           // 0: block end of 4 K(n_max)
    int dictionary_band = 0;  // 0: K at the smallest n
    int quadrature = 2048;
    int ops_draws = 100;
    std::vector<std::uint64_t> seeds{0};  // repetitions
    ResponseSpec responses;
    TrainingSpec training;
    GapDemoSpec gap;
    std::string output_dir = "out";
    std::uint64_t master_seed = 0;
    std::vector<std::string> stages = kAllStages;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// Human-readable description of every config key.
std::string config_schema();

// ---- result tables (every row carries n and the repetition seed) -----------

struct LadderRow {
    std::uint64_t seed = 0;
    int n = 0;
    double eps_hat = 0;
    double h = 0;
    bool h_admissible = false;
    int k_tilde = 0;
    int K = 0;
    int components = 0;
    std::string solver;
    int iterations = 0;
    double max_residual = 0;
    double median_rel_err = 0;  // over k = 2..eigen_count (1-based)
    double median_ratio = 0;    // rel_err / delta over the same k
    double delta_phi = 0;
    double min_singular_value = 0;
    int straddles = 0;
    double basis_invariance = 0;  // change of aligned basis and delta_phi under re-randomized clusters
    double transport_lower = 0;
    double transport_upper = 0;
    double max_cell_diam = 0;
};

struct SpectraRow {
    std::uint64_t seed = 0;
    int n = 0;
    EigenvalueRow row;
};

struct AlignmentRow {
    std::uint64_t seed = 0;
    int n = 0;
    int k = 0;  // 1-based
    double delta_phi = 0;
};

struct OpsRow {
    std::uint64_t seed = 0;
    int n = 0;
    std::string check;
    double value = 0;
};

struct ResponseRow {
    std::uint64_t seed = 0;
    int n = 0;
    std::string restriction;
    int signal = 0;
    double norm_u = 0;
    double sup_error = 0;
    double first_atom_error = 0;
};

struct HighFrequencyRow {
    std::uint64_t seed = 0;
    int atom = 0;
    int k = 0;  // 1-based
    double deviation = 0;  // |psi(phi_k, theta) - <a, sigma(c)>|
    double bound = 0;      // ||a|| L |b_k|
};

struct TrainRow {
    std::uint64_t seed = 0;
    int n = 0;  // 0 for the continuum problem
    int K = 0;
    double zeta = 0;
    double J_min = 0;
    double J_cont_min = 0;
    double J_gap = 0;
    int support = 0;
    double certificate = 0;
    double heldout_gap_max = 0;
    double label_scale = 0;
};

struct HeldoutRow {
    std::uint64_t seed = 0;
    int n = 0;
    int signal = 0;
    double gap = 0;
};

struct ParticleRow {
    std::uint64_t seed = 0;
    int n = 0;
    int step = 0;
    double objective = 0;
};

struct LabResults {
    std::vector<LadderRow> ladder;
    std::vector<SpectraRow> spectra;
    std::vector<AlignmentRow> alignment;
    std::vector<OpsRow> ops;
    std::vector<ResponseRow> responses;
    std::vector<HighFrequencyRow> high_frequency;
    std::vector<TrainRow> training;
    std::vector<HeldoutRow> heldout;
    std::vector<ParticleRow> particle;
    std::optional<ProductSphereGapReport> gap;
    std::vector<std::string> warnings;
};

struct RunReport {
    LabResults results;
    nlohmann::json manifest;
    std::vector<std::string> csv_paths;
    std::vector<std::pair<std::string, std::string>> csv_contents;  // (file name, bytes)
    std::string failed_stage;  // empty on success
    std::string error;
    bool ok() const { return failed_stage.empty(); }
};

/// Runs the configured stages with `threads` workers and writes CSVs and
/// manifest.json into cfg.output_dir (skipped when write_files is false).
/// Stage failures are reported in the result, not thrown.
RunReport run(const ExperimentConfig& cfg, int threads, bool write_files = true);

/// Thread count from CONSISTENCY_LAB_THREADS, or 1.
int default_threads();

}  // namespace clab
