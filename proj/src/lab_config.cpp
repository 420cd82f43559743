#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "clab/lab.hpp"

namespace clab {

ManifoldModel ManifoldSpec::model() const {
    if (kind == "circle") return ManifoldModel::circle(radius);
    if (kind == "sphere") return ManifoldModel::sphere2(radius);
    if (kind == "torus") return ManifoldModel::flat_torus2(lengths[0], lengths[1]);
    throw ConfigError("manifold.kind", "unknown manifold '" + kind + "'");
}

namespace {

using nlohmann::json;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void allow_keys(const json& j, const std::string& path, const std::set<std::string>& keys) {
    if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!keys.contains(it.key())) throw ConfigError(join(path, it.key()), "unknown key");
    }
}

double get_number(const json& j, const std::string& path, const std::string& key, double def) {
    if (!j.contains(key)) return def;
    const auto& v = j.at(key);
    if (!v.is_number()) throw ConfigError(join(path, key), "expected a number");
    return v.get<double>();
}

long long get_integer(const json& j, const std::string& path, const std::string& key, long long def) {
    if (!j.contains(key)) return def;
    const auto& v = j.at(key);
    if (!v.is_number_integer()) throw ConfigError(join(path, key), "expected an integer");
    return v.get<long long>();
}

int get_int(const json& j, const std::string& path, const std::string& key, int def, int lo, int hi) {
    const long long v = get_integer(j, path, key, def);
    if (v < lo || v > hi) {
        throw ConfigError(join(path, key), "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return static_cast<int>(v);
}

std::string get_string(const json& j, const std::string& path, const std::string& key, const std::string& def) {
    if (!j.contains(key)) return def;
    const auto& v = j.at(key);
    if (!v.is_string()) throw ConfigError(join(path, key), "expected a string");
    return v.get<std::string>();
}

bool get_bool(const json& j, const std::string& path, const std::string& key, bool def) {
    if (!j.contains(key)) return def;
    const auto& v = j.at(key);
    if (!v.is_boolean()) throw ConfigError(join(path, key), "expected true or false");
    return v.get<bool>();
}

std::uint64_t get_u64(const json& j, const std::string& path, const std::string& key, std::uint64_t def) {
    if (!j.contains(key)) return def;
    const auto& v = j.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        throw ConfigError(join(path, key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

const json& array_at(const json& j, const std::string& path, const std::string& key) {
    const auto& v = j.at(key);
    if (!v.is_array() || v.empty()) throw ConfigError(join(path, key), "expected a non-empty array");
    return v;
}

template <class Parse>
auto wrap(const std::string& field, Parse&& parse) {
    try {
        return parse();
    } catch (const ConfigError&) {
        throw;
    } catch (const InvalidArgument& e) {
        throw ConfigError(field, e.what());
    }
}

void positive(double v, const std::string& field) {
    if (!(v > 0)) throw ConfigError(field, "must be positive");
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
    ExperimentConfig c;
    allow_keys(j, "",
               {"manifold", "ladder", "h_rule", "kernel", "alpha", "activation", "cutoff", "eigen_count",
                "aux_factor", "k_cont", "dictionary_band", "quadrature", "ops_draws", "seeds", "responses",
                "training", "gap_demo", "output", "master_seed", "stages"});

    if (j.contains("manifold")) {
        const auto& m = j.at("manifold");
        allow_keys(m, "manifold", {"kind", "radius", "lengths"});
        c.manifold.kind = get_string(m, "manifold", "kind", c.manifold.kind);
        c.manifold.radius = get_number(m, "manifold", "radius", c.manifold.radius);
        positive(c.manifold.radius, "manifold.radius");
        if (m.contains("lengths")) {
            const auto& l = m.at("lengths");
            if (!l.is_array() || l.size() != 2 || !l[0].is_number() || !l[1].is_number()) {
                throw ConfigError("manifold.lengths", "expected two numbers");
            }
            c.manifold.lengths = {l[0].get<double>(), l[1].get<double>()};
            positive(c.manifold.lengths[0], "manifold.lengths");
            positive(c.manifold.lengths[1], "manifold.lengths");
        }
        if (c.manifold.kind != "circle" && c.manifold.kind != "sphere" && c.manifold.kind != "torus") {
            throw ConfigError("manifold.kind", "expected circle, sphere or torus");
        }
    }

    if (j.contains("ladder")) {
        c.ladder.clear();
        for (const auto& v : array_at(j, "", "ladder")) {
            if (!v.is_number_integer() || v.get<long long>() < 8 || v.get<long long>() > 1000000) {
                throw ConfigError("ladder", "entries must be integers in [8, 1000000]");
            }
            c.ladder.push_back(v.get<int>());
        }
    }
    for (std::size_t i = 1; i < c.ladder.size(); ++i) {
        if (c.ladder[i] <= c.ladder[i - 1]) throw ConfigError("ladder", "must be strictly increasing");
    }

    if (j.contains("h_rule")) {
        const auto& h = j.at("h_rule");
        if (h.is_string()) {
            if (h.get<std::string>() != "sqrt_eps") throw ConfigError("h_rule", "expected \"sqrt_eps\" or a list of h");
        } else if (h.is_array()) {
            for (const auto& v : h) {
                if (!v.is_number() || !(v.get<double>() > 0)) throw ConfigError("h_rule", "h values must be positive");
                c.h_explicit.push_back(v.get<double>());
            }
            if (c.h_explicit.size() != c.ladder.size()) throw ConfigError("h_rule", "needs one h per ladder entry");
        } else {
            throw ConfigError("h_rule", "expected \"sqrt_eps\" or a list of h");
        }
    }

    c.kernel = get_string(j, "", "kernel", c.kernel);
    wrap("kernel", [&] { return parse_kernel_shape(c.kernel); });
    c.alpha = get_number(j, "", "alpha", c.alpha);
    if (!(c.alpha > 0 && c.alpha <= 1)) throw ConfigError("alpha", "must lie in (0, 1]");
    c.activation = get_string(j, "", "activation", c.activation);
    wrap("activation", [&] { return parse_activation(c.activation); });

    if (j.contains("cutoff")) {
        const auto& k = j.at("cutoff");
        allow_keys(k, "cutoff", {"fixed_k_tilde", "scale"});
        c.cutoff.fixed_k_tilde = get_int(k, "cutoff", "fixed_k_tilde", 0, 0, 100000);
        c.cutoff.scale = get_number(k, "cutoff", "scale", 1.0);
        positive(c.cutoff.scale, "cutoff.scale");
    }
    c.eigen_count = get_int(j, "", "eigen_count", c.eigen_count, 2, 10000);
    c.aux_factor = get_int(j, "", "aux_factor", c.aux_factor, 16, 4096);
    c.k_cont = get_int(j, "", "k_cont", c.k_cont, 0, 100000);
    c.dictionary_band = get_int(j, "", "dictionary_band", c.dictionary_band, 0, 100000);
    c.quadrature = get_int(j, "", "quadrature", c.quadrature, 64, 1 << 22);
    c.ops_draws = get_int(j, "", "ops_draws", c.ops_draws, 1, 1000000);

    if (j.contains("seeds")) {
        c.seeds.clear();
        for (const auto& v : array_at(j, "", "seeds")) {
            if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("seeds", "entries must be non-negative integers");
            c.seeds.push_back(v.get<std::uint64_t>());
        }
        std::set<std::uint64_t> uniq(c.seeds.begin(), c.seeds.end());
        if (uniq.size() != c.seeds.size()) throw ConfigError("seeds", "entries must be distinct");
    }

    if (j.contains("responses")) {
        const auto& r = j.at("responses");
        allow_keys(r, "responses", {"dictionary", "signals", "decay", "restrictions"});
        c.responses.dictionary = get_int(r, "responses", "dictionary", c.responses.dictionary, 1, 1000000);
        c.responses.signals = get_int(r, "responses", "signals", c.responses.signals, 1, 1000000);
        c.responses.decay = get_number(r, "responses", "decay", c.responses.decay);
        if (r.contains("restrictions")) {
            c.responses.restrictions.clear();
            for (const auto& v : array_at(r, "responses", "restrictions")) {
                if (!v.is_string()) throw ConfigError("responses.restrictions", "expected \"P\" or \"S\"");
                c.responses.restrictions.push_back(
                    wrap("responses.restrictions", [&] { return parse_restriction(v.get<std::string>()); }));
            }
        }
    }

    if (j.contains("training")) {
        const auto& t = j.at("training");
        const std::string p = "training";
        allow_keys(t, p,
                   {"l", "dictionary", "zeta_rel", "heldout", "teacher_atoms", "decay", "restriction", "loss",
                    "measure", "particle", "particle_steps"});
        auto& s = c.training;
        s.l = get_int(t, p, "l", s.l, 1, 100000);
        s.dictionary = get_int(t, p, "dictionary", s.dictionary, 1, 1000000);
        s.zeta_rel = get_number(t, p, "zeta_rel", s.zeta_rel);
        if (!(s.zeta_rel >= 0)) throw ConfigError("training.zeta_rel", "must be >= 0");
        s.heldout = get_int(t, p, "heldout", s.heldout, 1, 100000);
        s.teacher_atoms = get_int(t, p, "teacher_atoms", s.teacher_atoms, 0, 1000000);
        if (s.teacher_atoms > s.dictionary) throw ConfigError("training.teacher_atoms", "exceeds the dictionary size");
        s.decay = get_number(t, p, "decay", s.decay);
        if (t.contains("restriction")) {
            const std::string r = get_string(t, p, "restriction", "P");
            s.restriction = wrap("training.restriction", [&] { return parse_restriction(r); });
        }
        if (t.contains("loss")) {
            const std::string l = get_string(t, p, "loss", "squared");
            s.loss = wrap("training.loss", [&] { return parse_loss(l); });
        }
        if (t.contains("measure")) {
            const std::string m = get_string(t, p, "measure", "signed");
            s.measure = wrap("training.measure", [&] { return parse_measure_class(m); });
        }
        s.particle = get_bool(t, p, "particle", s.particle);
        s.particle_steps = get_int(t, p, "particle_steps", s.particle_steps, 1, 1000000);
    }

    if (j.contains("gap_demo")) {
        const auto& g = j.at("gap_demo");
        allow_keys(g, "gap_demo", {"a_sq_inv", "lambda_max", "witness_threshold"});
        c.gap.a_sq_inv = get_number(g, "gap_demo", "a_sq_inv", c.gap.a_sq_inv);
        c.gap.lambda_max = get_number(g, "gap_demo", "lambda_max", c.gap.lambda_max);
        c.gap.witness_threshold = get_number(g, "gap_demo", "witness_threshold", c.gap.witness_threshold);
        positive(c.gap.a_sq_inv, "gap_demo.a_sq_inv");
        positive(c.gap.lambda_max, "gap_demo.lambda_max");
        positive(c.gap.witness_threshold, "gap_demo.witness_threshold");
    }

    c.output_dir = get_string(j, "", "output", c.output_dir);
    if (c.output_dir.empty()) throw ConfigError("output", "must not be empty");
    c.master_seed = get_u64(j, "", "master_seed", c.master_seed);

    if (j.contains("stages")) {
        c.stages.clear();
        for (const auto& v : array_at(j, "", "stages")) {
            const std::string s = v.is_string() ? v.get<std::string>() : "";
            if (std::find(kAllStages.begin(), kAllStages.end(), s) == kAllStages.end()) {
                throw ConfigError("stages", "unknown stage '" + s + "'");
            }
            c.stages.push_back(s);
        }
    }
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", "cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("<root>", std::string("not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

json config_to_json(const ExperimentConfig& c) {
    std::vector<std::string> restrictions;
    for (auto r : c.responses.restrictions) restrictions.push_back(restriction_name(r));
    json h_rule = c.h_explicit.empty() ? json("sqrt_eps") : json(c.h_explicit);
    return json{
        {"manifold", {{"kind", c.manifold.kind}, {"radius", c.manifold.radius}, {"lengths", c.manifold.lengths}}},
        {"ladder", c.ladder},
        {"h_rule", h_rule},
        {"kernel", c.kernel},
        {"alpha", c.alpha},
        {"activation", c.activation},
        {"cutoff", {{"fixed_k_tilde", c.cutoff.fixed_k_tilde}, {"scale", c.cutoff.scale}}},
        {"eigen_count", c.eigen_count},
        {"aux_factor", c.aux_factor},
        {"k_cont", c.k_cont},
        {"dictionary_band", c.dictionary_band},
        {"quadrature", c.quadrature},
        {"ops_draws", c.ops_draws},
        {"seeds", c.seeds},
        {"responses",
         {{"dictionary", c.responses.dictionary},
          {"signals", c.responses.signals},
          {"decay", c.responses.decay},
          {"restrictions", restrictions}}},
        {"training",
         {{"l", c.training.l},
          {"dictionary", c.training.dictionary},
          {"zeta_rel", c.training.zeta_rel},
          {"heldout", c.training.heldout},
          {"teacher_atoms", c.training.teacher_atoms},
          {"decay", c.training.decay},
          {"restriction", restriction_name(c.training.restriction)},
          {"loss", c.training.loss == Loss::Squared ? "squared" : "logistic"},
          {"measure", c.training.measure == MeasureClass::Signed ? "signed" : "probability"},
          {"particle", c.training.particle},
          {"particle_steps", c.training.particle_steps}}},
        {"gap_demo",
         {{"a_sq_inv", c.gap.a_sq_inv}, {"lambda_max", c.gap.lambda_max}, {"witness_threshold", c.gap.witness_threshold}}},
        {"output", c.output_dir},
        {"master_seed", c.master_seed},
        {"stages", c.stages},
    };
}

std::string config_schema() {
    return R"(Config file: one JSON object; every key is optional.
  manifold        {"kind": "circle"|"sphere"|"torus", "radius": 1.0, "lengths": [L1, L2]}
  ladder          strictly increasing sample sizes            [250, 500, 1000, 2000]
  h_rule          "sqrt_eps" (h_n = sqrt(eps_hat_n)) or one h per ladder entry
  kernel          "indicator" | "triangle"                    "indicator"
  alpha           Sobolev exponent in (0, 1]                  0.5
  activation      "tanh" | "relu" | "softplus"                "tanh"
  cutoff          {"fixed_k_tilde": k (0 = formula), "scale": s}
  eigen_count     eigenvalues reported per level              11
  aux_factor      aux points per sample point (>= 16)         16
  k_cont          continuum truncation (0 = block end of 4 K(n_max))
  dictionary_band modes carried by dictionary atoms (0 = K at the smallest n)
  quadrature      continuum quadrature size                   2048
  ops_draws       random draws per operator identity          100
  seeds           repetition ids; each gets its own nested sample sequence   [0]
  responses       {"dictionary": 64, "signals": 8, "decay": 1.0, "restrictions": ["P", "S"]}
  training        {"l": 16, "dictionary": 256, "zeta_rel": 1e-3, "heldout": 8, "teacher_atoms": 4,
                   "decay": 1.0, "restriction": "S"|"P", "loss": "squared"|"logistic",
                   "measure": "signed"|"probability", "particle": false, "particle_steps": 100}
  gap_demo        {"a_sq_inv": 2, "lambda_max": 10000, "witness_threshold": 0.1}
  output          output directory                            "out"
  master_seed     unsigned 64-bit seed                        0
  stages          subset of spectra, ops-check, response-conv, train-ladder, gap-demo
)";
}

int default_threads() {
    if (const char* env = std::getenv("CONSISTENCY_LAB_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1 && v <= 1024) return static_cast<int>(v);
    }
    return 1;
}

}  // namespace clab
