#pragma once

// Declarative experiment runner behind the `spce` command-line tool.
//
// A config document (JSON) names a model, its parameters, the setting pairs,
// sample sizes, a pairing policy and a test battery. Running it produces the
// contents of every output file in memory first; writing is a separate step,
// so byte-level determinism can be checked without touching the disk.

#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "spce/classical.hpp"
#include "spce/clpm.hpp"
#include "spce/inference.hpp"
#include "spce/lrhvm.hpp"
#include "spce/pairing.hpp"
#include "spce/parallel.hpp"
#include "spce/quantum.hpp"
#include "spce/rng.hpp"
#include "spce/shvm.hpp"
#include "spce/switching.hpp"

namespace spce::experiment {

using json = nlohmann::json;

inline const std::vector<std::string>& model_names() {
    static const std::vector<std::string> names{
        "quantum_oracle", "lrhvm",    "shvm",    "clpm", "clpm_marginalized",
        "switching",      "charlie",  "bertrand", "urn"};
    return names;
}

inline const std::vector<std::string>& test_names() {
    static const std::vector<std::string> names{"no_signalling", "purity", "fine_structure"};
    return names;
}

struct ConfigError {
    std::string path;
    std::string message;
};

struct PairingConfig {
    enum class Kind { model_default, emission, window, shift, random };
    Kind kind = Kind::model_default;
    WindowPolicy window;
    std::size_t shift = 1;
    std::size_t random_pairs = 0;
};

struct ExperimentConfig {
    std::string model;
    json model_params = json::object();
    std::vector<std::array<double, 2>> settings;
    std::uint64_t emissions = 0;
    std::uint64_t seed = 0;
    PairingConfig pairing;
    std::optional<ZeroPolicy> zero_policy;
    std::vector<std::string> tests;
    double alpha = default_alpha;
    std::size_t purity_block = 1000;
    std::string output_dir = "spce-out";
    bool write_csv = true;
    bool write_json = true;
    /// The validated document with output-only fields removed; hashed.
    json canonical;
};

struct ValidationResult {
    std::optional<ExperimentConfig> config;
    std::vector<ConfigError> errors;
    bool ok() const { return errors.empty(); }
};

// ---------------------------------------------------------------------------
// Formatting

/// 12 significant digits, shortest form, "-0" normalised to "0".
inline std::string fmt(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    std::string s(buf);
    return s == "-0" ? "0" : s;
}

/// Rounds to 12 significant digits so JSON dumps stay short and stable.
inline json num(double v) {
    if (!std::isfinite(v)) {
        return nullptr;
    }
    return std::stod(fmt(v));
}

inline std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

inline std::string config_hash(const json& canonical) {
    return hex64(spce::detail::mix64(spce::detail::fnv1a(canonical.dump())));
}

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline bool is_angle_model(const std::string& m) {
    return m == "quantum_oracle" || m == "clpm" || m == "clpm_marginalized" || m == "switching";
}

inline bool is_index_model(const std::string& m) { return m == "lrhvm" || m == "shvm"; }

inline std::vector<std::array<double, 2>> default_settings(const std::string& model) {
    const double pi = std::numbers::pi;
    if (is_angle_model(model)) {
        return {{0.0, pi / 8}, {0.0, 3 * pi / 8}, {pi / 4, pi / 8}, {pi / 4, 3 * pi / 8}};
    }
    if (is_index_model(model)) {
        return {{1, 1}, {1, 2}, {2, 1}, {2, 2}};
    }
    return {};
}

inline PhotonKernelParams photon_params_from(const json& source) {
    PhotonKernelParams p;
    p.time_scale = source.value("time_scale", p.time_scale);
    p.delay_exponent = source.value("delay_exponent", p.delay_exponent);
    p.threshold_spread = source.value("threshold_spread", p.threshold_spread);
    p.jitter_scale = source.value("jitter_scale", p.jitter_scale);
    p.emission_spacing = source.value("emission_spacing", p.emission_spacing);
    p.window = source.value("window", p.window);
    return p;
}

inline void validate_model_params(const ExperimentConfig& c, std::vector<ConfigError>& errors) {
    const json& mp = c.model_params;
    auto err = [&](const std::string& field, const std::string& msg) {
        errors.push_back({"model_params." + field, msg});
    };
    auto positive_int = [&](const char* field, bool required) {
        if (!mp.contains(field)) {
            if (required) {
                err(field, "missing");
            }
            return;
        }
        if (!mp[field].is_number_integer() || mp[field].get<long long>() < 0) {
            err(field, "must be a non-negative integer");
        }
    };
    if (c.model == "clpm" || c.model == "clpm_marginalized") {
        if (!mp.contains("source") || !mp["source"].is_object()) {
            err("source", "clpm models need a source kernel table");
        } else {
            try {
                photon_params_from(mp["source"]).validate();
            } catch (const std::exception& e) {
                err("source", e.what());
            }
        }
        if (c.model == "clpm_marginalized") {
            if (!mp.contains("k") || !mp["k"].is_number_integer() || mp["k"].get<long long>() < 1) {
                err("k", "must be an integer >= 1");
            }
        }
    } else if (c.model == "quantum_oracle") {
        if (mp.contains("state") && mp["state"] != "singlet") {
            err("state", "only \"singlet\" is supported");
        }
        if (mp.contains("smearing") &&
            (!mp["smearing"].is_number() || mp["smearing"].get<double>() < 0.0)) {
            err("smearing", "must be a non-negative number");
        }
    } else if (c.model == "lrhvm") {
        const std::string alphabet = mp.value("alphabet", std::string("binary"));
        if (alphabet != "binary" && alphabet != "ternary") {
            err("alphabet", "must be \"binary\" or \"ternary\"");
        }
        if (mp.contains("probabilities")) {
            try {
                JointOutcomeTable(alphabet == "ternary" ? OutcomeAlphabet::ternary
                                                        : OutcomeAlphabet::binary,
                                  mp["probabilities"].get<std::vector<double>>());
            } catch (const std::exception& e) {
                err("probabilities", e.what());
            }
        } else {
            const std::string table = mp.value("table", std::string("random"));
            if (table != "random" && table != "uniform") {
                err("table", "must be \"random\" or \"uniform\" (or give probabilities)");
            }
        }
    } else if (c.model == "shvm") {
        if (mp.contains("components")) {
            if (!mp["components"].is_array() || mp["components"].empty()) {
                err("components", "must be a non-empty list");
            } else {
                for (std::size_t i = 0; i < mp["components"].size(); ++i) {
                    const auto& comp = mp["components"][i];
                    const std::string at = "components[" + std::to_string(i) + "]";
                    if (!comp.contains("weight") || !comp["weight"].is_number() ||
                        comp["weight"].get<double>() <= 0.0) {
                        err(at + ".weight", "must be a positive number");
                    }
                    for (const char* side : {"alice", "bob"}) {
                        if (!comp.contains(side) || !comp[side].is_array() ||
                            comp[side].size() != 2) {
                            err(at + "." + side, "must list two kernel means");
                            continue;
                        }
                        for (const auto& m : comp[side]) {
                            if (!m.is_number() || std::abs(m.get<double>()) > 1.0) {
                                err(at + "." + side, "kernel means must lie in [-1, 1]");
                            }
                        }
                    }
                }
            }
        } else {
            positive_int("labels", false);
        }
        positive_int("k_repeats", false);
        if (mp.contains("k_repeats") && mp["k_repeats"].is_number_integer() &&
            mp["k_repeats"].get<long long>() < 1) {
            err("k_repeats", "must be >= 1");
        }
    } else if (c.model == "switching") {
        if (mp.contains("targets") && mp["targets"] != "singlet" &&
            mp["targets"] != "anticorrelated") {
            err("targets", "must be \"singlet\" or \"anticorrelated\"");
        }
        if (mp.contains("setting_weights")) {
            const auto& w = mp["setting_weights"];
            if (!w.is_array() || w.size() != 4) {
                err("setting_weights", "must list four weights (11, 12, 21, 22)");
            }
        }
    } else if (c.model == "bertrand") {
        if (mp.contains("method")) {
            try {
                (void)parse_bertrand_method(mp["method"].get<std::string>());
            } catch (const std::exception& e) {
                err("method", e.what());
            }
        }
    } else if (c.model == "urn") {
        for (const char* f : {"red", "black", "draws"}) {
            positive_int(f, true);
        }
        if (errors.empty()) {
            try {
                UrnSpec{mp["red"].get<int>(), mp["black"].get<int>(), mp["draws"].get<int>(),
                        mp.value("with_replacement", true)}
                    .validate();
            } catch (const std::exception& e) {
                err("draws", e.what());
            }
        }
    }
}

} // namespace detail

/// Checks every field and cross-field constraint; errors carry field paths.
inline ValidationResult validate_config(const json& doc) {
    ValidationResult out;
    auto& errors = out.errors;
    if (!doc.is_object()) {
        errors.push_back({"", "config must be a JSON object"});
        return out;
    }
    static const std::vector<std::string> known{
        "model", "model_params", "settings", "emissions", "seed", "pairing",
        "estimator_zero_policy", "tests", "alpha", "purity_block", "output_dir", "formats"};
    for (const auto& [key, value] : doc.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            errors.push_back({key, "unknown field"});
        }
    }

    ExperimentConfig c;
    if (!doc.contains("model") || !doc["model"].is_string()) {
        errors.push_back({"model", "missing model name"});
    } else {
        c.model = doc["model"].get<std::string>();
        const auto& names = model_names();
        if (std::find(names.begin(), names.end(), c.model) == names.end()) {
            errors.push_back({"model", "unknown model \"" + c.model + "\""});
        }
    }
    if (doc.contains("model_params")) {
        if (!doc["model_params"].is_object()) {
            errors.push_back({"model_params", "must be an object"});
        } else {
            c.model_params = doc["model_params"];
        }
    }

    if (!doc.contains("emissions")) {
        errors.push_back({"emissions", "missing"});
    } else if (!doc["emissions"].is_number_integer() || doc["emissions"].get<long long>() < 1) {
        errors.push_back({"emissions", "emissions must be ≥ 1"});
    } else {
        c.emissions = doc["emissions"].get<std::uint64_t>();
    }

    if (doc.contains("seed")) {
        if (!doc["seed"].is_number_integer()) {
            errors.push_back({"seed", "must be an integer"});
        } else {
            c.seed = doc["seed"].is_number_unsigned() ? doc["seed"].get<std::uint64_t>()
                                                      : static_cast<std::uint64_t>(
                                                            doc["seed"].get<std::int64_t>());
        }
    }

    if (doc.contains("settings")) {
        const auto& s = doc["settings"];
        bool good = s.is_array() && !s.empty();
        if (good) {
            for (const auto& p : s) {
                good = good && p.is_array() && p.size() == 2 && p[0].is_number() &&
                       p[1].is_number();
            }
        }
        if (!good) {
            errors.push_back({"settings", "must be a non-empty list of [alice, bob] pairs"});
        } else {
            for (const auto& p : s) {
                c.settings.push_back({p[0].get<double>(), p[1].get<double>()});
            }
        }
    } else {
        c.settings = detail::default_settings(c.model);
    }
    if (detail::is_index_model(c.model)) {
        for (const auto& p : c.settings) {
            for (double v : p) {
                if (v != 1.0 && v != 2.0) {
                    errors.push_back({"settings", "index models take setting indices 1 or 2"});
                    break;
                }
            }
        }
    }
    if (c.model == "switching" && c.settings.size() != 4) {
        errors.push_back({"settings", "switching needs the four CHSH setting pairs"});
    }

    if (doc.contains("pairing")) {
        const auto& p = doc["pairing"];
        if (!p.is_object()) {
            errors.push_back({"pairing", "must be an object"});
        } else if (p.contains("rule")) {
            c.pairing.kind = PairingConfig::Kind::window;
            try {
                c.pairing.window.rule = parse_window_rule(p["rule"].get<std::string>());
            } catch (const std::exception& e) {
                errors.push_back({"pairing.rule", e.what()});
            }
            if (!p.contains("width") || !p["width"].is_number() || p["width"].get<double>() <= 0.0) {
                errors.push_back({"pairing.width", "window width must be a positive number"});
            } else {
                c.pairing.window.width = p["width"].get<double>();
            }
        } else if (p.contains("shift")) {
            c.pairing.kind = PairingConfig::Kind::shift;
            if (!p["shift"].is_number_integer() || p["shift"].get<long long>() < 1) {
                errors.push_back({"pairing.shift", "shift must be an integer >= 1"});
            } else {
                c.pairing.shift = p["shift"].get<std::size_t>();
            }
        } else if (p.contains("random")) {
            c.pairing.kind = PairingConfig::Kind::random;
            if (!p["random"].is_number_integer() || p["random"].get<long long>() < 1) {
                errors.push_back({"pairing.random", "number of random pairs must be >= 1"});
            } else {
                c.pairing.random_pairs = p["random"].get<std::size_t>();
            }
        } else if (p.value("emission", false)) {
            c.pairing.kind = PairingConfig::Kind::emission;
        } else {
            errors.push_back({"pairing", "expected one of rule/width, shift, random, emission"});
        }
    }

    if (doc.contains("estimator_zero_policy")) {
        try {
            c.zero_policy = parse_zero_policy(doc["estimator_zero_policy"].get<std::string>());
        } catch (const std::exception&) {
            errors.push_back({"estimator_zero_policy", "must be \"include\" or \"coincident_only\""});
        }
    }

    if (doc.contains("tests")) {
        if (!doc["tests"].is_array()) {
            errors.push_back({"tests", "must be a list of test names"});
        } else {
            for (const auto& t : doc["tests"]) {
                const auto& names = test_names();
                if (!t.is_string() || std::find(names.begin(), names.end(), t) == names.end()) {
                    errors.push_back({"tests", "unknown test " + t.dump()});
                } else {
                    c.tests.push_back(t.get<std::string>());
                }
            }
        }
    }
    const bool event_model = c.model == "quantum_oracle" || c.model == "lrhvm" ||
                             c.model == "clpm" || c.model == "charlie";
    for (const auto& t : c.tests) {
        if (!event_model) {
            errors.push_back({"tests", "test \"" + t + "\" needs an event-generating model"});
        } else if (t == "no_signalling" && c.settings.size() < 4) {
            errors.push_back({"tests", "no_signalling needs two remote settings per local setting"});
        }
    }

    if (doc.contains("alpha")) {
        if (!doc["alpha"].is_number() || doc["alpha"].get<double>() <= 0.0 ||
            doc["alpha"].get<double>() >= 1.0) {
            errors.push_back({"alpha", "must lie in (0, 1)"});
        } else {
            c.alpha = doc["alpha"].get<double>();
        }
    }
    if (doc.contains("purity_block")) {
        if (!doc["purity_block"].is_number_integer() || doc["purity_block"].get<long long>() < 1) {
            errors.push_back({"purity_block", "must be an integer >= 1"});
        } else {
            c.purity_block = doc["purity_block"].get<std::size_t>();
        }
    }
    if (doc.contains("output_dir")) {
        if (!doc["output_dir"].is_string()) {
            errors.push_back({"output_dir", "must be a path string"});
        } else {
            c.output_dir = doc["output_dir"].get<std::string>();
        }
    }
    if (doc.contains("formats")) {
        c.write_csv = false;
        c.write_json = false;
        if (!doc["formats"].is_array() || doc["formats"].empty()) {
            errors.push_back({"formats", "must be a non-empty list of \"csv\" / \"json\""});
        } else {
            for (const auto& f : doc["formats"]) {
                if (f == "csv") {
                    c.write_csv = true;
                } else if (f == "json") {
                    c.write_json = true;
                } else {
                    errors.push_back({"formats", "unknown format " + f.dump()});
                }
            }
        }
    }

    if (!c.model.empty()) {
        detail::validate_model_params(c, errors);
    }

    if (errors.empty()) {
        c.canonical = doc;
        c.canonical.erase("output_dir");
        c.canonical.erase("formats");
        out.config = std::move(c);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Running

struct ExperimentOutput {
    std::map<std::string, std::string> files;  ///< file name -> contents
    json report;
};

namespace detail {

struct SettingRun {
    SettingPair setting;
    EventStreams events;
    std::optional<PairedSample> pairs;
    CorrelationEstimate estimate;
    bool has_estimate = false;
    json extra = json::object();
    std::string side_file_name;
    std::string side_file;
};

inline std::vector<SettingPair> index_settings(const ExperimentConfig& c) {
    std::vector<double> alice_values;
    std::vector<double> bob_values;
    std::vector<SettingPair> out;
    auto index_of = [](std::vector<double>& seen, double v) {
        for (std::size_t k = 0; k < seen.size(); ++k) {
            if (seen[k] == v) {
                return static_cast<int>(k + 1);
            }
        }
        seen.push_back(v);
        return static_cast<int>(seen.size());
    };
    for (const auto& p : c.settings) {
        SettingPair s;
        if (is_index_model(c.model)) {
            s.alice = static_cast<int>(p[0]);
            s.bob = static_cast<int>(p[1]);
        } else {
            s.alice = index_of(alice_values, p[0]);
            s.bob = index_of(bob_values, p[1]);
        }
        s.alice_angle = p[0];
        s.bob_angle = p[1];
        out.push_back(s);
    }
    return out;
}

inline std::string run_label(const std::string& model, const SettingPair& s) {
    return model + "/setting-" + std::to_string(s.alice) + "-" + std::to_string(s.bob);
}

inline PairedSample apply_pairing(const ExperimentConfig& c, const EventStreams& ev,
                                  PairingConfig::Kind fallback, const WindowPolicy& fallback_window,
                                  RngStream& rng) {
    auto kind = c.pairing.kind == PairingConfig::Kind::model_default ? fallback : c.pairing.kind;
    switch (kind) {
    case PairingConfig::Kind::window:
        return pair_window(ev.alice, ev.bob,
                           c.pairing.kind == PairingConfig::Kind::window ? c.pairing.window
                                                                         : fallback_window);
    case PairingConfig::Kind::shift:
        return pair_shift(series_from_events(ev.alice), series_from_events(ev.bob),
                          c.pairing.shift);
    case PairingConfig::Kind::random: {
        const std::size_t n = c.pairing.random_pairs > 0 ? c.pairing.random_pairs : ev.alice.size();
        return pair_random(series_from_events(ev.alice), series_from_events(ev.bob), n, rng);
    }
    case PairingConfig::Kind::emission:
    case PairingConfig::Kind::model_default:
        break;
    }
    return pair_by_trial(ev.alice, ev.bob);
}

inline JointOutcomeTable lrhvm_table(const ExperimentConfig& c) {
    const auto& mp = c.model_params;
    const auto alphabet = mp.value("alphabet", std::string("binary")) == "ternary"
                              ? OutcomeAlphabet::ternary
                              : OutcomeAlphabet::binary;
    if (mp.contains("probabilities")) {
        return {alphabet, mp["probabilities"].get<std::vector<double>>()};
    }
    if (mp.value("table", std::string("random")) == "uniform") {
        return JointOutcomeTable::uniform(alphabet);
    }
    auto rng = derive_stream(c.seed, "lrhvm/table");
    return JointOutcomeTable::random(alphabet, rng);
}

inline ShvmSpec shvm_spec(const ExperimentConfig& c) {
    const auto& mp = c.model_params;
    if (!mp.contains("components")) {
        auto rng = derive_stream(c.seed, "shvm/spec");
        return random_shvm_spec(rng, mp.value("labels", std::size_t{8}));
    }
    std::vector<ShvmLabel> labels;
    std::vector<std::size_t> idx;
    std::vector<double> weights;
    ShvmSpec::KernelMap ka;
    ShvmSpec::KernelMap kb;
    for (std::size_t l = 0; l < mp["components"].size(); ++l) {
        const auto& comp = mp["components"][l];
        const int id = static_cast<int>(l);
        labels.push_back({id, id});
        idx.push_back(l);
        weights.push_back(comp["weight"].get<double>());
        for (int s = 1; s <= 2; ++s) {
            ka.emplace(std::pair{s, id}, kernel_with_mean(comp["alice"][s - 1].get<double>()));
            kb.emplace(std::pair{s, id}, kernel_with_mean(comp["bob"][s - 1].get<double>()));
        }
    }
    return ShvmSpec(std::move(labels),
                    DiscreteDistribution<std::size_t>::normalized(std::move(idx), std::move(weights)),
                    std::move(ka), std::move(kb));
}

/// Born-rule event sampling for the singlet, with optional setting smearing.
inline EventStreams sample_quantum_events(const quantum::DensityMatrix& rho, const SettingPair& s,
                                          double smearing, std::uint64_t n, RngStream& rng) {
    const auto oa = quantum::smeared_polarization_observable(s.alice_angle, smearing);
    const auto ob = quantum::smeared_polarization_observable(s.bob_angle, smearing);
    const double ea = quantum::expectation(rho, quantum::alice_local(oa));
    const double eb = quantum::expectation(rho, quantum::bob_local(ob));
    const double eab = quantum::expectation(rho, quantum::joint_observable(oa, ob));
    std::vector<double> w;
    for (int a : {+1, -1}) {
        for (int b : {+1, -1}) {
            w.push_back(std::max(0.0, 0.25 * (1.0 + a * ea + b * eb + a * b * eab)));
        }
    }
    const auto cells = DiscreteDistribution<int>::normalized({0, 1, 2, 3}, std::move(w));
    EventStreams ev;
    for (std::uint64_t t = 0; t < n; ++t) {
        const int cell = cells.sample(rng);
        ev.alice.push_back({t, s.alice, static_cast<double>(t), cell < 2 ? +1 : -1});
        ev.bob.push_back({t, s.bob, static_cast<double>(t), cell % 2 == 0 ? +1 : -1});
    }
    return ev;
}

inline SettingRun run_setting(const ExperimentConfig& c, const SettingPair& s) {
    SettingRun run;
    run.setting = s;
    auto rng = derive_stream(c.seed, run_label(c.model, s));
    auto pair_rng = rng.child("pairing");
    const auto& mp = c.model_params;
    const ZeroPolicy default_zero = c.model == "clpm" ? ZeroPolicy::coincident_only
                                                      : ZeroPolicy::include;
    const ZeroPolicy zero = c.zero_policy.value_or(default_zero);

    if (c.model == "quantum_oracle") {
        const double smearing = mp.value("smearing", 0.0);
        const auto rho = quantum::singlet();
        run.events = sample_quantum_events(rho, s, smearing, c.emissions, rng);
        const auto oa = quantum::smeared_polarization_observable(s.alice_angle, smearing);
        const auto ob = quantum::smeared_polarization_observable(s.bob_angle, smearing);
        run.estimate = {quantum::expectation(rho, quantum::joint_observable(oa, ob)), 0.0, 0};
        run.has_estimate = true;
        run.extra["exact"] = true;
        auto sampled = correlation_estimate(pair_by_trial(run.events.alice, run.events.bob),
                                            ZeroPolicy::include);
        run.extra["sampled_value"] = num(sampled.value);
        run.extra["sampled_se"] = num(sampled.se);
    } else if (c.model == "lrhvm") {
        const auto table = lrhvm_table(c);
        run.events = lrhvm_simulate(table, s.alice, s.bob, c.emissions, rng);
        run.pairs = apply_pairing(c, run.events, PairingConfig::Kind::emission, {}, pair_rng);
        run.estimate = correlation_estimate(*run.pairs, zero);
        run.has_estimate = true;
        run.extra["exact"] = num(lrhvm_expectation(table, s.alice, s.bob));
    } else if (c.model == "shvm") {
        const auto spec = shvm_spec(c);
        const auto k = mp.value("k_repeats", std::uint64_t{1});
        auto result = shvm_run(spec, s.alice, s.bob, c.emissions, k, rng);
        run.estimate = result.estimate;
        run.has_estimate = true;
        run.extra["exact"] = num(shvm_expectation_exact(spec, s.alice, s.bob));
        std::ostringstream os;
        os << "pair,label,mean_a,mean_b,product\n";
        for (std::size_t i = 0; i < result.records.size(); ++i) {
            const auto& r = result.records[i];
            os << i << ',' << r.label << ',' << fmt(r.mean_a) << ',' << fmt(r.mean_b) << ','
               << fmt(r.product) << '\n';
        }
        run.side_file_name = "shvm_records_" + std::to_string(s.alice) + std::to_string(s.bob) + ".csv";
        run.side_file = os.str();
    } else if (c.model == "clpm") {
        const auto params = photon_params_from(mp["source"]);
        run.events = clpm_simulate(photon_kernel(params), s, c.emissions, rng);
        run.pairs = apply_pairing(c, run.events, PairingConfig::Kind::window,
                                  {params.window, WindowRule::first_match_greedy}, pair_rng);
        run.estimate = correlation_estimate(*run.pairs, zero);
        run.has_estimate = true;
        const auto full =
            correlation_estimate(pair_by_trial(run.events.alice, run.events.bob), ZeroPolicy::include);
        run.extra["emission_index_value"] = num(full.value);
        run.extra["emission_index_se"] = num(full.se);
    } else if (c.model == "clpm_marginalized") {
        const auto params = photon_params_from(mp["source"]);
        const auto k = mp["k"].get<std::uint64_t>();
        auto result = clpm_marginalized_run(photon_kernel(params), s, c.emissions, k, rng);
        run.estimate = result.estimate;
        run.has_estimate = true;
        std::ostringstream os;
        os << "block,output\n";
        for (std::size_t i = 0; i < result.outputs.size(); ++i) {
            os << i << ',' << fmt(result.outputs[i]) << '\n';
        }
        run.side_file_name =
            "marginalized_outputs_" + std::to_string(s.alice) + std::to_string(s.bob) + ".csv";
        run.side_file = os.str();
    } else if (c.model == "charlie") {
        auto [s1, s2] = charlie_generate(c.emissions, rng);
        for (std::size_t t = 0; t < s1.size(); ++t) {
            run.events.alice.push_back({t, s.alice, s1.time_tags[t], s1.values[t]});
            run.events.bob.push_back({t, s.bob, s2.time_tags[t], s2.values[t]});
        }
        run.pairs = apply_pairing(c, run.events, PairingConfig::Kind::shift, {}, pair_rng);
        run.estimate = correlation_estimate(*run.pairs, zero);
        run.has_estimate = true;
    }
    return run;
}

inline std::string header_line(const std::string& hash, const ExperimentConfig& c) {
    return "# config_hash=" + hash + " seed=" + std::to_string(c.seed) + " model=" + c.model + "\n";
}

inline json estimate_json(const SettingRun& r) {
    json e = {{"setting_a", r.setting.alice},
              {"setting_b", r.setting.bob},
              {"angle_a", num(r.setting.alice_angle)},
              {"angle_b", num(r.setting.bob_angle)},
              {"value", num(r.estimate.value)},
              {"se", num(r.estimate.se)},
              {"n", r.estimate.n}};
    if (r.pairs) {
        e["pairing"] = r.pairs->provenance;
        e["unmatched_a"] = r.pairs->unmatched_a;
        e["unmatched_b"] = r.pairs->unmatched_b;
    }
    for (const auto& [k, v] : r.extra.items()) {
        e[k] = v;
    }
    return e;
}

inline json test_json(const TestReport& t) {
    json j = {{"name", t.test_name},
              {"statistic", num(t.statistic)},
              {"p_value", num(t.p_value)},
              {"alpha", num(t.alpha)},
              {"decision", to_string(t.decision)}};
    if (t.degenerate) {
        j["degenerate"] = true;
    }
    return j;
}

inline std::optional<ChshReport> chsh_from_runs(const std::vector<SettingRun>& runs) {
    std::map<std::pair<int, int>, CorrelationEstimate> by_setting;
    for (const auto& r : runs) {
        if (r.has_estimate) {
            by_setting[{r.setting.alice, r.setting.bob}] = r.estimate;
        }
    }
    for (int i = 1; i <= 2; ++i) {
        for (int j = 1; j <= 2; ++j) {
            if (!by_setting.contains({i, j})) {
                return std::nullopt;
            }
        }
    }
    return chsh_max_over_roles(by_setting[{1, 1}], by_setting[{1, 2}], by_setting[{2, 1}],
                               by_setting[{2, 2}]);
}

inline std::vector<TestReport> series_tests(const ExperimentConfig& c,
                                            const std::vector<SettingRun>& runs) {
    std::vector<TestReport> out;
    for (const auto& name : c.tests) {
        if (name == "no_signalling") {
            std::vector<EventStreams> streams;
            for (const auto& r : runs) {
                streams.push_back(r.events);
            }
            auto reports = no_signalling_test(marginal_groups(streams), c.alpha);
            out.insert(out.end(), reports.begin(), reports.end());
            continue;
        }
        for (const auto& r : runs) {
            for (Side side : {Side::alice, Side::bob}) {
                const auto& ev = side == Side::alice ? r.events.alice : r.events.bob;
                TimeSeries series;
                for (const auto& e : ev) {
                    series.values.push_back(e.outcome);
                }
                const std::string suffix = std::string("[") + to_string(side) + ",setting=" +
                                           std::to_string(r.setting.alice) +
                                           std::to_string(r.setting.bob) + "]";
                if (name == "purity") {
                    if (series.size() < 2 * c.purity_block) {
                        throw InvalidSpec("purity test needs at least " +
                                          std::to_string(2 * c.purity_block) + " events per side");
                    }
                    auto t = purity_test(series, c.purity_block, c.alpha);
                    t.test_name += suffix;
                    out.push_back(t);
                } else if (name == "fine_structure") {
                    for (auto t : fine_structure_tests(series, c.alpha)) {
                        t.test_name += suffix;
                        out.push_back(t);
                    }
                }
            }
        }
    }
    return out;
}

inline void run_event_models(const ExperimentConfig& c, unsigned threads, const std::string& hash,
                             ExperimentOutput& out) {
    const auto settings = index_settings(c);
    auto runs = parallel_map(settings.size(), threads,
                             [&](std::size_t i) { return run_setting(c, settings[i]); });

    json estimates = json::array();
    for (const auto& r : runs) {
        estimates.push_back(estimate_json(r));
    }
    out.report["estimates"] = estimates;
    if (auto chsh = chsh_from_runs(runs)) {
        out.report["chsh"] = {{"s", num(chsh->s_value)},
                              {"se", num(chsh->s_se)},
                              {"roles",
                               {chsh->roles.a, chsh->roles.a_prime, chsh->roles.b,
                                chsh->roles.b_prime}}};
    } else {
        out.report["chsh"] = nullptr;
    }
    json tests = json::array();
    for (const auto& t : series_tests(c, runs)) {
        tests.push_back(test_json(t));
    }
    out.report["tests"] = tests;

    if (!c.write_csv) {
        return;
    }
    const std::string header = header_line(hash, c);
    bool any_events = false;
    std::ostringstream ev;
    ev << header << "trial,side,setting,time_tag,outcome\n";
    for (std::size_t k = 0; k < runs.size(); ++k) {
        const auto& r = runs[k];
        const std::uint64_t offset = static_cast<std::uint64_t>(k) * c.emissions;
        for (Side side : {Side::alice, Side::bob}) {
            for (const auto& e : side == Side::alice ? r.events.alice : r.events.bob) {
                any_events = true;
                ev << (offset + e.trial) << ',' << to_string(side) << ',' << e.setting << ','
                   << fmt(e.time_tag) << ',' << e.outcome << '\n';
            }
        }
        if (r.pairs) {
            std::ostringstream ps;
            ps << header << "index_a,index_b,t_a,t_b,a,b\n";
            for (const auto& p : r.pairs->pairs) {
                ps << p.index_a << ',' << p.index_b << ',' << fmt(p.t_a) << ',' << fmt(p.t_b)
                   << ',' << p.a << ',' << p.b << '\n';
            }
            out.files["pairs_" + std::to_string(r.setting.alice) + std::to_string(r.setting.bob) +
                      ".csv"] = ps.str();
        }
        if (!r.side_file_name.empty()) {
            out.files[r.side_file_name] = header + r.side_file;
        }
    }
    if (any_events) {
        out.files["events.csv"] = ev.str();
    }
}

inline void run_switching(const ExperimentConfig& c, const std::string& hash,
                          ExperimentOutput& out) {
    const auto settings = index_settings(c);
    std::array<double, 2> a{};
    std::array<double, 2> b{};
    for (const auto& s : settings) {
        a[static_cast<std::size_t>(s.alice - 1)] = s.alice_angle;
        b[static_cast<std::size_t>(s.bob - 1)] = s.bob_angle;
    }
    const auto& mp = c.model_params;
    const auto targets = mp.value("targets", std::string("singlet")) == "anticorrelated"
                             ? anticorrelated_targets()
                             : singlet_targets(a[0], a[1], b[0], b[1]);
    auto setting_dist = uniform_settings();
    if (mp.contains("setting_weights")) {
        setting_dist = DiscreteDistribution<SettingIndexPair>::normalized(
            {{1, 1}, {1, 2}, {2, 1}, {2, 2}}, mp["setting_weights"].get<std::vector<double>>());
    }
    auto rng = derive_stream(c.seed, "switching/records");
    const auto records = switching_simulate(targets, setting_dist, c.emissions, rng);

    json estimates = json::array();
    std::map<std::pair<int, int>, CorrelationEstimate> cond;
    for (const auto& s : settings) {
        const auto e = switching_conditional_expectation(records, s.alice, s.bob);
        const auto u = switching_unconditional_expectation(records, s.alice, s.bob);
        cond[{s.alice, s.bob}] = e;
        const auto& t = targets[static_cast<std::size_t>((s.alice - 1) * 2 + (s.bob - 1))];
        estimates.push_back({{"setting_a", s.alice},
                             {"setting_b", s.bob},
                             {"angle_a", num(s.alice_angle)},
                             {"angle_b", num(s.bob_angle)},
                             {"value", num(e.value)},
                             {"se", num(e.se)},
                             {"n", e.n},
                             {"target", num(t[0][0] + t[1][1] - t[0][1] - t[1][0])},
                             {"unconditional_value", num(u.value)}});
    }
    out.report["estimates"] = estimates;
    const auto chsh =
        chsh_max_over_roles(cond[{1, 1}], cond[{1, 2}], cond[{2, 1}], cond[{2, 2}]);
    out.report["chsh"] = {{"s", num(chsh.s_value)},
                          {"se", num(chsh.s_se)},
                          {"roles", {chsh.roles.a, chsh.roles.a_prime, chsh.roles.b,
                                     chsh.roles.b_prime}}};
    const auto embedding = embeds_in_joint(switching_conditional_family(records));
    out.report["embedding"] = {{"embeddable", embedding.embeddable},
                               {"infeasibility", num(embedding.infeasibility)}};
    out.report["tests"] = json::array();

    if (c.write_csv) {
        std::ostringstream os;
        os << header_line(hash, c) << "trial,i,j,a,b\n";
        for (std::size_t t = 0; t < records.size(); ++t) {
            const auto& r = records[t];
            os << t << ',' << r.setting_a << ',' << r.setting_b << ',' << r.value_a() << ','
               << r.value_b() << '\n';
        }
        out.files["switch.csv"] = os.str();
    }
}

inline void run_classical(const ExperimentConfig& c, ExperimentOutput& out) {
    const auto& mp = c.model_params;
    json estimates = json::array();
    if (c.model == "bertrand") {
        std::vector<BertrandMethod> methods{BertrandMethod::random_endpoints,
                                            BertrandMethod::random_radial_point,
                                            BertrandMethod::random_midpoint};
        if (mp.contains("method")) {
            methods = {parse_bertrand_method(mp["method"].get<std::string>())};
        }
        for (auto m : methods) {
            auto rng = derive_stream(c.seed, "bertrand/" + std::string(to_string(m)));
            const auto e = bertrand_estimate(m, c.emissions, rng);
            estimates.push_back({{"method", std::string(to_string(m))},
                                 {"value", num(e.value)},
                                 {"se", num(e.se)},
                                 {"n", e.n}});
        }
    } else {
        const UrnSpec spec{mp["red"].get<int>(), mp["black"].get<int>(), mp["draws"].get<int>(),
                           mp.value("with_replacement", true)};
        const auto exact = urn_distribution(spec);
        auto rng = derive_stream(c.seed, "urn/draws");
        const auto freq = urn_simulate(spec, c.emissions, rng);
        for (std::size_t x = 0; x < freq.counts.size(); ++x) {
            const double p = freq.frequency(x);
            estimates.push_back(
                {{"red_drawn", x},
                 {"value", num(p)},
                 {"se", num(std::sqrt(p * (1.0 - p) / static_cast<double>(freq.trials)))},
                 {"n", freq.trials},
                 {"exact", num(exact.weights()[x])}});
        }
    }
    out.report["estimates"] = estimates;
    out.report["chsh"] = nullptr;
    out.report["tests"] = json::array();
}

inline std::string report_csv(const json& report, const std::string& header) {
    std::ostringstream os;
    os << header << "record,name,setting_a,setting_b,value,se,n,p_value,decision\n";
    auto field = [](const json& j, const char* k) -> std::string {
        if (!j.contains(k) || j[k].is_null()) {
            return "";
        }
        if (j[k].is_number_float()) {
            return fmt(j[k].get<double>());
        }
        if (j[k].is_string()) {
            return j[k].get<std::string>();
        }
        return j[k].dump();
    };
    for (const auto& e : report["estimates"]) {
        const std::string name = e.contains("method")      ? field(e, "method")
                                 : e.contains("red_drawn") ? "red_drawn=" + field(e, "red_drawn")
                                                           : "correlation";
        os << "estimate," << name << ',' << field(e, "setting_a") << ',' << field(e, "setting_b")
           << ',' << field(e, "value") << ',' << field(e, "se") << ',' << field(e, "n") << ",,\n";
    }
    if (!report["chsh"].is_null()) {
        os << "chsh,S,,," << field(report["chsh"], "s") << ',' << field(report["chsh"], "se")
           << ",,,\n";
    }
    for (const auto& t : report["tests"]) {
        os << "test," << field(t, "name") << ",,," << field(t, "statistic") << ",,,"
           << field(t, "p_value") << ',' << field(t, "decision") << '\n';
    }
    return os.str();
}

} // namespace detail

/// Runs a validated config. Output is a pure function of the config; the
/// worker count only affects wall time.
inline ExperimentOutput execute_experiment(const ExperimentConfig& c, unsigned threads = 1) {
    ExperimentOutput out;
    const std::string hash = config_hash(c.canonical);
    out.report = {{"config_hash", hash}, {"seed", c.seed}, {"model", c.model}};
    if (c.model == "switching") {
        detail::run_switching(c, hash, out);
    } else if (c.model == "bertrand" || c.model == "urn") {
        detail::run_classical(c, out);
    } else {
        detail::run_event_models(c, threads, hash, out);
    }
    if (c.write_json) {
        out.files["report.json"] = out.report.dump(2) + "\n";
    }
    if (c.write_csv) {
        out.files["report.csv"] = detail::report_csv(out.report, detail::header_line(hash, c));
    }
    return out;
}

inline void write_outputs(const ExperimentOutput& out, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [name, contents] : out.files) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) {
            throw std::runtime_error("cannot open " + (dir / name).string() + " for writing");
        }
        f << contents;
        if (!f) {
            throw std::runtime_error("failed writing " + (dir / name).string());
        }
    }
}

inline ExperimentOutput run_experiment(const ExperimentConfig& c, unsigned threads = 1) {
    auto out = execute_experiment(c, threads);
    write_outputs(out, c.output_dir);
    return out;
}

} // namespace spce::experiment
