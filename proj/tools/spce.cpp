// spce: run a declarative correlation experiment and write its artifacts.
//
//   spce --config configs/clpm_default.json --out out/
//   spce --model quantum_oracle --trials 100000 --angles 0,0.785398,0.392699,1.178097

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "spce/experiment.hpp"

namespace {

constexpr int exit_config = 2;
constexpr int exit_runtime = 3;

using spce::experiment::json;

json quick_config(const std::string& model) {
    json c = {{"model", model}, {"emissions", 10000}, {"seed", 1}};
    if (model == "clpm" || model == "clpm_marginalized") {
        c["model_params"] = {{"source", json::object()}};
        if (model == "clpm_marginalized") {
            c["model_params"]["k"] = 100;
        }
    } else if (model == "urn") {
        c["model_params"] = {{"red", 2}, {"black", 1}, {"draws", 2}, {"with_replacement", true}};
    }
    return c;
}

std::vector<double> parse_angles(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        out.push_back(std::stod(item, &used));
        if (used != item.size()) {
            throw std::invalid_argument(item);
        }
    }
    if (out.size() != 4) {
        throw std::invalid_argument("need four angles");
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulate and analyse two-party correlation experiments"};
    std::string config_path;
    std::string model;
    std::string out_dir;
    std::string format;
    std::string angles;
    std::optional<std::int64_t> seed;
    std::optional<std::int64_t> trials;
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());

    app.add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "root seed (overrides the config)");
    app.add_option("--out", out_dir, "output directory (overrides the config)");
    app.add_option("--format", format, "which files to write")
        ->check(CLI::IsMember({"csv", "json", "both"}));
    app.add_option("--model", model, "quick run of a model with default parameters");
    app.add_option("--trials", trials, "emissions per setting pair");
    app.add_option("--angles", angles, "CHSH angles a,a',b,b' in radians");
    app.add_option("--threads", threads, "worker threads for per-setting runs")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_config;
    }

    json doc;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        try {
            doc = json::parse(in, nullptr, true, true);
        } catch (const json::parse_error& e) {
            std::cerr << "spce: " << config_path << ": " << e.what() << '\n';
            return exit_config;
        }
        if (!model.empty()) {
            doc["model"] = model;
        }
    } else if (!model.empty()) {
        doc = quick_config(model);
    } else {
        std::cerr << "spce: give --config or --model\n";
        return exit_config;
    }

    if (seed) {
        doc["seed"] = *seed;
    }
    if (trials) {
        doc["emissions"] = *trials;
    }
    if (!angles.empty()) {
        try {
            const auto a = parse_angles(angles);
            doc["settings"] = {{a[0], a[2]}, {a[0], a[3]}, {a[1], a[2]}, {a[1], a[3]}};
        } catch (const std::exception&) {
            std::cerr << "spce: --angles expects four comma-separated numbers\n";
            return exit_config;
        }
    }
    if (!out_dir.empty()) {
        doc["output_dir"] = out_dir;
    }
    if (format == "csv") {
        doc["formats"] = {"csv"};
    } else if (format == "json") {
        doc["formats"] = {"json"};
    } else if (format == "both") {
        doc["formats"] = {"csv", "json"};
    }

    const auto validated = spce::experiment::validate_config(doc);
    if (!validated.ok()) {
        for (const auto& e : validated.errors) {
            std::cerr << "spce: config error: " << (e.path.empty() ? "<root>" : e.path) << ": "
                      << e.message << '\n';
        }
        return exit_config;
    }

    try {
        const auto out = spce::experiment::run_experiment(*validated.config, threads);
        const auto& report = out.report;
        std::cout << "model " << report["model"].get<std::string>() << "  config_hash "
                  << report["config_hash"].get<std::string>() << '\n';
        if (!report["chsh"].is_null()) {
            std::cout << "S = " << report["chsh"]["s"] << " +- " << report["chsh"]["se"] << '\n';
        }
        for (const auto& t : report["tests"]) {
            std::cout << t["name"].get<std::string>() << ": " << t["decision"].get<std::string>()
                      << " (p = " << t["p_value"] << ")\n";
        }
        std::cout << "wrote " << out.files.size() << " file(s) to "
                  << validated.config->output_dir << '\n';
    } catch (const spce::InvalidSpec& e) {
        std::cerr << "spce: invalid parameters: " << e.what() << '\n';
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "spce: " << e.what() << '\n';
        return exit_runtime;
    }
    return 0;
}
