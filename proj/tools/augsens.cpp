#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "augsens/config.hpp"
#include "augsens/error.hpp"
#include "augsens/pipeline.hpp"

namespace {

// Exit codes: 1 library error, 2 usage, 3 missing upstream stage, 4 refused analysis.
int run(const std::string& stage, const std::string& config_path, std::optional<std::uint64_t> seed, std::size_t jobs,
        bool quiet) {
    augsens::ExperimentConfig cfg = augsens::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (const char* env = std::getenv("AUGSENS_STORE"); env && *env) cfg.output = env;
    augsens::Pipeline p(cfg, jobs, quiet ? nullptr : &std::cerr);
    const std::map<std::string, std::function<augsens::StageResult()>> stages{
        {"plan", [&] { return p.plan(); }},
        {"sample", [&] { return p.sample(); }},
        {"infer", [&] { return p.infer(); }},
        {"estimate", [&] { return p.estimate(); }},
        {"mask-eval", [&] { return p.mask_eval(); }},
        {"class-sense", [&] { return p.class_sense(); }},
        {"segment", [&] { return p.segment(); }},
        {"report", [&] { return p.report(); }},
    };
    if (stage == "all") {
        for (const char* s : {"plan", "sample", "infer", "estimate", "mask-eval", "class-sense", "segment", "report"}) {
            std::cout << stages.at(s)().dir.string() << "\n";
        }
        return 0;
    }
    std::cout << stages.at(stage)().dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"augsens: variance-based sensitivity of network activations to input augmentations"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 1;
    bool quiet = false;

    std::string selected;
    for (const char* name : {"plan", "sample", "infer", "estimate", "mask-eval", "class-sense", "segment", "report", "all"}) {
        auto* sub = app.add_subcommand(name, std::string("run the ") + name + " stage");
        sub->add_option("--config,-c", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--jobs,-j", jobs, "worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--quiet,-q", quiet, "no progress lines on stderr");
        sub->callback([&selected, name] { selected = name; });
    }
    std::string init_path;
    auto* init = app.add_subcommand("init", "write a default config");
    init->add_option("path", init_path, "output file")->required();
    init->callback([&] { selected = "init"; });

    CLI11_PARSE(app, argc, argv);

    try {
        if (selected == "init") {
            std::ofstream out(init_path);
            if (!out) throw augsens::FormatError("cannot write " + init_path);
            out << augsens::default_config_json();
            return 0;
        }
        return run(selected, config_path, seed, jobs, quiet);
    } catch (const augsens::StageDependencyError& e) {
        std::cerr << "augsens: " << e.what() << "\n";
        return 3;
    } catch (const augsens::RefusalError& e) {
        std::cerr << "augsens: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "augsens: " << e.what() << "\n";
        return 1;
    }
}
