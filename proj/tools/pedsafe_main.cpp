// pedsafe: collision cleaning, modelling, attribution and district maps.

#include <iostream>

#include <CLI11.hpp>

#include "pedsafe/pipeline.hpp"

int main(int argc, char** argv) {
    using namespace pedsafe::pipeline;

    CLI::App app{"pedsafe - pedestrian road-safety analysis toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides o;
    std::string target, out, model;
    double threshold = 0.5;
    unsigned threads = 1;
    std::uint64_t seed = 0;

    const std::vector<std::pair<std::string, std::string>> commands{
        {"synth", "generate a synthetic collision corpus with planted effects"},
        {"prep", "parse, impute, drop outliers and build targets"},
        {"describe", "write per-variable value counts"},
        {"train", "fit baseline and tuned models and write reports"},
        {"explain", "TreeSHAP importance and beeswarm export for a model"},
        {"spatial", "join collisions to districts and export a choropleth"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "key-value config file with [sections]");
        sub->add_option("--target", target, "pedestrian | over_serious | pedestrian_over_serious");
        sub->add_option("--threshold", threshold, "decision threshold")->check(CLI::Range(0.0, 1.0));
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--seed", seed, "root seed");
        sub->add_option("--out", out, "output directory");
        if (name == "explain") sub->add_option("--model", model, "model JSON to explain");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigFailure;
    }

    auto* sub = app.get_subcommands().front();
    auto given = [&](const char* flag) { return sub->count(flag) > 0; };
    if (given("--target")) o.target = target;
    if (given("--threshold")) o.threshold = threshold;
    if (given("--threads")) o.threads = threads;
    if (given("--seed")) o.seed = seed;
    if (given("--out")) o.out = out;
    if (sub->get_name() == "explain" && given("--model")) o.model = model;

    return run_command(sub->get_name(), config_path, o, std::cout, std::cerr);
}
