#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "stratrob/cli/commands.hpp"

using namespace stratrob::cli;

int main(int argc, char** argv) {
    CLI::App app{"Strategic robustness toolkit"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);
    app.fallthrough();

    Options opts;
    std::uint64_t seed = 0;
    auto* seed_opt = app.add_option("--seed", seed, "Override the config seed");
    app.add_option("--config", opts.config_path, "Config file")->check(CLI::ExistingFile);
    app.add_option("--out", opts.out_dir, "Output directory");
    app.add_option("--threads", opts.threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--checkpoint", opts.checkpoint, "Checkpoint to evaluate");
    app.add_option("--log", opts.log, "Attack log for infer");

    const char* commands[][2] = {
        {"gen-data", "Generate the synthetic dataset"},
        {"train", "Train a network under the configured objective"},
        {"eval", "Evaluate a checkpoint"},
        {"infer", "Infer an attacker utility from an attack log"},
        {"sweep", "Sweep the mixing rate over seeds"},
    };
    for (const auto& c : commands) app.add_subcommand(c[0], c[1]);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }
    if (seed_opt->count() > 0) opts.seed = seed;
    return run_command(app.get_subcommands().front()->get_name(), opts, std::cerr);
}
