// fwi: batch driver for the acoustic leapfrog solver and its inversion.
//
//   fwi forward     CONFIG [--allow-unstable] [--out DIR]
//   fwi invert      CONFIG [--out DIR]
//   fwi gradcheck   CONFIG [--out DIR]
//   fwi convergence CONFIG [--out DIR]
//   fwi cfl         CONFIG
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error,
// 3 instability detected, 4 acceptance threshold not met.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fwi/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Acoustic full waveform inversion on triangular P1/DG0 meshes"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    bool allow_unstable = false;
    unsigned threads = 0;
    app.add_option("--threads", threads, "Cap on assembly worker threads (overrides FWI_THREADS)");

    auto add = [&](const std::string& name, const std::string& help) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("config", config_path, "Configuration file")->required()->check(CLI::ExistingFile);
        if (name != "cfl") sub->add_option("--out", out_dir, "Output directory (overrides [output] dir)");
        return sub;
    };
    CLI::App* forward = add("forward", "Run the forward solver and write trajectory, stability and receiver data");
    forward->add_flag("--allow-unstable", allow_unstable, "Run even when N violates the CFL condition");
    CLI::App* invert = add("invert", "Projected-gradient inversion against the configured observations");
    CLI::App* gradcheck = add("gradcheck", "Compare the adjoint gradient with finite differences");
    CLI::App* convergence = add("convergence", "Refinement sweep with a one-level-finer reference");
    CLI::App* cfl = add("cfl", "Report the inverse-estimate constant and CFL bound");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? fwi::cli::kOk : fwi::cli::kConfigError;
    }
    if (threads > 0) setenv("FWI_THREADS", std::to_string(threads).c_str(), 1);

    using namespace fwi;
    std::unique_ptr<cli::Case> c;
    try {
        c = std::make_unique<cli::Case>(parse_run_config(load_config(config_path)));
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return cli::kConfigError;
    }

    cli::CommandOptions opts;
    opts.allow_unstable = allow_unstable;
    if (!out_dir.empty()) opts.output_dir = out_dir;
    try {
        if (forward->parsed()) return cli::cmd_forward(*c, opts);
        if (invert->parsed()) return cli::cmd_invert(*c, opts);
        if (gradcheck->parsed()) return cli::cmd_gradcheck(*c, opts);
        if (convergence->parsed()) return cli::cmd_convergence(*c, opts);
        if (cfl->parsed()) return cli::cmd_cfl(*c, opts);
    } catch (const InstabilityError& e) {
        std::cerr << "instability: " << e.what() << '\n';
        return cli::kUnstable;
    } catch (const PreconditionError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kError;
    }
    return cli::kError;
}
