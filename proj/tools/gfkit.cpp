// gfkit: long-time behaviour of growth-fragmentation models.
// Subcommands: validate | malthus | pde | criteria | all.

#include <CLI11.hpp>

#include <iostream>

#include "gf/commands.hpp"
#include "gf/config.hpp"

namespace {

struct Cli {
    std::string config_path;
    gf::CliOverrides overrides;
};

void add_common(CLI::App* cmd, Cli& cli) {
    cmd->add_option("--config", cli.config_path, "model/run configuration file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&cli](std::uint64_t s) { cli.overrides.seed = s; },
        "override run.seed from the config");
    cmd->add_option_function<unsigned>(
        "--workers", [&cli](unsigned w) { cli.overrides.workers = w; },
        "override run.workers (results are identical for any value)");
    cmd->add_option_function<std::string>(
        "--out", [&cli](std::string d) { cli.overrides.out_dir = std::move(d); },
        "output directory (default from config, else ./out)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"growth-fragmentation long-time behaviour toolkit"};
    app.require_subcommand(1);

    Cli cli;
    CLI::App* c_validate =
        app.add_subcommand("validate", "check standing model assumptions");
    CLI::App* c_malthus =
        app.add_subcommand("malthus", "estimate the Malthus exponent and profile");
    CLI::App* c_pde = app.add_subcommand("pde", "discretised operator: eigenpair and evolution");
    CLI::App* c_criteria = app.add_subcommand("criteria", "ergodicity criteria report");
    CLI::App* c_all = app.add_subcommand("all", "run everything and cross-check");
    for (CLI::App* c : {c_validate, c_malthus, c_pde, c_criteria, c_all}) add_common(c, cli);

    CLI11_PARSE(app, argc, argv);

    try {
        const gf::ConfigDoc doc = gf::ConfigDoc::parse_file(cli.config_path);
        const gf::RunConfig cfg = gf::load_run_config(doc, cli.overrides);
        if (c_validate->parsed()) return gf::cmd_validate(cfg, std::cout);
        if (c_malthus->parsed()) return gf::cmd_malthus(cfg, std::cout);
        if (c_pde->parsed()) return gf::cmd_pde(cfg, std::cout);
        if (c_criteria->parsed()) return gf::cmd_criteria(cfg, std::cout);
        if (c_all->parsed()) return gf::cmd_all(cfg, std::cout);
    } catch (const gf::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const gf::ModelError& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
