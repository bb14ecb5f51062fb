#include <CLI11.hpp>

#include "cli_commands.hpp"

using namespace netspectra::cli;

int main(int argc, char** argv) {
  CLI::App app{"netspectra: train small dense networks and analyze their spectra"};
  app.require_subcommand(1);

  std::string config_path;

  auto* train_cmd = app.add_subcommand("train", "Train a network from a config file");
  train_cmd->add_option("--config", config_path, "run config file")->required();

  HessianArgs hessian_args;
  auto* hessian_cmd = app.add_subcommand("hessian", "Compute a Hessian eigenbasis");
  hessian_cmd->add_option("--config", config_path, "run config file")->required();
  hessian_cmd->add_option("--checkpoint", hessian_args.checkpoint, "network checkpoint")
      ->required();
  hessian_cmd->add_option("--mode", hessian_args.mode, "dense or lanczos")
      ->check(CLI::IsMember({"dense", "lanczos"}));
  hessian_cmd->add_option("--k", hessian_args.k, "lanczos pair count");
  hessian_cmd->add_option("--out", hessian_args.out, "output eigenbasis path");

  AnalyzeArgs analyze_args;
  auto* analyze_cmd = app.add_subcommand("analyze", "Run one analysis kind");
  analyze_cmd->add_option("kind", analyze_args.kind, "analysis kind")->required();
  analyze_cmd->add_option("--config", config_path, "run config file")->required();
  analyze_cmd->add_option("--checkpoint", analyze_args.checkpoint, "network checkpoint");
  analyze_cmd->add_option("--trajectory", analyze_args.trajectory, "trajectory file");
  analyze_cmd->add_option("--basis-a", analyze_args.basis_a, "first eigenbasis file");
  analyze_cmd->add_option("--basis-b", analyze_args.basis_b, "second eigenbasis file");
  analyze_cmd->add_option("--layer", analyze_args.layer, "layer scope (-1 = whole net)");
  analyze_cmd->add_option("--index", analyze_args.index, "vector index (slice)");
  analyze_cmd->add_option("--ordering", analyze_args.ordering, "algebraic or magnitude")
      ->check(CLI::IsMember({"algebraic", "magnitude"}));
  analyze_cmd->add_option("--source", analyze_args.source, "weights or velocities")
      ->check(CLI::IsMember({"weights", "velocities"}));
  analyze_cmd->add_option("--out-dir", analyze_args.out_dir, "output directory override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  return run_guarded([&] {
    RunConfig cfg = load_run_config(config_path);
    if (train_cmd->parsed()) {
      cmd_train(cfg);
    } else if (hessian_cmd->parsed()) {
      cmd_hessian(cfg, hessian_args);
    } else {
      cmd_analyze(cfg, analyze_args);
    }
  });
}
