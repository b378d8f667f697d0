#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "clothscope/commands.hpp"

namespace cli = clothscope::cli;

int main(int argc, char** argv) {
  CLI::App app{"Cloth parameter measurement by simulation refinement"};
  app.require_subcommand(1);

  cli::RunSpec spec;
  std::string config, dataset, checkpoint, target, meta;
  int budget = 0;

  const std::pair<cli::Command, const char*> commands[] = {
      {cli::Command::gen, "Simulate and render a dataset"},
      {cli::Command::train, "Train the embedding network on a dataset"},
      {cli::Command::eval, "Triplet accuracy and wind-speed regression on the test split"},
      {cli::Command::refine, "Estimate cloth and wind parameters of a target clip"},
      {cli::Command::sim, "Export one simulation as OBJ frames and a rendered clip"},
  };
  for (const auto& [command, help] : commands) {
    CLI::App* sub = app.add_subcommand(cli::to_string(command), help);
    sub->add_option("--config", config, "JSON config overriding the preset")->check(CLI::ExistingFile);
    sub->add_option("--out", spec.out, "Output directory (must not exist or be empty)")->required();
    sub->add_option("--seed", spec.seed, "Master seed");
    sub->add_flag("--desk", spec.desk, "Desk-scale preset instead of full scale");
    if (command == cli::Command::train || command == cli::Command::eval)
      sub->add_option("--dataset", dataset, "Dataset directory written by gen")->required();
    if (command == cli::Command::eval || command == cli::Command::refine)
      sub->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();
    if (command == cli::Command::refine) {
      sub->add_option("--budget", budget, "Total objective evaluations")->check(CLI::PositiveNumber);
      auto* t = sub->add_option("--target", target, "Target VVOL (default: synthetic self-target)")
                    ->check(CLI::ExistingFile);
      sub->add_option("--meta", meta, "JSON with the target's \"camera\" and \"look\"")
          ->check(CLI::ExistingFile)
          ->needs(t);
      t->needs("--meta");
    }
    sub->final_callback([&spec, command = command] { spec.command = command; });
  }

  CLI11_PARSE(app, argc, argv);
  if (!config.empty()) spec.config = config;
  if (!dataset.empty()) spec.dataset = dataset;
  if (!checkpoint.empty()) spec.checkpoint = checkpoint;
  if (!target.empty()) spec.target = target;
  if (!meta.empty()) spec.target_meta = meta;
  if (budget > 0) spec.budget = budget;

  try {
    cli::run(spec, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "wrote " << spec.out.string() << "\n";
  return 0;
}
