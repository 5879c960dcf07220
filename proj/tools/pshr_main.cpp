#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "pshr/commands.hpp"

namespace fs = std::filesystem;
using namespace pshr;

int main(int argc, char** argv) {
  CLI::App app{"Joint low-resolution restoration and person re-identification on a toy corpus"};
  app.require_subcommand(1);

  std::string config_path, out = "runs/default";
  std::optional<std::uint64_t> seed;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "Overrides train.seed");
    cmd->add_option("--out", out, "Output directory");
  };

  auto* synth = app.add_subcommand("synth", "Write the toy dataset (PNGs and manifest.csv)");
  add_common(synth);

  int phase = 1;
  std::optional<std::string> phase1_ckpt;
  auto* train = app.add_subcommand("train", "Run training phase 1 or 2");
  add_common(train);
  train->add_option("--phase", phase, "1 (ReID only) or 2 (joint)")->check(CLI::IsMember({1, 2}));
  train->add_option("--phase1-ckpt", phase1_ckpt, "Phase-1 checkpoint, required for phase 2");

  std::optional<std::string> ckpt;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the query and gallery splits");
  add_common(eval);
  eval->add_option("--ckpt", ckpt, "Checkpoint; seeded random weights when omitted");

  std::size_t probes = 5;
  std::uint64_t gc_seed = 7;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every op and loss");
  gradcheck->add_option("--probes", probes, "Random draws per op")->check(CLI::PositiveNumber);
  gradcheck->add_option("--seed", gc_seed, "Draw seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gradcheck) {
      const auto rows = cli::gradcheck_suite(gc_seed, probes);
      std::cout << cli::gradcheck_table(rows);
      for (const auto& r : rows)
        if (!r.pass) return 1;
      return 0;
    }
    cli::RunConfig config = config_path.empty() ? cli::RunConfig{} : cli::load_config(config_path);
    if (seed) config.train.seed = *seed;

    if (*synth) {
      const auto r = cli::cmd_synth(config, out);
      std::cout << "wrote " << r.records << " records to " << r.manifest.string() << "\n";
    } else if (*train) {
      std::optional<fs::path> p1;
      if (phase1_ckpt) p1 = fs::path(*phase1_ckpt);
      const auto r = cli::cmd_train(config, phase, out, p1, &std::cout);
      std::cout << "parameters " << r.parameters << "\ncheckpoint " << r.checkpoint.string() << "\nloss curve "
                << r.loss_curve.string() << "\n";
    } else if (*eval) {
      std::optional<fs::path> c;
      if (ckpt) c = fs::path(*ckpt);
      const auto r = cli::cmd_eval(config, c, out);
      std::cout << eval::metrics_csv(r.metrics);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
