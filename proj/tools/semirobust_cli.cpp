// command line front end: every subcommand loads one experiment config,
// runs the matching pipeline, and prints where the artifacts went
#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "semirobust/config.hpp"
#include "semirobust/runner.hpp"

namespace {

void print_record(const semirobust::RunRecord& record) {
  std::printf("mode: %s\n", record.mode.c_str());
  std::printf("output: %s\n", record.out_dir.c_str());
  for (const std::string& name : record.artifacts) std::printf("  %s\n", name.c_str());
  if (!record.summary.empty()) {
    std::printf("summary:\n");
    for (const auto& [key, value] : record.summary) {
      std::printf("  %s: %.6g\n", key.c_str(), value);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"subnetwork robustness laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  CLI::Option* config_opt =
      app.add_option("-c,--config", config_path, "experiment config file (json)")
          ->check(CLI::ExistingFile);
  CLI::Option* seed_opt = app.add_option("-s,--seed", seed, "override the master seed");
  CLI::Option* out_opt = app.add_option("-o,--out", out_dir, "override the output directory");

  const struct {
    const char* name;
    const char* help;
  } modes[] = {
      {"train", "train standard and adversarial networks, save checkpoints"},
      {"attack-eval", "evaluate a checkpoint against the configured attacks"},
      {"diagnostics", "fit probes and report per-layer assumption diagnostics"},
      {"rho-learn", "run the finetuning trials that estimate per-layer rho"},
      {"lambda-solve", "solve for the linear read-out over head activations"},
      {"bounds", "compare curvature and Lipschitz bounds against measurements"},
      {"report", "run the mode named in the config's algorithm block"},
  };
  for (const auto& m : modes) app.add_subcommand(m.name, m.help)->fallthrough();
  CLI::App* show = app.add_subcommand("show-config", "print the effective config and exit");
  show->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    semirobust::ExperimentConfig cfg;
    if (config_opt->count() > 0) cfg = semirobust::load_config(config_path);
    if (seed_opt->count() > 0) cfg.seed = seed;
    if (out_opt->count() > 0) cfg.output_dir = out_dir;

    const std::string chosen = app.get_subcommands().at(0)->get_name();
    if (chosen == "show-config") {
      std::fputs(semirobust::serialize_config(cfg).c_str(), stdout);
      return 0;
    }
    const semirobust::RunRecord record =
        chosen == "report" ? semirobust::run(cfg) : semirobust::run(cfg, chosen);
    print_record(record);
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
