#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mfc/cli.hpp"
#include "mfc/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"mean-field team control: exact DP solver, simulator and validation suite"};
  app.set_version_flag("--version", std::string(mfc::kVersion));
  app.require_subcommand(1);

  mfc::cli::SolveOptions solve_opt;
  auto* solve = app.add_subcommand("solve", "solve a model and export value/policy tables");
  solve->add_option("--model", solve_opt.model_path, "model file")->required();
  solve->add_option("--out", solve_opt.out_dir, "output directory");
  int horizon = 0;
  double beta = 0.0, tol = 0.0;
  auto* horizon_opt = solve->add_option("--horizon", horizon, "override: finite horizon T");
  auto* beta_opt = solve->add_option("--beta", beta, "override: discount factor");
  auto* tol_opt = solve->add_option("--tol", tol, "override: discounted value tolerance");
  solve->add_flag("--via-embedding", solve_opt.via_embedding,
                  "solve through the population-1 embedding of the major subsystem");
  solve->add_flag("--emit-plot-data", solve_opt.emit_plot_data,
                  "also write tidy long-format plot data");

  mfc::cli::SimulateOptions sim_opt;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo rollout of a solved policy");
  simulate->add_option("--model", sim_opt.model_path, "model file")->required();
  simulate->add_option("--policy", sim_opt.policy_path, "policy.csv from solve")->required();
  simulate->add_option("--out", sim_opt.out_dir, "output directory");
  simulate->add_option("--seed", sim_opt.seed, "random seed");
  simulate->add_option("--rollouts", sim_opt.rollouts, "number of rollouts");
  simulate->add_option("--horizon", sim_opt.horizon,
                       "stage count (0 derives it from the objective)");
  simulate->add_option("--bias-budget", sim_opt.bias_budget,
                       "truncation bias budget for discounted rollouts");
  simulate->add_option("--init-counts", sim_opt.init_counts,
                       "initial counts per state, comma separated");
  simulate->add_option("--init-major", sim_opt.init_major, "initial major state index");

  mfc::cli::ValidateOptions val_opt;
  auto* validate = app.add_subcommand("validate", "run oracle and cross-check suites");
  validate->add_option("--model", val_opt.model_path, "model file")->required();
  validate->add_option("--out", val_opt.out_dir, "output directory");
  validate->add_flag("--cross-check", val_opt.cross_check,
                     "also compare against the major-as-type embedding");
  validate->add_flag("--skip-oracle", val_opt.skip_oracle, "skip brute-force oracle checks");
  validate->add_flag("--debug-corrupt-kernel", val_opt.corrupt_kernel,
                     "corrupt one kernel row (negative control)");

  mfc::cli::InfoOptions info_opt;
  auto* info = app.add_subcommand("info", "print model summary");
  info->add_option("--model", info_opt.model_path, "model file")->required();
  info->add_option("--out", info_opt.out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(solve)) {
      if (horizon_opt->count()) solve_opt.horizon = horizon;
      if (beta_opt->count()) solve_opt.beta = beta;
      if (tol_opt->count()) solve_opt.tol = tol;
      return mfc::cli::run_solve(solve_opt, std::cout);
    }
    if (app.got_subcommand(simulate)) return mfc::cli::run_simulate(sim_opt, std::cout);
    if (app.got_subcommand(validate)) return mfc::cli::run_validate(val_opt, std::cout);
    if (app.got_subcommand(info)) return mfc::cli::run_info(info_opt, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
