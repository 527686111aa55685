// Command-line harness for the pile-pushing pipeline: data collection,
// model training, prediction-error tables, closed-loop benchmarks, and
// model introspection artifacts.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lvf/harness.hpp"

namespace {

struct CommonOpts {
  std::optional<std::string> config;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> samples;
  std::optional<int> pieces;
  std::optional<int> runs;
  std::optional<int> max_steps;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config, "config file with key=value lines");
  cmd->add_option("--seed", opts.seed, "master seed; every stage derives from it");
  cmd->add_option("--out", opts.out, "output directory (default: out)");
  cmd->add_option("--samples", opts.samples, "pairs collected per push length");
  cmd->add_option("--pieces", opts.pieces, "pieces per spawned scene");
  cmd->add_option("--runs", opts.runs, "number of seeded rollout runs");
  cmd->add_option("--max-steps", opts.max_steps, "push budget per rollout");
}

lvf::RunConfig build_config(const CommonOpts& opts) {
  lvf::RunConfig cfg =
      opts.config ? lvf::RunConfig::from_file(*opts.config) : lvf::RunConfig{};
  if (opts.seed) cfg.seed = *opts.seed;  // flags win over the config file
  if (opts.out) cfg.out_dir = *opts.out;
  if (opts.samples) cfg.samples_per_length = *opts.samples;
  if (opts.pieces) cfg.pieces = *opts.pieces;
  if (opts.runs) cfg.runs = *opts.runs;
  if (opts.max_steps) cfg.max_steps = *opts.max_steps;
  cfg.check();
  return cfg;
}

std::vector<std::pair<int, int>> parse_pixels(const std::string& spec) {
  std::vector<std::pair<int, int>> pixels;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ';')) {
    int i = 0, j = 0;
    if (std::sscanf(tok.c_str(), "%d,%d", &i, &j) != 2)
      throw std::invalid_argument("bad --pixels entry (want i,j;i,j;...): " + tok);
    pixels.emplace_back(i, j);
  }
  return pixels;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "lvf - switched-linear visual foresight for pushing object piles.\n"
      "Data files: SLDS datasets (canonical image pairs), SLVF models,\n"
      "P5 PGM images, UTF-8 CSV with a header row."};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string mode = "nonneg";
  std::string model_path;
  std::string target = "square";
  std::string predictor = "linear";
  std::string pixels = "16,16;16,20;16,26;8,8";
  int n_test = 1000;
  bool frames = false;

  auto* collect = app.add_subcommand(
      "collect", "Simulate seeded scenes and store canonical-frame image pairs,\n"
                 "one SLDS file per push length (bucket_<k>.slds).");
  add_common(collect, opts);

  auto* train = app.add_subcommand(
      "train", "Fit transition matrices from collected SLDS files and write\n"
               "model_<mode>.slvf plus lsq_comparison.csv with columns\n"
               "mode,bucket,length,train_err,test_err.");
  add_common(train, opts);
  train->add_option("--mode", mode, "ols | nonneg | rowsum | all")->capture_default_str();

  auto* eval = app.add_subcommand(
      "eval", "Measure mean Frobenius prediction error on fresh transitions and\n"
              "write eval.csv with columns model,n_test,mean_err (rows: linear,\n"
              "transport, identity).");
  add_common(eval, opts);
  eval->add_option("--model", model_path, "SLVF model file")->required();
  eval->add_option("--ntest", n_test, "number of fresh transitions")->capture_default_str();

  auto* roll = app.add_subcommand(
      "rollout", "Run the greedy controller on seeded scenes and write\n"
                 "descent_<predictor>.csv with columns run,step,v_pred,v_real,status\n"
                 "(status: converged | stalled | step_limit).");
  add_common(roll, opts);
  roll->add_option("--predictor", predictor, "linear | transport | oracle | identity")
      ->capture_default_str();
  roll->add_option("--model", model_path, "SLVF model (linear predictor only)");
  roll->add_option("--target", target, "PGM path (nonzero = target) or 'square'")
      ->capture_default_str();
  roll->add_flag("--frames", frames, "write per-step PGM frames");

  auto* kern = app.add_subcommand(
      "kernels", "Export per-pixel kernels of a model as normalized PGMs plus\n"
                 "kernels.csv with columns length_index,pixel_i,pixel_j,row,col,value.");
  add_common(kern, opts);
  kern->add_option("--model", model_path, "SLVF model file")->required();
  kern->add_option("--pixels", pixels, "semicolon list of i,j pixels")->capture_default_str();

  auto* step = app.add_subcommand(
      "step-response", "Export each matrix's response to a uniform 0.5 image as\n"
                       "normalized PGMs plus step_response.csv with columns\n"
                       "length_index,row,col,value.");
  add_common(step, opts);
  step->add_option("--model", model_path, "SLVF model file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const lvf::RunConfig cfg = build_config(opts);
    if (collect->parsed()) {
      const auto result = lvf::cmd_collect(cfg);
      for (const auto& p : result.paths)
        std::cout << p << ": " << result.datasets[0].pre.cols() << " pairs\n";
    } else if (train->parsed()) {
      std::vector<lvf::FitMode> modes;
      if (mode == "all")
        modes = {lvf::FitMode::ols, lvf::FitMode::nonneg, lvf::FitMode::rowsum};
      else
        modes = {lvf::fit_mode_from_string(mode)};
      const auto result = lvf::cmd_train(cfg, modes);
      for (const auto& row : result.rows)
        std::printf("%-7s bucket %d (l=%.2f): train %.4f test %.4f\n", row.mode.c_str(),
                    row.bucket, row.length, row.train_err, row.test_err);
      std::cout << "wrote " << result.csv_path << "\n";
    } else if (eval->parsed()) {
      const auto result = lvf::cmd_eval(cfg, model_path, n_test);
      for (const auto& row : result.rows)
        std::printf("%-10s mean_err %.4f (n=%d)\n", row.model.c_str(), row.mean_err,
                    row.n_test);
      std::cout << "wrote " << result.csv_path << "\n";
    } else if (roll->parsed()) {
      const auto result = lvf::cmd_rollout(cfg, predictor, model_path, target, frames);
      for (const auto& run : result.runs)
        std::printf("run %d: %d steps, %s, final V %.4f\n", run.run, run.steps,
                    lvf::to_string(run.status).c_str(), run.final_v);
      std::cout << "wrote " << result.csv_path << "\n";
    } else if (kern->parsed()) {
      lvf::cmd_kernels(cfg, model_path, parse_pixels(pixels));
      std::cout << "wrote kernels to " << cfg.out_dir << "\n";
    } else if (step->parsed()) {
      lvf::cmd_step_response(cfg, model_path);
      std::cout << "wrote step responses to " << cfg.out_dir << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
