#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lvf/control.hpp"
#include "lvf/foresight.hpp"
#include "lvf/lsq.hpp"
#include "lvf/simulator.hpp"

namespace lvf {

struct GridSpec {
  int positions = 8;
  int angles = 8;
};

// Everything a pipeline run needs; one master seed fans out to per-stage
// streams so a single flag reproduces every artifact byte for byte.
struct RunConfig {
  int n = 32;
  SimConfig sim;
  SolverConfig solver;
  std::vector<double> lengths = default_push_lengths();
  int samples_per_length = 1000;
  double test_fraction = 0.2;
  uint64_t seed = 0;
  int pieces = 50;
  Rect spawn_region{{0.15, 0.15}, {0.85, 0.85}};
  GridSpec grid;
  int runs = 10;
  int max_steps = 40;
  double v_stop = 0.02;
  double lyap_p = 2.0;
  double particle_threshold = 0.5;
  std::string out_dir = "out";

  // Applies one key=value setting; unknown keys throw.
  void set(const std::string& key, const std::string& value);
  static RunConfig from_file(const std::string& path);
  void check() const;

  ActionGrid action_grid(const std::vector<double>& grid_lengths) const;
};

// Paired-image dataset file, little-endian: magic "SLDS", u32 version,
// u32 N, f64 push length, u32 pair count, then per pair the pre and post
// canonical-frame images as row-major f64 blocks.
void write_dataset(const PairedDataset& data, int n, double length,
                   const std::string& path);

struct DatasetFile {
  int n = 0;
  double length = 0.0;
  PairedDataset data;
};

DatasetFile read_dataset(const std::string& path);

// Deterministic CSV cell formatting (shortest round-trip form).
std::string format_double(double v);

// One simulated transition whose push rectangle touches occupied pixels.
struct Transition {
  Image pre;
  Image post;
  Action action;
};

Transition sample_transition(const RunConfig& cfg, double length, uint64_t seed);

struct CollectResult {
  std::vector<std::string> paths;
  std::vector<PairedDataset> datasets;
};

// Generates samples_per_length canonical-frame pairs per push length and
// writes one SLDS file per bucket.
CollectResult cmd_collect(const RunConfig& cfg);

struct TrainRow {
  std::string mode;
  int bucket = 0;
  double length = 0.0;
  double train_err = 0.0;
  double test_err = 0.0;
};

struct TrainResult {
  std::vector<std::string> model_paths;
  std::vector<TrainRow> rows;
  std::string csv_path;
};

// Splits each bucket by the seeded shuffle, fits one model per mode, and
// writes the per-bucket train/test error comparison CSV.
TrainResult cmd_train(const RunConfig& cfg, const std::vector<FitMode>& modes);

struct EvalRow {
  std::string model;
  int n_test = 0;
  double mean_err = 0.0;
};

struct EvalResult {
  std::vector<EvalRow> rows;
  std::string csv_path;
};

// Mean Frobenius prediction error of the switched-linear model, the
// transport baseline, and the identity predictor on fresh transitions.
EvalResult cmd_eval(const RunConfig& cfg, const std::string& model_path, int n_test);

struct RolloutRunSummary {
  int run = 0;
  int steps = 0;
  RolloutStatus status = RolloutStatus::step_limit;
  double final_v = 0.0;
};

struct RolloutResult {
  std::vector<RolloutRunSummary> runs;
  std::vector<RolloutLog> logs;
  std::string csv_path;
};

// Seeded closed-loop runs against a target set; predictor_name is one of
// linear | transport | oracle | identity (linear requires model_path).
// target_spec is "square" or a PGM path.
RolloutResult cmd_rollout(const RunConfig& cfg, const std::string& predictor_name,
                          const std::string& model_path, const std::string& target_spec,
                          bool write_frames = false);

// Kernel and step-response introspection: min-max normalized PGMs plus a
// raw CSV for each.
void cmd_kernels(const RunConfig& cfg, const std::string& model_path,
                 const std::vector<std::pair<int, int>>& pixels);
void cmd_step_response(const RunConfig& cfg, const std::string& model_path);

}  // namespace lvf
