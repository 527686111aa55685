#pragma once

#include <memory>
#include <string>
#include <vector>

#include "lvf/foresight.hpp"
#include "lvf/geometry.hpp"
#include "lvf/image.hpp"
#include "lvf/simulator.hpp"

namespace lvf {

inline constexpr double kMassEpsilon = 1e-6;

// Binary pixel mask marking the desired set; may be non-convex or
// disconnected.
struct TargetSet {
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;

  int n() const { return static_cast<int>(mask.rows()); }

  // Pixels whose centers fall inside [lo, hi] x [lo, hi].
  static TargetSet centered_square(int n, double lo = 0.35, double hi = 0.65);
  // Nonzero pixels of a PGM file.
  static TargetSet from_pgm(const std::string& path);
};

// Distances from every pixel center to the nearest target pixel center
// under the p-norm; exactly zero on target pixels.
struct DistanceField {
  Eigen::MatrixXd d_grid;  // N x N, world units
  VecImage d;              // vectorized form
  double p = 2.0;
};

DistanceField build_distance_field(const TargetSet& t, double p = 2.0);

// Mass-weighted mean distance d'y / ||y||_1. Zero iff all mass sits on
// target pixels. Throws when the image carries less than kMassEpsilon of
// mass.
double lyapunov_image(const DistanceField& f, const Image& img);

// Mean distance from each particle to the nearest target pixel center.
double lyapunov_particles(const TargetSet& t, const ParticleSet& parts, double p = 2.0);

struct ActionGrid {
  int positions = 8;  // G x G lattice of start points over the workspace
  int angles = 8;     // uniform directions in [0, 2*pi)
  std::vector<double> lengths = default_push_lengths();
  double pusher_width = kDefaultPusherWidth;
  bool filter_workspace = true;  // drop pushes whose swept area exits [0,1]^2
};

// Deterministic ordering: position-major, then angle, then length.
std::vector<Action> enumerate_actions(const ActionGrid& grid);

// Prediction interface shared by the controller. observe() lets
// simulator-backed predictors resynchronize to the true scene each step.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Image predict(const Image& img, const Action& a) const = 0;
  virtual void observe(const Scene&) {}
  virtual std::string name() const = 0;
};

class IdentityPredictor final : public Predictor {
 public:
  Image predict(const Image& img, const Action&) const override { return img; }
  std::string name() const override { return "identity"; }
};

class LinearPredictor final : public Predictor {
 public:
  explicit LinearPredictor(SwitchedLinearModel model) : model_(std::move(model)) {}
  Image predict(const Image& img, const Action& a) const override {
    return predict_linear(model_, img, a);
  }
  std::string name() const override { return "linear"; }
  const SwitchedLinearModel& model() const { return model_; }

 private:
  SwitchedLinearModel model_;
};

class TransportPredictor final : public Predictor {
 public:
  TransportPredictor(TransportModel model, int n, double threshold = 0.5)
      : model_(model), n_(n), threshold_(threshold) {}
  Image predict(const Image& img, const Action& a) const override;
  std::string name() const override { return "transport"; }

 private:
  TransportModel model_;
  int n_;
  double threshold_;
};

// Ground-truth predictor: steps a copy of the real simulator scene.
class OraclePredictor final : public Predictor {
 public:
  OraclePredictor(SimConfig cfg, int n) : cfg_(cfg), n_(n) {}
  Image predict(const Image& img, const Action& a) const override;
  void observe(const Scene& scene) override { scene_ = scene; }
  std::string name() const override { return "oracle"; }

 private:
  SimConfig cfg_;
  int n_;
  Scene scene_;
};

struct GreedyResult {
  Action action;
  double predicted_v = 0.0;
  int action_index = 0;
};

// Evaluates the predicted Lyapunov value of every grid action and returns
// the minimizer; ties break toward enumeration order. Evaluations run in
// parallel.
GreedyResult greedy_action(const Predictor& pred, const Image& img,
                           const DistanceField& f, const std::vector<Action>& actions);
GreedyResult greedy_action(const Predictor& pred, const Image& img,
                           const DistanceField& f, const ActionGrid& grid);

enum class RolloutStatus { converged, stalled, step_limit };

std::string to_string(RolloutStatus s);

struct RolloutStep {
  int step = 0;
  Action action;
  double predicted_v = 0.0;
  double realized_v = 0.0;
};

struct RolloutLog {
  double initial_v = 0.0;
  std::vector<RolloutStep> steps;
  RolloutStatus status = RolloutStatus::step_limit;
  Scene final_scene;
  std::vector<Image> frames;  // post-push images when requested
};

// Greedy closed loop on the true simulator; stops at v_stop, on the step
// budget, or after three consecutive pushes that leave the image
// unchanged (the stalled failure mode).
RolloutLog rollout(const Scene& start, const SimConfig& sim_cfg, Predictor& pred,
                   const DistanceField& f, const ActionGrid& grid, int max_steps,
                   double v_stop, bool keep_frames = false);

}  // namespace lvf
