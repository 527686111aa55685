#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lvf/geometry.hpp"
#include "lvf/image.hpp"
#include "lvf/lsq.hpp"

namespace lvf {

// Five push lengths uniform on [0.06, 0.30] world units.
std::vector<double> default_push_lengths();

// One transition matrix per discretized push length, applied in the
// canonical frame where every push starts at the image center along +x.
struct SwitchedLinearModel {
  int n = 32;
  std::vector<double> lengths;  // strictly increasing
  std::vector<TransitionMatrix> matrices;
  double pusher_width = kDefaultPusherWidth;

  // Index of the length closest to `length`; ties go to the shorter push.
  int length_index(double length) const;
};

SwitchedLinearModel train_switched_linear(const std::vector<PairedDataset>& buckets,
                                          const std::vector<double>& lengths, int n,
                                          FitMode mode, const SolverConfig& cfg,
                                          double pusher_width = kDefaultPusherWidth);

// Full prediction pipeline: warp to the canonical frame, apply the length
// bucket's matrix, clamp, warp back, and blend through the warp mask.
Image predict_linear(const SwitchedLinearModel& m, const Image& img, const Action& a);

// Row (i*N + j) of the selected matrix reshaped row-major to N x N. Raw
// values; they may leave [0, 1].
Eigen::MatrixXd extract_kernel(const SwitchedLinearModel& m, int length_index, int i,
                               int j);

// A * (0.5 * ones) reshaped to N x N, raw values.
Eigen::MatrixXd step_response(const SwitchedLinearModel& m, int length_index);

// Binary model file, little-endian throughout: magic "SLVF", u32 version,
// u32 N, u32 K, u32 mode, f64 pusher_width, K lengths, then K row-major
// f64 matrices. Round-trips bit-exact.
void save_model(const SwitchedLinearModel& m, const std::string& path);
SwitchedLinearModel load_model(const std::string& path);

// Object-centric baseline: pixels inside the push rectangle teleport to a
// uniform band directly ahead of it.
struct TransportModel {
  double band_depth = 0.5 * kDefaultPusherWidth;
  double band_width = kDefaultPusherWidth;
  double pusher_width = kDefaultPusherWidth;
  uint64_t rng_seed_base = 0;
};

TransportModel transport_from_width(double pusher_width, uint64_t seed_base = 0);

struct ParticleSet {
  std::vector<Vec2> points;  // world units, inside [0,1]^2
};

// Centers of pixels with value strictly above the threshold.
ParticleSet particles_from_image(const Image& img, double threshold = 0.5);

// Binary image marking pixels that contain at least one particle.
Image particles_to_image(const ParticleSet& parts, int n);

// Particles inside the push rectangle are replaced by uniform samples from
// the band abutting its far edge; everything else is untouched.
// Cardinality is preserved and the result is deterministic in `seed`.
ParticleSet transport_predict(const TransportModel& tm, const ParticleSet& parts,
                              const Action& a, uint64_t seed);

}  // namespace lvf
