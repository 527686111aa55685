#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lvf/geometry.hpp"
#include "lvf/image.hpp"

namespace lvf {

// Axis-aligned rectangle, used for the workspace and spawn regions.
struct Rect {
  Vec2 lo{0.0, 0.0};
  Vec2 hi{1.0, 1.0};
};

inline const Rect kWorkspace{{0.0, 0.0}, {1.0, 1.0}};

// Convex polygon with counter-clockwise vertices. Pieces translate only;
// they never rotate.
struct Piece {
  std::vector<Vec2> vertices;

  Vec2 centroid() const;  // area centroid
  void translate(const Vec2& d);
  Rect bounds() const;
};

struct Scene {
  std::vector<Piece> pieces;
  uint64_t seed = 0;  // spawn seed, kept for snapshot headers
};

struct SimConfig {
  double piece_radius = 0.02;
  int verts_per_piece = 7;
  int substeps_per_unit_length = 100;
  int settle_iterations = 20;
  double overlap_tol = 1e-4;  // area units
  int supersample = 4;
  double pusher_width = kDefaultPusherWidth;
  uint64_t rng_seed = 0;
};

// Generates `count` pieces, each the convex hull of verts_per_piece points
// on a circle of piece_radius centered uniformly in `region`. Initial
// overlaps are resolved by the settle procedure; pieces stay inside the
// region. Deterministic in `seed`.
Scene spawn_scene(const SimConfig& cfg, int count, const Rect& region, uint64_t seed);

// Quasi-static push: the pusher edge advances from the start point along
// theta in small substeps; intersecting pieces are translated by the
// minimal clearing vector (forward along the push, or laterally out the
// sides), then piece-piece overlaps are settled pairwise and pieces are
// clamped into the workspace. Pure function of its arguments.
Scene apply_push(const Scene& scene, const Action& a, const SimConfig& cfg);

// Pixel value = fraction of supersample^2 subsample points covered by any
// piece.
Image rasterize(const Scene& scene, int n, int supersample);

// Text snapshot: header "scene N=<count> seed=<seed>" then one
// "piece x0 y0 x1 y1 ..." line per piece. Round-trips exactly.
void write_scene(const Scene& s, const std::string& path);
Scene read_scene(const std::string& path);

// Collision helpers (shared with the transport model and tests).
bool point_in_piece(const Piece& p, const Vec2& q);
double piece_area(const Piece& p);

// Minimal translation that moves `b` out of contact with `a`, or nullopt
// if they are already separated.
std::optional<Vec2> min_translation(const Piece& a, const Piece& b);

}  // namespace lvf
