#include "lvf/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "lvf/rng.hpp"

namespace lvf {

namespace {

constexpr double kSeparationSlack = 1e-9;

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

struct Interval {
  double lo, hi;
};

Interval project(const Piece& p, const Vec2& axis) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const Vec2& v : p.vertices) {
    const double d = v.dot(axis);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  return {lo, hi};
}

bool bounds_overlap(const Rect& a, const Rect& b) {
  return a.lo.x() < b.hi.x() && b.lo.x() < a.hi.x() && a.lo.y() < b.hi.y() &&
         b.lo.y() < a.hi.y();
}

// Clamps a piece's bounding box into `bounds` by translation.
bool clamp_into(Piece& p, const Rect& bounds) {
  const Rect bb = p.bounds();
  Vec2 shift(0.0, 0.0);
  if (bb.lo.x() < bounds.lo.x()) shift.x() = bounds.lo.x() - bb.lo.x();
  if (bb.hi.x() > bounds.hi.x()) shift.x() = bounds.hi.x() - bb.hi.x();
  if (bb.lo.y() < bounds.lo.y()) shift.y() = bounds.lo.y() - bb.lo.y();
  if (bb.hi.y() > bounds.hi.y()) shift.y() = bounds.hi.y() - bb.hi.y();
  if (shift.x() == 0.0 && shift.y() == 0.0) return false;
  p.translate(shift);
  return true;
}

// One settle pass: separate overlapping pairs along the minimal
// translation vector, split equally, then clamp into bounds. Returns
// whether anything moved.
bool settle_pass(std::vector<Piece>& pieces, const Rect& bounds) {
  bool moved = false;
  const size_t n = pieces.size();
  std::vector<Rect> bbs(n);
  for (size_t i = 0; i < n; ++i) bbs[i] = pieces[i].bounds();
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      if (!bounds_overlap(bbs[i], bbs[j])) continue;
      const auto mtv = min_translation(pieces[i], pieces[j]);
      if (!mtv) continue;
      const Vec2 half = 0.5 * (*mtv + mtv->normalized() * kSeparationSlack);
      pieces[i].translate(-half);
      pieces[j].translate(half);
      clamp_into(pieces[i], bounds);
      clamp_into(pieces[j], bounds);
      bbs[i] = pieces[i].bounds();
      bbs[j] = pieces[j].bounds();
      moved = true;
    }
  }
  return moved;
}

void settle(std::vector<Piece>& pieces, const Rect& bounds, int rounds) {
  for (int r = 0; r < rounds; ++r)
    if (!settle_pass(pieces, bounds)) return;
}

}  // namespace

Vec2 Piece::centroid() const {
  // Area centroid via the shoelace formula.
  double area2 = 0.0;
  Vec2 acc(0.0, 0.0);
  const size_t n = vertices.size();
  for (size_t k = 0; k < n; ++k) {
    const Vec2& a = vertices[k];
    const Vec2& b = vertices[(k + 1) % n];
    const double w = cross(a, b);
    area2 += w;
    acc += w * (a + b);
  }
  if (std::abs(area2) < 1e-18) {  // degenerate: fall back to vertex mean
    Vec2 m(0.0, 0.0);
    for (const Vec2& v : vertices) m += v;
    return m / static_cast<double>(n);
  }
  return acc / (3.0 * area2);
}

void Piece::translate(const Vec2& d) {
  for (Vec2& v : vertices) v += d;
}

Rect Piece::bounds() const {
  Rect r{{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()},
         {-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()}};
  for (const Vec2& v : vertices) {
    r.lo = r.lo.cwiseMin(v);
    r.hi = r.hi.cwiseMax(v);
  }
  return r;
}

bool point_in_piece(const Piece& p, const Vec2& q) {
  const size_t n = p.vertices.size();
  for (size_t k = 0; k < n; ++k) {
    const Vec2& a = p.vertices[k];
    const Vec2& b = p.vertices[(k + 1) % n];
    if (cross(b - a, q - a) < -1e-12) return false;
  }
  return true;
}

double piece_area(const Piece& p) {
  double area2 = 0.0;
  const size_t n = p.vertices.size();
  for (size_t k = 0; k < n; ++k)
    area2 += cross(p.vertices[k], p.vertices[(k + 1) % n]);
  return 0.5 * std::abs(area2);
}

std::optional<Vec2> min_translation(const Piece& a, const Piece& b) {
  double best = std::numeric_limits<double>::infinity();
  Vec2 best_axis(0.0, 0.0);
  auto test_axes = [&](const Piece& p) {
    const size_t n = p.vertices.size();
    for (size_t k = 0; k < n; ++k) {
      const Vec2 e = p.vertices[(k + 1) % n] - p.vertices[k];
      const double len = e.norm();
      if (len < 1e-15) continue;
      const Vec2 axis(-e.y() / len, e.x() / len);
      const Interval ia = project(a, axis), ib = project(b, axis);
      const double overlap = std::min(ia.hi, ib.hi) - std::max(ia.lo, ib.lo);
      if (overlap <= 0.0) {
        best = -1.0;
        return;
      }
      if (overlap < best) {
        best = overlap;
        best_axis = axis;
      }
    }
  };
  test_axes(a);
  if (best < 0.0) return std::nullopt;
  test_axes(b);
  if (best < 0.0) return std::nullopt;
  if ((b.centroid() - a.centroid()).dot(best_axis) < 0.0) best_axis = -best_axis;
  return best_axis * best;
}

Scene spawn_scene(const SimConfig& cfg, int count, const Rect& region, uint64_t seed) {
  if (count < 0) throw std::invalid_argument("spawn_scene: count must be >= 0");
  if (region.lo.x() < kWorkspace.lo.x() || region.lo.y() < kWorkspace.lo.y() ||
      region.hi.x() > kWorkspace.hi.x() || region.hi.y() > kWorkspace.hi.y() ||
      region.lo.x() >= region.hi.x() || region.lo.y() >= region.hi.y())
    throw std::invalid_argument("spawn_scene: region outside workspace");

  Rng rng(seed);
  Scene scene;
  scene.seed = seed;
  scene.pieces.reserve(static_cast<size_t>(count));
  for (int c = 0; c < count; ++c) {
    const Vec2 center(rng.uniform(region.lo.x(), region.hi.x()),
                      rng.uniform(region.lo.y(), region.hi.y()));
    std::vector<double> angles(static_cast<size_t>(cfg.verts_per_piece));
    for (double& a : angles) a = rng.uniform(0.0, 2.0 * M_PI);
    std::sort(angles.begin(), angles.end());  // angular order = convex hull, ccw
    Piece p;
    p.vertices.reserve(angles.size());
    for (double a : angles)
      p.vertices.emplace_back(center.x() + cfg.piece_radius * std::cos(a),
                              center.y() + cfg.piece_radius * std::sin(a));
    scene.pieces.push_back(std::move(p));
  }
  for (Piece& p : scene.pieces) clamp_into(p, region);
  // Spawn may need more rounds than a push substep; iterate until clean.
  settle(scene.pieces, region, std::max(cfg.settle_iterations, 200));
  return scene;
}

Scene apply_push(const Scene& scene, const Action& a, const SimConfig& cfg) {
  validate(a);
  Scene out = scene;
  const Vec2 dir(std::cos(a.theta), std::sin(a.theta));
  const Vec2 lat(-dir.y(), dir.x());
  const Vec2 start(a.px, a.py);
  const double halfw = 0.5 * cfg.pusher_width;
  const int substeps =
      std::max(1, static_cast<int>(std::ceil(a.length * cfg.substeps_per_unit_length)));
  const double ds = a.length / substeps;

  // Clearing directions: forward along the push or laterally out either
  // side of the slab; never backward against the pusher face.
  auto clear_from_slab = [&](Piece& p, double s) -> bool {
    const Interval ix = project(p, dir);
    const Interval iy = project(p, lat);
    const double s0 = start.dot(dir);
    const double l0 = start.dot(lat);
    if (ix.lo >= s0 + s || ix.hi <= s0 || iy.lo >= l0 + halfw || iy.hi <= l0 - halfw)
      return false;
    const double fwd = (s0 + s) - ix.lo;
    const double up = (l0 + halfw) - iy.lo;
    const double dn = iy.hi - (l0 - halfw);
    Vec2 move;
    if (fwd <= up && fwd <= dn)
      move = dir * (fwd + kSeparationSlack);
    else if (up <= dn)
      move = lat * (up + kSeparationSlack);
    else
      move = -lat * (dn + kSeparationSlack);
    p.translate(move);
    clamp_into(p, kWorkspace);
    return true;
  };

  for (int step = 1; step <= substeps; ++step) {
    const double s = step * ds;
    bool moved = false;
    for (Piece& p : out.pieces) moved |= clear_from_slab(p, s);
    if (!moved) continue;  // face touched nothing; pile is already settled
    for (int r = 0; r < cfg.settle_iterations; ++r) {
      bool any = settle_pass(out.pieces, kWorkspace);
      for (Piece& p : out.pieces) any |= clear_from_slab(p, s);
      if (!any) break;
    }
  }
  return out;
}

Image rasterize(const Scene& scene, int n, int supersample) {
  if (n < 2) throw std::invalid_argument("rasterize: resolution must be >= 2");
  if (supersample < 1) throw std::invalid_argument("rasterize: supersample must be >= 1");
  Image out(n);

  // Bin pieces by the pixels their bounding boxes cover; pieces are small
  // so most pixels have no candidates at all.
  std::vector<std::vector<int>> candidates(static_cast<size_t>(n) * n);
  for (size_t pi = 0; pi < scene.pieces.size(); ++pi) {
    const Rect bb = scene.pieces[pi].bounds();
    const int j0 = std::clamp(static_cast<int>(std::floor(bb.lo.x() * n)), 0, n - 1);
    const int j1 = std::clamp(static_cast<int>(std::floor(bb.hi.x() * n)), 0, n - 1);
    const int i0 = std::clamp(static_cast<int>(std::floor(bb.lo.y() * n)), 0, n - 1);
    const int i1 = std::clamp(static_cast<int>(std::floor(bb.hi.y() * n)), 0, n - 1);
    for (int i = i0; i <= i1; ++i)
      for (int j = j0; j <= j1; ++j)
        candidates[static_cast<size_t>(i) * n + j].push_back(static_cast<int>(pi));
  }

  const double sub = 1.0 / (n * supersample);
  const double inv_count = 1.0 / (supersample * supersample);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const auto& cand = candidates[static_cast<size_t>(i) * n + j];
      if (cand.empty()) continue;
      int inside = 0;
      for (int si = 0; si < supersample; ++si)
        for (int sj = 0; sj < supersample; ++sj) {
          const Vec2 q(j / static_cast<double>(n) + (sj + 0.5) * sub,
                       i / static_cast<double>(n) + (si + 0.5) * sub);
          for (int pi : cand)
            if (point_in_piece(scene.pieces[static_cast<size_t>(pi)], q)) {
              ++inside;
              break;
            }
        }
      out(i, j) = inside * inv_count;
    }
  return out;
}

void write_scene(const Scene& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_scene: cannot open " + path);
  out << "scene N=" << s.pieces.size() << " seed=" << s.seed << "\n";
  out.precision(17);
  for (const Piece& p : s.pieces) {
    out << "piece";
    for (const Vec2& v : p.vertices) out << " " << v.x() << " " << v.y();
    out << "\n";
  }
  if (!out) throw std::runtime_error("write_scene: write failed for " + path);
}

Scene read_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_scene: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_scene: empty file");
  size_t count = 0;
  Scene s;
  if (std::sscanf(line.c_str(), "scene N=%zu seed=%llu", &count,
                  reinterpret_cast<unsigned long long*>(&s.seed)) != 2)
    throw std::runtime_error("read_scene: bad header: " + line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag != "piece") throw std::runtime_error("read_scene: bad line: " + line);
    Piece p;
    double x, y;
    while (ss >> x >> y) p.vertices.emplace_back(x, y);
    if (p.vertices.size() < 3) throw std::runtime_error("read_scene: degenerate piece");
    s.pieces.push_back(std::move(p));
  }
  if (s.pieces.size() != count)
    throw std::runtime_error("read_scene: piece count does not match header");
  return s;
}

}  // namespace lvf
