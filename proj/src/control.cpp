#include "lvf/control.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lvf/parallel.hpp"
#include "lvf/rng.hpp"

namespace lvf {

namespace {

double pnorm_dist(const Vec2& a, const Vec2& b, double p) {
  const double dx = std::abs(a.x() - b.x());
  const double dy = std::abs(a.y() - b.y());
  if (p == 2.0) return std::hypot(dx, dy);
  if (p == 1.0) return dx + dy;
  if (std::isinf(p)) return std::max(dx, dy);
  return std::pow(std::pow(dx, p) + std::pow(dy, p), 1.0 / p);
}

std::vector<Vec2> target_centers(const TargetSet& t) {
  std::vector<Vec2> centers;
  const int n = t.n();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (t.mask(i, j)) centers.push_back(pixel_center(i, j, n));
  if (centers.empty()) throw std::invalid_argument("target set is empty");
  return centers;
}

uint64_t action_hash(const Action& a) {
  uint64_t h = 0x9E3779B97F4A7C15ull;
  for (double v : {a.px, a.py, a.theta, a.length}) {
    h ^= std::bit_cast<uint64_t>(v);
    h *= 0xBF58476D1CE4E5B9ull;
    h ^= h >> 29;
  }
  return h;
}

}  // namespace

TargetSet TargetSet::centered_square(int n, double lo, double hi) {
  TargetSet t;
  t.mask.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Vec2 c = pixel_center(i, j, n);
      t.mask(i, j) = c.x() >= lo && c.x() <= hi && c.y() >= lo && c.y() <= hi;
    }
  if (!t.mask.any()) throw std::invalid_argument("centered_square: empty target");
  return t;
}

TargetSet TargetSet::from_pgm(const std::string& path) {
  const Image img = read_pgm(path);
  TargetSet t;
  t.mask.resize(img.n(), img.n());
  for (int i = 0; i < img.n(); ++i)
    for (int j = 0; j < img.n(); ++j) t.mask(i, j) = img(i, j) > 0.0;
  if (!t.mask.any())
    throw std::invalid_argument("from_pgm: target has no nonzero pixel: " + path);
  return t;
}

DistanceField build_distance_field(const TargetSet& t, double p) {
  const std::vector<Vec2> centers = target_centers(t);
  const int n = t.n();
  DistanceField f;
  f.p = p;
  f.d_grid.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (t.mask(i, j)) {  // exact zero on the set itself
        f.d_grid(i, j) = 0.0;
        continue;
      }
      const Vec2 c = pixel_center(i, j, n);
      double best = std::numeric_limits<double>::infinity();
      for (const Vec2& q : centers) best = std::min(best, pnorm_dist(c, q, p));
      f.d_grid(i, j) = best;
    }
  f.d.resize(static_cast<Eigen::Index>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) f.d[i * n + j] = f.d_grid(i, j);
  return f;
}

double lyapunov_image(const DistanceField& f, const Image& img) {
  if (img.n() != f.d_grid.rows())
    throw std::invalid_argument("lyapunov_image: resolution mismatch");
  const double mass = grand_sum(img);
  if (mass < kMassEpsilon)
    throw std::runtime_error("lyapunov_image: empty scene (no image mass)");
  return f.d.dot(vectorize(img)) / mass;
}

double lyapunov_particles(const TargetSet& t, const ParticleSet& parts, double p) {
  if (parts.points.empty())
    throw std::invalid_argument("lyapunov_particles: empty particle set");
  const std::vector<Vec2> centers = target_centers(t);
  double acc = 0.0;
  for (const Vec2& q : parts.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec2& c : centers) best = std::min(best, pnorm_dist(q, c, p));
    acc += best;
  }
  return acc / static_cast<double>(parts.points.size());
}

std::vector<Action> enumerate_actions(const ActionGrid& grid) {
  if (grid.positions < 1 || grid.angles < 1 || grid.lengths.empty())
    throw std::invalid_argument("enumerate_actions: degenerate grid");
  std::vector<Action> actions;
  const int g = grid.positions;
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx)
      for (int ai = 0; ai < grid.angles; ++ai)
        for (double length : grid.lengths) {
          Action a;
          a.px = (gx + 0.5) / g;
          a.py = (gy + 0.5) / g;
          a.theta = 2.0 * M_PI * ai / grid.angles;
          a.length = length;
          if (grid.filter_workspace) {
            const PushRectangle r = push_rectangle(a, grid.pusher_width);
            bool inside = true;
            for (const Vec2& c : r.corners)
              inside &= c.x() >= 0.0 && c.x() <= 1.0 && c.y() >= 0.0 && c.y() <= 1.0;
            if (!inside) continue;
          }
          actions.push_back(a);
        }
  if (actions.empty())
    throw std::runtime_error("enumerate_actions: every action was filtered out");
  return actions;
}

Image TransportPredictor::predict(const Image& img, const Action& a) const {
  const ParticleSet parts = particles_from_image(img, threshold_);
  if (parts.points.empty()) return Image(n_);
  // Per-call seed from the action content, so evaluation order and
  // threading never change the sample.
  const uint64_t seed = derive_seed(model_.rng_seed_base, action_hash(a));
  return particles_to_image(transport_predict(model_, parts, a, seed), n_);
}

Image OraclePredictor::predict(const Image& img, const Action& a) const {
  // Fast reject: pushes that cannot reach any piece leave the scene as is.
  const PushRectangle r = push_rectangle(a, cfg_.pusher_width);
  Rect rb{r.corners[0], r.corners[0]};
  for (const Vec2& c : r.corners) {
    rb.lo = rb.lo.cwiseMin(c);
    rb.hi = rb.hi.cwiseMax(c);
  }
  bool any = false;
  for (const Piece& p : scene_.pieces) {
    const Rect bb = p.bounds();
    if (rb.lo.x() < bb.hi.x() && bb.lo.x() < rb.hi.x() && rb.lo.y() < bb.hi.y() &&
        bb.lo.y() < rb.hi.y()) {
      any = true;
      break;
    }
  }
  if (!any) return img;
  return rasterize(apply_push(scene_, a, cfg_), n_, cfg_.supersample);
}

GreedyResult greedy_action(const Predictor& pred, const Image& img,
                           const DistanceField& f, const std::vector<Action>& actions) {
  if (actions.empty()) throw std::invalid_argument("greedy_action: no actions");
  if (grand_sum(img) < kMassEpsilon)
    throw std::runtime_error("greedy_action: empty scene (no image mass)");

  std::vector<double> values(actions.size());
  parallel_for(0, static_cast<int>(actions.size()), [&](int i) {
    const Image p = pred.predict(img, actions[static_cast<size_t>(i)]);
    const double mass = grand_sum(p);
    // A model that predicts all mass gone gives no usable ranking; treat
    // the action as worst instead of failing the whole search.
    values[static_cast<size_t>(i)] =
        mass < kMassEpsilon ? std::numeric_limits<double>::infinity()
                            : f.d.dot(vectorize(p)) / mass;
  });

  GreedyResult best;
  best.action_index = 0;
  best.predicted_v = values[0];
  for (size_t i = 1; i < values.size(); ++i)
    if (values[i] < best.predicted_v) {
      best.predicted_v = values[i];
      best.action_index = static_cast<int>(i);
    }
  best.action = actions[static_cast<size_t>(best.action_index)];
  return best;
}

GreedyResult greedy_action(const Predictor& pred, const Image& img,
                           const DistanceField& f, const ActionGrid& grid) {
  return greedy_action(pred, img, f, enumerate_actions(grid));
}

std::string to_string(RolloutStatus s) {
  switch (s) {
    case RolloutStatus::converged: return "converged";
    case RolloutStatus::stalled: return "stalled";
    case RolloutStatus::step_limit: return "step_limit";
  }
  throw std::invalid_argument("to_string: bad rollout status");
}

RolloutLog rollout(const Scene& start, const SimConfig& sim_cfg, Predictor& pred,
                   const DistanceField& f, const ActionGrid& grid, int max_steps,
                   double v_stop, bool keep_frames) {
  if (max_steps < 1) throw std::invalid_argument("rollout: max_steps must be >= 1");
  const std::vector<Action> actions = enumerate_actions(grid);
  const int n = static_cast<int>(f.d_grid.rows());

  RolloutLog log;
  Scene scene = start;
  Image img = rasterize(scene, n, sim_cfg.supersample);
  log.initial_v = lyapunov_image(f, img);
  if (log.initial_v <= v_stop) {
    log.status = RolloutStatus::converged;
    log.final_scene = scene;
    return log;
  }

  int stall_count = 0;
  log.status = RolloutStatus::step_limit;
  for (int step = 1; step <= max_steps; ++step) {
    pred.observe(scene);
    const GreedyResult choice = greedy_action(pred, img, f, actions);
    scene = apply_push(scene, choice.action, sim_cfg);
    const Image next = rasterize(scene, n, sim_cfg.supersample);
    const double v = lyapunov_image(f, next);
    log.steps.push_back({step, choice.action, choice.predicted_v, v});
    if (keep_frames) log.frames.push_back(next);

    if (frobenius_distance(img, next) < 1e-6) {
      if (++stall_count >= 3) {
        log.status = RolloutStatus::stalled;
        img = next;
        break;
      }
    } else {
      stall_count = 0;
    }
    img = next;
    if (v <= v_stop) {
      log.status = RolloutStatus::converged;
      break;
    }
  }
  log.final_scene = scene;
  return log;
}

}  // namespace lvf
