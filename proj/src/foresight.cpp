#include "lvf/foresight.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "lvf/rng.hpp"

namespace lvf {

namespace {

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int k = 0; k < 4; ++k) b[k] = static_cast<unsigned char>((v >> (8 * k)) & 0xFF);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
  const uint64_t bits = std::bit_cast<uint64_t>(v);
  unsigned char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>((bits >> (8 * k)) & 0xFF);
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw std::runtime_error("model file truncated");
  uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<uint32_t>(b[k]) << (8 * k);
  return v;
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (in.gcount() != 8) throw std::runtime_error("model file truncated");
  uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<uint64_t>(b[k]) << (8 * k);
  return std::bit_cast<double>(bits);
}

constexpr char kModelMagic[4] = {'S', 'L', 'V', 'F'};
constexpr uint32_t kModelVersion = 1;

}  // namespace

std::vector<double> default_push_lengths() {
  return {0.06, 0.12, 0.18, 0.24, 0.30};
}

int SwitchedLinearModel::length_index(double length) const {
  int best = 0;
  double best_dist = std::abs(lengths[0] - length);
  for (int k = 1; k < static_cast<int>(lengths.size()); ++k) {
    const double d = std::abs(lengths[static_cast<size_t>(k)] - length);
    if (d < best_dist) {  // strict: ties stay with the shorter length
      best_dist = d;
      best = k;
    }
  }
  return best;
}

SwitchedLinearModel train_switched_linear(const std::vector<PairedDataset>& buckets,
                                          const std::vector<double>& lengths, int n,
                                          FitMode mode, const SolverConfig& cfg,
                                          double pusher_width) {
  if (buckets.empty() || buckets.size() != lengths.size())
    throw std::invalid_argument("train_switched_linear: need one dataset per length");
  for (size_t k = 1; k < lengths.size(); ++k)
    if (lengths[k] <= lengths[k - 1])
      throw std::invalid_argument("train_switched_linear: lengths must be increasing");

  SwitchedLinearModel model;
  model.n = n;
  model.lengths = lengths;
  model.pusher_width = pusher_width;
  model.matrices.reserve(buckets.size());
  for (const PairedDataset& data : buckets) {
    if (data.pre.cols() == 0)
      throw std::invalid_argument("train_switched_linear: empty length bucket");
    if (data.pre.rows() != static_cast<Eigen::Index>(n) * n)
      throw std::invalid_argument("train_switched_linear: dataset resolution mismatch");
    switch (mode) {
      case FitMode::ols: model.matrices.push_back(fit_ols(data, cfg)); break;
      case FitMode::nonneg: model.matrices.push_back(fit_row_nonneg(data, cfg)); break;
      case FitMode::rowsum: model.matrices.push_back(fit_row_sum1(data, cfg)); break;
    }
  }
  return model;
}

Image predict_linear(const SwitchedLinearModel& m, const Image& img, const Action& a) {
  if (img.n() != m.n)
    throw std::invalid_argument("predict_linear: image resolution mismatch");
  const AffineMap t = canonical_transform(a);
  const VecImage y = vectorize(warp_image(img, t));
  const int k = m.length_index(a.length);
  VecImage y_next = m.matrices[static_cast<size_t>(k)].a * y;
  y_next = y_next.cwiseMax(0.0).cwiseMin(1.0);
  const Image pred_back = warp_image(devectorize(y_next), t.inverse());
  return compose_prediction(img, pred_back, warp_mask(t, m.n));
}

Eigen::MatrixXd extract_kernel(const SwitchedLinearModel& m, int length_index, int i,
                               int j) {
  if (length_index < 0 || length_index >= static_cast<int>(m.matrices.size()))
    throw std::out_of_range("extract_kernel: length index out of range");
  if (i < 0 || i >= m.n || j < 0 || j >= m.n)
    throw std::out_of_range("extract_kernel: pixel index out of range");
  const auto& a = m.matrices[static_cast<size_t>(length_index)].a;
  Eigen::MatrixXd kernel(m.n, m.n);
  for (int r = 0; r < m.n; ++r)
    for (int c = 0; c < m.n; ++c) kernel(r, c) = a(i * m.n + j, r * m.n + c);
  return kernel;
}

Eigen::MatrixXd step_response(const SwitchedLinearModel& m, int length_index) {
  if (length_index < 0 || length_index >= static_cast<int>(m.matrices.size()))
    throw std::out_of_range("step_response: length index out of range");
  const auto& a = m.matrices[static_cast<size_t>(length_index)].a;
  const Eigen::VectorXd y = a * Eigen::VectorXd::Constant(a.cols(), 0.5);
  Eigen::MatrixXd out(m.n, m.n);
  for (int r = 0; r < m.n; ++r)
    for (int c = 0; c < m.n; ++c) out(r, c) = y[r * m.n + c];
  return out;
}

void save_model(const SwitchedLinearModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out.write(kModelMagic, 4);
  put_u32(out, kModelVersion);
  put_u32(out, static_cast<uint32_t>(m.n));
  put_u32(out, static_cast<uint32_t>(m.lengths.size()));
  put_u32(out, static_cast<uint32_t>(m.matrices.front().mode));
  put_f64(out, m.pusher_width);
  for (double l : m.lengths) put_f64(out, l);
  for (const TransitionMatrix& tm : m.matrices)
    for (int i = 0; i < tm.a.rows(); ++i)
      for (int j = 0; j < tm.a.cols(); ++j) put_f64(out, tm.a(i, j));
  if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

SwitchedLinearModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kModelMagic, 4) != 0)
    throw std::runtime_error("load_model: bad magic, not a model file: " + path);
  const uint32_t version = get_u32(in);
  if (version != kModelVersion)
    throw std::runtime_error("load_model: unsupported version " + std::to_string(version));
  SwitchedLinearModel m;
  m.n = static_cast<int>(get_u32(in));
  const uint32_t k = get_u32(in);
  const uint32_t mode_raw = get_u32(in);
  if (m.n < 2 || k < 1 || mode_raw > 2)
    throw std::runtime_error("load_model: corrupt header fields");
  m.pusher_width = get_f64(in);
  m.lengths.resize(k);
  for (double& l : m.lengths) l = get_f64(in);
  for (size_t i = 1; i < m.lengths.size(); ++i)
    if (m.lengths[i] <= m.lengths[i - 1])
      throw std::runtime_error("load_model: lengths not strictly increasing");
  const Eigen::Index n2 = static_cast<Eigen::Index>(m.n) * m.n;
  m.matrices.resize(k);
  for (uint32_t mi = 0; mi < k; ++mi) {
    TransitionMatrix& tm = m.matrices[mi];
    tm.mode = static_cast<FitMode>(mode_raw);
    tm.a.resize(n2, n2);
    for (Eigen::Index i = 0; i < n2; ++i)
      for (Eigen::Index j = 0; j < n2; ++j) tm.a(i, j) = get_f64(in);
  }
  return m;
}

TransportModel transport_from_width(double pusher_width, uint64_t seed_base) {
  TransportModel tm;
  tm.pusher_width = pusher_width;
  tm.band_width = pusher_width;
  tm.band_depth = 0.5 * pusher_width;
  tm.rng_seed_base = seed_base;
  return tm;
}

ParticleSet particles_from_image(const Image& img, double threshold) {
  if (threshold < 0.0 || threshold >= 1.0)
    throw std::invalid_argument("particles_from_image: threshold outside [0,1)");
  ParticleSet parts;
  const int n = img.n();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (img(i, j) > threshold) parts.points.push_back(pixel_center(i, j, n));
  return parts;
}

Image particles_to_image(const ParticleSet& parts, int n) {
  Image out(n);
  for (const Vec2& p : parts.points) {
    const int j = std::clamp(static_cast<int>(std::floor(p.x() * n)), 0, n - 1);
    const int i = std::clamp(static_cast<int>(std::floor(p.y() * n)), 0, n - 1);
    out(i, j) = 1.0;
  }
  return out;
}

ParticleSet transport_predict(const TransportModel& tm, const ParticleSet& parts,
                              const Action& a, uint64_t seed) {
  validate(a);
  const PushRectangle rect = push_rectangle(a, tm.pusher_width);
  const Vec2 dir(std::cos(a.theta), std::sin(a.theta));
  const Vec2 lat(-dir.y(), dir.x());
  const Vec2 band_origin = Vec2(a.px, a.py) + a.length * dir;

  Rng rng(seed);
  ParticleSet out;
  out.points.reserve(parts.points.size());
  for (const Vec2& p : parts.points) {
    if (!rectangle_contains(rect, p)) {
      out.points.push_back(p);
      continue;
    }
    const double fwd = rng.uniform(0.0, tm.band_depth);
    const double side = rng.uniform(-0.5 * tm.band_width, 0.5 * tm.band_width);
    Vec2 q = band_origin + fwd * dir + side * lat;
    q.x() = std::clamp(q.x(), 0.0, 1.0);
    q.y() = std::clamp(q.y(), 0.0, 1.0);
    out.points.push_back(q);
  }
  return out;
}

}  // namespace lvf
