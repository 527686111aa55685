#include "lvf/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace lvf {

namespace {

// Snaps interpolation weights that are within eps of a grid line, so maps
// that are exact pixel permutations (integer translations, quarter turns)
// reproduce values bit-for-bit.
constexpr double kGridSnap = 1e-9;

double sample_bilinear(const Image& img, const Vec2& p) {
  if (p.x() < 0.0 || p.x() > 1.0 || p.y() < 0.0 || p.y() > 1.0) return 0.0;
  const int n = img.n();
  double u = p.x() * n - 0.5;  // column coordinate
  double v = p.y() * n - 0.5;  // row coordinate
  double ju = std::floor(u), iv = std::floor(v);
  double fu = u - ju, fv = v - iv;
  if (fu < kGridSnap) fu = 0.0;
  if (fu > 1.0 - kGridSnap) { fu = 0.0; ju += 1.0; }
  if (fv < kGridSnap) fv = 0.0;
  if (fv > 1.0 - kGridSnap) { fv = 0.0; iv += 1.0; }
  const int j0 = static_cast<int>(ju), i0 = static_cast<int>(iv);

  auto at = [&](int i, int j) -> double {
    if (i < 0 || i >= n || j < 0 || j >= n) return 0.0;
    return img(i, j);
  };
  double acc = (1.0 - fu) * (1.0 - fv) * at(i0, j0);
  if (fu > 0.0) acc += fu * (1.0 - fv) * at(i0, j0 + 1);
  if (fv > 0.0) acc += (1.0 - fu) * fv * at(i0 + 1, j0);
  if (fu > 0.0 && fv > 0.0) acc += fu * fv * at(i0 + 1, j0 + 1);
  return acc;
}

}  // namespace

void validate(const Action& a) {
  if (!(a.length > 0.0 && a.length <= kMaxPushLength))
    throw std::invalid_argument("Action: length outside (0, 0.5]");
  if (a.px < 0.0 || a.px > 1.0 || a.py < 0.0 || a.py > 1.0)
    throw std::invalid_argument("Action: start point outside workspace");
  if (!(a.theta >= 0.0 && a.theta < 2.0 * M_PI))
    throw std::invalid_argument("Action: theta outside [0, 2*pi)");
}

PushRectangle push_rectangle(const Action& a, double width) {
  if (!(width > 0.0)) throw std::invalid_argument("push_rectangle: width must be > 0");
  const Vec2 start(a.px, a.py);
  const Vec2 dir(std::cos(a.theta), std::sin(a.theta));
  const Vec2 lat(-dir.y(), dir.x());  // left normal, keeps corners ccw
  const Vec2 half = 0.5 * width * lat;
  PushRectangle r;
  r.corners[0] = start - half;
  r.corners[1] = start + a.length * dir - half;
  r.corners[2] = start + a.length * dir + half;
  r.corners[3] = start + half;
  return r;
}

bool rectangle_contains(const PushRectangle& r, const Vec2& p) {
  for (int k = 0; k < 4; ++k) {
    const Vec2& a = r.corners[k];
    const Vec2& b = r.corners[(k + 1) % 4];
    const Vec2 e = b - a;
    const Vec2 d = p - a;
    if (e.x() * d.y() - e.y() * d.x() < 0.0) return false;
  }
  return true;
}

Eigen::Matrix<double, 2, 3> AffineMap::matrix() const {
  Eigen::Matrix<double, 2, 3> m;
  m.leftCols<2>() = rot_;
  m.col(2) = trans_;
  return m;
}

AffineMap canonical_transform(const Action& a) {
  // Rotation by -theta maps the push direction onto +x.
  const double c = std::cos(a.theta), s = std::sin(a.theta);
  Eigen::Matrix2d rot;
  rot << c, s, -s, c;
  const Vec2 center(0.5, 0.5);
  const Vec2 start(a.px, a.py);
  return AffineMap(rot, center - rot * start);
}

Image warp_image(const Image& img, const AffineMap& t) {
  const int n = img.n();
  const AffineMap inv = t.inverse();
  Image out(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double v = sample_bilinear(img, inv.apply(pixel_center(i, j, n)));
      out(i, j) = std::clamp(v, 0.0, 1.0);
    }
  return out;
}

Mask warp_mask(const AffineMap& t, int n) {
  return warp_image(warp_image(Image(n, 1.0), t), t.inverse());
}

Image compose_prediction(const Image& original, const Image& warped_back_pred,
                         const Mask& m) {
  const int n = original.n();
  if (warped_back_pred.n() != n || m.n() != n)
    throw std::invalid_argument("compose_prediction: resolution mismatch");
  Image out(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double w = m(i, j);
      out(i, j) = std::clamp(w * warped_back_pred(i, j) + (1.0 - w) * original(i, j),
                             0.0, 1.0);
    }
  return out;
}

}  // namespace lvf
