#pragma once

#include <Eigen/Dense>
#include <array>

#include "lvf/image.hpp"

namespace lvf {

using Vec2 = Eigen::Vector2d;

inline constexpr double kMaxPushLength = 0.5;
inline constexpr double kDefaultPusherWidth = 0.25;

// World frame = image frame: x right in [0,1], y down in [0,1].
// Pixel (i, j) has its center at ((j+0.5)/N, (i+0.5)/N).
inline Vec2 pixel_center(int i, int j, int n) {
  return {(j + 0.5) / n, (i + 0.5) / n};
}

// One push: start point (center of the pusher edge), direction measured
// from +x, and travel distance.
struct Action {
  double px = 0.5;
  double py = 0.5;
  double theta = 0.0;   // radians in [0, 2*pi)
  double length = 0.1;  // world units in (0, kMaxPushLength]
};

void validate(const Action& a);

// Area swept by the pusher, corners counter-clockwise starting at the
// near edge.
struct PushRectangle {
  std::array<Vec2, 4> corners;
};

PushRectangle push_rectangle(const Action& a, double width);

bool rectangle_contains(const PushRectangle& r, const Vec2& p);

// Rigid SE(2) transform p -> R*p + t acting on world coordinates.
class AffineMap {
 public:
  AffineMap() : rot_(Eigen::Matrix2d::Identity()), trans_(Vec2::Zero()) {}
  AffineMap(const Eigen::Matrix2d& rot, const Vec2& trans) : rot_(rot), trans_(trans) {}

  Vec2 apply(const Vec2& p) const { return rot_ * p + trans_; }
  AffineMap inverse() const {
    return AffineMap(rot_.transpose(), -(rot_.transpose() * trans_));
  }

  const Eigen::Matrix2d& rotation() const { return rot_; }
  const Vec2& translation() const { return trans_; }
  Eigen::Matrix<double, 2, 3> matrix() const;

 private:
  Eigen::Matrix2d rot_;
  Vec2 trans_;
};

// Soft blending weights in [0, 1]; the identity map gives all-ones.
using Mask = Image;

// Map sending the push start point to the image center (0.5, 0.5) and the
// push direction to +x, so every push becomes the canonical action
// (0.5, 0.5, 0, length).
AffineMap canonical_transform(const Action& a);

// Inverse warp with bilinear interpolation: the output pixel at center c
// takes the value of img at T^-1(c). Samples outside [0,1]^2 contribute
// zero; the result is clamped to [0,1].
Image warp_image(const Image& img, const AffineMap& t);

// M = T^-1(T(ones)). Marks how much of each pixel survives the
// forward/backward warp round trip.
Mask warp_mask(const AffineMap& t, int n);

// M (*) warped_back_pred + (1-M) (*) original, clamped to [0,1].
Image compose_prediction(const Image& original, const Image& warped_back_pred,
                         const Mask& m);

}  // namespace lvf
