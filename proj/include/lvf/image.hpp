#pragma once

#include <Eigen/Dense>
#include <string>

namespace lvf {

// Row-major vectorized image: element i*N+j holds pixel (row i, col j).
using VecImage = Eigen::VectorXd;

// Square grayscale grid with intensities in [0, 1]. Row 0 is the top of
// the image; pixel (i, j) = (row, column).
class Image {
 public:
  Image() = default;
  explicit Image(int n, double fill = 0.0);

  // Validating constructor: checks squareness, finiteness and range.
  static Image from_grid(const Eigen::MatrixXd& grid);

  int n() const { return static_cast<int>(grid_.rows()); }
  double operator()(int i, int j) const { return grid_(i, j); }
  double& operator()(int i, int j) { return grid_(i, j); }
  const Eigen::MatrixXd& grid() const { return grid_; }

 private:
  Eigen::MatrixXd grid_;
};

VecImage vectorize(const Image& img);

// Inverse of vectorize. Throws if the length is not a perfect square or
// entries violate the intensity range.
Image devectorize(const VecImage& v);

// Entrywise Frobenius distance sqrt(sum (a-b)^2). Throws on mismatched
// resolution.
double frobenius_distance(const Image& a, const Image& b);

// Sum of all entries (the entrywise 1-norm, since intensities are
// non-negative).
double grand_sum(const Image& img);

// Binary PGM (P5, maxval 255). Intensity v maps to round(v*255) on write
// and byte/255.0 on read, so byte-valued images round-trip bit-exact.
Image read_pgm(const std::string& path);
void write_pgm(const Image& img, const std::string& path);

}  // namespace lvf
