#include "lvf/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace lvf {

Image::Image(int n, double fill) {
  if (n < 2) throw std::invalid_argument("Image: resolution must be >= 2");
  if (!(fill >= 0.0 && fill <= 1.0))
    throw std::invalid_argument("Image: fill value outside [0,1]");
  grid_ = Eigen::MatrixXd::Constant(n, n, fill);
}

Image Image::from_grid(const Eigen::MatrixXd& grid) {
  if (grid.rows() != grid.cols())
    throw std::invalid_argument("Image: grid must be square");
  if (grid.rows() < 2) throw std::invalid_argument("Image: resolution must be >= 2");
  for (int i = 0; i < grid.rows(); ++i)
    for (int j = 0; j < grid.cols(); ++j) {
      const double v = grid(i, j);
      if (!std::isfinite(v) || v < 0.0 || v > 1.0)
        throw std::invalid_argument("Image: entry outside [0,1]");
    }
  Image img;
  img.grid_ = grid;
  return img;
}

VecImage vectorize(const Image& img) {
  const int n = img.n();
  VecImage v(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) v[i * n + j] = img(i, j);
  return v;
}

Image devectorize(const VecImage& v) {
  const auto len = v.size();
  const int n = static_cast<int>(std::llround(std::sqrt(static_cast<double>(len))));
  if (static_cast<Eigen::Index>(n) * n != len)
    throw std::invalid_argument("devectorize: length " + std::to_string(len) +
                                " is not a perfect square");
  Eigen::MatrixXd grid(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) grid(i, j) = v[i * n + j];
  return Image::from_grid(grid);
}

double frobenius_distance(const Image& a, const Image& b) {
  if (a.n() != b.n())
    throw std::invalid_argument("frobenius_distance: resolution mismatch");
  return (a.grid() - b.grid()).norm();
}

double grand_sum(const Image& img) { return img.grid().sum(); }

Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pgm: cannot open " + path);

  // Header tokens may be separated by whitespace and '#' comment lines.
  auto next_token = [&in, &path]() {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
      if (c == '#') {
        while (c != EOF && c != '\n') c = in.get();
      } else if (std::isspace(c)) {
        c = in.get();
      } else {
        break;
      }
    }
    while (c != EOF && !std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      c = in.get();
    }
    if (tok.empty()) throw std::runtime_error("read_pgm: truncated header in " + path);
    return tok;
  };

  if (next_token() != "P5") throw std::runtime_error("read_pgm: not a P5 file: " + path);
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w != h) throw std::runtime_error("read_pgm: image must be square");
  if (maxval != 255) throw std::runtime_error("read_pgm: unsupported maxval");

  std::vector<unsigned char> bytes(static_cast<size_t>(w) * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw std::runtime_error("read_pgm: truncated pixel data in " + path);

  Eigen::MatrixXd grid(h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) grid(i, j) = bytes[static_cast<size_t>(i) * w + j] / 255.0;
  return Image::from_grid(grid);
}

void write_pgm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
  const int n = img.n();
  out << "P5\n" << n << " " << n << "\n255\n";
  std::vector<unsigned char> bytes(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      bytes[static_cast<size_t>(i) * n + j] =
          static_cast<unsigned char>(std::lround(img(i, j) * 255.0));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write_pgm: write failed for " + path);
}

}  // namespace lvf
