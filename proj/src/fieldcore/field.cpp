#include "speckle/field.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace speckle {

double GridSpec::wavenumber() const { return 2.0 * std::numbers::pi / wavelength; }

void GridSpec::validate() const {
  if (width < 1 || height < 1) throw ArgumentError("grid dimensions must be >= 1");
  if (!(pitch > 0.0) || !std::isfinite(pitch)) throw ArgumentError("grid pitch must be > 0");
  if (!(wavelength > 0.0) || !std::isfinite(wavelength))
    throw ArgumentError("wavelength must be > 0");
}

ComplexField::ComplexField(const GridSpec& grid, ComplexGrid amplitude)
    : grid_(grid), amplitude_(std::move(amplitude)) {
  grid_.validate();
  if (amplitude_.rows() != grid_.height || amplitude_.cols() != grid_.width)
    throw ArgumentError("amplitude shape does not match grid");
  if (!amplitude_.real().allFinite() || !amplitude_.imag().allFinite())
    throw NumericError("complex field contains non-finite values");
}

ComplexField ComplexField::zeros(const GridSpec& grid) {
  return ComplexField(grid, ComplexGrid::Zero(grid.height, grid.width));
}

ComplexField ComplexField::plane_wave(const GridSpec& grid, Complex value) {
  return ComplexField(grid, ComplexGrid::Constant(grid.height, grid.width, value));
}

IntensityImage::IntensityImage(int width, int height, double pitch, RealGrid values,
                               std::optional<int> bit_depth)
    : width_(width), height_(height), pitch_(pitch), values_(std::move(values)),
      bit_depth_(bit_depth) {
  if (width_ < 1 || height_ < 1) throw ArgumentError("image dimensions must be >= 1");
  if (!(pitch_ > 0.0)) throw ArgumentError("image pitch must be > 0");
  if (values_.rows() != height_ || values_.cols() != width_)
    throw ArgumentError("image values do not match dimensions");
  if (!values_.allFinite()) throw NumericError("intensity image contains non-finite values");
  if ((values_ < 0.0).any()) throw ArgumentError("intensity values must be nonnegative");
  if (bit_depth_) {
    if (*bit_depth_ < 1 || *bit_depth_ > 16) throw ArgumentError("bit depth must be in [1, 16]");
    const double top = std::ldexp(1.0, *bit_depth_) - 1.0;
    if ((values_ > top).any() || (values_ != values_.round()).any())
      throw ArgumentError("quantized values must be integers in [0, 2^bits - 1]");
  }
}

namespace {

double bilinear(const BitmapView& bm, double u, double v) {
  // (u, v) in bitmap pixel-centre coordinates, clamped to the bitmap.
  u = std::clamp(u, 0.0, static_cast<double>(bm.cols - 1));
  v = std::clamp(v, 0.0, static_cast<double>(bm.rows - 1));
  const int c0 = static_cast<int>(std::floor(u));
  const int r0 = static_cast<int>(std::floor(v));
  const int c1 = std::min(c0 + 1, bm.cols - 1);
  const int r1 = std::min(r0 + 1, bm.rows - 1);
  const double fu = u - c0;
  const double fv = v - r0;
  auto px = [&](int r, int c) { return static_cast<double>(bm.pixels[r * bm.cols + c]); };
  const double top = px(r0, c0) * (1.0 - fu) + px(r0, c1) * fu;
  const double bottom = px(r1, c0) * (1.0 - fu) + px(r1, c1) * fu;
  return top * (1.0 - fv) + bottom * fv;
}

}  // namespace

ComplexField rasterize_object(const BitmapView& bitmap, double object_size, const GridSpec& grid,
                              const PhaseScreen* diffuser) {
  grid.validate();
  if (bitmap.rows < 1 || bitmap.cols < 1 ||
      bitmap.pixels.size() != static_cast<std::size_t>(bitmap.rows) * bitmap.cols)
    throw ArgumentError("bitmap is empty or inconsistent");
  if (!(object_size > 0.0)) throw ArgumentError("object size must be > 0");
  if (object_size > grid.width * grid.pitch * (1 + 1e-12) ||
      object_size > grid.height * grid.pitch * (1 + 1e-12))
    throw GeometryError("object of size " + std::to_string(object_size) +
                        " m exceeds the grid extent");

  const double half = 0.5 * object_size;
  ComplexGrid amp = ComplexGrid::Zero(grid.height, grid.width);
  for (int y = 0; y < grid.height; ++y) {
    const double py = grid.coordinate(y, grid.height);
    if (std::abs(py) >= half) continue;
    const double v = (py + half) / object_size * bitmap.rows - 0.5;
    for (int x = 0; x < grid.width; ++x) {
      const double px = grid.coordinate(x, grid.width);
      if (std::abs(px) >= half) continue;
      const double u = (px + half) / object_size * bitmap.cols - 0.5;
      amp(y, x) = bilinear(bitmap, u, v) / 255.0;
    }
  }
  ComplexField field(grid, std::move(amp));
  return diffuser ? multiply_phase(field, *diffuser) : field;
}

ComplexField multiply_phase(const ComplexField& field, const PhaseScreen& screen) {
  if (screen.width != field.width() || screen.height != field.height() ||
      screen.phases.rows() != field.height() || screen.phases.cols() != field.width())
    throw GeometryError("phase screen dimensions do not match the field");
  ComplexGrid out(field.height(), field.width());
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out.data()[i] = field.amplitude().data()[i] * std::polar(1.0, screen.phases.data()[i]);
  return ComplexField(field.grid(), std::move(out));
}

IntensityImage intensity(const ComplexField& field) {
  return IntensityImage(field.width(), field.height(), field.pitch(), field.amplitude().abs2());
}

IntensityImage quantize(const IntensityImage& image, int bits) {
  if (bits < 1 || bits > 16) throw ArgumentError("bits must be in [1, 16]");
  if (image.bit_depth()) throw ArgumentError("image is already quantized");
  const double top = std::ldexp(1.0, bits) - 1.0;
  const double peak = image.values().maxCoeff();
  RealGrid q = RealGrid::Zero(image.height(), image.width());
  if (peak > 0.0) q = (image.values() * (top / peak)).round().min(top);
  return IntensityImage(image.width(), image.height(), image.pitch(), std::move(q), bits);
}

IntensityImage round_to_depth(const IntensityImage& image, int bits) {
  if (bits < 1 || bits > 16) throw ArgumentError("bits must be in [1, 16]");
  const double top = std::ldexp(1.0, bits) - 1.0;
  RealGrid q = image.values().round().min(top);
  return IntensityImage(image.width(), image.height(), image.pitch(), std::move(q), bits);
}

namespace {

// Row i holds the overlap fractions of output cell i with each input pixel, divided by
// the cell width so the row sums to one.
Eigen::MatrixXd pooling_matrix(int in, int out) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(out, in);
  const double block = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    const double lo = i * block;
    const double hi = (i + 1) * block;
    for (int j = static_cast<int>(std::floor(lo)); j < in && j < hi; ++j) {
      const double overlap = std::min(hi, j + 1.0) - std::max(lo, static_cast<double>(j));
      if (overlap > 0.0) w(i, j) = overlap / block;
    }
  }
  return w;
}

}  // namespace

IntensityImage downsample(const IntensityImage& image, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw ArgumentError("output dimensions must be >= 1");
  if (out_w > image.width() || out_h > image.height())
    throw ArgumentError("downsample cannot enlarge an image");
  if (out_w == image.width() && out_h == image.height()) return image;
  const Eigen::MatrixXd wy = pooling_matrix(image.height(), out_h);
  const Eigen::MatrixXd wx = pooling_matrix(image.width(), out_w);
  RealGrid pooled = (wy * image.values().matrix() * wx.transpose()).array().max(0.0);
  const double pitch = image.pitch() * static_cast<double>(image.width()) / out_w;
  return IntensityImage(out_w, out_h, pitch, std::move(pooled));
}

IntensityImage crop_center(const IntensityImage& image, int w, int h) {
  if (w < 1 || h < 1 || w > image.width() || h > image.height())
    throw GeometryError("crop of " + std::to_string(w) + "x" + std::to_string(h) +
                        " does not fit a " + std::to_string(image.width()) + "x" +
                        std::to_string(image.height()) + " image");
  const int x0 = (image.width() - w) / 2;
  const int y0 = (image.height() - h) / 2;
  return IntensityImage(w, h, image.pitch(), image.values().block(y0, x0, h, w),
                        image.bit_depth());
}

ComplexField crop_center(const ComplexField& field, int w, int h) {
  if (w < 1 || h < 1 || w > field.width() || h > field.height())
    throw GeometryError("crop of " + std::to_string(w) + "x" + std::to_string(h) +
                        " does not fit a " + std::to_string(field.width()) + "x" +
                        std::to_string(field.height()) + " field");
  GridSpec g = field.grid();
  g.width = w;
  g.height = h;
  const int x0 = (field.width() - w) / 2;
  const int y0 = (field.height() - h) / 2;
  return ComplexField(g, field.amplitude().block(y0, x0, h, w));
}

RealGrid standardize(const RealGrid& values) {
  const double mean = values.mean();
  const double var = (values - mean).square().mean();
  if (!(var > 0.0)) return RealGrid::Zero(values.rows(), values.cols());
  return (values - mean) / std::sqrt(var);
}

double normalized_cross_correlation(const RealGrid& a, const RealGrid& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ArgumentError("correlation needs equally sized images");
  const RealGrid da = a - a.mean();
  const RealGrid db = b - b.mean();
  const double denom = std::sqrt(da.square().sum() * db.square().sum());
  return denom > 0.0 ? (da * db).sum() / denom : 0.0;
}

}  // namespace speckle
