#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>

#include <Eigen/Core>

#include "speckle/error.hpp"

namespace speckle {

using Complex = std::complex<double>;

/// Row-major grids: rows index y (height), columns index x (width).
template <typename Scalar>
using Grid = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ComplexGrid = Grid<Complex>;
using RealGrid = Grid<double>;

/// Sampling of an optical plane: square pixels, centred on the optical axis.
struct GridSpec {
  int width = 0;
  int height = 0;
  double pitch = 0.0;       // m / pixel
  double wavelength = 0.0;  // m

  double wavenumber() const;
  /// Physical coordinate of pixel centre `i` along an axis with `n` samples.
  double coordinate(int i, int n) const { return (i - 0.5 * (n - 1)) * pitch; }
  void validate() const;
  bool operator==(const GridSpec&) const = default;
};

/// Complex scalar amplitude on a sampled plane. Immutable after construction.
class ComplexField {
 public:
  ComplexField(const GridSpec& grid, ComplexGrid amplitude);
  static ComplexField zeros(const GridSpec& grid);
  static ComplexField plane_wave(const GridSpec& grid, Complex value = 1.0);

  const GridSpec& grid() const { return grid_; }
  int width() const { return grid_.width; }
  int height() const { return grid_.height; }
  double pitch() const { return grid_.pitch; }
  double wavelength() const { return grid_.wavelength; }
  const ComplexGrid& amplitude() const { return amplitude_; }
  Complex operator()(int y, int x) const { return amplitude_(y, x); }

  /// Sum of |a|^2 over pixels (unweighted by pitch).
  double energy() const { return amplitude_.abs2().sum(); }

 private:
  GridSpec grid_;
  ComplexGrid amplitude_;
};

/// Nonnegative sensor intensities, optionally integer-quantized.
class IntensityImage {
 public:
  IntensityImage(int width, int height, double pitch, RealGrid values,
                 std::optional<int> bit_depth = std::nullopt);

  int width() const { return width_; }
  int height() const { return height_; }
  double pitch() const { return pitch_; }
  const RealGrid& values() const { return values_; }
  double operator()(int y, int x) const { return values_(y, x); }
  std::optional<int> bit_depth() const { return bit_depth_; }

  double mean() const { return values_.mean(); }
  double total() const { return values_.sum(); }

 private:
  int width_;
  int height_;
  double pitch_;
  RealGrid values_;
  std::optional<int> bit_depth_;
};

/// Thin random-phase element (diffuser or scattering wall).
struct PhaseScreen {
  int width = 0;
  int height = 0;
  double pitch = 0.0;
  RealGrid phases;  // radians in [0, 2*pi)
  double correlation_length = 0.0;
  std::uint64_t seed = 0;
};

/// Read-only view of one 8-bit grayscale bitmap.
struct BitmapView {
  int rows = 0;
  int cols = 0;
  std::span<const std::uint8_t> pixels;  // rows * cols, row-major
};

/// Resamples `bitmap` (bilinear) onto the central object_size x object_size square of
/// `grid` as amplitude reflectance under unit plane-wave illumination.
ComplexField rasterize_object(const BitmapView& bitmap, double object_size, const GridSpec& grid,
                              const PhaseScreen* diffuser = nullptr);

ComplexField multiply_phase(const ComplexField& field, const PhaseScreen& screen);

IntensityImage intensity(const ComplexField& field);

/// Full-scale mapping of the image maximum to 2^bits - 1, rounded to integers.
IntensityImage quantize(const IntensityImage& image, int bits);

/// Rounds values to integers in [0, 2^bits - 1] without rescaling.
IntensityImage round_to_depth(const IntensityImage& image, int bits);

/// Area-weighted block-mean pooling to out_w x out_h (fractional blocks allowed).
IntensityImage downsample(const IntensityImage& image, int out_w, int out_h);

/// Centre crop of `w` x `h` pixels.
IntensityImage crop_center(const IntensityImage& image, int w, int h);
ComplexField crop_center(const ComplexField& field, int w, int h);

/// Zero mean / unit variance; a constant image maps to all zeros.
RealGrid standardize(const RealGrid& values);

/// Pearson correlation of two equally sized images (0 when either is constant).
double normalized_cross_correlation(const RealGrid& a, const RealGrid& b);

}  // namespace speckle
