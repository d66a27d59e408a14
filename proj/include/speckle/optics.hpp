#pragma once

#include <array>
#include <cstdint>
#include <variant>
#include <vector>

#include "speckle/field.hpp"

namespace speckle {

enum class ApertureShape { square, circular };

/// Hard-edged stop. `size` is the side (square) or diameter (circular).
struct Aperture {
  ApertureShape shape = ApertureShape::square;
  double size = 0.0;
  std::array<double, 2> center_offset{0.0, 0.0};  // (x, y) in metres
};

/// Ideal thin lens.
struct ThinLens {
  double focal_length = 0.0;
};

using Element = std::variant<Aperture, ThinLens, PhaseScreen>;

/// Axial layout of one optical experiment. Element planes are non-decreasing and lie strictly
/// between the object and sensor planes; elements sharing a plane are applied in list order.
struct Geometry {
  double object_plane = 0.0;
  std::vector<double> element_planes;
  double sensor_plane = 0.0;
  int sensor_width = 0;
  int sensor_height = 0;
  double sensor_pitch = 0.0;

  double object_to_sensor() const { return sensor_plane - object_plane; }
  void validate() const;
};

struct PropagationOptions {
  /// Zero-padding factor per axis; 1 gives periodic boundaries.
  int pad_factor = 2;
  /// Apply the anti-aliasing band limit of the sampled transfer function.
  bool band_limit = true;
};

struct PropagationReport {
  /// Fraction of the padded spectrum's energy removed by the evanescent cut and band limit.
  double clipped_fraction = 0.0;
};

/// Band-limited angular-spectrum propagation over `distance` metres. Negative distances
/// back-propagate with the conjugate transfer function.
ComplexField propagate_as(const ComplexField& field, double distance,
                          const PropagationOptions& options = {},
                          PropagationReport* report = nullptr);

/// Angular-spectrum propagation evaluated on an arbitrary axis-centred grid `target` (own pitch
/// and size) by exact trigonometric interpolation of the padded spectrum. Costs O(M N^2) for an
/// M x M target; meant for small or sub-pixel sensor windows.
ComplexField propagate_as_to(const ComplexField& field, double distance, const GridSpec& target,
                             const PropagationOptions& options = {});

/// Smallest power-of-two padding factor (>= 2) whose padded window holds the field plus the
/// lateral spread of waves travelling at up to asin(max_sine) over `distance`.
int padding_for_spread(const GridSpec& grid, double distance, double max_sine);

/// The field that propagate_as treats as its input: padding, band limit and crop applied
/// without any propagation phase.
ComplexField band_limited(const ComplexField& field, double distance,
                          const PropagationOptions& options = {});

enum class DirectKernel {
  /// exp(-i k r) / r, the multiplex-sampling kernel.
  spherical,
  /// First Rayleigh-Sommerfeld kernel z / (2 pi r^2) (1/r + i k) exp(-i k r); the exact
  /// impulse response of angular-spectrum propagation.
  rayleigh_sommerfeld,
};

struct DirectOptions {
  DirectKernel kernel = DirectKernel::spherical;
  /// Band-limited (Fourier) interpolation of the source before summation; 1 sums the samples.
  int oversample = 1;
  /// Zero padding applied to the source before interpolation.
  int interpolation_pad = 1;
};

/// Brute-force summation out(r) = sum_R source(R) K(R - r) * pitch^2 onto a sensor grid
/// centred on the axis. O(N^2 M^2); intended for grids up to 64x64.
ComplexField propagate_direct(const ComplexField& source, double distance, const GridSpec& sensor,
                              const DirectOptions& options = {});

ComplexField apply_aperture(const ComplexField& field, const Aperture& aperture);
ComplexField apply_lens(const ComplexField& field, const ThinLens& lens);
ComplexField apply_phase_screen(const ComplexField& field, const PhaseScreen& screen);
ComplexField apply_element(const ComplexField& field, const Element& element);

/// Uniform i.i.d. phases, optionally smoothed as unit phasors with a periodic Gaussian of
/// standard deviation `correlation_length`.
PhaseScreen make_phase_screen(const GridSpec& grid, double correlation_length, std::uint64_t seed);

/// Minimal aperture lambda * L / dx that resolves a feature dx at distance L.
double diffraction_limit(double wavelength, double distance, double feature);

/// Crops the sensor footprint out of an intensity image sampled at the grid pitch and
/// integrates it onto sensor pixels.
IntensityImage sample_sensor(const IntensityImage& plane, const Geometry& geometry);

/// Coherent chain: propagate between planes, apply each element, record intensity. Sensor pixels
/// finer than the grid are evaluated with propagate_as_to and area-integrated.
IntensityImage coherent_sensor_image(const ComplexField& object_field, const Geometry& geometry,
                                     const std::vector<Element>& elements,
                                     const PropagationOptions& options = {});

enum class IncoherentMethod { automatic, direct, fft };

/// Lensless incoherent sensor: out(r) = sum_R |source(R)|^2 / |R - r|^2 * pitch^2.
IntensityImage incoherent_lensless_image(const ComplexField& object_field, const Geometry& geometry,
                                         IncoherentMethod method = IncoherentMethod::automatic);

struct ImagingOptions {
  /// Side of the square grid used for the point-spread function; 0 picks one from the
  /// aperture and sensor sizes.
  int psf_grid = 0;
  int pad_factor = 2;
  /// Odd sub-sampling factor for the wave computation; 0 picks the smallest one that samples
  /// the converging wave. The PSF is area-integrated back onto `pitch`.
  int oversample = 0;
};

/// Incoherent intensity PSF |h|^2 of point source -> aperture -> lens -> sensor, integrated over
/// pixels of `pitch` on a psf_grid x psf_grid grid centred on the geometric image of the axis.
/// `object_distance` runs from the point source to the lens plane. Normalized to unit sum.
IntensityImage imaging_psf(double object_distance, const Geometry& geometry,
                           const Aperture& aperture, const ThinLens& lens, double pitch,
                           double wavelength, const ImagingOptions& options = {});

/// Magnified (inverted) object intensity convolved with a PSF from imaging_psf sampled at the
/// object pitch, energy-normalized to the object, then pooled onto the sensor.
IntensityImage image_through_psf(const IntensityImage& object_intensity, const Geometry& geometry,
                                 const IntensityImage& psf);

/// Second moment radius of a PSF about its centroid, in metres.
double psf_width(const IntensityImage& psf);

/// Incoherent imaging: the geometrically magnified (inverted) object intensity convolved with
/// the system's intensity PSF. geometry.element_planes = {aperture plane, lens plane}.
IntensityImage incoherent_imaging(const IntensityImage& object_intensity, const Geometry& geometry,
                                  const Aperture& aperture, const ThinLens& lens,
                                  double wavelength, const ImagingOptions& options = {});

}  // namespace speckle
