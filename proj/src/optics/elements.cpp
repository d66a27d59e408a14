#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "speckle/fft.hpp"
#include "speckle/optics.hpp"
#include "speckle/random.hpp"

namespace speckle {

using std::numbers::pi;

void Geometry::validate() const {
  if (!std::isfinite(object_plane) || !std::isfinite(sensor_plane))
    throw GeometryError("plane positions must be finite");
  if (sensor_plane < object_plane)
    throw GeometryError("sensor plane must not precede the object plane");
  double prev = object_plane;
  for (double z : element_planes) {
    if (!std::isfinite(z) || !(z > object_plane) || !(z < sensor_plane))
      throw GeometryError("element plane " + std::to_string(z) +
                          " is not strictly between object and sensor");
    if (z < prev) throw GeometryError("element planes must be non-decreasing");
    prev = z;
  }
  if (sensor_width < 1 || sensor_height < 1) throw GeometryError("sensor needs >= 1 pixel");
  if (!(sensor_pitch > 0.0) || !std::isfinite(sensor_pitch))
    throw GeometryError("sensor pitch must be > 0");
}

ComplexField apply_aperture(const ComplexField& field, const Aperture& aperture) {
  if (!(aperture.size > 0.0)) throw GeometryError("aperture size must be > 0");
  const GridSpec& g = field.grid();
  const double half = 0.5 * aperture.size;
  ComplexGrid out = field.amplitude();
  for (int y = 0; y < g.height; ++y) {
    const double dy = g.coordinate(y, g.height) - aperture.center_offset[1];
    for (int x = 0; x < g.width; ++x) {
      const double dx = g.coordinate(x, g.width) - aperture.center_offset[0];
      const bool open = aperture.shape == ApertureShape::square
                            ? std::abs(dx) < half && std::abs(dy) < half
                            : dx * dx + dy * dy < half * half;
      if (!open) out(y, x) = 0.0;
    }
  }
  return ComplexField(g, std::move(out));
}

ComplexField apply_lens(const ComplexField& field, const ThinLens& lens) {
  if (!(lens.focal_length != 0.0) || !std::isfinite(lens.focal_length))
    throw GeometryError("focal length must be finite and nonzero");
  const GridSpec& g = field.grid();
  const double c = g.wavenumber() / (2.0 * lens.focal_length);
  ComplexGrid out(g.height, g.width);
  for (int y = 0; y < g.height; ++y) {
    const double py = g.coordinate(y, g.height);
    for (int x = 0; x < g.width; ++x) {
      const double px = g.coordinate(x, g.width);
      out(y, x) = field(y, x) * std::polar(1.0, c * (px * px + py * py));
    }
  }
  return ComplexField(g, std::move(out));
}

ComplexField apply_phase_screen(const ComplexField& field, const PhaseScreen& screen) {
  if (std::abs(screen.pitch - field.pitch()) > 1e-9 * field.pitch())
    throw GeometryError("phase screen pitch does not match the field");
  return multiply_phase(field, screen);
}

ComplexField apply_element(const ComplexField& field, const Element& element) {
  return std::visit(
      [&](const auto& e) -> ComplexField {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, Aperture>) return apply_aperture(field, e);
        else if constexpr (std::is_same_v<T, ThinLens>) return apply_lens(field, e);
        else return apply_phase_screen(field, e);
      },
      element);
}

PhaseScreen make_phase_screen(const GridSpec& grid, double correlation_length, std::uint64_t seed) {
  grid.validate();
  if (correlation_length < 0.0 || !std::isfinite(correlation_length))
    throw ArgumentError("correlation length must be >= 0");
  PhaseScreen s{grid.width, grid.height, grid.pitch, RealGrid(grid.height, grid.width),
                correlation_length, seed};
  Rng rng(seed);
  for (Eigen::Index i = 0; i < s.phases.size(); ++i) s.phases.data()[i] = 2.0 * pi * rng.uniform();
  if (correlation_length == 0.0) return s;

  const int rows = grid.height, cols = grid.width;
  fft::Buffer buf(static_cast<std::size_t>(rows) * cols);
  for (Eigen::Index i = 0; i < s.phases.size(); ++i) buf[i] = std::polar(1.0, s.phases.data()[i]);
  fft::forward(buf, rows, cols);
  const double sigma = correlation_length / grid.pitch;  // pixels
  for (int r = 0; r < rows; ++r) {
    const double fy = static_cast<double>(r <= rows / 2 ? r : r - rows) / rows;
    for (int c = 0; c < cols; ++c) {
      const double fx = static_cast<double>(c <= cols / 2 ? c : c - cols) / cols;
      buf[static_cast<std::size_t>(r) * cols + c] *=
          std::exp(-2.0 * pi * pi * sigma * sigma * (fx * fx + fy * fy));
    }
  }
  fft::inverse(buf, rows, cols);
  for (Eigen::Index i = 0; i < s.phases.size(); ++i) {
    double a = std::arg(buf[i]);
    if (a < 0.0) a += 2.0 * pi;
    s.phases.data()[i] = a >= 2.0 * pi ? 0.0 : a;
  }
  return s;
}

IntensityImage sample_sensor(const IntensityImage& plane, const Geometry& geometry) {
  const double fw = geometry.sensor_width * geometry.sensor_pitch / plane.pitch();
  const double fh = geometry.sensor_height * geometry.sensor_pitch / plane.pitch();
  const int w = static_cast<int>(std::lround(fw));
  const int h = static_cast<int>(std::lround(fh));
  if (w < geometry.sensor_width || h < geometry.sensor_height)
    throw GeometryError("sensor pitch is finer than the simulation grid");
  if (w > plane.width() || h > plane.height())
    throw GeometryError("sensor footprint exceeds the simulation grid");
  IntensityImage pooled =
      downsample(crop_center(plane, w, h), geometry.sensor_width, geometry.sensor_height);
  return IntensityImage(pooled.width(), pooled.height(), geometry.sensor_pitch, pooled.values());
}

IntensityImage coherent_sensor_image(const ComplexField& object_field, const Geometry& geometry,
                                     const std::vector<Element>& elements,
                                     const PropagationOptions& options) {
  geometry.validate();
  if (elements.size() != geometry.element_planes.size())
    throw GeometryError("one plane position is needed per element");
  ComplexField field = object_field;
  double z = geometry.object_plane;
  for (std::size_t i = 0; i < elements.size(); ++i) {
    field = propagate_as(field, geometry.element_planes[i] - z, options);
    z = geometry.element_planes[i];
    field = apply_element(field, elements[i]);
  }
  const double last = geometry.sensor_plane - z;
  if (geometry.sensor_pitch >= field.pitch())
    return sample_sensor(intensity(propagate_as(field, last, options)), geometry);
  const int q = std::max(1, static_cast<int>(std::ceil(2.0 * geometry.sensor_pitch / field.pitch())));
  const GridSpec fine{geometry.sensor_width * q, geometry.sensor_height * q,
                      geometry.sensor_pitch / q, field.wavelength()};
  const double half_w = 0.5 * fine.width * fine.pitch, half_h = 0.5 * fine.height * fine.pitch;
  if (half_w > 0.5 * field.width() * field.pitch() || half_h > 0.5 * field.height() * field.pitch())
    throw GeometryError("sensor footprint exceeds the simulation grid");
  const IntensityImage pooled = downsample(intensity(propagate_as_to(field, last, fine, options)),
                                           geometry.sensor_width, geometry.sensor_height);
  return IntensityImage(pooled.width(), pooled.height(), geometry.sensor_pitch, pooled.values());
}

namespace {

// Full linear convolution of two real grids via zero-padded FFTs.
RealGrid convolve_full(const RealGrid& a, const RealGrid& b) {
  const int rows = static_cast<int>(a.rows() + b.rows() - 1);
  const int cols = static_cast<int>(a.cols() + b.cols() - 1);
  fft::Buffer fa(static_cast<std::size_t>(rows) * cols), fb(fa.size());
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] = fb[i] = 0.0;
  for (Eigen::Index y = 0; y < a.rows(); ++y)
    for (Eigen::Index x = 0; x < a.cols(); ++x) fa[y * cols + x] = a(y, x);
  for (Eigen::Index y = 0; y < b.rows(); ++y)
    for (Eigen::Index x = 0; x < b.cols(); ++x) fb[y * cols + x] = b(y, x);
  fft::forward(fa, rows, cols);
  fft::forward(fb, rows, cols);
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] *= fb[i];
  fft::inverse(fa, rows, cols);
  const double norm = 1.0 / (static_cast<double>(rows) * cols);
  RealGrid out(rows, cols);
  for (int y = 0; y < rows; ++y)
    for (int x = 0; x < cols; ++x)
      out(y, x) = std::max(0.0, fa[static_cast<std::size_t>(y) * cols + x].real() * norm);
  return out;
}

}  // namespace

IntensityImage incoherent_lensless_image(const ComplexField& object_field, const Geometry& geometry,
                                         IncoherentMethod method) {
  if (geometry.object_to_sensor() == 0.0)
    throw SingularKernelError("incoherent kernel is singular at zero distance");
  geometry.validate();
  const double z = geometry.object_to_sensor();
  const GridSpec& g = object_field.grid();
  const RealGrid source = object_field.amplitude().abs2();
  const double area = g.pitch * g.pitch;

  if (method == IncoherentMethod::direct) {
    RealGrid out = RealGrid::Zero(geometry.sensor_height, geometry.sensor_width);
    for (int sy = 0; sy < geometry.sensor_height; ++sy) {
      const double ry = (sy - 0.5 * (geometry.sensor_height - 1)) * geometry.sensor_pitch;
      for (int sx = 0; sx < geometry.sensor_width; ++sx) {
        const double rx = (sx - 0.5 * (geometry.sensor_width - 1)) * geometry.sensor_pitch;
        double acc = 0.0;
        for (int y = 0; y < g.height; ++y) {
          const double dy = g.coordinate(y, g.height) - ry;
          for (int x = 0; x < g.width; ++x) {
            const double dx = g.coordinate(x, g.width) - rx;
            acc += source(y, x) / (z * z + dx * dx + dy * dy);
          }
        }
        out(sy, sx) = acc * area;
      }
    }
    return IntensityImage(geometry.sensor_width, geometry.sensor_height, geometry.sensor_pitch,
                          std::move(out));
  }

  // Evaluate on a grid at the source pitch covering the sensor footprint, then pool.
  // Output pixel i sits at (i - j + (n - m) / 2) pitches from source pixel j.
  const int mw = std::max(geometry.sensor_width, static_cast<int>(std::lround(
                              geometry.sensor_width * geometry.sensor_pitch / g.pitch)));
  const int mh = std::max(geometry.sensor_height, static_cast<int>(std::lround(
                              geometry.sensor_height * geometry.sensor_pitch / g.pitch)));
  // Only the nonzero support of the source contributes.
  int y0 = g.height, y1 = -1, x0 = g.width, x1 = -1;
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x)
      if (source(y, x) != 0.0) {
        y0 = std::min(y0, y), y1 = std::max(y1, y);
        x0 = std::min(x0, x), x1 = std::max(x1, x);
      }
  if (y1 < 0) y0 = y1 = x0 = x1 = 0;
  const int nh = y1 - y0 + 1, nw = x1 - x0 + 1;
  const int kw = mw + nw - 1, kh = mh + nh - 1;
  RealGrid kernel(kh, kw);
  for (int y = 0; y < kh; ++y) {
    const double dy = (y - (nh - 1) - y0 + 0.5 * (g.height - mh)) * g.pitch;
    for (int x = 0; x < kw; ++x) {
      const double dx = (x - (nw - 1) - x0 + 0.5 * (g.width - mw)) * g.pitch;
      kernel(y, x) = area / (z * z + dx * dx + dy * dy);
    }
  }
  const RealGrid full = convolve_full(source.block(y0, x0, nh, nw), kernel);
  IntensityImage plane(mw, mh, g.pitch, full.block(nh - 1, nw - 1, mh, mw));
  IntensityImage pooled = downsample(plane, geometry.sensor_width, geometry.sensor_height);
  return IntensityImage(pooled.width(), pooled.height(), geometry.sensor_pitch, pooled.values());
}

IntensityImage imaging_psf(double object_distance, const Geometry& geometry,
                           const Aperture& aperture, const ThinLens& lens, double pitch,
                           double wavelength, const ImagingOptions& options) {
  if (geometry.element_planes.size() != 2)
    throw GeometryError("imaging needs element planes {aperture, lens}");
  const double z_ap = geometry.element_planes[0];
  const double z_lens = geometry.element_planes[1];
  const double gap = z_lens - z_ap;
  const double image_distance = geometry.sensor_plane - z_lens;
  const double source_to_aperture = object_distance - gap;
  if (gap < 0.0 || !(image_distance > 0.0) || !(source_to_aperture > 0.0))
    throw GeometryError("point source, aperture, lens and sensor must be in order");
  if (!(aperture.size > 0.0)) throw GeometryError("aperture size must be > 0");

  const double reach = 0.5 * aperture.size + std::hypot(aperture.center_offset[0],
                                                        aperture.center_offset[1]);
  int q = options.oversample;
  if (q == 0) {
    const double na = reach / std::min(source_to_aperture, image_distance);
    const double fine = 0.45 * wavelength / std::min(na, 1.0);
    q = std::max(1, static_cast<int>(std::ceil(pitch / fine)));
    q = std::max(q | 1, 1);
    while (pitch / q < wavelength && q > 1) q -= 2;
  }
  if (q < 1 || q % 2 == 0) throw ArgumentError("psf oversampling must be odd and >= 1");

  int n = options.psf_grid;
  if (n == 0) {
    // Geometric defocus blur or diffraction spot (a few Airy rings), whichever is wider, capped at
    // twice the sensor footprint: the largest offset between a sensor pixel and any point of an
    // image that fits on the sensor.
    const double footprint =
        std::max(geometry.sensor_width, geometry.sensor_height) * geometry.sensor_pitch;
    const double vergence = 1.0 / lens.focal_length - 1.0 / object_distance;
    double blur = 2.0 * footprint;
    if (vergence > 0.0) blur = 2.0 * reach * std::abs(image_distance * vergence - 1.0);
    blur = std::min(2.0 * footprint, std::max(blur, 8.0 * wavelength * image_distance / aperture.size));
    const double extent = 1.25 * std::max(2.0 * reach, blur) + 16.0 * pitch;
    n = static_cast<int>(std::ceil(extent / pitch)) | 1;
  }
  if (n < 3) throw ArgumentError("psf grid must be >= 3");
  const int nf = n * q;
  GridSpec g{nf, nf, pitch / q, wavelength};
  g.validate();

  const double k = g.wavenumber();
  ComplexGrid wave(nf, nf);
  for (int y = 0; y < nf; ++y) {
    const double py = g.coordinate(y, nf);
    for (int x = 0; x < nf; ++x) {
      const double px = g.coordinate(x, nf);
      const double r = std::sqrt(px * px + py * py + source_to_aperture * source_to_aperture);
      wave(y, x) = std::polar(1.0 / r, -k * r);
    }
  }
  const PropagationOptions prop{options.pad_factor, true};
  ComplexField field = apply_aperture(ComplexField(g, std::move(wave)), aperture);
  if (gap > 0.0) field = propagate_as(field, gap, prop);
  field = propagate_as(apply_lens(field, lens), image_distance, prop);
  IntensityImage psf = downsample(intensity(field), n, n);
  const double total = psf.total();
  if (!(total > 0.0)) throw NumericError("point-spread function has no energy");
  return IntensityImage(n, n, pitch, psf.values() / total);
}

double psf_width(const IntensityImage& psf) {
  const double total = psf.total();
  if (!(total > 0.0)) throw NumericError("point-spread function has no energy");
  double cx = 0.0, cy = 0.0;
  for (int y = 0; y < psf.height(); ++y)
    for (int x = 0; x < psf.width(); ++x) {
      cx += psf(y, x) * x;
      cy += psf(y, x) * y;
    }
  cx /= total;
  cy /= total;
  double m2 = 0.0;
  for (int y = 0; y < psf.height(); ++y)
    for (int x = 0; x < psf.width(); ++x)
      m2 += psf(y, x) * ((x - cx) * (x - cx) + (y - cy) * (y - cy));
  return std::sqrt(m2 / total) * psf.pitch();
}

IntensityImage image_through_psf(const IntensityImage& object_intensity, const Geometry& geometry,
                                 const IntensityImage& psf) {
  geometry.validate();
  if (geometry.element_planes.size() != 2)
    throw GeometryError("imaging needs element planes {aperture, lens}");
  if (psf.width() % 2 == 0 || psf.height() % 2 == 0)
    throw ArgumentError("point-spread function needs odd dimensions");
  const double pitch = object_intensity.pitch();
  if (std::abs(psf.pitch() - pitch) > 1e-9 * pitch)
    throw GeometryError("point-spread function pitch does not match the object");
  const double z_lens = geometry.element_planes[1];
  const double m = -(geometry.sensor_plane - z_lens) / (z_lens - geometry.object_plane);

  const int mw = static_cast<int>(std::lround(geometry.sensor_width * geometry.sensor_pitch / pitch));
  const int mh =
      static_cast<int>(std::lround(geometry.sensor_height * geometry.sensor_pitch / pitch));
  if (mw < geometry.sensor_width || mh < geometry.sensor_height)
    throw GeometryError("sensor pitch is finer than the object sampling");

  // Geometric image I_img(x) = I_obj(x / m) / m^2, sampled bilinearly on the footprint plus a PSF
  // margin so light from outside the footprint can blur onto it.
  const int cy = (psf.height() - 1) / 2, cx = (psf.width() - 1) / 2;
  const int eh = mh + 2 * cy, ew = mw + 2 * cx;
  const RealGrid& obj = object_intensity.values();
  const int ow = object_intensity.width(), oh = object_intensity.height();
  auto at = [&](int y, int x) { return (x < 0 || y < 0 || x >= ow || y >= oh) ? 0.0 : obj(y, x); };
  RealGrid image(eh, ew);
  int y0 = eh, y1 = -1, x0 = ew, x1 = -1;
  for (int y = 0; y < eh; ++y) {
    const double fy = (y - 0.5 * (eh - 1)) / m + 0.5 * (oh - 1);
    const int iy = static_cast<int>(std::floor(fy));
    const double ay = fy - iy;
    for (int x = 0; x < ew; ++x) {
      const double fx = (x - 0.5 * (ew - 1)) / m + 0.5 * (ow - 1);
      const int ix = static_cast<int>(std::floor(fx));
      const double ax = fx - ix;
      const double v = ((1 - ay) * ((1 - ax) * at(iy, ix) + ax * at(iy, ix + 1)) +
                        ay * ((1 - ax) * at(iy + 1, ix) + ax * at(iy + 1, ix + 1))) /
                       (m * m);
      image(y, x) = v;
      if (v != 0.0) {
        y0 = std::min(y0, y), y1 = std::max(y1, y);
        x0 = std::min(x0, x), x1 = std::max(x1, x);
      }
    }
  }
  // Valid part of the convolution, computed over the image's support only.
  RealGrid blurred = RealGrid::Zero(mh, mw);
  if (y1 >= 0) {
    const RealGrid full = convolve_full(image.block(y0, x0, y1 - y0 + 1, x1 - x0 + 1), psf.values());
    for (int y = 0; y < mh; ++y) {
      const int u = y + 2 * cy - y0;
      if (u < 0 || u >= full.rows()) continue;
      for (int x = 0; x < mw; ++x) {
        const int v = x + 2 * cx - x0;
        if (v >= 0 && v < full.cols()) blurred(y, x) = full(u, v);
      }
    }
  }
  const double in_total = object_intensity.total();
  const double out_total = blurred.sum();
  if (out_total > 0.0) blurred *= in_total / out_total;
  IntensityImage plane(mw, mh, pitch, std::move(blurred));
  IntensityImage pooled = downsample(plane, geometry.sensor_width, geometry.sensor_height);
  return IntensityImage(pooled.width(), pooled.height(), geometry.sensor_pitch, pooled.values());
}

IntensityImage incoherent_imaging(const IntensityImage& object_intensity, const Geometry& geometry,
                                  const Aperture& aperture, const ThinLens& lens,
                                  double wavelength, const ImagingOptions& options) {
  geometry.validate();
  if (geometry.element_planes.size() != 2)
    throw GeometryError("imaging needs element planes {aperture, lens}");
  const double s_o = geometry.element_planes[1] - geometry.object_plane;
  ImagingOptions opts = options;
  if (opts.psf_grid != 0 && opts.psf_grid % 2 == 0) ++opts.psf_grid;
  const IntensityImage psf =
      imaging_psf(s_o, geometry, aperture, lens, object_intensity.pitch(), wavelength, opts);
  return image_through_psf(object_intensity, geometry, psf);
}

}  // namespace speckle
