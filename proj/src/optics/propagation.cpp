#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <tuple>
#include <vector>

#include "speckle/fft.hpp"
#include "speckle/optics.hpp"

namespace speckle {

namespace {

using std::numbers::pi;

struct TransferKey {
  int rows, cols;
  double pitch, wavelength, distance;
  bool band_limit;
  auto tie() const { return std::tie(rows, cols, pitch, wavelength, distance, band_limit); }
  bool operator<(const TransferKey& o) const { return tie() < o.tie(); }
};

// Sampled transfer function exp(-i 2 pi z sqrt(1/lambda^2 - fx^2 - fy^2)) in FFT order. Zero
// marks evanescent or band-limited frequencies.
std::shared_ptr<const std::vector<Complex>> transfer_function(const TransferKey& key) {
  static std::mutex mutex;
  static std::map<TransferKey, std::shared_ptr<const std::vector<Complex>>> cache;
  static std::vector<TransferKey> order;
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }

  const double inv_l2 = 1.0 / (key.wavelength * key.wavelength);
  const double z = std::abs(key.distance);
  // Band limit of the sampled chirp for a window of extent rows*pitch / cols*pitch.
  const auto limit = [&](int n) {
    const double du = 1.0 / (n * key.pitch);
    return 1.0 / (key.wavelength * std::sqrt(std::pow(2.0 * du * z, 2) + 1.0));
  };
  const double fx_max = key.band_limit ? limit(key.cols) : INFINITY;
  const double fy_max = key.band_limit ? limit(key.rows) : INFINITY;
  const double sign = key.distance < 0 ? 1.0 : -1.0;

  auto h = std::make_shared<std::vector<Complex>>(static_cast<std::size_t>(key.rows) * key.cols);
  for (int r = 0; r < key.rows; ++r) {
    const int kr = r <= key.rows / 2 ? r : r - key.rows;
    const double fy = kr / (key.rows * key.pitch);
    for (int c = 0; c < key.cols; ++c) {
      const int kc = c <= key.cols / 2 ? c : c - key.cols;
      const double fx = kc / (key.cols * key.pitch);
      const double arg = inv_l2 - fx * fx - fy * fy;
      Complex value{0.0, 0.0};
      if (arg > 0.0 && std::abs(fx) < fx_max && std::abs(fy) < fy_max)
        value = std::polar(1.0, sign * 2.0 * pi * z * std::sqrt(arg));
      (*h)[static_cast<std::size_t>(r) * key.cols + c] = value;
    }
  }

  std::lock_guard lock(mutex);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  constexpr std::size_t kMaxCached = 32;
  if (order.size() >= kMaxCached) {
    cache.erase(order.front());
    order.erase(order.begin());
  }
  cache.emplace(key, h);
  order.push_back(key);
  return h;
}

struct Padded {
  fft::Buffer data;
  int rows, cols, y0, x0;
};

Padded embed(const ComplexField& field, int pad_factor) {
  if (pad_factor < 1) throw ArgumentError("pad factor must be >= 1");
  Padded p{fft::Buffer(static_cast<std::size_t>(field.height()) * pad_factor * field.width() *
                       pad_factor),
           field.height() * pad_factor, field.width() * pad_factor, 0, 0};
  p.y0 = (p.rows - field.height()) / 2;
  p.x0 = (p.cols - field.width()) / 2;
  for (std::size_t i = 0; i < p.data.size(); ++i) p.data[i] = 0.0;
  for (int y = 0; y < field.height(); ++y)
    for (int x = 0; x < field.width(); ++x)
      p.data[static_cast<std::size_t>(y + p.y0) * p.cols + x + p.x0] = field(y, x);
  return p;
}

ComplexField extract(const Padded& p, const GridSpec& grid) {
  ComplexGrid out(grid.height, grid.width);
  const double norm = 1.0 / (static_cast<double>(p.rows) * p.cols);
  for (int y = 0; y < grid.height; ++y)
    for (int x = 0; x < grid.width; ++x)
      out(y, x) = p.data[static_cast<std::size_t>(y + p.y0) * p.cols + x + p.x0] * norm;
  return ComplexField(grid, std::move(out));
}

void check_sampling(const ComplexField& field, double distance) {
  if (!std::isfinite(distance)) throw NumericError("propagation distance is not finite");
  if (field.pitch() < field.wavelength())
    throw ArgumentError("grid pitch below the wavelength is not supported");
}

ComplexField filter_spectrum(const ComplexField& field, double distance,
                             const PropagationOptions& options, bool keep_phase,
                             PropagationReport* report) {
  Padded p = embed(field, options.pad_factor);
  fft::forward(p.data, p.rows, p.cols);
  const auto h = transfer_function(
      {p.rows, p.cols, field.pitch(), field.wavelength(), distance, options.band_limit});
  double total = 0.0;
  double clipped = 0.0;
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    const double e = std::norm(p.data[i]);
    total += e;
    const Complex hi = (*h)[i];
    if (hi == Complex{0.0, 0.0}) {
      clipped += e;
      p.data[i] = 0.0;
    } else if (keep_phase) {
      p.data[i] *= hi;
    }
  }
  if (report) report->clipped_fraction = total > 0.0 ? clipped / total : 0.0;
  fft::inverse(p.data, p.rows, p.cols);
  return extract(p, field.grid());
}

}  // namespace

ComplexField propagate_as(const ComplexField& field, double distance,
                          const PropagationOptions& options, PropagationReport* report) {
  check_sampling(field, distance);
  if (distance == 0.0) {
    if (report) report->clipped_fraction = 0.0;
    return field;
  }
  return filter_spectrum(field, distance, options, true, report);
}

ComplexField band_limited(const ComplexField& field, double distance,
                          const PropagationOptions& options) {
  check_sampling(field, distance);
  return filter_spectrum(field, distance, options, false, nullptr);
}

ComplexField propagate_as_to(const ComplexField& field, double distance, const GridSpec& target,
                             const PropagationOptions& options) {
  check_sampling(field, distance);
  target.validate();
  Padded p = embed(field, options.pad_factor);
  fft::forward(p.data, p.rows, p.cols);
  const auto h = transfer_function(
      {p.rows, p.cols, field.pitch(), field.wavelength(), distance, options.band_limit});
  for (std::size_t i = 0; i < p.data.size(); ++i) p.data[i] *= (*h)[i];

  // E(m, k) = exp(2 pi i k t_m / N) with t_m the padded-index coordinate of sample m. The
  // Nyquist bin of an even length is split evenly between +N/2 and -N/2.
  const auto basis = [&](int count, double pitch, int n_field, int n_pad, int offset) {
    Eigen::MatrixXcd e(count, n_pad);
    for (int m = 0; m < count; ++m) {
      const double t = (m - 0.5 * (count - 1)) * pitch / field.pitch() + offset + 0.5 * (n_field - 1);
      for (int k = 0; k < n_pad; ++k) {
        const int kk = k <= n_pad / 2 ? k : k - n_pad;
        e(m, k) = (n_pad % 2 == 0 && k == n_pad / 2)
                      ? Complex(std::cos(pi * t), 0.0)
                      : std::polar(1.0, 2.0 * pi * kk * t / n_pad);
      }
    }
    return e;
  };
  const Eigen::MatrixXcd ey = basis(target.height, target.pitch, field.height(), p.rows, p.y0);
  const Eigen::MatrixXcd ex = basis(target.width, target.pitch, field.width(), p.cols, p.x0);
  const Eigen::Map<const Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      spectrum(p.data.data(), p.rows, p.cols);
  const Eigen::MatrixXcd rows_done = ey * spectrum;
  ComplexGrid out = (rows_done * ex.transpose()).array() / (static_cast<double>(p.rows) * p.cols);
  GridSpec g = target;
  g.wavelength = field.wavelength();
  return ComplexField(g, std::move(out));
}

int padding_for_spread(const GridSpec& grid, double distance, double max_sine) {
  const double s = std::min(std::abs(max_sine), 0.999999);
  const double spread = std::abs(distance) * s / std::sqrt(1.0 - s * s);
  const double need = (std::max(grid.width, grid.height) * grid.pitch + 2.0 * spread) /
                      (std::max(grid.width, grid.height) * grid.pitch);
  int pad = 2;
  while (pad < need) pad *= 2;
  return pad;
}

ComplexField propagate_direct(const ComplexField& source, double distance, const GridSpec& sensor,
                              const DirectOptions& options) {
  if (distance == 0.0) throw SingularKernelError("direct summation at zero distance is singular");
  if (!std::isfinite(distance)) throw NumericError("propagation distance is not finite");
  sensor.validate();
  if (options.oversample < 1 || options.interpolation_pad < 1)
    throw ArgumentError("oversample and interpolation_pad must be >= 1");

  // Source samples (possibly band-limited interpolation onto a finer grid).
  const int q = options.oversample;
  const int pad = options.interpolation_pad;
  const int rows = source.height() * pad * q;
  const int cols = source.width() * pad * q;
  ComplexGrid samples;
  std::vector<double> xs(cols), ys(rows);
  double step = source.pitch();
  if (q == 1 && pad == 1) {
    samples = source.amplitude();
    for (int x = 0; x < cols; ++x) xs[x] = source.grid().coordinate(x, source.width());
    for (int y = 0; y < rows; ++y) ys[y] = source.grid().coordinate(y, source.height());
  } else {
    // Zero-pad by `pad`, then place the spectrum of the padded grid in the centre of a q-times
    // larger spectrum. Pixel (0, 0) of the fine grid coincides with padded pixel (0, 0).
    const int pr = source.height() * pad;
    const int pc = source.width() * pad;
    const int y0 = (pr - source.height()) / 2;
    const int x0 = (pc - source.width()) / 2;
    fft::Buffer coarse(static_cast<std::size_t>(pr) * pc);
    for (std::size_t i = 0; i < coarse.size(); ++i) coarse[i] = 0.0;
    for (int y = 0; y < source.height(); ++y)
      for (int x = 0; x < source.width(); ++x)
        coarse[static_cast<std::size_t>(y + y0) * pc + x + x0] = source(y, x);
    fft::forward(coarse, pr, pc);
    fft::Buffer fine(static_cast<std::size_t>(rows) * cols);
    for (std::size_t i = 0; i < fine.size(); ++i) fine[i] = 0.0;
    const auto wrap = [](int k, int n) { return k <= n / 2 ? k : k - n; };
    for (int r = 0; r < pr; ++r) {
      const int kr = wrap(r, pr);
      // The Nyquist row/column of an even grid is split between +/- frequencies.
      const bool ny_r = pr % 2 == 0 && r == pr / 2;
      for (int c = 0; c < pc; ++c) {
        const int kc = wrap(c, pc);
        const bool ny_c = pc % 2 == 0 && c == pc / 2;
        const Complex v = coarse[static_cast<std::size_t>(r) * pc + c];
        for (int sr = 0; sr < (ny_r ? 2 : 1); ++sr)
          for (int sc = 0; sc < (ny_c ? 2 : 1); ++sc) {
            const int fr = ((sr ? -kr : kr) % rows + rows) % rows;
            const int fc = ((sc ? -kc : kc) % cols + cols) % cols;
            fine[static_cast<std::size_t>(fr) * cols + fc] +=
                v * (ny_r ? 0.5 : 1.0) * (ny_c ? 0.5 : 1.0);
          }
      }
    }
    fft::inverse(fine, rows, cols);
    samples.resize(rows, cols);
    const double norm = 1.0 / (static_cast<double>(pr) * pc);
    for (int y = 0; y < rows; ++y)
      for (int x = 0; x < cols; ++x)
        samples(y, x) = fine[static_cast<std::size_t>(y) * cols + x] * norm;
    step = source.pitch() / q;
    const double origin_x = source.grid().coordinate(0, source.width()) - x0 * source.pitch();
    const double origin_y = source.grid().coordinate(0, source.height()) - y0 * source.pitch();
    for (int x = 0; x < cols; ++x) xs[x] = origin_x + x * step;
    for (int y = 0; y < rows; ++y) ys[y] = origin_y + y * step;
  }

  const double k = source.grid().wavenumber();
  const double z = distance;
  const double z2 = z * z;
  const double area = step * step;
  GridSpec out_grid = sensor;
  out_grid.wavelength = source.wavelength();
  ComplexGrid out = ComplexGrid::Zero(sensor.height, sensor.width);
  for (int sy = 0; sy < sensor.height; ++sy) {
    const double ry = sensor.coordinate(sy, sensor.height);
    for (int sx = 0; sx < sensor.width; ++sx) {
      const double rx = sensor.coordinate(sx, sensor.width);
      Complex acc{0.0, 0.0};
      for (int y = 0; y < rows; ++y) {
        const double dy2 = (ys[y] - ry) * (ys[y] - ry);
        for (int x = 0; x < cols; ++x) {
          const Complex s = samples(y, x);
          if (s == Complex{0.0, 0.0}) continue;
          const double dx = xs[x] - rx;
          const double r = std::sqrt(dx * dx + dy2 + z2);
          Complex kernel = std::polar(1.0 / r, -k * r);
          if (options.kernel == DirectKernel::rayleigh_sommerfeld)
            kernel *= z / (2.0 * pi * r) * Complex(1.0 / r, k);
          acc += s * kernel;
        }
      }
      out(sy, sx) = acc * area;
    }
  }
  return ComplexField(out_grid, std::move(out));
}

double diffraction_limit(double wavelength, double distance, double feature) {
  if (!(wavelength > 0.0) || !(distance > 0.0) || !(feature > 0.0))
    throw ArgumentError("diffraction_limit needs positive wavelength, distance and feature size");
  return wavelength * distance / feature;
}

}  // namespace speckle
