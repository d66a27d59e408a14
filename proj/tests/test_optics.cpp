#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "oracle.hpp"
#include "speckle/optics.hpp"

using namespace speckle;
using std::numbers::pi;

namespace {

constexpr double kLambda = 632.8e-9;

GridSpec grid(int n, double pitch = kLambda) { return {n, n, pitch, kLambda}; }

ComplexField point_source(const GridSpec& g) {
  ComplexGrid a = ComplexGrid::Zero(g.height, g.width);
  a(g.height / 2, g.width / 2) = 1.0;
  return ComplexField(g, a);
}

double wrap(double phase) { return std::remainder(phase, 2.0 * pi); }

}  // namespace

TEST_CASE("plane wave is a propagation eigenfunction") {
  const ComplexField pw = ComplexField::plane_wave(grid(32));
  const ComplexField out = propagate_as(pw, 123.4 * kLambda, {1, true});
  CHECK((out.amplitude().abs() - 1.0).abs().maxCoeff() < 1e-9);
  const Complex first = out(0, 0);
  CHECK((out.amplitude() - first).abs().maxCoeff() < 1e-9);
  CHECK(std::abs(std::arg(first) - wrap(-2 * pi * 123.4)) < 1e-6);
}

TEST_CASE("distance zero returns the input") {
  Rng rng(3);
  const ComplexField f = oracle::smooth_source(grid(16), 0.1, 3.0, rng);
  CHECK((propagate_as(f, 0.0).amplitude() == f.amplitude()).all());
}

TEST_CASE("sub-wavelength pitch and non-finite distance are rejected") {
  CHECK_THROWS_AS(propagate_as(ComplexField::zeros(grid(8, 0.5 * kLambda)), 1e-5), ArgumentError);
  CHECK_THROWS_AS(propagate_as(ComplexField::zeros(grid(8)), NAN), NumericError);
}

TEST_CASE("energy conservation with negligible clipping") {
  Rng rng(11);
  const ComplexField f = oracle::smooth_source(grid(64), 0.06, 3.0, rng);
  for (double z : {10.0, 30.0}) {
    PropagationReport report;
    const ComplexField out = propagate_as(f, z * kLambda, {2, true}, &report);
    CHECK(report.clipped_fraction < 1e-9);
    CHECK(std::abs(out.energy() / f.energy() - 1.0) < 1e-6);
  }
  // Periodic boundaries conserve energy exactly for whatever passes the filter.
  PropagationReport report;
  const ComplexField out = propagate_as(f, 500 * kLambda, {1, true}, &report);
  const ComplexField kept = band_limited(f, 500 * kLambda, {1, true});
  CHECK(std::abs(out.energy() / kept.energy() - 1.0) < 1e-9);
}

TEST_CASE("clipped fraction reports evanescent loss") {
  PropagationReport report;
  propagate_as(point_source(grid(32)), 500 * kLambda, {2, true}, &report);
  CHECK(report.clipped_fraction > 0.01);
  CHECK(report.clipped_fraction < 1.0);
}

TEST_CASE("reciprocity") {
  Rng rng(5);
  const ComplexField f = oracle::smooth_source(grid(48), 0.08, 3.0, rng);
  for (double z : {17.0, 250.0}) {
    const PropagationOptions periodic{1, true};
    const ComplexField there = propagate_as(f, z * kLambda, periodic);
    const ComplexField back = propagate_as(there, -z * kLambda, periodic);
    const ComplexField ref = band_limited(f, z * kLambda, periodic);
    CHECK(oracle::relative_l2(back.amplitude(), ref.amplitude()) < 1e-6);
  }
  const ComplexField there = propagate_as(f, 12 * kLambda);
  const ComplexField back = propagate_as(there, -12 * kLambda);
  CHECK(oracle::relative_l2(back.amplitude(), band_limited(f, 12 * kLambda).amplitude()) < 1e-6);
}

TEST_CASE("angular spectrum agrees with direct summation") {
  Rng rng(2024);
  const GridSpec g = grid(32);
  for (double z : {10.0, 100.0, 1000.0}) {
    const ComplexField src = oracle::smooth_source(g, 0.08, 3.0, rng);
    CHECK(oracle::as_vs_direct(src, z * kLambda, 0.08) < 1e-3);
  }
}

TEST_CASE("direct summation kernel") {
  const GridSpec g = grid(9, 2e-6);
  const double z = 1e-3;
  SUBCASE("on-axis point") {
    const ComplexField out = propagate_direct(point_source(g), z, g);
    const Complex c = out(4, 4);
    CHECK(std::abs(c) == doctest::Approx(g.pitch * g.pitch / z).epsilon(1e-12));
    CHECK(std::abs(wrap(std::arg(c) + g.wavenumber() * z)) < 1e-6);
  }
  SUBCASE("zero source") {
    CHECK(propagate_direct(ComplexField::zeros(g), z, g).energy() == 0.0);
  }
  SUBCASE("zero distance") {
    CHECK_THROWS_AS(propagate_direct(point_source(g), 0.0, g), SingularKernelError);
  }
  SUBCASE("spherical and Rayleigh-Sommerfeld kernels differ by i/lambda near the axis") {
    const ComplexField s = propagate_direct(point_source(g), z, g);
    const ComplexField rs =
        propagate_direct(point_source(g), z, g, {DirectKernel::rayleigh_sommerfeld, 1, 1});
    const Complex ratio = rs(4, 4) / s(4, 4);
    CHECK(std::abs(ratio - Complex(0.0, 1.0 / kLambda)) < 1e-3 / kLambda);
  }
}

TEST_CASE("Young fringes from two point sources") {
  const double lambda = 0.5e-6, pitch = 1e-6, z = 1e-3;
  const GridSpec src{11, 1, pitch, lambda};
  ComplexGrid a = ComplexGrid::Zero(1, 11);
  a(0, 0) = a(0, 10) = 1.0;  // separation 10 pitches
  const GridSpec sensor{401, 1, 0.25e-6 * 4, lambda};
  const IntensityImage img = intensity(propagate_direct(ComplexField(src, a), z, sensor));
  std::vector<double> peaks;
  for (int i = 1; i + 1 < img.width(); ++i)
    if (img(0, i) > img(0, i - 1) && img(0, i) >= img(0, i + 1))
      peaks.push_back(sensor.coordinate(i, sensor.width));
  REQUIRE(peaks.size() >= 3);
  const double expected = lambda * z / (10 * pitch);
  // Central pair straddles the axis-centred maximum.
  auto centre = std::min_element(peaks.begin(), peaks.end(),
                                 [](double p, double q) { return std::abs(p) < std::abs(q); });
  REQUIRE(centre + 1 != peaks.end());
  CHECK(*(centre + 1) - *centre == doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("apertures") {
  const GridSpec g = grid(40, 5e-6);
  const ComplexField pw = ComplexField::plane_wave(g);
  CHECK((apply_aperture(pw, {ApertureShape::square, 1.0, {0, 0}}).amplitude() == 1.0).all());

  const ComplexField sq = apply_aperture(pw, {ApertureShape::square, 20 * 5e-6, {0, 0}});
  CHECK(sq.energy() == doctest::Approx(400.0));
  const ComplexField odd = apply_aperture(pw, {ApertureShape::square, 13.3 * 5e-6, {0, 0}});
  CHECK(std::abs(odd.energy() - 13.3 * 13.3) <= 2 * 14 + 1);
  const ComplexField circ = apply_aperture(pw, {ApertureShape::circular, 30 * 5e-6, {0, 0}});
  CHECK(std::abs(circ.energy() - pi * 225) < 2 * pi * 15);
  const ComplexField shifted = apply_aperture(pw, {ApertureShape::square, 10e-6, {20e-6, 0}});
  CHECK(shifted(19, 24) == Complex(1.0));
  CHECK(shifted(19, 19) == Complex(0.0));
  CHECK_THROWS_AS(apply_aperture(pw, {ApertureShape::square, 0.0, {0, 0}}), GeometryError);
}

TEST_CASE("thin lens") {
  Rng rng(8);
  const GridSpec g = grid(33);
  const ComplexField f = oracle::smooth_source(g, 0.2, 20.0, rng);
  const ComplexField out = apply_lens(f, {1e-3});
  CHECK(out(16, 16) == f(16, 16));
  CHECK((out.amplitude().abs() - f.amplitude().abs()).abs().maxCoeff() <
        1e-15 * f.amplitude().abs().maxCoeff());
  CHECK_THROWS_AS(apply_lens(f, {0.0}), GeometryError);

  SUBCASE("collimates a point source at the focal distance") {
    const GridSpec big = grid(128, 2 * kLambda);
    const double focal = 1000 * kLambda;
    const ComplexField at_lens = propagate_as(point_source(big), focal);
    const ComplexField col = apply_lens(at_lens, {focal});
    const Complex ref = col(64, 64);
    double sum = 0.0, sum2 = 0.0;
    int n = 0;
    for (int y = 32; y < 96; ++y)
      for (int x = 32; x < 96; ++x) {
        const double ph = std::arg(col(y, x) * std::conj(ref));
        sum += ph;
        sum2 += ph * ph;
        ++n;
      }
    const double mean = sum / n;
    const double rms_waves = std::sqrt(sum2 / n - mean * mean) / (2 * pi);
    CHECK(rms_waves < 0.1);
    // Without the lens the curvature is many waves.
    double raw = 0.0;
    for (int x = 32; x < 96; ++x) raw = std::max(raw, std::abs(std::arg(at_lens(64, x) * std::conj(at_lens(64, 64)))));
    CHECK(raw > 1.0);
  }
}

TEST_CASE("phase screens") {
  const GridSpec g = grid(256, 1e-6);
  const PhaseScreen white = make_phase_screen(g, 0.0, 42);
  CHECK(white.width == 256);
  CHECK((white.phases >= 0.0).all());
  CHECK((white.phases < 2 * pi).all());
  Complex mean = 0.0;
  for (Eigen::Index i = 0; i < white.phases.size(); ++i) mean += std::polar(1.0, white.phases.data()[i]);
  mean /= static_cast<double>(white.phases.size());
  // Circular variance 1 - |R| with |R| ~ Rayleigh(1 / sqrt(2N)).
  CHECK(1.0 - std::abs(mean) > 1.0 - 3.0 * std::sqrt(2.0 / white.phases.size()));

  const PhaseScreen again = make_phase_screen(g, 0.0, 42);
  CHECK((again.phases == white.phases).all());
  CHECK((make_phase_screen(g, 0.0, 43).phases != white.phases).any());

  const PhaseScreen smooth = make_phase_screen(g, 10e-6, 42);
  CHECK((smooth.phases >= 0.0).all());
  CHECK((smooth.phases < 2 * pi).all());
  auto roughness = [](const PhaseScreen& s) {
    double acc = 0.0;
    for (int y = 0; y < s.height; ++y)
      for (int x = 1; x < s.width; ++x) acc += std::abs(wrap(s.phases(y, x) - s.phases(y, x - 1)));
    return acc / (s.height * (s.width - 1));
  };
  CHECK(roughness(smooth) < roughness(white));
  CHECK(roughness(smooth) < 0.5);
  CHECK_THROWS_AS(make_phase_screen(g, -1.0, 1), ArgumentError);
}

TEST_CASE("applying phase screens") {
  Rng rng(9);
  const GridSpec g = grid(32);
  const ComplexField f = oracle::smooth_source(g, 0.2, 10.0, rng);
  PhaseScreen zero{32, 32, g.pitch, RealGrid::Zero(32, 32), 0.0, 0};
  CHECK((apply_phase_screen(f, zero).amplitude() == f.amplitude()).all());

  const PhaseScreen s = make_phase_screen(g, 0.0, 1);
  const ComplexField once = apply_phase_screen(f, s);
  CHECK(std::abs(once.energy() / f.energy() - 1.0) < 1e-12);
  CHECK((once.amplitude().abs() - f.amplitude().abs()).abs().maxCoeff() < 1e-12 * f.amplitude().abs().maxCoeff());

  PhaseScreen doubled = s;
  for (Eigen::Index i = 0; i < doubled.phases.size(); ++i)
    doubled.phases.data()[i] = std::fmod(2.0 * s.phases.data()[i], 2 * pi);
  CHECK(oracle::relative_l2(apply_phase_screen(once, s).amplitude(),
                            apply_phase_screen(f, doubled).amplitude()) < 1e-12);

  PhaseScreen small = make_phase_screen(grid(16), 0.0, 1);
  CHECK_THROWS_AS(apply_phase_screen(f, small), GeometryError);
  CHECK(std::abs(apply_lens(f, {1e-4}).energy() / f.energy() - 1.0) < 1e-12);
}

TEST_CASE("diffraction limit") {
  CHECK(diffraction_limit(632.8e-9, 1.0, 2.8e-3) == doctest::Approx(2.26e-4).epsilon(1e-3));
  CHECK(diffraction_limit(632.8e-9, 2.0, 2.8e-3) == doctest::Approx(2 * diffraction_limit(632.8e-9, 1.0, 2.8e-3)));
  CHECK(diffraction_limit(5e-7, 3.0, 5e-7 * 3.0) == doctest::Approx(1.0));
  const double base = diffraction_limit(5e-7, 0.7, 1e-4);
  for (double a : {0.1, 3.0, 17.0})
    CHECK(diffraction_limit(a * 5e-7, a * 0.7, a * 1e-4) == doctest::Approx(a * base));
  CHECK_THROWS_AS(diffraction_limit(0.0, 1.0, 1.0), ArgumentError);
  CHECK_THROWS_AS(diffraction_limit(1.0, -1.0, 1.0), ArgumentError);
  CHECK_THROWS_AS(diffraction_limit(1.0, 1.0, 0.0), ArgumentError);
}

TEST_CASE("geometry validation") {
  Geometry g{0.0, {0.5}, 1.0, 4, 4, 1e-6};
  CHECK_NOTHROW(g.validate());
  g.element_planes = {1.0};
  CHECK_THROWS_AS(g.validate(), GeometryError);
  g.element_planes = {0.6, 0.4};
  CHECK_THROWS_AS(g.validate(), GeometryError);
  g.element_planes = {0.4, 0.4};
  CHECK_NOTHROW(g.validate());
  g.sensor_plane = -1.0;
  CHECK_THROWS_AS(g.validate(), GeometryError);
}

TEST_CASE("coherent sensor image") {
  Rng rng(77);
  const GridSpec g = grid(32);
  const ComplexField src = oracle::smooth_source(g, 0.08, 3.0, rng);

  SUBCASE("degenerate pipeline") {
    const Geometry geo{0.0, {}, 0.0, 32, 32, g.pitch};
    const IntensityImage img = coherent_sensor_image(src, geo, {});
    CHECK((img.values() == intensity(src).values()).all());
  }
  SUBCASE("matches direct summation") {
    const double z = 60 * kLambda;
    const Geometry geo{0.0, {}, z, 32, 32, g.pitch};
    const IntensityImage img = coherent_sensor_image(src, geo, {}, oracle::matched_padding(g, z, 0.08));
    const ComplexField d =
        propagate_direct(src, z, g, {DirectKernel::rayleigh_sommerfeld, 2, 1});
    const RealGrid ref = d.amplitude().abs2();
    CHECK(std::sqrt((img.values() - ref).square().sum() / ref.square().sum()) < 1e-3);
  }
  SUBCASE("elements are applied at their planes") {
    const Geometry geo{0.0, {10 * kLambda}, 20 * kLambda, 32, 32, g.pitch};
    const std::vector<Element> stop{Aperture{ApertureShape::square, 1e-9, {0, 0}}};
    CHECK(coherent_sensor_image(src, geo, stop).total() == 0.0);
    CHECK_THROWS_AS(coherent_sensor_image(src, geo, {}), GeometryError);
  }
  SUBCASE("sensor larger than the grid") {
    const Geometry geo{0.0, {}, 10 * kLambda, 64, 64, g.pitch};
    CHECK_THROWS_AS(coherent_sensor_image(src, geo, {}), GeometryError);
  }
  SUBCASE("pooling onto coarser sensor pixels") {
    const Geometry geo{0.0, {}, 10 * kLambda, 8, 8, 4 * g.pitch};
    const IntensityImage img = coherent_sensor_image(src, geo, {});
    CHECK(img.width() == 8);
    CHECK(img.pitch() == doctest::Approx(4 * g.pitch));
  }
}

TEST_CASE("incoherent lensless image") {
  const GridSpec g = grid(9, 1e-6);
  SUBCASE("inverse-square falloff") {
    const double z = 1e-4, s = 3e-5;
    const Geometry geo{0.0, {}, z, 3, 1, s};
    const IntensityImage img = incoherent_lensless_image(point_source(g), geo, IncoherentMethod::direct);
    CHECK(img(0, 1) / img(0, 0) == doctest::Approx((z * z + s * s) / (z * z)));
    CHECK(img(0, 1) == doctest::Approx(1e-12 / (z * z)));
  }
  SUBCASE("zero object and zero distance") {
    const Geometry geo{0.0, {}, 1e-4, 4, 4, 1e-6};
    CHECK(incoherent_lensless_image(ComplexField::zeros(g), geo).total() == 0.0);
    CHECK_THROWS_AS(incoherent_lensless_image(point_source(g), {0.0, {}, 0.0, 4, 4, 1e-6}),
                    SingularKernelError);
  }
  SUBCASE("far uniform object is nearly uniform") {
    const GridSpec og = grid(28, 1e-6);
    const ComplexField obj = ComplexField::plane_wave(og);
    const Geometry geo{0.0, {}, 100 * 28e-6, 32, 32, 1e-6};
    const RealGrid v = incoherent_lensless_image(obj, geo, IncoherentMethod::direct).values();
    const double cv = std::sqrt((v - v.mean()).square().mean()) / v.mean();
    CHECK(cv < 0.01);
  }
  SUBCASE("fast path matches direct summation") {
    Rng rng(4);
    const GridSpec og{20, 17, 1e-6, kLambda};
    const ComplexField obj = oracle::smooth_source(og, 0.3, 30.0, rng);
    for (auto [w, h] : {std::pair{24, 24}, std::pair{15, 10}}) {
      const Geometry geo{0.0, {}, 3e-5, w, h, 1e-6};
      const RealGrid a = incoherent_lensless_image(obj, geo, IncoherentMethod::direct).values();
      const RealGrid b = incoherent_lensless_image(obj, geo, IncoherentMethod::fft).values();
      CHECK(std::sqrt((a - b).square().sum() / a.square().sum()) < 1e-10);
    }
  }
}

namespace {

// Desk imaging bench: magnification -1 at s_o = s_i = 2f.
constexpr double kF = 100 * kLambda;

Geometry bench(double pitch) { return {0.0, {2 * kF, 2 * kF}, 4 * kF, 65, 65, pitch}; }

IntensityImage blocks(double pitch) {
  RealGrid v = RealGrid::Zero(65, 65);
  for (int y = 8; y < 57; ++y)
    for (int x = 8; x < 57; ++x)
      if (((y - 8) / 8 + (x - 8) / 12) % 2 == 0 && x > y / 2) v(y, x) = 1.0;
  return IntensityImage(65, 65, pitch, v);
}

}  // namespace

TEST_CASE("incoherent imaging") {
  const ThinLens lens{kF};

  SUBCASE("in focus with a wide aperture reproduces the inverted object") {
    const double pitch = 6 * kLambda;
    const double d_min = diffraction_limit(kLambda, 2 * kF, pitch);
    const IntensityImage obj = blocks(pitch);
    const IntensityImage img = incoherent_imaging(
        obj, bench(pitch), {ApertureShape::square, 4 * d_min, {0, 0}}, lens, kLambda);
    CHECK(img.total() == doctest::Approx(obj.total()).epsilon(1e-9));
    const RealGrid ideal = obj.values().reverse();
    CHECK(normalized_cross_correlation(img.values(), ideal) > 0.95);
  }
  SUBCASE("defocus widens the point-spread function") {
    const double d_min = diffraction_limit(kLambda, 2 * kF, 6 * kLambda);
    const Aperture ap{ApertureShape::circular, 4 * d_min, {0, 0}};
    const Geometry geo = bench(kLambda);
    const double focused = psf_width(imaging_psf(2 * kF, geo, ap, lens, kLambda, kLambda));
    const double blurred = psf_width(imaging_psf(4 * kF, geo, ap, lens, kLambda, kLambda));
    CHECK(blurred > 1.5 * focused);
  }
  SUBCASE("two bars merge below the diffraction limit") {
    const double dx = 6 * kLambda;
    const double d_min = diffraction_limit(kLambda, 2 * kF, dx);
    RealGrid v = RealGrid::Zero(65, 65);
    v.col(29).segment(12, 41) = 1.0;
    v.col(35).segment(12, 41) = 1.0;
    const IntensityImage bars(65, 65, kLambda, v);
    auto contrast = [&](double aperture) {
      const IntensityImage img = incoherent_imaging(
          bars, bench(kLambda), {ApertureShape::square, aperture, {0, 0}}, lens, kLambda);
      return img(32, 32) / std::max(img(32, 29), img(32, 35));
    };
    CHECK(contrast(d_min / 4) >= 0.9);
    CHECK(contrast(4 * d_min) < 0.5);
  }
  SUBCASE("psf sums to one and is centred") {
    const IntensityImage psf = imaging_psf(2 * kF, bench(kLambda), {ApertureShape::square, 40 * kLambda, {0, 0}},
                                           lens, 3 * kLambda, kLambda);
    CHECK(psf.width() % 2 == 1);
    CHECK(psf.total() == doctest::Approx(1.0));
    Eigen::Index r, c;
    psf.values().maxCoeff(&r, &c);
    CHECK(r == psf.height() / 2);
    CHECK(c == psf.width() / 2);
  }
}

TEST_CASE("propagation onto an arbitrary sensor grid") {
  Rng rng(31);
  const GridSpec g = grid(32);
  const ComplexField src = oracle::smooth_source(g, 0.08, 3.0, rng);
  const double z = 80 * kLambda;
  const PropagationOptions opts = oracle::matched_padding(g, z, 0.08);

  const ComplexField same = propagate_as_to(src, z, g, opts);
  CHECK(oracle::relative_l2(same.amplitude(), propagate_as(src, z, opts).amplitude()) < 1e-10);

  const GridSpec fine{12, 10, 0.3 * kLambda, kLambda};
  const ComplexField a = propagate_as_to(src, z, fine, opts);
  const ComplexField d = propagate_direct(src, z, fine, {DirectKernel::rayleigh_sommerfeld, 2, 1});
  CHECK(oracle::relative_l2(a.amplitude(), d.amplitude()) < 1e-3);
}

TEST_CASE("coherent sensor finer than the grid") {
  Rng rng(32);
  const GridSpec g = grid(32);
  const ComplexField src = oracle::smooth_source(g, 0.08, 3.0, rng);
  const double z = 40 * kLambda;
  const Geometry geo{0.0, {}, z, 8, 8, 0.25 * kLambda};
  const IntensityImage img = coherent_sensor_image(src, geo, {});
  CHECK(img.pitch() == doctest::Approx(0.25 * kLambda));
  // Tiny pixels: point samples at the pixel centres are close to the pixel integrals.
  const GridSpec centres{8, 8, 0.25 * kLambda, kLambda};
  const RealGrid ref = propagate_as_to(src, z, centres).amplitude().abs2();
  CHECK(std::sqrt((img.values() - ref).square().sum() / ref.square().sum()) < 1e-2);
  const Geometry too_wide{0.0, {}, z, 8, 8, 5 * kLambda};
  CHECK_THROWS_AS(coherent_sensor_image(src, too_wide, {}), GeometryError);
}

TEST_CASE("imaging through a precomputed psf") {
  const double pitch = 2 * kLambda;
  const Geometry geo{0.0, {2 * kF, 2 * kF}, 4 * kF, 33, 33, pitch};
  const Aperture ap{ApertureShape::circular, 60 * kLambda, {0, 0}};
  const IntensityImage obj = downsample(blocks(pitch), 33, 33);
  const IntensityImage obj_fine(33, 33, pitch, obj.values());
  const IntensityImage psf = imaging_psf(2 * kF, geo, ap, {kF}, pitch, kLambda);
  const IntensityImage a = image_through_psf(obj_fine, geo, psf);
  const IntensityImage b = incoherent_imaging(obj_fine, geo, ap, {kF}, kLambda);
  CHECK((a.values() - b.values()).abs().maxCoeff() == 0.0);
  const IntensityImage even(4, 4, pitch, RealGrid::Constant(4, 4, 1.0 / 16));
  CHECK_THROWS_AS(image_through_psf(obj_fine, geo, even), ArgumentError);
}
