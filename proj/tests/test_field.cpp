#include <doctest.h>

#include <cmath>
#include <vector>

#include "speckle/field.hpp"
#include "speckle/optics.hpp"

using namespace speckle;

namespace {

GridSpec grid(int n, double pitch = 1e-6) { return {n, n, pitch, 632.8e-9}; }

BitmapView view(const std::vector<std::uint8_t>& px, int rows, int cols) {
  return {rows, cols, px};
}

}  // namespace

TEST_CASE("field construction validates shape and values") {
  CHECK_THROWS_AS(ComplexField(grid(4), ComplexGrid::Zero(3, 4)), ArgumentError);
  ComplexGrid bad = ComplexGrid::Zero(4, 4);
  bad(1, 1) = Complex(NAN, 0.0);
  CHECK_THROWS_AS(ComplexField(grid(4), bad), NumericError);
  CHECK_THROWS_AS(ComplexField::zeros({0, 4, 1e-6, 1e-6}), ArgumentError);
  CHECK_THROWS_AS(ComplexField::zeros({4, 4, 1e-6, 0.0}), ArgumentError);
  CHECK(grid(4).wavenumber() == doctest::Approx(2 * M_PI / 632.8e-9));
}

TEST_CASE("intensity image invariants") {
  CHECK_THROWS_AS(IntensityImage(2, 2, 1.0, RealGrid::Constant(2, 2, -1.0)), ArgumentError);
  CHECK_THROWS_AS(IntensityImage(2, 2, 1.0, RealGrid::Constant(2, 2, 0.5), 8), ArgumentError);
  CHECK_THROWS_AS(IntensityImage(2, 2, 1.0, RealGrid::Constant(2, 2, 256.0), 8), ArgumentError);
  CHECK_NOTHROW(IntensityImage(2, 2, 1.0, RealGrid::Constant(2, 2, 255.0), 8));
}

TEST_CASE("intensity is the squared modulus") {
  ComplexGrid a = ComplexGrid::Zero(2, 2);
  a(0, 1) = Complex(3.0, 4.0);
  const IntensityImage img = intensity(ComplexField(grid(2), a));
  CHECK(img(0, 1) == 25.0);
  CHECK(img(0, 0) == 0.0);
  CHECK(!img.bit_depth());
  CHECK((intensity(ComplexField::plane_wave(grid(8))).values() == 1.0).all());
  CHECK(intensity(ComplexField::zeros(grid(8))).total() == 0.0);
}

TEST_CASE("rasterize_object") {
  const GridSpec g = grid(64);
  const std::vector<std::uint8_t> zeros(28 * 28, 0), full(28 * 28, 255);

  SUBCASE("zero bitmap gives zero field") {
    CHECK(rasterize_object(view(zeros, 28, 28), 28e-6, g).energy() == 0.0);
  }
  SUBCASE("full bitmap fills the object square") {
    const ComplexField f = rasterize_object(view(full, 28, 28), 28e-6, g);
    CHECK(std::abs(f.energy() - 28.0 * 28.0) <= 2 * 28.0 + 1);
    CHECK(f(32, 32) == Complex(1.0, 0.0));
    CHECK(f(0, 0) == Complex(0.0, 0.0));
  }
  SUBCASE("diffuser changes phase only") {
    std::vector<std::uint8_t> px(28 * 28);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>((i * 37) % 256);
    const PhaseScreen d = make_phase_screen(g, 0.0, 7);
    const ComplexField plain = rasterize_object(view(px, 28, 28), 40e-6, g);
    const ComplexField rough = rasterize_object(view(px, 28, 28), 40e-6, g, &d);
    CHECK((plain.amplitude().abs() - rough.amplitude().abs()).abs().maxCoeff() < 1e-12);
    CHECK((plain.amplitude() - rough.amplitude()).abs().maxCoeff() > 0.1);
  }
  SUBCASE("intensity reproduces the squared bitmap at coincident samples") {
    std::vector<std::uint8_t> px(4 * 4);
    for (int i = 0; i < 16; ++i) px[i] = static_cast<std::uint8_t>(i * 16);
    // 4 bitmap pixels over 4 grid pixels: centres coincide.
    const IntensityImage img = intensity(rasterize_object(view(px, 4, 4), 4e-6, grid(8)));
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        CHECK(img(r + 2, c + 2) == doctest::Approx(std::pow(px[r * 4 + c] / 255.0, 2)));
  }
  SUBCASE("oversized object is a geometry error") {
    CHECK_THROWS_AS(rasterize_object(view(full, 28, 28), 65e-6, g), GeometryError);
  }
}

TEST_CASE("quantize") {
  RealGrid v(1, 2);
  v << 1.0, 0.5;
  const IntensityImage q8 = quantize(IntensityImage(2, 1, 1.0, v), 8);
  CHECK(q8(0, 0) == 255.0);
  CHECK(q8(0, 1) == 128.0);
  CHECK(*q8.bit_depth() == 8);
  CHECK(quantize(IntensityImage(2, 1, 1.0, v), 16)(0, 0) == 65535.0);

  const IntensityImage z = quantize(IntensityImage(3, 3, 1.0, RealGrid::Zero(3, 3)), 16);
  CHECK(z.total() == 0.0);
  CHECK(*z.bit_depth() == 16);

  CHECK_THROWS_AS(quantize(q8, 8), ArgumentError);
  CHECK_THROWS_AS(quantize(IntensityImage(2, 1, 1.0, v), 17), ArgumentError);

  RealGrid ramp(1, 50);
  for (int i = 0; i < 50; ++i) ramp(0, i) = std::exp(0.1 * i);
  const IntensityImage qr = quantize(IntensityImage(50, 1, 1.0, ramp), 10);
  for (int i = 1; i < 50; ++i) CHECK(qr(0, i) >= qr(0, i - 1));
}

TEST_CASE("downsample") {
  SUBCASE("constant stays constant") {
    const IntensityImage img(12, 12, 1.0, RealGrid::Constant(12, 12, 3.5));
    const IntensityImage out = downsample(img, 5, 7);
    CHECK((out.values() - 3.5).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("2x2 block means") {
    RealGrid v(4, 4);
    for (int i = 0; i < 16; ++i) v.data()[i] = i;
    const IntensityImage out = downsample(IntensityImage(4, 4, 1.0, v), 2, 2);
    CHECK(out(0, 0) == doctest::Approx(2.5));
    CHECK(out(0, 1) == doctest::Approx(4.5));
    CHECK(out(1, 0) == doctest::Approx(10.5));
    CHECK(out(1, 1) == doctest::Approx(12.5));
    CHECK(out.pitch() == doctest::Approx(2.0));
  }
  SUBCASE("identity and mean preservation") {
    RealGrid v(30, 30);
    for (int i = 0; i < 900; ++i) v.data()[i] = std::sin(i * 0.37) + 1.5;
    const IntensityImage img(30, 30, 1.0, v);
    CHECK((downsample(img, 30, 30).values() == v).all());
    const IntensityImage out = downsample(img, 7, 11);
    CHECK(std::abs(out.mean() - img.mean()) <= 1e-9 * img.mean());
  }
  SUBCASE("bad sizes") {
    const IntensityImage img(4, 4, 1.0, RealGrid::Zero(4, 4));
    CHECK_THROWS_AS(downsample(img, 0, 2), ArgumentError);
    CHECK_THROWS_AS(downsample(img, 5, 2), ArgumentError);
  }
}

TEST_CASE("standardize and correlation") {
  RealGrid v(2, 2);
  v << 1, 2, 3, 4;
  const RealGrid s = standardize(v);
  CHECK(std::abs(s.mean()) < 1e-12);
  CHECK(s.square().mean() == doctest::Approx(1.0));
  CHECK((standardize(RealGrid::Constant(3, 3, 7.0)) == 0.0).all());
  CHECK(normalized_cross_correlation(v, 2.0 * v + 1.0) == doctest::Approx(1.0));
  CHECK(normalized_cross_correlation(v, -v) == doctest::Approx(-1.0));
  CHECK(normalized_cross_correlation(v, RealGrid::Constant(2, 2, 1.0)) == 0.0);
}
