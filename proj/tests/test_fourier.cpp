#include "ntd/error.hpp"
#include "ntd/fourier.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using ntd::GrayImage;

TEST_CASE("fft2 round trip restores the input") {
  std::mt19937_64 gen(3);
  const GrayImage a = oracle::random_image(gen, 13, 7);
  const auto spec = ntd::fft2(a);
  CHECK(spec.rows() == 16);
  CHECK(spec.cols() == 8);
  const GrayImage back = ntd::ifft2(spec, 13, 7);
  CHECK((back - a).abs().maxCoeff() < 1e-12);
}

TEST_CASE("fft2 of an impulse is flat") {
  GrayImage a = GrayImage::Zero(8, 8);
  a(0, 0) = 1.0;
  const auto spec = ntd::fft2(a);
  CHECK((spec - std::complex<double>(1.0, 0.0)).abs().maxCoeff() < 1e-15);
}

TEST_CASE("fft2 is templated on the scalar") {
  ntd::Image<float> a = ntd::Image<float>::Constant(4, 4, 1.0f);
  const auto spec = ntd::fft2(a);
  CHECK(std::abs(spec(0, 0).real() - 16.0f) < 1e-5f);
  CHECK(std::abs(spec(1, 2)) < 1e-5f);
}

TEST_CASE("convolve matches direct summation") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 40; ++trial) {
    std::uniform_int_distribution<int> img_dim(1, 24);
    const int h = img_dim(gen), w = img_dim(gen);
    const int mh = std::uniform_int_distribution<int>(1, std::min(9, h))(gen);
    const int mw = std::uniform_int_distribution<int>(1, std::min(9, w))(gen);
    const GrayImage a = oracle::random_image(gen, h, w);
    const GrayImage b = oracle::random_image(gen, mh, mw);
    CHECK((ntd::convolve_full(a, b) - oracle::convolve_full(a, b)).abs().maxCoeff() < 1e-9);
    CHECK((ntd::convolve(a, b) - oracle::convolve_same(a, b)).abs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("convolve with a centred impulse is the identity") {
  std::mt19937_64 gen(2);
  const GrayImage a = oracle::random_image(gen, 10, 12);
  GrayImage b = GrayImage::Zero(5, 5);
  b(2, 2) = 1.0;
  CHECK((ntd::convolve(a, b) - a).abs().maxCoeff() < 1e-12);
}

TEST_CASE("convolve rejects bad masks") {
  const GrayImage a = GrayImage::Ones(4, 4);
  CHECK_THROWS_AS(ntd::convolve(a, GrayImage::Ones(5, 5)), ntd::ValidationError);
  CHECK_THROWS_AS(ntd::convolve(a, GrayImage(0, 3)), ntd::ValidationError);
}

TEST_CASE("gaussian mask has unit sum and peaks at the centre") {
  const GrayImage g = ntd::make_mask({ntd::MaskKind::Gaussian, 9, 2.0, 0.0});
  CHECK(g.sum() == doctest::Approx(1.0).epsilon(1e-12));
  Eigen::Index r, c;
  g.maxCoeff(&r, &c);
  CHECK(r == 4);
  CHECK(c == 4);
  CHECK((g - g.transpose()).abs().maxCoeff() < 1e-15);
}

TEST_CASE("disk mask is binary and bounded by the radius") {
  const GrayImage d = ntd::make_mask({ntd::MaskKind::Disk, 19, 0.0, 9.0});
  for (int r = 0; r < 19; ++r)
    for (int c = 0; c < 19; ++c) {
      const double dist = std::hypot(r - 9, c - 9);
      CHECK(d(r, c) == (dist <= 9.0 ? 1.0 : 0.0));
    }
  CHECK_THROWS_AS(ntd::make_mask({ntd::MaskKind::Disk, 9, 0.0, 5.0}), ntd::ValidationError);
  CHECK_THROWS_AS(ntd::make_mask({ntd::MaskKind::Gaussian, 8, 1.0, 0.0}), ntd::ValidationError);
}

TEST_CASE("separable factors reproduce a gaussian mask") {
  const GrayImage g = ntd::make_mask({ntd::MaskKind::Gaussian, 7, 1.5, 0.0});
  Eigen::VectorXd col, row;
  REQUIRE(ntd::separable_factors(g, col, row));
  const Eigen::MatrixXd outer = col * row.transpose();
  CHECK((outer.array() - g).abs().maxCoeff() < 1e-14);
  const GrayImage d = ntd::make_mask({ntd::MaskKind::Disk, 7, 0.0, 3.0});
  CHECK_FALSE(ntd::separable_factors(d, col, row));
}

TEST_CASE("same_toeplitz applies the 1D same convolution") {
  Eigen::VectorXd k(3);
  k << 1.0, 2.0, 3.0;
  const Eigen::MatrixXd t = ntd::same_toeplitz(k, 5);
  Eigen::VectorXd x(5);
  x << 1, 0, 0, 0, 0;
  const Eigen::VectorXd y = t * x;
  // impulse at 0 convolved with [1 2 3], centre at index 1 -> [2 3 0 0 0]
  CHECK(y(0) == 2.0);
  CHECK(y(1) == 3.0);
  CHECK(y(2) == 0.0);
}

TEST_CASE("deconvolve inverts convolve for a compact gaussian") {
  std::mt19937_64 gen(5);
  const GrayImage b = ntd::make_mask({ntd::MaskKind::Gaussian, 5, 2.0, 0.0});
  for (int trial = 0; trial < 5; ++trial) {
    const GrayImage a = oracle::random_image(gen, 16, 16);
    const GrayImage rec = ntd::deconvolve(ntd::convolve(a, b), b, 1e-12);
    CHECK((rec - a).block(3, 3, 10, 10).abs().maxCoeff() < 1e-3);
  }
}

TEST_CASE("deconvolve falls back to the spectral quotient for non-separable masks") {
  std::mt19937_64 gen(8);
  const GrayImage a = oracle::random_image(gen, 12, 12);
  const GrayImage d = ntd::make_mask({ntd::MaskKind::Disk, 5, 0.0, 2.0});
  const GrayImage f = ntd::convolve(a, d);
  CHECK((ntd::deconvolve(f, d, 1e-3) - ntd::deconvolve_spectral(f, d, 1e-3)).abs().maxCoeff() < 1e-12);
  CHECK(ntd::deconvolve(f, d, 1e-3).allFinite());
}

TEST_CASE("deconvolve of a zero image is zero") {
  const GrayImage b = ntd::make_mask({ntd::MaskKind::Gaussian, 5, 1.0, 0.0});
  CHECK(ntd::deconvolve(GrayImage::Zero(9, 9), b, 1e-6).abs().maxCoeff() == 0.0);
}

TEST_CASE("deconvolve validates its arguments") {
  const GrayImage f = GrayImage::Ones(8, 8);
  CHECK_THROWS_AS(ntd::deconvolve(f, GrayImage::Zero(3, 3), 1e-3), ntd::ValidationError);
  CHECK_THROWS_AS(ntd::deconvolve(f, GrayImage::Ones(3, 3), -1.0), ntd::ValidationError);
}
