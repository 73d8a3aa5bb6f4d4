#pragma once

#include "ntd/image.hpp"

#include <complex>
#include <cstddef>
#include <numbers>
#include <utility>
#include <vector>

namespace ntd {

/// Complex spectrum on a power-of-two grid, row-major like Image.
template <typename Scalar>
using Spectrum = Image<std::complex<Scalar>>;

inline Eigen::Index next_pow2(Eigen::Index n) {
  Eigen::Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace detail {

template <typename Scalar>
inline std::complex<Scalar> cmul(std::complex<Scalar> a, std::complex<Scalar> b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

/// Twiddle table w^k = exp(-2 pi i k / n), k < n/2.
template <typename Scalar>
std::vector<std::complex<Scalar>> twiddles(std::size_t n) {
  std::vector<std::complex<Scalar>> w(n / 2);
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    w[k] = {static_cast<Scalar>(std::cos(angle)), static_cast<Scalar>(std::sin(angle))};
  }
  return w;
}

/// Iterative radix-2 transform of a contiguous power-of-two sequence. No scaling.
template <typename Scalar>
void fft_inplace(std::complex<Scalar>* x, std::size_t n, const std::vector<std::complex<Scalar>>& w, bool inverse) {
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        std::complex<Scalar> tw = w[k * stride];
        if (inverse) tw = std::conj(tw);
        const std::complex<Scalar> t = cmul(x[start + k + half], tw);
        x[start + k + half] = x[start + k] - t;
        x[start + k] += t;
      }
    }
  }
}

template <typename Scalar>
void fft2_inplace(Spectrum<Scalar>& s, bool inverse) {
  const auto rows = static_cast<std::size_t>(s.rows());
  const auto cols = static_cast<std::size_t>(s.cols());
  const auto wc = twiddles<Scalar>(cols);
  for (std::size_t r = 0; r < rows; ++r) fft_inplace(s.data() + r * cols, cols, wc, inverse);
  const auto wr = twiddles<Scalar>(rows);
  std::vector<std::complex<Scalar>> column(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) column[r] = s.data()[r * cols + c];
    fft_inplace(column.data(), rows, wr, inverse);
    for (std::size_t r = 0; r < rows; ++r) s.data()[r * cols + c] = column[r];
  }
}

}  // namespace detail

/// Forward 2D DFT, unnormalized. The input is zero-padded to the next power of
/// two per axis, or to (rows, cols) when given (each must be a power of two and
/// at least the image size).
template <typename Scalar>
Spectrum<Scalar> fft2(const Image<Scalar>& img, Eigen::Index rows = 0, Eigen::Index cols = 0) {
  if (rows == 0) rows = next_pow2(img.rows());
  if (cols == 0) cols = next_pow2(img.cols());
  Spectrum<Scalar> s = Spectrum<Scalar>::Zero(rows, cols);
  s.topLeftCorner(img.rows(), img.cols()) = img.template cast<std::complex<Scalar>>();
  detail::fft2_inplace(s, false);
  return s;
}

/// Inverse 2D DFT scaled by 1/(W*H); returns the real part of the top-left
/// (rows, cols) window (whole grid by default).
template <typename Scalar>
Image<Scalar> ifft2(const Spectrum<Scalar>& spec, Eigen::Index rows = 0, Eigen::Index cols = 0) {
  Spectrum<Scalar> s = spec;
  detail::fft2_inplace(s, true);
  s /= static_cast<Scalar>(s.size());
  if (rows == 0) rows = s.rows();
  if (cols == 0) cols = s.cols();
  return s.topLeftCorner(rows, cols).real();
}

enum class MaskKind { Gaussian, Disk };

struct MaskSpec {
  MaskKind kind = MaskKind::Gaussian;
  int size = 0;         // odd
  double sigma = 0.0;   // gaussian only
  double radius = 0.0;  // disk only
};

/// Gaussian: unit-sum samples of exp(-(x^2+y^2)/(2 sigma^2)) about the centre.
/// Disk: binary, 1 where the distance to the centre is <= radius.
GrayImage make_mask(const MaskSpec& spec);

/// Full linear convolution, size (Ha+Hb-1) x (Wa+Wb-1).
GrayImage convolve_full(const GrayImage& a, const GrayImage& b);

/// Linear convolution cropped to a's size about b's centre ("same").
GrayImage convolve(const GrayImage& a, const GrayImage& b);

/// Regularized inverse of convolve(., b):
///   argmin_a |convolve(a, b) - f|^2 + lambda * max|B|^2 * |a|^2
/// where B is b's spectrum on the padded grid. Separable masks are solved
/// exactly through the SVD of their 1D Toeplitz factors; other masks use the
/// binwise Tikhonov quotient F conj(B) / (|B|^2 + lambda max|B|^2).
GrayImage deconvolve(const GrayImage& f, const GrayImage& b, double lambda);

/// The binwise quotient on the zero-padded grid, regardless of separability.
GrayImage deconvolve_spectral(const GrayImage& f, const GrayImage& b, double lambda);

/// Rank-1 factorization b = col * row^T when one exists (relative tolerance
/// on the second singular value).
bool separable_factors(const GrayImage& b, Eigen::VectorXd& col, Eigen::VectorXd& row, double tol = 1e-12);

/// Matrix of the 1D "same" convolution with `kernel` on n samples:
/// T(i, j) = kernel(i - j + (m-1)/2).
Eigen::MatrixXd same_toeplitz(const Eigen::VectorXd& kernel, Eigen::Index n);

}  // namespace ntd
