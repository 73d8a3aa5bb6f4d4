#include "ntd/fourier.hpp"

#include "ntd/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>

namespace ntd {
namespace {

void check_mask_fits(const GrayImage& a, const GrayImage& b, const char* op) {
  if (b.rows() < 1 || b.cols() < 1) throw ValidationError(std::string(op) + ": empty mask");
  if (b.rows() > a.rows() || b.cols() > a.cols())
    throw ValidationError(std::string(op) + ": mask larger than image");
}

void check_imaginary_residue(const Spectrum<double>& s, Eigen::Index r0, Eigen::Index c0, Eigen::Index rows,
                             Eigen::Index cols) {
  const auto window = s.block(r0, c0, rows, cols);
  const double scale = std::max(1.0, window.real().abs().maxCoeff());
  if (window.imag().abs().maxCoeff() > 1e-9 * scale)
    throw std::logic_error("spectral result has a non-negligible imaginary part");
}

Spectrum<double> full_product(const GrayImage& a, const GrayImage& b, Eigen::Index pr, Eigen::Index pc) {
  Spectrum<double> fa = fft2(a, pr, pc);
  const Spectrum<double> fb = fft2(b, pr, pc);
  fa *= fb;
  detail::fft2_inplace(fa, true);
  fa /= static_cast<double>(fa.size());
  return fa;
}

// Largest |DFT| of a zero-padded 1D kernel on n bins.
double max_dft_magnitude(const Eigen::VectorXd& kernel, Eigen::Index n) {
  double best = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (Eigen::Index j = 0; j < kernel.size(); ++j) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>((k * j) % n) / static_cast<double>(n);
      acc += kernel(j) * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    best = std::max(best, std::abs(acc));
  }
  return best;
}

struct ToeplitzSvd {
  Eigen::MatrixXd u;
  Eigen::VectorXd s;
  Eigen::MatrixXd v;
};

// The factorizations only depend on (kernel, n), which repeat across every
// frame of a corpus. Bounded, mutex-guarded, invisible to callers.
std::shared_ptr<const ToeplitzSvd> toeplitz_svd(const Eigen::VectorXd& kernel, Eigen::Index n) {
  using Key = std::pair<Eigen::Index, std::vector<double>>;
  static std::mutex mutex;
  static std::map<Key, std::shared_ptr<const ToeplitzSvd>> cache;

  Key key{n, std::vector<double>(kernel.data(), kernel.data() + kernel.size())};
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(same_toeplitz(kernel, n), Eigen::ComputeFullU | Eigen::ComputeFullV);
  auto entry = std::make_shared<const ToeplitzSvd>(ToeplitzSvd{svd.matrixU(), svd.singularValues(), svd.matrixV()});
  std::lock_guard lock(mutex);
  if (cache.size() >= 32) cache.clear();
  cache.emplace(std::move(key), entry);
  return entry;
}

void check_deconvolve_args(const GrayImage& f, const GrayImage& b, double lambda) {
  if (!(lambda >= 0.0)) throw ValidationError("deconvolve: lambda must be >= 0");
  check_mask_fits(f, b, "deconvolve");
  if ((b == 0.0).all()) throw ValidationError("deconvolve: mask is all zero");
}

}  // namespace

GrayImage make_mask(const MaskSpec& spec) {
  if (spec.size < 1 || spec.size % 2 == 0) throw ValidationError("make_mask: size must be odd and positive");
  const double center = (spec.size - 1) / 2.0;
  GrayImage mask(spec.size, spec.size);
  if (spec.kind == MaskKind::Gaussian) {
    if (!(spec.sigma > 0.0)) throw ValidationError("make_mask: sigma must be > 0");
    for (int r = 0; r < spec.size; ++r)
      for (int c = 0; c < spec.size; ++c) {
        const double dy = r - center, dx = c - center;
        mask(r, c) = std::exp(-(dx * dx + dy * dy) / (2.0 * spec.sigma * spec.sigma));
      }
    mask /= mask.sum();
  } else {
    if (!(spec.radius > 0.0) || spec.radius > center)
      throw ValidationError("make_mask: radius must be in (0, (size-1)/2]");
    for (int r = 0; r < spec.size; ++r)
      for (int c = 0; c < spec.size; ++c) {
        const double dy = r - center, dx = c - center;
        mask(r, c) = (dx * dx + dy * dy <= spec.radius * spec.radius) ? 1.0 : 0.0;
      }
  }
  return mask;
}

GrayImage convolve_full(const GrayImage& a, const GrayImage& b) {
  check_mask_fits(a, b, "convolve");
  const Eigen::Index rows = a.rows() + b.rows() - 1, cols = a.cols() + b.cols() - 1;
  const Spectrum<double> full = full_product(a, b, next_pow2(rows), next_pow2(cols));
  check_imaginary_residue(full, 0, 0, rows, cols);
  return full.topLeftCorner(rows, cols).real();
}

GrayImage convolve(const GrayImage& a, const GrayImage& b) {
  check_mask_fits(a, b, "convolve");
  const Eigen::Index rows = a.rows() + b.rows() - 1, cols = a.cols() + b.cols() - 1;
  const Spectrum<double> full = full_product(a, b, next_pow2(rows), next_pow2(cols));
  const Eigen::Index r0 = (b.rows() - 1) / 2, c0 = (b.cols() - 1) / 2;
  check_imaginary_residue(full, r0, c0, a.rows(), a.cols());
  return full.block(r0, c0, a.rows(), a.cols()).real();
}

Eigen::MatrixXd same_toeplitz(const Eigen::VectorXd& kernel, Eigen::Index n) {
  const Eigen::Index m = kernel.size();
  const Eigen::Index center = (m - 1) / 2;
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < m; ++k) {
      const Eigen::Index j = i - k + center;
      if (j >= 0 && j < n) t(i, j) = kernel(k);
    }
  return t;
}

bool separable_factors(const GrayImage& b, Eigen::VectorXd& col, Eigen::VectorXd& row, double tol) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(b.matrix(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  if (s(0) <= 0.0) return false;
  if (s.size() > 1 && s(1) > tol * s(0)) return false;
  col = svd.matrixU().col(0) * std::sqrt(s(0));
  row = svd.matrixV().col(0) * std::sqrt(s(0));
  if (col.sum() < 0.0) {
    col = -col;
    row = -row;
  }
  return true;
}

GrayImage deconvolve_spectral(const GrayImage& f, const GrayImage& b, double lambda) {
  check_deconvolve_args(f, b, lambda);
  const Eigen::Index pr = next_pow2(f.rows() + b.rows() - 1), pc = next_pow2(f.cols() + b.cols() - 1);
  const Eigen::Index r0 = (b.rows() - 1) / 2, c0 = (b.cols() - 1) / 2;

  Spectrum<double> grid = Spectrum<double>::Zero(pr, pc);
  grid.block(r0, c0, f.rows(), f.cols()) = f.cast<std::complex<double>>();
  detail::fft2_inplace(grid, false);
  const Spectrum<double> mask = fft2(b, pr, pc);

  const Eigen::ArrayXXd power = mask.abs2();
  const double floor = lambda * power.maxCoeff();
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const double denom = power.data()[i] + floor;
    grid.data()[i] = denom > 0.0 ? detail::cmul(grid.data()[i], std::conj(mask.data()[i])) / denom : 0.0;
  }
  detail::fft2_inplace(grid, true);
  grid /= static_cast<double>(grid.size());
  check_imaginary_residue(grid, 0, 0, f.rows(), f.cols());
  return grid.topLeftCorner(f.rows(), f.cols()).real();
}

GrayImage deconvolve(const GrayImage& f, const GrayImage& b, double lambda) {
  check_deconvolve_args(f, b, lambda);
  Eigen::VectorXd col, row;
  if (!separable_factors(b, col, row)) return deconvolve_spectral(f, b, lambda);

  // f = Tr * A * Tc^T with Tr = U1 S1 V1^T, Tc = U2 S2 V2^T.
  const auto rf = toeplitz_svd(col, f.rows());
  const auto cf = toeplitz_svd(row, f.cols());
  const Eigen::Index pr = next_pow2(f.rows() + b.rows() - 1), pc = next_pow2(f.cols() + b.cols() - 1);
  const double peak = max_dft_magnitude(col, pr) * max_dft_magnitude(row, pc);
  const double floor = lambda * peak * peak;

  Eigen::MatrixXd g = rf->u.transpose() * f.matrix() * cf->u;
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      const double s = rf->s(i) * cf->s(j);
      const double denom = s * s + floor;
      g(i, j) = denom > 0.0 ? s * g(i, j) / denom : 0.0;
    }
  GrayImage out = (rf->v * g * cf->v.transpose()).array();
  return out;
}

}  // namespace ntd
