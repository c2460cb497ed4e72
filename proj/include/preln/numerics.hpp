#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <utility>

#include "preln/random.hpp"

namespace preln {

// Row-major is the only layout used anywhere in the library.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatrixD = Matrix<double>;
using VectorD = Vector<double>;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

// i.i.d. N(mean, std^2) entries, filled row by row from `rng`.
MatrixD gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double mean, double std,
                        RandomSource& rng);

// Asymptotic spectral norm of a rows x cols Gaussian matrix with entry std `std`.
double expected_spectral_norm(double std, Eigen::Index rows, Eigen::Index cols);

struct SpectralNormEstimate {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  // Estimated relative distance of `value` from the limit of the iteration.
  double residual = 0.0;
};

inline constexpr double kSpectralTol = 1e-6;
inline constexpr int kSpectralMaxIters = 1000;

namespace detail {
SpectralNormEstimate power_iteration(const MatrixD& m, double tol, int max_iters,
                                     RandomSource& rng);
}

// Largest singular value by power iteration on m^T m from a random unit start.
// The residual is an Aitken-style estimate of the remaining error, so
// `converged` means the estimate is expected to lie within `tol` (relative).
template <typename Derived>
SpectralNormEstimate spectral_norm(const Eigen::MatrixBase<Derived>& m,
                                   double tol, int max_iters, RandomSource& rng) {
  if (m.rows() == 0 || m.cols() == 0) {
    throw std::invalid_argument("spectral_norm: empty matrix");
  }
  if (!(tol > 0.0)) throw std::invalid_argument("spectral_norm: tol must be positive");
  return detail::power_iteration(m.template cast<double>().eval(), tol, max_iters, rng);
}

template <typename Derived>
SpectralNormEstimate spectral_norm(const Eigen::MatrixBase<Derived>& m, RandomSource& rng) {
  return spectral_norm(m, kSpectralTol, kSpectralMaxIters, rng);
}

// Population moments. With fewer than two entries, or zero spread, the higher
// moments are NaN and `higher_moments_defined` is false.
struct MomentStats {
  double mean = 0.0;
  double std = 0.0;
  double skewness = std::numeric_limits<double>::quiet_NaN();
  double excess_kurtosis = std::numeric_limits<double>::quiet_NaN();
  std::size_t count = 0;
  bool higher_moments_defined = false;
};

template <typename Derived>
MomentStats sample_stats(const Eigen::DenseBase<Derived>& m) {
  const auto a = m.derived().template cast<double>().array().eval();
  MomentStats s;
  s.count = static_cast<std::size_t>(a.size());
  if (s.count == 0) throw std::invalid_argument("sample_stats: empty matrix");
  s.mean = a.mean();
  const auto c = (a - s.mean).eval();
  const double m2 = c.square().mean();
  s.std = std::sqrt(m2);
  if (s.count >= 2 && m2 > 0.0) {
    const double m3 = c.cube().mean();
    const double m4 = c.square().square().mean();
    s.skewness = m3 / std::pow(m2, 1.5);
    s.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    s.higher_moments_defined = true;
  }
  return s;
}

template <typename Derived>
double population_std(const Eigen::DenseBase<Derived>& m) {
  const Eigen::ArrayXXd a = m.derived().template cast<double>();
  const double mean = a.mean();
  return std::sqrt((a - mean).square().mean());
}

// Per-column population standard deviation.
template <typename Derived>
VectorD column_std(const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) throw std::invalid_argument("column_std: empty matrix");
  const MatrixD a = m.template cast<double>();
  const RowVector<double> mean = a.colwise().mean();
  return ((a.rowwise() - mean).array().square().colwise().mean().sqrt()).transpose();
}

// Streaming pooled mean/variance (Chan et al. merge), for statistics over
// many activation blocks.
class RunningMoments {
 public:
  template <typename Derived>
  void add(const Eigen::DenseBase<Derived>& block) {
    const Eigen::ArrayXXd a = block.derived().template cast<double>();
    const double n = static_cast<double>(a.size());
    if (n == 0) return;
    const double mean = a.mean();
    const double m2 = (a - mean).square().sum();
    merge(n, mean, m2);
  }
  void merge(double n, double mean, double m2);
  double count() const { return n_; }
  double mean() const { return mean_; }
  double std() const { return n_ > 0 ? std::sqrt(m2_ / n_) : 0.0; }

 private:
  double n_ = 0.0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// Central-difference Jacobian; column i is (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
template <typename F>
MatrixD finite_diff_jacobian(F&& f, const VectorD& x, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_jacobian: eps must be positive");
  VectorD probe = x;
  MatrixD jac;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const VectorD plus = f(static_cast<const VectorD&>(probe));
    probe[i] = x[i] - eps;
    const VectorD minus = f(static_cast<const VectorD&>(probe));
    probe[i] = x[i];
    if (i == 0) jac.resize(plus.size(), x.size());
    jac.col(i) = (plus - minus) / (2.0 * eps);
  }
  return jac;
}

}  // namespace preln
