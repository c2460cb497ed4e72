#include "preln/numerics.hpp"

namespace preln {

MatrixD gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double mean, double std,
                        RandomSource& rng) {
  if (rows <= 0 || cols <= 0) {
    throw std::invalid_argument("gaussian_matrix: rows and cols must be positive");
  }
  if (!(std >= 0.0)) throw std::invalid_argument("gaussian_matrix: negative std");
  MatrixD m(rows, cols);
  double* data = m.data();
  const Eigen::Index n = m.size();
  for (Eigen::Index i = 0; i < n; ++i) data[i] = mean + std * rng.normal();
  return m;
}

double expected_spectral_norm(double std, Eigen::Index rows, Eigen::Index cols) {
  return std * (std::sqrt(static_cast<double>(rows)) + std::sqrt(static_cast<double>(cols)));
}

void RunningMoments::merge(double n, double mean, double m2) {
  if (n <= 0) return;
  const double total = n_ + n;
  const double delta = mean - mean_;
  mean_ += delta * n / total;
  m2_ += m2 + delta * delta * n_ * n / total;
  n_ = total;
}

namespace detail {

SpectralNormEstimate power_iteration(const MatrixD& m, double tol, int max_iters,
                                     RandomSource& rng) {
  SpectralNormEstimate est;
  VectorD v(m.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  v.normalize();

  double prev = 0.0;
  double prev_delta = -1.0;
  double prev_ratio = 0.0;
  VectorD u(m.rows());
  for (int it = 1; it <= max_iters; ++it) {
    u.noalias() = m * v;
    const double sigma = u.norm();
    est.iterations = it;
    est.value = sigma;
    if (sigma == 0.0) {
      est.converged = true;
      est.residual = 0.0;
      return est;
    }
    const double delta = std::abs(sigma - prev);
    if (it >= 3) {
      // Geometric tail estimate; the larger of the last two ratios guards
      // against a transiently small ratio before the asymptotic regime.
      double remaining = delta;
      if (prev_delta > 0.0) {
        const double ratio = std::max(delta / prev_delta, prev_ratio);
        prev_ratio = delta / prev_delta;
        remaining = ratio < 1.0 ? delta * ratio / (1.0 - ratio)
                                : std::numeric_limits<double>::infinity();
      }
      est.residual = std::max(delta, remaining) / sigma;
      if (est.residual <= 0.1 * tol) {
        est.converged = true;
        return est;
      }
    } else if (prev_delta > 0.0) {
      prev_ratio = delta / prev_delta;
    } else {
      est.residual = std::numeric_limits<double>::infinity();
    }
    prev_delta = delta;
    prev = sigma;
    VectorD w = m.transpose() * u;
    const double wn = w.norm();
    if (wn == 0.0) {
      est.converged = true;
      est.residual = 0.0;
      return est;
    }
    v = w / wn;
  }
  return est;
}

}  // namespace detail
}  // namespace preln
