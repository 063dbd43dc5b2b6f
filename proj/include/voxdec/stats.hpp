#pragma once

#include <span>
#include <vector>

namespace voxdec {

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

/// Two-sided tail probability P(|T| >= |t|) for Student's t with df degrees of freedom.
double student_t_two_sided(double t, double df);

/// Column-major n x p design matrix for ordinary least squares.
struct DesignMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major, rows x cols

  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Precomputed normal-equation factors shared by every voxel regression.
class OlsSolver {
 public:
  /// Throws DomainError when the design is rank deficient.
  explicit OlsSolver(DesignMatrix x);

  struct Fit {
    std::vector<double> beta;
    std::vector<double> se;
    double rss = 0.0;
  };

  Fit fit(std::span<const double> y) const;
  std::size_t dof() const { return x_.rows - x_.cols; }
  const DesignMatrix& design() const { return x_; }

 private:
  DesignMatrix x_;
  std::vector<double> chol_;      // lower Cholesky factor of X'X, cols x cols
  std::vector<double> inv_diag_;  // diagonal of (X'X)^-1
};

/// Kolmogorov-Smirnov statistic of samples against Uniform(0, 1).
double ks_uniform(std::vector<double> samples);

}  // namespace voxdec
