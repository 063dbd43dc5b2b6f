#include "voxdec/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "voxdec/error.hpp"

namespace voxdec {
namespace {

// Continued fraction for I_x(a, b) (modified Lentz). Converges quickly for x < (a+1)/(a+b+2).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("incomplete beta needs positive shape parameters");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("incomplete beta argument must lie in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double df) {
  if (!(df > 0.0)) throw DomainError("t distribution needs positive degrees of freedom");
  if (std::isnan(t)) throw NumericError("t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return std::clamp(incomplete_beta(0.5 * df, 0.5, x), 0.0, 1.0);
}

OlsSolver::OlsSolver(DesignMatrix x) : x_(std::move(x)) {
  const auto n = x_.rows, p = x_.cols;
  if (x_.values.size() != n * p) throw ShapeError("design matrix size does not match its extents");
  if (n <= p) throw DomainError("regression needs more rows than regressors");
  std::vector<double> xtx(p * p, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j <= i; ++j) xtx[i * p + j] += x_(r, i) * x_(r, j);
  double scale = 0.0;
  for (std::size_t i = 0; i < p; ++i) scale = std::max(scale, xtx[i * p + i]);

  chol_.assign(p * p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    double diag = xtx[j * p + j];
    for (std::size_t k = 0; k < j; ++k) diag -= chol_[j * p + k] * chol_[j * p + k];
    if (!(diag > 1e-12 * scale)) throw DomainError("design matrix is rank deficient (column " + std::to_string(j) + ")");
    const double ljj = std::sqrt(diag);
    chol_[j * p + j] = ljj;
    for (std::size_t i = j + 1; i < p; ++i) {
      double v = xtx[i * p + j];
      for (std::size_t k = 0; k < j; ++k) v -= chol_[i * p + k] * chol_[j * p + k];
      chol_[i * p + j] = v / ljj;
    }
  }
  // diag((X'X)^-1) = squared norms of the columns of L^-1
  inv_diag_.assign(p, 0.0);
  for (std::size_t c = 0; c < p; ++c) {
    std::vector<double> e(p, 0.0), z(p, 0.0);
    e[c] = 1.0;
    for (std::size_t i = 0; i < p; ++i) {
      double v = e[i];
      for (std::size_t k = 0; k < i; ++k) v -= chol_[i * p + k] * z[k];
      z[i] = v / chol_[i * p + i];
    }
    for (std::size_t i = 0; i < p; ++i) inv_diag_[c] += z[i] * z[i];
  }
}

OlsSolver::Fit OlsSolver::fit(std::span<const double> y) const {
  const auto n = x_.rows, p = x_.cols;
  if (y.size() != n) throw ShapeError("regression target has the wrong length");
  std::vector<double> xty(p, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < p; ++i) xty[i] += x_(r, i) * y[r];
  // L z = X'y, then L' beta = z
  std::vector<double> z(p);
  for (std::size_t i = 0; i < p; ++i) {
    double v = xty[i];
    for (std::size_t k = 0; k < i; ++k) v -= chol_[i * p + k] * z[k];
    z[i] = v / chol_[i * p + i];
  }
  Fit f;
  f.beta.assign(p, 0.0);
  for (std::size_t i = p; i-- > 0;) {
    double v = z[i];
    for (std::size_t k = i + 1; k < p; ++k) v -= chol_[k * p + i] * f.beta[k];
    f.beta[i] = v / chol_[i * p + i];
  }
  for (std::size_t r = 0; r < n; ++r) {
    double fitted = 0.0;
    for (std::size_t i = 0; i < p; ++i) fitted += x_(r, i) * f.beta[i];
    const double e = y[r] - fitted;
    f.rss += e * e;
  }
  const double sigma2 = f.rss / static_cast<double>(dof());
  f.se.resize(p);
  for (std::size_t i = 0; i < p; ++i) f.se[i] = std::sqrt(sigma2 * inv_diag_[i]);
  return f;
}

double ks_uniform(std::vector<double> samples) {
  if (samples.empty()) throw DomainError("KS statistic needs samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double u = std::clamp(samples[i], 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - u, u - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace voxdec
