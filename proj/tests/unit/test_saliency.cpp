#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "voxdec/error.hpp"
#include "voxdec/pipeline.hpp"
#include "voxdec/saliency.hpp"
#include "voxdec/stats.hpp"

using namespace voxdec;

namespace {

// Composite Simpson rule on the beta density; smooth enough for a, b >= 2.
double beta_cdf_by_quadrature(double a, double b, double x) {
  const int n = 100000;
  const double h = x / n;
  auto g = [&](double u) { return std::pow(u, a - 1.0) * std::pow(1.0 - u, b - 1.0); };
  double s = g(0.0) + g(x);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * g(i * h);
  const double beta_fn = std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
  return s * h / 3.0 / beta_fn;
}

ModelConfig toy_model(std::size_t t = 16) {
  ModelConfig cfg;
  cfg.t = t;
  cfg.c = 4;
  cfg.stem_width = 4;
  cfg.stage_widths = {8, 16};
  cfg.classes = 7;
  cfg.grid = {4, 4, 4};
  return cfg;
}

SaliencyMap map_from(const Tensor& volume, std::size_t offset, std::size_t count) {
  SaliencyMap m;
  m.frame_offset = offset;
  const std::size_t n = volume.slice_size();
  m.frames = Tensor({count, volume.dim(1), volume.dim(2), volume.dim(3)});
  for (std::size_t j = 0; j < count; ++j)
    std::copy_n(volume.slice(offset + j).begin(), n, m.frames.slice(j).begin());
  return m;
}

}  // namespace

TEST_SUITE("stats") {
  TEST_CASE("incomplete beta closed forms and quadrature") {
    for (double x : {0.0, 0.1, 0.37, 0.5, 0.93, 1.0}) {
      CHECK(incomplete_beta(1.0, 1.0, x) == doctest::Approx(x).epsilon(1e-12));
      CHECK(incomplete_beta(3.5, 1.0, x) == doctest::Approx(std::pow(x, 3.5)).epsilon(1e-12));
      CHECK(incomplete_beta(1.0, 2.5, x) == doctest::Approx(1.0 - std::pow(1.0 - x, 2.5)).epsilon(1e-12));
    }
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> ab(2.0, 30.0), xs(0.01, 0.99);
    for (int i = 0; i < 40; ++i) {
      const double a = ab(rng), b = ab(rng), x = xs(rng);
      const double got = incomplete_beta(a, b, x);
      CHECK(std::abs(got - beta_cdf_by_quadrature(a, b, x)) <= 1e-8);
      CHECK(std::abs(got + incomplete_beta(b, a, 1.0 - x) - 1.0) <= 1e-10);
    }
    CHECK_THROWS_AS(incomplete_beta(1.0, 1.0, 1.5), DomainError);
    CHECK_THROWS_AS(incomplete_beta(0.0, 1.0, 0.5), DomainError);
  }

  TEST_CASE("student t tails against closed forms") {
    for (double t : {0.0, 0.3, -1.0, 2.5, 12.0, -40.0}) {
      CHECK(std::abs(student_t_two_sided(t, 1.0) - (1.0 - 2.0 / std::numbers::pi * std::atan(std::abs(t)))) <= 1e-10);
      CHECK(std::abs(student_t_two_sided(t, 2.0) - (1.0 - std::abs(t) / std::sqrt(2.0 + t * t))) <= 1e-10);
    }
    // Large df approaches the normal tail.
    CHECK(std::abs(student_t_two_sided(1.959963984540054, 1e5) - 0.05) <= 1e-5);
    CHECK(student_t_two_sided(std::numeric_limits<double>::infinity(), 10.0) == 0.0);
  }

  TEST_CASE("ols agrees with a pseudo-inverse solve") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t rows = 30 + trial, cols = 2 + trial % 5;
      DesignMatrix x{rows, cols, std::vector<double>(rows * cols)};
      Eigen::MatrixXd xe(rows, cols);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) xe(r, c) = x.values[r * cols + c] = c == 0 ? 1.0 : n01(rng);
      std::vector<double> y(rows);
      Eigen::VectorXd ye(rows);
      for (std::size_t r = 0; r < rows; ++r) ye(r) = y[r] = n01(rng) + 2.0 * xe(r, cols - 1);

      const OlsSolver solver(x);
      const auto fit = solver.fit(y);
      const Eigen::MatrixXd pinv = xe.completeOrthogonalDecomposition().pseudoInverse();
      const Eigen::VectorXd beta = pinv * ye;
      const double rss = (ye - xe * beta).squaredNorm();
      const Eigen::MatrixXd cov = (xe.transpose() * xe).inverse() * (rss / static_cast<double>(rows - cols));
      CHECK(solver.dof() == rows - cols);
      CHECK(std::abs(fit.rss - rss) <= 1e-8 * std::max(1.0, rss));
      for (std::size_t c = 0; c < cols; ++c) {
        CHECK(std::abs(fit.beta[c] - beta(c)) <= 1e-8);
        CHECK(std::abs(fit.se[c] - std::sqrt(cov(c, c))) <= 1e-8);
      }
    }
    DesignMatrix dup{4, 2, {1, 1, 1, 1, 1, 1, 1, 1}};
    CHECK_THROWS_AS(OlsSolver{dup}, DomainError);
  }

  TEST_CASE("ks statistic") {
    std::vector<double> even(100);
    for (std::size_t i = 0; i < 100; ++i) even[i] = (i + 0.5) / 100.0;
    CHECK(ks_uniform(even) == doctest::Approx(0.005).epsilon(1e-12));
    CHECK(ks_uniform(std::vector<double>(10, 0.0)) == doctest::Approx(1.0));
  }
}

TEST_SUITE("saliency") {
  TEST_CASE("harvest frame") {
    CHECK(harvest_frame(16) == 7);
  }

  TEST_CASE("saliency window counts and alignment") {
    const ModelConfig cfg = toy_model();
    const ModelWeights w = init_params(cfg, 3);
    for (std::size_t frames : {std::size_t{16}, std::size_t{40}}) {
      RunData run;
      std::mt19937_64 rng(frames);
      run.volume = oracle::random_tensor({frames, 4, 4, 4}, rng);
      run.labels.assign(frames, 0);
      const Prediction pred = predict_run(w, cfg, run, 1);
      const SaliencyMap m = saliency_run(w, cfg, run, pred);
      CHECK(m.count() == window_count(frames, 16, 1));
      CHECK(m.frame_offset == 7);
      for (std::size_t j : {std::size_t{0}, m.count() - 1}) {
        const Tensor g = guided_window(w, cfg, extract_window(run.volume, j, 16), 7,
                                       static_cast<std::size_t>(pred.labels[j + 7]));
        for (std::size_t i = 0; i < 64; ++i) CHECK(m.frames[j * 64 + i] == g[7 * 64 + i]);
      }
      std::vector<int> truth(frames, 3);
      const SaliencyMap tm = saliency_run(w, cfg, run, pred, SeedClass::truth, truth);
      const Tensor g = guided_window(w, cfg, extract_window(run.volume, 0, 16), 7, 3);
      for (std::size_t i = 0; i < 64; ++i) CHECK(tm.frames[i] == g[7 * 64 + i]);
      Prediction short_pred = pred;
      short_pred.labels.pop_back();
      CHECK_THROWS_AS(saliency_run(w, cfg, run, short_pred), ShapeError);
    }
    CHECK(window_count(284, 16, 1) == 269);
    CHECK(window_count(253, 16, 1) == 238);
  }

  TEST_CASE("guided window") {
    ModelConfig cfg = toy_model(8);
    cfg.grid = {7, 7, 7};
    ModelWeights w = init_params(cfg, 4);
    std::mt19937_64 rng(5);
    Tensor x = oracle::random_tensor({8, 7, 7, 7}, rng);
    CHECK_THROWS_AS(guided_window(w, cfg, x, 8, 0), DomainError);
    CHECK_THROWS_AS(guided_window(w, cfg, x, 0, 7), DomainError);

    ModelConfig linear = cfg;
    linear.identity_activations = true;
    Tensor seed({8, 7});
    seed[3 * 7 + 2] = 1.0;
    CHECK(guided_window(w, linear, x, 3, 2) ==
          backward_input(forward(x, w, linear).cache, seed, w, linear, ReluMode::standard));

    // Non-negative embedding and stem kernels with a strongly negative blob
    // around voxel (3,3,3) close every stem relu that can reach that voxel.
    for (auto& v : w.embed.w.values()) v = std::abs(v);
    for (auto& v : w.stem.w.values()) v = std::abs(v);
    for (std::size_t f = 0; f < 8; ++f)
      for (std::size_t z = 1; z <= 5; ++z)
        for (std::size_t y = 1; y <= 5; ++y)
          for (std::size_t xx = 1; xx <= 5; ++xx) x[((f * 7 + z) * 7 + y) * 7 + xx] = -1000.0;
    const Tensor g = guided_window(w, cfg, x, 3, 2);
    for (std::size_t f = 0; f < 8; ++f) CHECK(g[((f * 7 + 3) * 7 + 3) * 7 + 3] == 0.0);
  }

  TEST_CASE("group average") {
    std::mt19937_64 rng(6);
    SaliencyMap a{oracle::random_tensor({5, 2, 2, 2}, rng), 7};
    CHECK(group_average({a}).frames == a.frames);
    SaliencyMap neg = a;
    neg.frames *= -1.0;
    const SaliencyMap zero = group_average({a, neg});
    for (double v : zero.frames.values()) CHECK(v == 0.0);
    const SaliencyMap three = group_average({a, a, a});
    for (std::size_t i = 0; i < a.frames.size(); ++i) CHECK(three.frames[i] == doctest::Approx(a.frames[i]).epsilon(1e-15));
    SaliencyMap other{Tensor({4, 2, 2, 2}), 7};
    CHECK_THROWS_AS(group_average({a, other}), ShapeError);
    SaliencyMap shifted = a;
    shifted.frame_offset = 6;
    CHECK_THROWS_AS(group_average({a, shifted}), ShapeError);
  }

  TEST_CASE("glm recovers an exact regressor and is scale equivariant") {
    const TaskDesign d = build_design(DesignKind::block, 8);
    const auto h = canonical_hrf(d.tr_s);
    const std::size_t n = 269;
    const DesignMatrix x = glm_design(d, h, 4, 7, n);
    CHECK(x.cols == 7);
    std::mt19937_64 rng(9);
    SaliencyMap m{oracle::random_tensor({n, 2, 2, 2}, rng), 7};
    for (std::size_t j = 0; j < n; ++j) m.frames[j * 8 + 5] = x(j, 3);
    const GlmResult r = glm_map(m, d, h, 4);
    CHECK(r.dof == n - 7);
    CHECK(r.conditions == std::vector<int>{1, 2, 3, 4, 5, 6});
    CHECK(r.beta[2][5] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(r.pvalue[2][5] < 1e-12);
    for (const auto& p : r.pvalue)
      for (double v : p.values()) CHECK((v >= 0.0 && v <= 1.0));

    SaliencyMap scaled = m;
    scaled.frames *= -3.5;
    const GlmResult s = glm_map(scaled, d, h, 4);
    for (std::size_t c = 0; c < 6; ++c)
      for (std::size_t v = 0; v < 8; ++v) {
        if (v == 5) continue;
        CHECK(s.beta[c][v] == doctest::Approx(-3.5 * r.beta[c][v]).epsilon(1e-9));
        CHECK(s.tstat[c][v] == doctest::Approx(-r.tstat[c][v]).epsilon(1e-9));
        CHECK(s.pvalue[c][v] == doctest::Approx(r.pvalue[c][v]).epsilon(1e-9));
      }
    CHECK_THROWS_AS(glm_design(d, h, 4, 20, n), DomainError);
  }

  TEST_CASE("white-noise p-values are uniform") {
    const TaskDesign d = build_design(DesignKind::block, 10);
    const auto h = canonical_hrf(d.tr_s);
    std::mt19937_64 rng(11);
    SaliencyMap m{oracle::random_tensor({269, 10, 10, 10}, rng), 7};
    const GlmResult r = glm_map(m, d, h, 4);
    for (const auto& p : r.pvalue) CHECK(ks_uniform({p.values().begin(), p.values().end()}) < 0.05);
  }

  TEST_CASE("fdr examples") {
    CHECK(fdr_threshold(std::vector<double>{0.01, 0.04, 0.9}, 0.05) == std::vector<bool>{true, false, false});
    CHECK(fdr_threshold(std::vector<double>{0.01, 0.02, 0.04}, 0.05) == std::vector<bool>{true, true, true});
    CHECK(fdr_threshold(std::vector<double>(6, 1.0), 0.05) == std::vector<bool>(6, false));
    CHECK_THROWS_AS(fdr_threshold(std::vector<double>{}, 0.05), DomainError);
    CHECK_THROWS_AS(fdr_threshold(std::vector<double>{0.1}, 1.0), DomainError);
  }

  TEST_CASE("fdr matches literal enumeration and is monotone in q") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t m = std::uniform_int_distribution<std::size_t>(1, 25)(rng);
      std::vector<double> p(m);
      std::uniform_int_distribution<int> grid(0, 40);
      for (auto& v : p) v = std::pow(grid(rng) / 40.0, 3.0);
      const double q = std::uniform_real_distribution<double>(0.01, 0.5)(rng);
      const auto got = fdr_threshold(p, q);
      CHECK(got == oracle::bh_reject(p, q));
      const auto wider = fdr_threshold(p, std::min(0.99, q * 1.7));
      for (std::size_t i = 0; i < m; ++i)
        if (got[i]) CHECK(wider[i]);
    }
  }

  TEST_CASE("peak series picks the planted voxel") {
    const TaskDesign d = build_design(DesignKind::block, 13);
    const auto h = canonical_hrf(d.tr_s);
    const auto ideal = ideal_response(d, 2, h);
    SaliencyMap m{Tensor({269, 3, 3, 3}), 7};
    for (std::size_t j = 0; j < 269; ++j) m.frames[j * 27 + 14] = ideal[j + 7];
    const GlmResult r = glm_map(m, d, h, 4);
    const PeakSeries p = peak_series(m, r, 2, d, h);
    CHECK(p.voxel == std::array<std::size_t, 3>{1, 1, 2});
    CHECK(p.pcc == doctest::Approx(1.0).epsilon(1e-12));
    const auto labels = d.labels();
    for (std::size_t j = 0; j < 269; ++j) CHECK(p.stimulus[j] == (labels[j + 7] == 2 ? 1.0 : 0.0));
    CHECK_THROWS_AS(peak_series(SaliencyMap{Tensor({269, 3, 3, 3}), 7}, glm_map(SaliencyMap{Tensor({269, 3, 3, 3}), 7}, d, h, 4), 2, d, h),
                    DomainError);
    CHECK_THROWS_AS(peak_series(m, r, 7, d, h), DomainError);
  }

  TEST_CASE("peak voxel of a noise-free run lies in the planted roi") {
    const TaskDesign d = build_design(DesignKind::block, 14);
    const auto h = canonical_hrf(d.tr_s);
    const Phantom ph = default_phantom(Grid{}, 6, 0.0);
    const RunData run = standardize_run(render_run(d, ph, 1));
    const SaliencyMap m = map_from(run.volume, 7, 269);
    const GlmResult r = glm_map(m, d, h, 4);
    for (int c = 1; c <= 6; ++c) {
      const PeakSeries p = peak_series(m, r, c, d, h);
      CHECK_MESSAGE(ph.rois[c - 1].contains(p.voxel[0], p.voxel[1], p.voxel[2]), "condition " << c);
    }
  }
}
