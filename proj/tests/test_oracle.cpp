#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace maxrobust;
using testutil::Rng;
using testutil::rel_err;

namespace {

// Independent scan of the unit circle for d = 2.
double polar_scan_max_margin(const Dataset& ds, NormKind attack, int samples = 400000) {
  const Matrix A = ds.y.asDiagonal() * ds.X;
  double best = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    const double theta = 2 * std::numbers::pi * s / samples;
    Vector v(2);
    v << std::cos(theta), std::sin(theta);
    best = std::max(best, (A * v).minCoeff() / norm(v, dual(attack)));
  }
  return best;
}

void expect_certified(const OracleSolution& sol, const Dataset& ds) {
  ASSERT_TRUE(sol.converged);
  EXPECT_LE(sol.kkt_residual, 1e-8);
  EXPECT_LE(sol.lower_bound, sol.objective * (1 + 1e-12));
  EXPECT_NEAR(sol.max_margin * sol.objective, 1.0, 1e-12);
  const Vector f = functional_margins(ds, sol.w);
  EXPECT_GE(f.minCoeff(), 1 - 1e-8);
  EXPECT_NEAR(f.minCoeff(), 1.0, 1e-12);
  EXPECT_LT(rel_err(norm(sol.w, dual(sol.attack)), sol.objective), 1e-8);
}

}  // namespace

TEST(MinNormSolve, TwoPointDatasetEveryNorm) {
  const Dataset ds = testutil::two_point_dataset();
  for (NormKind k : kAttackNorms) {
    const auto sol = min_norm_solve(ds, k);
    expect_certified(sol, ds);
    EXPECT_EQ(sol.attack, k);
    EXPECT_EQ(sol.weight_norm, dual(k));
    if (k == NormKind::FourierLinf) {
      // Fourier-l1 of (a, b) is (|a + b| + |a - b|)/sqrt2 = sqrt2 max(|a|, |b|): w = (1, 0) is optimal, margin 1/sqrt2.
      EXPECT_NEAR(sol.objective, std::sqrt(2.0), 1e-8);
    } else {
      EXPECT_NEAR(sol.objective, 1.0, 1e-8);
      EXPECT_NEAR(sol.w[0], 1.0, 1e-8);
    }
  }
}

TEST(MinNormSolve, RejectsFourierL1AttackAndEmptyData) {
  EXPECT_THROW(min_norm_solve(testutil::two_point_dataset(), NormKind::FourierL1), InvalidArgument);
  Dataset empty;
  empty.X.resize(0, 3);
  EXPECT_THROW(min_norm_solve(empty, NormKind::L2), InvalidArgument);
}

TEST(MinNormSolve, AgreesWithBruteForceInLowDimensions) {
  Rng rng(1);
  for (Eigen::Index d : {2, 3}) {
    for (int t = 0; t < 6; ++t) {
      const Dataset ds = testutil::random_dataset(rng, d, rng.integer(2, 4), 0.1);
      for (NormKind k : kAttackNorms) {
        const auto sol = min_norm_solve(ds, k);
        expect_certified(sol, ds);
        const double grid = brute_force_max_margin(ds, k);
        EXPECT_LT(rel_err(grid, sol.max_margin), 1e-3) << "d=" << d << " " << to_string(k);
        EXPECT_LE(grid, sol.max_margin * (1 + 1e-8));
      }
    }
  }
}

TEST(MinNormSolve, AgreesWithIndependentPolarScan) {
  Rng rng(2);
  for (int t = 0; t < 4; ++t) {
    const Dataset ds = testutil::random_dataset(rng, 2, 3, 0.1);
    for (NormKind k : kAttackNorms) {
      const double scan = polar_scan_max_margin(ds, k);
      EXPECT_LT(rel_err(scan, min_norm_solve(ds, k).max_margin), 1e-3) << to_string(k);
    }
  }
}

TEST(MinNormSolve, ConvergesOnSweepInstances) {
  for (Eigen::Index n : {100, 25, 3}) {
    const Dataset ds = generate_gaussian_separable(100, n, 0);
    for (NormKind k : kAttackNorms) {
      const auto sol = min_norm_solve(ds, k);
      expect_certified(sol, ds);
      EXPECT_GT(sol.max_margin, 0.0);
    }
  }
}

TEST(MinNormSolve, DominatesTrainedModels) {
  const Dataset ds = generate_gaussian_separable(100, 25, 0);
  TrainConfig cfg;
  cfg.steps = 3000;
  cfg.record_every = 1000;
  std::vector<Model> models;
  for (NormKind geom : {NormKind::L2, NormKind::L1}) {
    cfg.norm_kind = geom;
    models.push_back(train_steepest(ds, cfg).model);
  }
  cfg.norm_kind = NormKind::Linf;
  cfg.step_size = 0.01;
  models.push_back(train_steepest(ds, cfg).model);
  models.push_back(LinearModel{full_teacher(ds)});
  for (NormKind k : kAttackNorms) {
    const double best = min_norm_solve(ds, k).max_margin;
    for (const auto& m : models) EXPECT_LE(margin(m, ds, k), best * (1 + 1e-8)) << to_string(k);
  }
}

TEST(MinNormSolve, MaximalRobustEpsOfSolutionEqualsMargin) {
  const Dataset ds = generate_gaussian_separable(30, 10, 1);
  for (NormKind k : kAttackNorms) {
    const auto sol = min_norm_solve(ds, k);
    AttackConfig cfg;
    cfg.norm = k;
    const double step = 0.02 * sol.max_margin;
    const double eps = max_robust_eps(Model{LinearModel{sol.w}}, ds, cfg, 2 * sol.max_margin, step);
    EXPECT_LE(std::abs(eps - sol.max_margin), step / 16 * (1 + 1e-6)) << to_string(k);
    EXPECT_NEAR(margin(Model{LinearModel{sol.w}}, ds, k), sol.max_margin, 1e-8 * sol.max_margin);
  }
}

TEST(MinNormSolve, ScaleCovariance) {
  Rng rng(3);
  const Dataset ds = testutil::random_dataset(rng, 6, 4);
  Dataset scaled = ds;
  scaled.X *= 3.0;
  for (NormKind k : kAttackNorms)
    EXPECT_LT(rel_err(min_norm_solve(scaled, k).max_margin, 3.0 * min_norm_solve(ds, k).max_margin), 1e-7);
}

TEST(MinNormSolve, IterationCapReportsNonConvergence) {
  const Dataset ds = generate_gaussian_separable(30, 10, 2);
  OracleOptions opt;
  opt.max_iterations = 3;
  opt.polish_every = 1000;
  const auto sol = min_norm_solve(ds, NormKind::L1, opt);
  EXPECT_FALSE(sol.converged);
  EXPECT_LE(sol.iterations, 3);
  EXPECT_GT(sol.kkt_residual, 1e-8);
}

TEST(BruteForce, TwoPointDataset) {
  const Dataset ds = testutil::two_point_dataset();
  for (NormKind k : {NormKind::L1, NormKind::L2, NormKind::Linf})
    EXPECT_NEAR(brute_force_max_margin(ds, k), 1.0, 1e-9) << to_string(k);
}

TEST(BruteForce, RefinementNeverDecreases) {
  Rng rng(4);
  for (int t = 0; t < 5; ++t) {
    const Dataset ds = testutil::random_dataset(rng, 3, 3, 0.1);
    for (NormKind k : kAttackNorms) {
      double prev = -std::numeric_limits<double>::infinity();
      for (int levels : {0, 1, 2, 5, 10, 20}) {
        const double v = brute_force_max_margin(ds, k, levels, 16);
        EXPECT_GE(v, prev);
        prev = v;
      }
      double coarse = -std::numeric_limits<double>::infinity();
      for (int base : {4, 8, 16, 32}) {
        const double v = brute_force_max_margin(ds, k, 0, base);
        EXPECT_GE(v, coarse);
        coarse = v;
      }
    }
  }
}

TEST(BruteForce, RejectsLargeDimensions) {
  EXPECT_THROW(brute_force_max_margin(generate_gaussian_separable(4, 2, 0, false), NormKind::L2), InvalidArgument);
}
