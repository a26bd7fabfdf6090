#include <gtest/gtest.h>

#include <cmath>

#include "lmolab/error.hpp"
#include "lmolab/optim.hpp"
#include "lmolab/random.hpp"

using namespace lmolab;
using optim::UpdateRule;

namespace {

constexpr UpdateRule kRules[] = {UpdateRule::kSign,   UpdateRule::kOrth, UpdateRule::kRowMax,
                                 UpdateRule::kColMax, UpdateRule::kRaw,  UpdateRule::kColNorm};

void expect_matrix_near(const Matrix& got, const Matrix& want, double tol) {
  ASSERT_EQ(got.rows(), want.rows());
  ASSERT_EQ(got.cols(), want.cols());
  for (std::size_t i = 0; i < got.rows(); ++i)
    for (std::size_t j = 0; j < got.cols(); ++j) EXPECT_NEAR(got(i, j), want(i, j), tol) << i << "," << j;
}

// Value of max <Z, m> over each rule's unit ball, computed entrywise.
double dual_value(const Matrix& m, UpdateRule rule) {
  double v = 0.0;
  switch (rule) {
    case UpdateRule::kSign:
      for (double x : m.values()) v += std::abs(x);
      return v;
    case UpdateRule::kOrth: {
      const auto s = singular_values(m);
      for (double x : s.values()) v += x;
      return v;
    }
    case UpdateRule::kRowMax:
      for (std::size_t i = 0; i < m.rows(); ++i) {
        double best = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) best = std::max(best, std::abs(m(i, j)));
        v += best;
      }
      return v;
    case UpdateRule::kColMax:
      for (std::size_t j = 0; j < m.cols(); ++j) {
        double best = 0.0;
        for (std::size_t i = 0; i < m.rows(); ++i) best = std::max(best, std::abs(m(i, j)));
        v += best;
      }
      return v;
    case UpdateRule::kRaw:
      return frobenius_norm(m);
    case UpdateRule::kColNorm:
      for (std::size_t j = 0; j < m.cols(); ++j) {
        double sq = 0.0;
        for (std::size_t i = 0; i < m.rows(); ++i) sq += m(i, j) * m(i, j);
        v += std::sqrt(sq);
      }
      return v;
  }
  return v;
}

}  // namespace

TEST(Lmo, HandExamples) {
  expect_matrix_near(optim::lmo_direction(Matrix::from_rows({{0.5, -2}}), UpdateRule::kSign),
                     Matrix::from_rows({{1, -1}}), 0.0);
  const Matrix m = Matrix::from_rows({{3, -3}, {1, 2}});
  expect_matrix_near(optim::lmo_direction(m, UpdateRule::kRowMax), Matrix::from_rows({{0.5, -0.5}, {0, 1}}), 0.0);
  expect_matrix_near(optim::lmo_direction(m, UpdateRule::kColMax), Matrix::from_rows({{1, -1}, {0, 0}}), 0.0);
  expect_matrix_near(optim::lmo_direction(Matrix::diagonal({2.0, -1.0}), UpdateRule::kOrth),
                     Matrix::diagonal({1.0, -1.0}), 1e-12);
  expect_matrix_near(optim::lmo_direction(Matrix::from_rows({{3, 0}, {4, 0}}), UpdateRule::kColNorm),
                     Matrix::from_rows({{0.6, 0}, {0.8, 0}}), 1e-15);
  expect_matrix_near(optim::lmo_direction(Matrix::from_rows({{3, 4}}), UpdateRule::kRaw, 10.0),
                     Matrix::from_rows({{6, 8}}), 1e-14);
}

TEST(Lmo, ZeroInputGivesZero) {
  for (auto rule : kRules) EXPECT_TRUE(optim::lmo_direction(Matrix(3, 2), rule).is_zero()) << optim::to_string(rule);
}

TEST(Lmo, AttainsDualValue) {
  Rng rng(31);
  for (int t = 0; t < 100; ++t) {
    const Matrix m = rng.normal_matrix(1 + rng.index(6), 1 + rng.index(6));
    for (auto rule : kRules) {
      const double got = inner(optim::lmo_direction(m, rule, 1.0), m);
      EXPECT_NEAR(got, dual_value(m, rule), 1e-9 * std::max(1.0, got)) << optim::to_string(rule);
    }
  }
}

TEST(Lmo, ScaleInvariance) {
  Rng rng(32);
  for (int t = 0; t < 50; ++t) {
    const Matrix m = rng.normal_matrix(4, 5);
    const double c = std::exp(rng.normal(0.0, 2.0));
    for (auto rule : kRules)
      expect_matrix_near(optim::lmo_direction(m * c, rule, 2.0), optim::lmo_direction(m, rule, 2.0), 1e-9);
  }
}

TEST(Lmo, RowAndColumnMassStructure) {
  Rng rng(33);
  for (int t = 0; t < 100; ++t) {
    Matrix m = rng.normal_matrix(5, 4);
    // Integer entries create ties.
    for (auto& v : m.values()) v = std::round(2.0 * v);
    const double r = 1.5;
    const Matrix ur = optim::lmo_direction(m, UpdateRule::kRowMax, r);
    for (std::size_t i = 0; i < 5; ++i) {
      double mass = 0.0;
      for (std::size_t j = 0; j < 4; ++j) {
        mass += std::abs(ur(i, j));
        if (ur(i, j) != 0.0) EXPECT_EQ(std::signbit(ur(i, j)), std::signbit(m(i, j)));
      }
      EXPECT_TRUE(std::abs(mass - r) < 1e-12 || mass == 0.0);
    }
    const Matrix uc = optim::lmo_direction(m, UpdateRule::kColMax, r);
    for (std::size_t j = 0; j < 4; ++j) {
      double mass = 0.0;
      for (std::size_t i = 0; i < 5; ++i) {
        mass += std::abs(uc(i, j));
        if (uc(i, j) != 0.0) EXPECT_EQ(std::signbit(uc(i, j)), std::signbit(m(i, j)));
      }
      EXPECT_TRUE(std::abs(mass - r) < 1e-12 || mass == 0.0);
    }
  }
}

TEST(Lmo, OptimalityCheck) {
  Rng rng(34);
  for (auto rule : kRules) {
    for (int t = 0; t < 10; ++t) {
      const auto rep = optim::lmo_optimality_check(rng.normal_matrix(4, 6), rule, 200, 3 + t);
      EXPECT_EQ(rep.violations, 0u) << optim::to_string(rule);
      EXPECT_LE(rep.worst_gap, 1e-9);
    }
  }
  EXPECT_EQ(optim::lmo_optimality_check(rng.normal_matrix(2, 2), UpdateRule::kRowMax, 4, 0).checked_norm,
            "(inf,inf)");
}

TEST(Lmo, RuleLabels) {
  EXPECT_EQ(optim::label_pair(UpdateRule::kSign), (norms::NormPair{1, kInf}));
  EXPECT_EQ(optim::label_pair(UpdateRule::kRowMax), (norms::NormPair{1, 1}));
  EXPECT_EQ(optim::optimal_pair(UpdateRule::kRowMax), (norms::NormPair{kInf, kInf}));
  EXPECT_FALSE(optim::label_pair(UpdateRule::kRaw).has_value());
  EXPECT_EQ(optim::rule_for_pair({2, 2}), UpdateRule::kOrth);
  EXPECT_EQ(optim::rule_for_pair({1, 2}), UpdateRule::kColNorm);
}

TEST(Step, RawRuleHandExample) {
  Matrix w(2, 2);
  optim::OptimizerState st;
  optim::OptimizerConfig cfg;
  cfg.rule = UpdateRule::kRaw;
  cfg.momentum = 0.0;
  cfg.lr = 1.0;
  optim::step(w, Matrix::from_rows({{1, 0}, {0, 0}}), st, cfg);
  expect_matrix_near(w, Matrix::from_rows({{-0.4, 0}, {0, 0}}), 1e-15);
  EXPECT_EQ(st.step_count, 1u);
}

TEST(Step, SignRuleMovesEveryWeightByLrTimesScale) {
  Rng rng(35);
  Matrix w = rng.normal_matrix(3, 4);
  const Matrix before = w;
  optim::OptimizerState st;
  optim::OptimizerConfig cfg;
  cfg.rule = UpdateRule::kSign;
  cfg.momentum = 0.0;
  cfg.lr = 0.3;
  optim::step(w, rng.normal_matrix(3, 4), st, cfg);
  for (std::size_t k = 0; k < w.size(); ++k) EXPECT_NEAR(std::abs(w.values()[k] - before.values()[k]), 0.06, 1e-14);
}

TEST(Step, OrthRuleUpdateMagnitude) {
  const std::size_t n = 4;
  Matrix w(n, n);
  optim::OptimizerState st;
  optim::OptimizerConfig cfg;
  cfg.rule = UpdateRule::kOrth;
  cfg.exact_msign = true;
  cfg.momentum = 0.0;
  cfg.lr = 1.0;
  Matrix q = Matrix::identity(n);
  q(0, 0) = -1.0;
  optim::step(w, q, st, cfg);
  EXPECT_NEAR(frobenius_norm(w), 0.2 * std::sqrt(static_cast<double>(n * n)), 1e-12);
}

TEST(Step, ZeroLrIsIdentityButAdvancesMomentum) {
  Rng rng(36);
  for (auto rule : kRules) {
    Matrix w = rng.normal_matrix(3, 3);
    const Matrix before = w;
    optim::OptimizerState st;
    optim::OptimizerConfig cfg;
    cfg.rule = rule;
    cfg.lr = 0.0;
    cfg.weight_decay = 0.1;
    const Matrix g = rng.normal_matrix(3, 3);
    optim::step(w, g, st, cfg);
    EXPECT_EQ(w, before);
    expect_matrix_near(st.momentum, g * 0.05, 1e-15);
    EXPECT_EQ(st.step_count, 1u);
  }
}

TEST(Step, ZeroGradientSkipsUpdate) {
  Matrix w(2, 2, 1.0);
  optim::OptimizerState st;
  optim::OptimizerConfig cfg;
  cfg.weight_decay = 0.5;
  optim::step(w, Matrix(2, 2), st, cfg);
  EXPECT_EQ(w, Matrix(2, 2, 1.0));
  EXPECT_EQ(st.step_count, 1u);
}

TEST(Step, DecoupledWeightDecay) {
  Matrix w = Matrix::from_rows({{2, -4}});
  optim::OptimizerState st;
  optim::OptimizerConfig cfg;
  cfg.rule = UpdateRule::kSign;
  cfg.momentum = 0.0;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  optim::step(w, Matrix::from_rows({{1, 1}}), st, cfg);
  expect_matrix_near(w, Matrix::from_rows({{2 * 0.95 - 0.02, -4 * 0.95 - 0.02}}), 1e-14);
}

TEST(Step, ConvergesOnQuadraticForEveryRule) {
  Rng rng(37);
  const Matrix target = rng.normal_matrix(4, 4);
  for (auto rule : kRules) {
    Matrix w(4, 4);
    optim::OptimizerState st;
    optim::OptimizerConfig cfg;
    cfg.rule = rule;
    cfg.exact_msign = true;
    cfg.momentum = 0.9;
    for (int t = 0; t < 500; ++t) {
      cfg.lr = 0.5 * optim::cosine_schedule(t, 500);
      optim::step(w, w - target, st, cfg);
    }
    EXPECT_LT(frobenius_norm(w - target), 0.1) << optim::to_string(rule);
  }
}

TEST(AdamW, ZeroGradientLeavesWeights) {
  Matrix w(2, 3, 0.7);
  optim::OptimizerState st;
  optim::OptimizerConfig cfg;
  cfg.method = optim::Method::kAdamW;
  for (int t = 0; t < 10; ++t) optim::step_adamw(w, Matrix(2, 3), st, cfg);
  EXPECT_EQ(w, Matrix(2, 3, 0.7));
}

TEST(AdamW, FirstStepIsSignLike) {
  Matrix w(1, 3);
  optim::OptimizerState st;
  optim::OptimizerConfig cfg;
  cfg.method = optim::Method::kAdamW;
  cfg.lr = 0.01;
  optim::step_adamw(w, Matrix::from_rows({{2.0, -0.5, 1e-3}}), st, cfg);
  EXPECT_NEAR(w(0, 0), -0.01, 1e-9);
  EXPECT_NEAR(w(0, 1), 0.01, 1e-9);
  EXPECT_NEAR(w(0, 2), -0.01, 1e-7);
}

TEST(AdamW, ScalarQuadratic) {
  Matrix w(1, 1, 1.0);
  optim::OptimizerState st;
  optim::OptimizerConfig cfg;
  cfg.method = optim::Method::kAdamW;
  cfg.lr = 0.1;
  for (int t = 0; t < 100; ++t) optim::step_adamw(w, w, st, cfg);
  EXPECT_LT(std::abs(w(0, 0)), 0.05);
}

TEST(Schedule, WarmupThenCosine) {
  EXPECT_NEAR(optim::cosine_schedule(0, 100, 0.1), 0.1, 1e-15);
  EXPECT_NEAR(optim::cosine_schedule(9, 100, 0.1), 1.0, 1e-15);
  EXPECT_NEAR(optim::cosine_schedule(10, 100, 0.1), 1.0, 1e-15);
  EXPECT_NEAR(optim::cosine_schedule(55, 100, 0.1), 0.5, 1e-12);
  EXPECT_LT(optim::cosine_schedule(99, 100, 0.1), 0.01);
  for (int t = 10; t < 99; ++t)
    EXPECT_GE(optim::cosine_schedule(t, 100, 0.1), optim::cosine_schedule(t + 1, 100, 0.1));
}

TEST(Config, NamesAndValidation) {
  EXPECT_EQ(optim::parse_algorithm("muon").rule, UpdateRule::kOrth);
  EXPECT_EQ(optim::parse_algorithm("a11").rule, UpdateRule::kRowMax);
  EXPECT_EQ(optim::parse_algorithm("ainfinf").rule, UpdateRule::kColMax);
  EXPECT_EQ(optim::parse_algorithm("adamw").method, optim::Method::kAdamW);
  for (const char* n : {"adamw", "muon", "signsgd", "rowmax", "colmax", "sgd", "colnorm"})
    EXPECT_EQ(optim::algorithm_name(optim::parse_algorithm(n)), n);
  EXPECT_THROW(optim::parse_algorithm("lion"), Error);
  optim::OptimizerConfig cfg;
  cfg.momentum = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
}
