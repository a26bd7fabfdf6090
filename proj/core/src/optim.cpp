#include "lmolab/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lmolab/error.hpp"
#include "lmolab/random.hpp"

namespace lmolab::optim {

namespace {

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Per-row argmax selection: each row gets l1 mass `radius` spread over the
// entries attaining the row's max magnitude, with the sign of m.
Matrix select_row_max(const Matrix& m, double radius) {
  Matrix u(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    double peak = 0.0;
    for (double v : row) peak = std::max(peak, std::abs(v));
    if (peak == 0.0) continue;
    std::size_t ties = 0;
    for (double v : row) ties += std::abs(v) == peak;
    const double share = radius / static_cast<double>(ties);
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (std::abs(row[j]) == peak) u(i, j) = sgn(row[j]) * share;
  }
  return u;
}

Matrix column_normalize(const Matrix& m, double radius) {
  Matrix u(m.rows(), m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double sq = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) sq += m(i, j) * m(i, j);
    if (sq == 0.0) continue;
    const double scale = radius / std::sqrt(sq);
    for (std::size_t i = 0; i < m.rows(); ++i) u(i, j) = m(i, j) * scale;
  }
  return u;
}

double ball_norm(const Matrix& z, UpdateRule rule) {
  const auto pair = optimal_pair(rule);
  return pair ? norms::induced_norm(z, *pair) : frobenius_norm(z);
}

Matrix random_extreme_point(Rng& rng, std::size_t rows, std::size_t cols, UpdateRule rule) {
  Matrix z(rows, cols);
  switch (rule) {
    case UpdateRule::kSign:
      for (double& v : z.values()) v = rng.bernoulli(0.5) ? 1.0 : -1.0;
      return z;
    case UpdateRule::kOrth:
      return msign_exact(rng.normal_matrix(rows, cols));
    case UpdateRule::kRowMax:
      for (std::size_t i = 0; i < rows; ++i) z(i, rng.index(cols)) = rng.bernoulli(0.5) ? 1.0 : -1.0;
      return z;
    case UpdateRule::kColMax:
      for (std::size_t j = 0; j < cols; ++j) z(rng.index(rows), j) = rng.bernoulli(0.5) ? 1.0 : -1.0;
      return z;
    case UpdateRule::kColNorm:
      return column_normalize(rng.normal_matrix(rows, cols), 1.0);
    case UpdateRule::kRaw: {
      Matrix g = rng.normal_matrix(rows, cols);
      return g * (1.0 / frobenius_norm(g));
    }
  }
  return z;
}

}  // namespace

std::string_view to_string(UpdateRule rule) {
  switch (rule) {
    case UpdateRule::kSign: return "sign";
    case UpdateRule::kOrth: return "orth";
    case UpdateRule::kRowMax: return "row_max";
    case UpdateRule::kColMax: return "col_max";
    case UpdateRule::kRaw: return "raw";
    case UpdateRule::kColNorm: return "col_norm";
  }
  return "?";
}

std::optional<norms::NormPair> label_pair(UpdateRule rule) {
  switch (rule) {
    case UpdateRule::kSign: return norms::kL1Linf;
    case UpdateRule::kOrth: return norms::kSpectral;
    case UpdateRule::kRowMax: return norms::kL1L1;
    case UpdateRule::kColMax: return norms::kLinfLinf;
    case UpdateRule::kColNorm: return norms::kL1L2;
    case UpdateRule::kRaw: return std::nullopt;
  }
  return std::nullopt;
}

std::optional<norms::NormPair> optimal_pair(UpdateRule rule) {
  switch (rule) {
    case UpdateRule::kRowMax: return norms::kLinfLinf;
    case UpdateRule::kColMax: return norms::kL1L1;
    default: return label_pair(rule);
  }
}

UpdateRule rule_for_pair(norms::NormPair p) {
  if (p == norms::kL1L1) return UpdateRule::kColMax;
  if (p == norms::kL1L2) return UpdateRule::kColNorm;
  if (p == norms::kL1Linf) return UpdateRule::kSign;
  if (p == norms::kSpectral) return UpdateRule::kOrth;
  if (p == norms::kLinfLinf) return UpdateRule::kRowMax;
  fail(ErrorKind::kUnsupportedNorm, "no closed-form LMO for " + norms::to_string(p));
}

Matrix lmo_direction(const Matrix& m, UpdateRule rule, double radius, LmoOptions opts) {
  require(radius > 0.0, ErrorKind::kInvalidParameter, "lmo radius must be positive");
  if (m.is_zero()) return Matrix(m.rows(), m.cols());
  switch (rule) {
    case UpdateRule::kSign: {
      Matrix u(m.rows(), m.cols());
      for (std::size_t k = 0; k < m.size(); ++k) u.values()[k] = radius * sgn(m.values()[k]);
      return u;
    }
    case UpdateRule::kOrth: {
      Matrix u = opts.exact_msign ? msign_exact(m) : msign_newton_schulz(m, opts.ns_steps);
      u *= radius;
      return u;
    }
    case UpdateRule::kRowMax:
      return select_row_max(m, radius);
    case UpdateRule::kColMax:
      return select_row_max(m.transposed(), radius).transposed();
    case UpdateRule::kColNorm:
      return column_normalize(m, radius);
    case UpdateRule::kRaw:
      return m * (radius / frobenius_norm(m));
  }
  return Matrix(m.rows(), m.cols());
}

void OptimizerConfig::validate() const {
  require(lr >= 0.0 && std::isfinite(lr), ErrorKind::kInvalidParameter, "lr must be finite and >= 0");
  require(momentum >= 0.0 && momentum < 1.0, ErrorKind::kInvalidParameter, "momentum must lie in [0,1)");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorKind::kInvalidParameter,
          "adam betas must lie in [0,1)");
  require(eps > 0.0, ErrorKind::kInvalidParameter, "adam eps must be positive");
  require(weight_decay >= 0.0, ErrorKind::kInvalidParameter, "weight_decay must be >= 0");
  require(rms_scale > 0.0, ErrorKind::kInvalidParameter, "rms_scale must be positive");
  require(ns_steps >= 1, ErrorKind::kInvalidParameter, "ns_steps must be >= 1");
}

void step(Matrix& w, const Matrix& grad, OptimizerState& state, const OptimizerConfig& cfg) {
  require(w.same_shape(grad), ErrorKind::kInvalidInput, "step: weight and gradient shapes differ");
  if (state.momentum.empty()) state.momentum = Matrix(w.rows(), w.cols());
  require(state.momentum.same_shape(w), ErrorKind::kInvalidState, "step: momentum shape mismatch");

  auto mom = state.momentum.values();
  const auto g = grad.values();
  for (std::size_t k = 0; k < mom.size(); ++k) mom[k] = cfg.momentum * mom[k] + (1.0 - cfg.momentum) * g[k];
  ++state.step_count;

  const Matrix u = lmo_direction(state.momentum, cfg.rule, 1.0, {cfg.exact_msign, cfg.ns_steps});
  const double rms = rms_norm(u);
  if (rms == 0.0) return;
  if (cfg.weight_decay > 0.0) w *= 1.0 - cfg.lr * cfg.weight_decay;
  const double scale = cfg.lr * cfg.rms_scale / rms;
  auto wv = w.values();
  const auto uv = u.values();
  for (std::size_t k = 0; k < wv.size(); ++k) wv[k] -= scale * uv[k];
}

void step_adamw(Matrix& w, const Matrix& grad, OptimizerState& state, const OptimizerConfig& cfg) {
  require(w.same_shape(grad), ErrorKind::kInvalidInput, "step_adamw: weight and gradient shapes differ");
  if (state.adam_m.empty()) {
    state.adam_m = Matrix(w.rows(), w.cols());
    state.adam_v = Matrix(w.rows(), w.cols());
  }
  require(state.adam_m.same_shape(w), ErrorKind::kInvalidState, "step_adamw: moment shape mismatch");
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  if (cfg.weight_decay > 0.0) w *= 1.0 - cfg.lr * cfg.weight_decay;
  auto wv = w.values();
  auto mv = state.adam_m.values();
  auto vv = state.adam_v.values();
  const auto g = grad.values();
  for (std::size_t k = 0; k < wv.size(); ++k) {
    mv[k] = cfg.beta1 * mv[k] + (1.0 - cfg.beta1) * g[k];
    vv[k] = cfg.beta2 * vv[k] + (1.0 - cfg.beta2) * g[k] * g[k];
    wv[k] -= cfg.lr * (mv[k] / c1) / (std::sqrt(vv[k] / c2) + cfg.eps);
  }
}

void apply(Matrix& w, const Matrix& grad, OptimizerState& state, const OptimizerConfig& cfg) {
  if (cfg.method == Method::kAdamW) step_adamw(w, grad, state, cfg);
  else step(w, grad, state, cfg);
}

OptimalityReport lmo_optimality_check(const Matrix& m, UpdateRule rule, std::size_t trials,
                                      std::uint64_t seed, double tol) {
  require(trials >= 1, ErrorKind::kInvalidParameter, "lmo_optimality_check: trials must be >= 1");
  OptimalityReport rep;
  rep.trials = trials;
  const auto pair = optimal_pair(rule);
  rep.checked_norm = pair ? norms::to_string(*pair) : "fro";

  const Matrix u = lmo_direction(m, rule, 1.0);
  const double best = inner(u, m);
  Rng rng(seed, "optim.lmo_check");
  for (std::size_t t = 0; t < trials; ++t) {
    Matrix z;
    if (t % 2 == 0) {
      z = random_extreme_point(rng, m.rows(), m.cols(), rule);
    } else {
      z = rng.normal_matrix(m.rows(), m.cols());
      z *= 1.0 / ball_norm(z, rule);
    }
    const double gap = inner(z, m) - best;
    rep.worst_gap = std::max(rep.worst_gap, gap);
    if (gap > tol) ++rep.violations;
  }
  return rep;
}

double cosine_schedule(std::uint64_t step, std::uint64_t total_steps, double warmup_frac) {
  if (total_steps == 0) return 1.0;
  const auto warmup = static_cast<std::uint64_t>(std::ceil(warmup_frac * static_cast<double>(total_steps)));
  if (step < warmup) return static_cast<double>(step + 1) / static_cast<double>(warmup);
  const std::uint64_t span = total_steps - warmup;
  if (span == 0) return 1.0;
  const double progress = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(span));
  return 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

Algorithm parse_algorithm(std::string_view name) {
  if (name == "adamw") return {Method::kAdamW, UpdateRule::kSign};
  if (name == "muon") return {Method::kLmo, UpdateRule::kOrth};
  if (name == "signsgd") return {Method::kLmo, UpdateRule::kSign};
  if (name == "rowmax" || name == "a11") return {Method::kLmo, UpdateRule::kRowMax};
  if (name == "colmax" || name == "ainfinf") return {Method::kLmo, UpdateRule::kColMax};
  if (name == "sgd") return {Method::kLmo, UpdateRule::kRaw};
  if (name == "colnorm") return {Method::kLmo, UpdateRule::kColNorm};
  fail(ErrorKind::kInvalidParameter, "unknown optimizer '" + std::string(name) + "'");
}

std::string algorithm_name(Algorithm a) {
  if (a.method == Method::kAdamW) return "adamw";
  switch (a.rule) {
    case UpdateRule::kOrth: return "muon";
    case UpdateRule::kSign: return "signsgd";
    case UpdateRule::kRowMax: return "rowmax";
    case UpdateRule::kColMax: return "colmax";
    case UpdateRule::kRaw: return "sgd";
    case UpdateRule::kColNorm: return "colnorm";
  }
  return "?";
}

}  // namespace lmolab::optim
