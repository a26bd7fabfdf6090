#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "lmolab/linalg.hpp"
#include "lmolab/norms.hpp"

namespace lmolab::optim {

/// Matrix update rules of the steepest-descent family.
enum class UpdateRule {
  kSign,     // A_{1,inf}
  kOrth,     // A_{2,2}
  kRowMax,   // per-row max entry, labelled A_{1,1}
  kColMax,   // per-column max entry, labelled A_{inf,inf}
  kRaw,      // RMS-aligned SGD
  kColNorm,  // A_{1,2}: each column scaled to unit l2 norm
};

std::string_view to_string(UpdateRule rule);

/// The (alpha, beta) label a rule carries in CSV output and reports.
/// Empty for kRaw, which is written as "fro".
std::optional<norms::NormPair> label_pair(UpdateRule rule);

/// The induced norm whose unit-ball LMO the rule actually computes. Differs
/// from label_pair for kRowMax and kColMax (see README); empty for kRaw,
/// whose ball is the Frobenius ball.
std::optional<norms::NormPair> optimal_pair(UpdateRule rule);

/// Rule whose direction is the LMO of `p`; throws unsupported-norm otherwise.
UpdateRule rule_for_pair(norms::NormPair p);

struct LmoOptions {
  bool exact_msign = true;
  int ns_steps = 5;
};

/// argmax <U, m> over the rule's norm ball of the given radius. Zero input
/// gives the zero direction for every rule.
Matrix lmo_direction(const Matrix& m, UpdateRule rule, double radius = 1.0, LmoOptions opts = {});

enum class Method { kLmo, kAdamW };

struct OptimizerConfig {
  Method method = Method::kLmo;
  UpdateRule rule = UpdateRule::kOrth;
  double lr = 0.02;
  double momentum = 0.95;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double rms_scale = 0.2;
  /// Newton-Schulz by default inside the optimizer; exact SVD on request.
  bool exact_msign = false;
  int ns_steps = 5;

  void validate() const;
};

struct OptimizerState {
  Matrix momentum;
  Matrix adam_m;
  Matrix adam_v;
  std::uint64_t step_count = 0;
};

/// Momentum + LMO + RMS-aligned step. Initializes buffers on first use.
void step(Matrix& w, const Matrix& grad, OptimizerState& state, const OptimizerConfig& cfg);

/// Bias-corrected AdamW with decoupled weight decay.
void step_adamw(Matrix& w, const Matrix& grad, OptimizerState& state, const OptimizerConfig& cfg);

/// Dispatches on cfg.method.
void apply(Matrix& w, const Matrix& grad, OptimizerState& state, const OptimizerConfig& cfg);

struct OptimalityReport {
  std::size_t trials = 0;
  std::size_t violations = 0;
  /// max over Z of <Z, m> - <U, m>; <= 0 when U is optimal.
  double worst_gap = -kInf;
  /// Ball the check ran against, e.g. "(inf,inf)" or "fro".
  std::string checked_norm;
};

/// Compares U = lmo_direction(m, rule, 1) against `trials` random feasible
/// Z, half drawn from the extreme points of the ball and half from scaled
/// gaussians.
OptimalityReport lmo_optimality_check(const Matrix& m, UpdateRule rule, std::size_t trials,
                                      std::uint64_t seed, double tol = 1e-9);

/// Linear warmup over the first warmup_frac of steps, then cosine to zero.
double cosine_schedule(std::uint64_t step, std::uint64_t total_steps, double warmup_frac = 0.1);

/// Named optimizer as used on the CLI: adamw, muon, signsgd, rowmax (a11),
/// colmax (ainfinf), sgd.
struct Algorithm {
  Method method = Method::kLmo;
  UpdateRule rule = UpdateRule::kOrth;
};

Algorithm parse_algorithm(std::string_view name);
std::string algorithm_name(Algorithm a);

}  // namespace lmolab::optim
