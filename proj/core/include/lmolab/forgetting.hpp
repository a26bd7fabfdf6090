#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "lmolab/linalg.hpp"
#include "lmolab/model.hpp"
#include "lmolab/norms.hpp"
#include "lmolab/random.hpp"

namespace lmolab::forgetting {

/// Synthetic input-activation distribution regularized by the alpha_star norm.
///   alpha_star = 1   : nonnegative k-sparse spikes of height `amplitude`,
///                      positions drawn from a Zipf(zipf) law over a seeded
///                      permutation of the coordinates
///   alpha_star = 2   : dense isotropic gaussian with `variance`
///   alpha_star = inf : dense +-amplitude flat vectors
struct ActivationProfile {
  double alpha_star = 1.0;
  std::size_t dim = 32;
  std::size_t sparsity = 1;
  double amplitude = 1.0;
  double variance = 1.0;
  double zipf = 1.0;
  std::uint64_t seed = 0;
};

struct ProfileCheckEntry {
  double alpha = 0.0;
  /// E||x||^2_{alpha_star} / E||x||^2_alpha, sampled.
  double ratio = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool ok = false;
};

struct ProfileCheck {
  std::size_t samples = 0;
  std::vector<ProfileCheckEntry> entries;
  bool ok() const;
};

class ProfileSampler {
 public:
  explicit ProfileSampler(const ActivationProfile& profile);

  const ActivationProfile& profile() const { return profile_; }
  Vector sample(Rng& rng) const;
  /// Closed-form E[x x^T].
  Matrix covariance() const;
  /// Coordinate probabilities of the spike profile (empty otherwise).
  const std::vector<double>& spike_probabilities() const { return probs_; }

  /// Samples E||x||^2 ratios against the regularity bands:
  /// alpha < alpha_star within [c1, c2] * n^(2(1/alpha_star - 1/alpha)); for
  /// the spike profile also alpha > alpha_star within [c1, c2].
  ProfileCheck verify(std::size_t samples, std::uint64_t seed, double c1 = 0.25, double c2 = 4.0) const;

 private:
  ActivationProfile profile_;
  std::vector<double> probs_;
  std::vector<double> cumulative_;
};

/// Builds a sampler and verifies it; a failed check raises
/// profile-construction-failed.
ProfileSampler synthesize_profile(const ActivationProfile& profile, std::size_t verify_samples = 20000,
                                  double c1 = 0.25, double c2 = 4.0);

/// Running mean of x x^T from a captured layer.
Matrix estimate_input_covariance(const model::LayerTrace& trace);
/// Same estimator over explicit samples.
Matrix estimate_input_covariance(const std::vector<Vector>& samples);
std::map<std::string, Matrix> layer_covariances(const model::ActivationTrace& trace);

/// 1/2 tr(dW Sigma dW^T). Sigma must be symmetric PSD up to -1e-8.
double quadratic_forgetting(const Matrix& dw, const Matrix& sigma_x);

struct TradeoffInstance {
  ActivationProfile profile;
  Matrix sft_gradient;  // G, m x n
  Matrix sigma_x;       // exact profile covariance
  double h0 = 2.0;
  double budget = 1.0;  // C <= h0; C = h0 means no update
};

struct InstanceOptions {
  std::size_t rows = 32;
  std::size_t batch = 1024;
  double noise = 6.0;
  double h0 = 2.0;
  double budget = 1.0;
};

/// G = (1/B) sum_b delta_b x_b^T with x_b from the profile and
/// delta_b = dbar + noise * xi_b, dbar and xi_b standard normal in R^m.
TradeoffInstance generate_instance(const ProfileSampler& sampler, std::uint64_t seed, const InstanceOptions& opts = {});

struct RuleOutcome {
  norms::NormPair pair;
  Matrix delta;
  double radius = 0.0;
  double l_sft = 0.0;
  double l_forget = 0.0;
  double ratio_to_min = 0.0;
};

struct ForgettingReport {
  std::vector<RuleOutcome> rows;
  std::vector<norms::NormPair> excluded;
  std::vector<norms::NormPair> matched;
  double grid_min = 0.0;
  double matched_value = 0.0;
  double matched_ratio = 0.0;
};

/// Pairs of {1,2,inf}^2 with a closed-form LMO, and the rest.
std::vector<norms::NormPair> default_grid();
std::vector<norms::NormPair> excluded_grid();
/// alpha2 = alpha_star and beta2 in {2, inf}.
std::vector<norms::NormPair> matched_pairs(double alpha_star, const std::vector<norms::NormPair>& grid);

/// For each pair: dW = -R U1 with U1 the unit LMO direction of G and R chosen
/// so that H0 + <dW, G> = C. Forgetting uses `sigma_x` (the instance's exact
/// covariance when empty).
ForgettingReport tradeoff_sweep(const TradeoffInstance& inst, const std::vector<norms::NormPair>& grid,
                                 const Matrix& sigma_x = {});

struct SweepSummary {
  double alpha_star = 0.0;
  std::size_t instances = 0;
  std::size_t within_slack = 0;
  double slack = 1.5;
  double max_ratio = 0.0;
  double median_ratio = 0.0;
  double max_budget_error = 0.0;
  std::vector<ForgettingReport> reports;

  double fraction_within() const;
};

SweepSummary instance_sweep(const ActivationProfile& base, std::size_t instances, std::uint64_t seed,
                           const InstanceOptions& opts = {}, double slack = 1.5);

/// CSV: instance_id,alpha1,rule_alpha,rule_beta,radius,l_sft,l_forget,ratio_to_min
void write_forgetting_csv(std::ostream& os, const SweepSummary& summary);

struct LayerPrediction {
  std::string name;
  double predicted = 0.0;
  double actual = 0.0;
};

struct ActualVsPredicted {
  std::vector<LayerPrediction> layers;
  double predicted_total = 0.0;
  double actual_total = 0.0;
};

/// Per-layer proportionality constant between measured loss increase and the
/// quadratic model, fit on one held-out random perturbation per layer.
std::map<std::string, double> calibrate_forgetting(const model::Parameters& params0, const model::Batch& eval,
                                                   const std::map<std::string, Matrix>& covariances,
                                                   std::uint64_t seed, double relative_size = 0.02);

/// Measured vs predicted pretraining-loss increase. Each dW must satisfy
/// ||dW||_2 <= 0.1 ||W||_2.
ActualVsPredicted actual_vs_predicted(const model::Parameters& params0, const model::ParamMap& delta,
                                      const model::Batch& eval, const std::map<std::string, Matrix>& covariances,
                                      const std::map<std::string, double>& calibration);

}  // namespace lmolab::forgetting
