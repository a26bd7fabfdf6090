#include "lmolab/forgetting.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>

#include "lmolab/error.hpp"
#include "lmolab/optim.hpp"
#include "lmolab/records.hpp"

namespace lmolab::forgetting {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const EMat> view(const Matrix& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

bool is_alpha_star(double a) { return a == 1.0 || a == 2.0 || std::isinf(a); }

double inv(double p) { return std::isinf(p) ? 0.0 : 1.0 / p; }

void check_psd(const Matrix& sigma) {
  require(sigma.rows() == sigma.cols(), ErrorKind::kInvalidInput, "covariance must be square");
  require(sigma.all_finite(), ErrorKind::kInvalidInput, "covariance has non-finite entries");
  const auto s = view(sigma);
  const double asym = (s - s.transpose()).cwiseAbs().maxCoeff();
  require(asym <= 1e-10 * std::max(1.0, s.cwiseAbs().maxCoeff()), ErrorKind::kInvalidInput,
          "covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s, Eigen::EigenvaluesOnly);
  require(eig.eigenvalues().minCoeff() >= -1e-8, ErrorKind::kInvalidInput, "covariance is not PSD");
}

double trace_form(const Matrix& dw, const Matrix& sigma) {
  const auto d = view(dw);
  return 0.5 * (d * view(sigma)).cwiseProduct(d).sum();
}

model::Parameters with_delta(const model::Parameters& p, const std::string& name, const Matrix& delta,
                             double sign = 1.0) {
  model::Parameters out = p;
  Matrix& w = out.at(name);
  auto wv = w.values();
  const auto dv = delta.values();
  for (std::size_t k = 0; k < wv.size(); ++k) wv[k] += sign * dv[k];
  return out;
}

}  // namespace

bool ProfileCheck::ok() const {
  return std::all_of(entries.begin(), entries.end(), [](const ProfileCheckEntry& e) { return e.ok; });
}

ProfileSampler::ProfileSampler(const ActivationProfile& profile) : profile_(profile) {
  require(is_alpha_star(profile.alpha_star), ErrorKind::kInvalidParameter, "alpha_star must be 1, 2 or inf");
  require(profile.dim >= 1, ErrorKind::kInvalidParameter, "profile dim must be >= 1");
  require(profile.amplitude > 0.0 && profile.variance > 0.0, ErrorKind::kInvalidParameter,
          "profile amplitude and variance must be positive");
  if (profile.alpha_star != 1.0) return;
  require(profile.sparsity >= 1, ErrorKind::kInvalidParameter, "spike sparsity must be >= 1");
  require(profile.zipf >= 0.0, ErrorKind::kInvalidParameter, "zipf exponent must be >= 0");
  const std::size_t n = profile.dim;
  std::vector<double> weights(n);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    weights[r] = std::pow(static_cast<double>(r + 1), -profile.zipf);
    total += weights[r];
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(profile.seed, "profile.permutation");
  rng.shuffle(perm);
  probs_.assign(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) probs_[perm[r]] = weights[r] / total;
  cumulative_.resize(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += probs_[i];
    cumulative_[i] = acc;
  }
  cumulative_.back() = 1.0;
}

Vector ProfileSampler::sample(Rng& rng) const {
  const std::size_t n = profile_.dim;
  Vector x(n);
  if (profile_.alpha_star == 1.0) {
    for (std::size_t r = 0; r < profile_.sparsity; ++r) {
      const double u = rng.uniform();
      const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
      const auto j = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), n - 1);
      x[j] += profile_.amplitude;
    }
  } else if (profile_.alpha_star == 2.0) {
    const double sd = std::sqrt(profile_.variance);
    for (double& v : x.values()) v = sd * rng.normal();
  } else {
    for (double& v : x.values()) v = rng.bernoulli(0.5) ? profile_.amplitude : -profile_.amplitude;
  }
  return x;
}

Matrix ProfileSampler::covariance() const {
  const std::size_t n = profile_.dim;
  if (profile_.alpha_star == 2.0) return Matrix::identity(n) * profile_.variance;
  if (std::isinf(profile_.alpha_star)) return Matrix::identity(n) * (profile_.amplitude * profile_.amplitude);
  // Positions are iid: E[x x^T] = a^2 (k diag(p) + k(k-1) p p^T).
  const double k = static_cast<double>(profile_.sparsity);
  const double a2 = profile_.amplitude * profile_.amplitude;
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) s(i, j) = a2 * k * (k - 1.0) * probs_[i] * probs_[j];
    s(i, i) += a2 * k * probs_[i];
  }
  return s;
}

ProfileCheck ProfileSampler::verify(std::size_t samples, std::uint64_t seed, double c1, double c2) const {
  require(samples >= 1, ErrorKind::kInvalidParameter, "profile verification needs samples");
  constexpr double kGrid[3] = {1.0, 2.0, kInf};
  double moment[3] = {0.0, 0.0, 0.0};
  Rng rng(seed, "profile.verify");
  for (std::size_t s = 0; s < samples; ++s) {
    const Vector x = sample(rng);
    for (int g = 0; g < 3; ++g) {
      const double v = vector_norm(x, kGrid[g]);
      moment[g] += v * v;
    }
  }
  const double a1 = profile_.alpha_star;
  const int star = a1 == 1.0 ? 0 : (a1 == 2.0 ? 1 : 2);
  const double n = static_cast<double>(profile_.dim);
  ProfileCheck check;
  check.samples = samples;
  for (int g = 0; g < 3; ++g) {
    if (g == star) continue;
    const double alpha = kGrid[g];
    const bool below = alpha < a1;
    if (!below && a1 != 1.0) continue;
    ProfileCheckEntry e;
    e.alpha = alpha;
    e.ratio = moment[star] / moment[g];
    const double scale = below ? std::pow(n, 2.0 * (inv(a1) - inv(alpha))) : 1.0;
    e.lower = c1 * scale;
    e.upper = c2 * scale;
    e.ok = e.ratio >= e.lower && e.ratio <= e.upper;
    check.entries.push_back(e);
  }
  return check;
}

ProfileSampler synthesize_profile(const ActivationProfile& profile, std::size_t verify_samples, double c1,
                                  double c2) {
  ProfileSampler sampler(profile);
  const ProfileCheck check = sampler.verify(verify_samples, profile.seed, c1, c2);
  for (const auto& e : check.entries) {
    require(e.ok, ErrorKind::kProfileConstructionFailed,
            "E||x||^2 ratio against alpha=" + norms::index_label(e.alpha) + " is " + std::to_string(e.ratio) +
                ", outside [" + std::to_string(e.lower) + ", " + std::to_string(e.upper) + "]");
  }
  return sampler;
}

Matrix estimate_input_covariance(const model::LayerTrace& trace) {
  require(trace.count >= trace.in_dim, ErrorKind::kInsufficientData,
          "layer " + trace.name + " has " + std::to_string(trace.count) + " samples for dim " +
              std::to_string(trace.in_dim));
  const std::size_t n = trace.in_dim;
  Matrix s(n, n);
  const double inv_count = 1.0 / static_cast<double>(trace.count);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = 0.5 * (trace.xx_sum(i, j) + trace.xx_sum(j, i)) * inv_count;
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  return s;
}

Matrix estimate_input_covariance(const std::vector<Vector>& samples) {
  require(!samples.empty(), ErrorKind::kInsufficientData, "no samples");
  const std::size_t n = samples.front().dim();
  require(samples.size() >= n, ErrorKind::kInsufficientData, "fewer samples than dimensions");
  EMat acc = EMat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const auto& x : samples) {
    require(x.dim() == n, ErrorKind::kInvalidInput, "sample dimension mismatch");
    const Eigen::Map<const Eigen::VectorXd> v(x.values().data(), static_cast<Eigen::Index>(n));
    acc.noalias() += v * v.transpose();
  }
  acc /= static_cast<double>(samples.size());
  Matrix s(n, n);
  Eigen::Map<EMat>(s.data(), acc.rows(), acc.cols()) = 0.5 * (acc + acc.transpose());
  return s;
}

std::map<std::string, Matrix> layer_covariances(const model::ActivationTrace& trace) {
  std::map<std::string, Matrix> out;
  for (const auto& l : trace.layers()) out.emplace(l.name, estimate_input_covariance(l));
  return out;
}

double quadratic_forgetting(const Matrix& dw, const Matrix& sigma_x) {
  require(sigma_x.rows() == dw.cols(), ErrorKind::kInvalidInput, "covariance does not match update columns");
  check_psd(sigma_x);
  return trace_form(dw, sigma_x);
}

TradeoffInstance generate_instance(const ProfileSampler& sampler, std::uint64_t seed, const InstanceOptions& opts) {
  require(opts.rows >= 1 && opts.batch >= 1, ErrorKind::kInvalidParameter, "instance needs rows and batch >= 1");
  require(opts.budget <= opts.h0, ErrorKind::kInvalidParameter, "budget must not exceed H0");
  const std::size_t m = opts.rows;
  const std::size_t n = sampler.profile().dim;
  Rng rng(seed, "forgetting.instance");
  const Vector dbar = rng.normal_vector(m);
  Matrix g(m, n);
  Vector delta(m);
  for (std::size_t b = 0; b < opts.batch; ++b) {
    const Vector x = sampler.sample(rng);
    for (std::size_t i = 0; i < m; ++i) delta[i] = dbar[i] + opts.noise * rng.normal();
    for (std::size_t i = 0; i < m; ++i) {
      auto row = g.row(i);
      for (std::size_t j = 0; j < n; ++j) row[j] += delta[i] * x[j];
    }
  }
  g *= 1.0 / static_cast<double>(opts.batch);
  TradeoffInstance inst;
  inst.profile = sampler.profile();
  inst.sft_gradient = std::move(g);
  inst.sigma_x = sampler.covariance();
  inst.h0 = opts.h0;
  inst.budget = opts.budget;
  return inst;
}

std::vector<norms::NormPair> default_grid() {
  const auto s = norms::supported_pairs();
  return {s.begin(), s.end()};
}

std::vector<norms::NormPair> excluded_grid() {
  std::vector<norms::NormPair> out;
  for (double a : {1.0, 2.0, kInf})
    for (double b : {1.0, 2.0, kInf})
      if (!norms::is_supported({a, b})) out.push_back({a, b});
  return out;
}

std::vector<norms::NormPair> matched_pairs(double alpha_star, const std::vector<norms::NormPair>& grid) {
  std::vector<norms::NormPair> out;
  for (const auto& p : grid)
    if (p.alpha == alpha_star && (p.beta == 2.0 || std::isinf(p.beta))) out.push_back(p);
  return out;
}

ForgettingReport tradeoff_sweep(const TradeoffInstance& inst, const std::vector<norms::NormPair>& grid,
                                 const Matrix& sigma_x) {
  require(!grid.empty(), ErrorKind::kInvalidParameter, "empty rule grid");
  require(inst.budget <= inst.h0, ErrorKind::kInvalidParameter, "budget must not exceed H0");
  const Matrix& sigma = sigma_x.empty() ? inst.sigma_x : sigma_x;
  require(sigma.rows() == inst.sft_gradient.cols(), ErrorKind::kInvalidInput, "covariance does not match G");
  check_psd(sigma);

  ForgettingReport rep;
  rep.excluded = excluded_grid();
  rep.matched = matched_pairs(inst.profile.alpha_star, grid);
  require(!rep.matched.empty(), ErrorKind::kInvalidParameter, "grid holds no matched rule for this profile");
  rep.grid_min = kInf;
  rep.matched_value = kInf;
  for (const auto& pair : grid) {
    const optim::UpdateRule rule = optim::rule_for_pair(pair);
    const Matrix u = optim::lmo_direction(inst.sft_gradient, rule, 1.0);
    const double gain = inner(u, inst.sft_gradient);
    require(gain > 0.0, ErrorKind::kDegenerateInstance, "<U, G> <= 0 for rule " + norms::to_string(pair));
    RuleOutcome row;
    row.pair = pair;
    row.radius = (inst.h0 - inst.budget) / gain;
    row.delta = u * (-row.radius);
    row.l_sft = inst.h0 + inner(row.delta, inst.sft_gradient);
    row.l_forget = trace_form(row.delta, sigma);
    rep.grid_min = std::min(rep.grid_min, row.l_forget);
    if (std::find(rep.matched.begin(), rep.matched.end(), pair) != rep.matched.end())
      rep.matched_value = std::min(rep.matched_value, row.l_forget);
    rep.rows.push_back(std::move(row));
  }
  for (auto& row : rep.rows) row.ratio_to_min = rep.grid_min > 0.0 ? row.l_forget / rep.grid_min : 1.0;
  rep.matched_ratio = rep.grid_min > 0.0 ? rep.matched_value / rep.grid_min : 1.0;
  return rep;
}

double SweepSummary::fraction_within() const {
  return instances == 0 ? 0.0 : static_cast<double>(within_slack) / static_cast<double>(instances);
}

SweepSummary instance_sweep(const ActivationProfile& base, std::size_t instances, std::uint64_t seed,
                           const InstanceOptions& opts, double slack) {
  require(instances >= 1, ErrorKind::kInvalidParameter, "sweep needs at least one instance");
  // The law is verified once; instances differ only by seed (spike
  // placement and gradient draw), which leaves the norm ratios unchanged.
  synthesize_profile(base);
  const auto grid = default_grid();
  SweepSummary sum;
  sum.alpha_star = base.alpha_star;
  sum.instances = instances;
  sum.slack = slack;
  std::vector<double> ratios;
  for (std::size_t i = 0; i < instances; ++i) {
    ActivationProfile p = base;
    p.seed = substream_seed(seed, "sweep.profile", i);
    const ProfileSampler sampler(p);
    const TradeoffInstance inst = generate_instance(sampler, substream_seed(seed, "sweep.instance", i), opts);
    ForgettingReport rep = tradeoff_sweep(inst, grid);
    for (const auto& row : rep.rows)
      sum.max_budget_error = std::max(sum.max_budget_error, std::abs(row.l_sft - inst.budget));
    ratios.push_back(rep.matched_ratio);
    if (rep.matched_value <= slack * rep.grid_min) ++sum.within_slack;
    sum.reports.push_back(std::move(rep));
  }
  sum.max_ratio = *std::max_element(ratios.begin(), ratios.end());
  std::sort(ratios.begin(), ratios.end());
  const std::size_t mid = ratios.size() / 2;
  sum.median_ratio = ratios.size() % 2 ? ratios[mid] : 0.5 * (ratios[mid - 1] + ratios[mid]);
  return sum;
}

void write_forgetting_csv(std::ostream& os, const SweepSummary& summary) {
  os << "instance_id,alpha1,rule_alpha,rule_beta,radius,l_sft,l_forget,ratio_to_min\n";
  for (std::size_t i = 0; i < summary.reports.size(); ++i) {
    for (const auto& row : summary.reports[i].rows) {
      os << i << ',' << norms::index_label(summary.alpha_star) << ',' << norms::index_label(row.pair.alpha) << ','
         << norms::index_label(row.pair.beta) << ',' << records::format_double(row.radius) << ','
         << records::format_double(row.l_sft) << ',' << records::format_double(row.l_forget) << ','
         << records::format_double(row.ratio_to_min) << '\n';
    }
  }
}

std::map<std::string, double> calibrate_forgetting(const model::Parameters& params0, const model::Batch& eval,
                                                   const std::map<std::string, Matrix>& covariances,
                                                   std::uint64_t seed, double relative_size) {
  require(relative_size > 0.0 && relative_size <= 0.1, ErrorKind::kInvalidParameter,
          "calibration perturbation must be within (0, 0.1] of the layer norm");
  const double base = model::loss(params0, eval, model::Precision::kF64);
  std::map<std::string, double> out;
  for (const auto& [name, sigma] : covariances) {
    const Matrix& w = params0.at(name);
    Rng rng(seed, "calibrate." + name);
    Matrix d = rng.normal_matrix(w.rows(), w.cols());
    d *= relative_size * norms::induced_norm(w, norms::kSpectral) / norms::induced_norm(d, norms::kSpectral);
    // Symmetric differences cancel the first-order term and isolate curvature.
    const double up = model::loss(with_delta(params0, name, d), eval, model::Precision::kF64);
    const double down = model::loss(with_delta(params0, name, d, -1.0), eval, model::Precision::kF64);
    const double curvature = 0.5 * (up + down) - base;
    const double q = quadratic_forgetting(d, sigma);
    out[name] = (q > 0.0 && curvature > 0.0) ? curvature / q : 1.0;
  }
  return out;
}

ActualVsPredicted actual_vs_predicted(const model::Parameters& params0, const model::ParamMap& delta,
                                      const model::Batch& eval, const std::map<std::string, Matrix>& covariances,
                                      const std::map<std::string, double>& calibration) {
  for (const auto& [name, d] : delta) {
    const Matrix& w = params0.at(name);
    require(d.same_shape(w), ErrorKind::kInvalidInput, "delta shape mismatch for " + name);
    const double dn = norms::induced_norm(d, norms::kSpectral);
    const double wn = norms::induced_norm(w, norms::kSpectral);
    require(dn <= 0.1 * wn, ErrorKind::kPreconditionViolation,
            "perturbation of " + name + " exceeds 0.1x the layer spectral norm");
  }
  const double base = model::loss(params0, eval, model::Precision::kF64);
  ActualVsPredicted out;
  model::Parameters all = params0;
  for (const auto& [name, d] : delta) {
    const auto cov = covariances.find(name);
    require(cov != covariances.end(), ErrorKind::kInsufficientData, "no covariance for " + name);
    const auto cal = calibration.find(name);
    LayerPrediction lp;
    lp.name = name;
    lp.predicted = (cal == calibration.end() ? 1.0 : cal->second) * quadratic_forgetting(d, cov->second);
    lp.actual = d.is_zero() ? 0.0 : model::loss(with_delta(params0, name, d), eval, model::Precision::kF64) - base;
    out.predicted_total += lp.predicted;
    out.layers.push_back(lp);
    all.at(name) += d;
  }
  out.actual_total = model::loss(all, eval, model::Precision::kF64) - base;
  return out;
}

}  // namespace lmolab::forgetting
