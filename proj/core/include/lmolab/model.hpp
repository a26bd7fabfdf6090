#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lmolab/linalg.hpp"
#include "lmolab/random.hpp"

namespace lmolab::model {

using Token = std::uint16_t;

struct ModelConfig {
  std::size_t vocab = 256;
  std::size_t dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t seq_len = 128;
  /// SwiGLU hidden width; 0 means 8/3 * dim rounded to a multiple of heads.
  std::size_t mlp_hidden = 0;
  double dropout = 0.0;

  std::size_t hidden() const;
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class Precision { kF32, kF64 };

using ParamMap = std::map<std::string, Matrix>;

struct LoraSpec {
  std::size_t rank = 0;
  double alpha = 0.0;
  std::vector<std::string> targets;

  bool attached() const { return rank > 0; }
  double scale() const { return alpha / static_cast<double>(rank); }
};

/// Named weights. Linear weights are stored out x in. The output head is tied
/// to the token embedding. LoRA factors live next to the wrapped weight as
/// "<name>.lora_a" (r x in) and "<name>.lora_b" (out x r).
struct Parameters {
  ModelConfig config;
  ParamMap tensors;
  LoraSpec lora;

  const Matrix& at(const std::string& name) const;
  Matrix& at(const std::string& name);
};

/// Names of the per-block linear weights in forward order.
std::vector<std::string> linear_layer_names(const ModelConfig& cfg);
/// True for per-block linear weights (the matrices the LMO rules act on).
bool is_linear_weight(const std::string& name);
bool is_lora_factor(const std::string& name);

/// Normal(0, 0.02) weights, residual projections scaled by 1/sqrt(2L), unit
/// norm gains.
Parameters init_params(const ModelConfig& cfg, std::uint64_t seed);

struct Example {
  std::vector<Token> input;
  std::vector<Token> target;
  bool corrupted = false;
};
using Batch = std::vector<Example>;

/// Per-linear-layer activation record. Inputs and outputs are kept as a
/// paired reservoir; the input second moment is accumulated exactly.
struct LayerTrace {
  std::string name;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<Vector> inputs;
  std::vector<Vector> outputs;
  Matrix xx_sum;
  std::uint64_t count = 0;
  double input_sparsity_sum = 0.0;
  std::uint64_t input_sparsity_count = 0;
  double output_sparsity_sum = 0.0;
  std::uint64_t output_sparsity_count = 0;
  /// Output splits: q/k/v for the attention input projection, gate/value for
  /// the first MLP layer, a single "out" split otherwise.
  std::vector<std::string> split_names;
  std::vector<double> split_sparsity_sum;
  std::vector<std::uint64_t> split_sparsity_count;

  double mean_input_sparsity() const;
  double mean_output_sparsity() const;
  double mean_split_sparsity(std::size_t split) const;
};

class ActivationTrace {
 public:
  explicit ActivationTrace(std::uint64_t seed = 0, std::size_t reservoir = 4096);

  std::vector<LayerTrace>& layers() { return layers_; }
  const std::vector<LayerTrace>& layers() const { return layers_; }
  const LayerTrace& layer(const std::string& name) const;
  std::size_t reservoir_capacity() const { return reservoir_; }

  /// Appends one (x, y) pair for the named layer, creating it on first use.
  void record(const std::string& name, std::span<const double> x, std::span<const double> y,
              std::size_t splits);

  /// Mean input sparsity averaged uniformly over layers.
  double mean_input_sparsity() const;

 private:
  LayerTrace& ensure(const std::string& name, std::size_t in_dim, std::size_t out_dim, std::size_t splits);

  std::vector<LayerTrace> layers_;
  std::size_t reservoir_;
  Rng rng_;
};

/// Logits (T x V) for one sequence. Optionally records activations.
Matrix forward(const Parameters& params, std::span<const Token> tokens, ActivationTrace* trace = nullptr,
               Precision precision = Precision::kF32);

struct LossAndGrads {
  double loss = 0.0;
  ParamMap grads;
};

/// Mean next-token cross-entropy over every target position of the batch and
/// its exact gradient. `dropout_rng` is only consulted when config.dropout > 0.
LossAndGrads loss_and_grads(const Parameters& params, const Batch& batch,
                            Precision precision = Precision::kF32, Rng* dropout_rng = nullptr);

/// Same mean cross-entropy without the backward pass.
double loss(const Parameters& params, const Batch& batch, Precision precision = Precision::kF32);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_param;
  /// max over tensors of ||a - n||_2 / max(||a||_2, ||n||_2, floor) on the
  /// checked coordinates.
  double max_tensor_rel_error = 0.0;
  std::string worst_tensor;
};

/// Central differences in 64-bit mode on a random `fraction` of every
/// parameter's coordinates (at least one per tensor). Per-coordinate relative
/// error is |a - n| / max(|a|, |n|, floor).
GradCheckReport gradient_check(const Parameters& params, const Batch& batch, double epsilon,
                               std::uint64_t seed, double fraction = 0.01, double floor = 1e-6);

/// b greedy tokens after `prompt`; ties go to the lowest token id.
std::vector<Token> greedy_generate(const Parameters& params, std::span<const Token> prompt, std::size_t b,
                                   Precision precision = Precision::kF32);

/// Greedy continuations of many equal-length prompts in one batched pass per
/// generated position.
std::vector<std::vector<Token>> greedy_generate_batch(const Parameters& params,
                                                      const std::vector<std::vector<Token>>& prompts,
                                                      std::size_t b, Precision precision = Precision::kF32);

/// Adds rank-r factors to the listed linear weights. B starts at zero so the
/// model function is unchanged.
void lora_attach(Parameters& params, const std::vector<std::string>& targets, std::size_t rank,
                 double alpha, std::uint64_t seed);

/// Per-layer delta W = (alpha / r) B A.
ParamMap lora_merge(const Parameters& params);

/// Base weights plus merged deltas, adapters removed.
Parameters lora_merged_model(const Parameters& params);

/// Checkpoint I/O. Round trip is bitwise exact in f64 mode.
void save_checkpoint(const Parameters& params, const std::filesystem::path& path, bool as_f32 = false);
Parameters load_checkpoint(const std::filesystem::path& path);

}  // namespace lmolab::model
