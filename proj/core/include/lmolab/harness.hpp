#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lmolab/corpus.hpp"
#include "lmolab/model.hpp"
#include "lmolab/norms.hpp"
#include "lmolab/optim.hpp"
#include "lmolab/records.hpp"

namespace lmolab::harness {

enum class Stage { kPretrain, kSft };

/// A CLI algorithm name resolved: one of the optimizer names or lora(r).
struct AlgoSpec {
  std::string name;
  optim::Algorithm algo;
  std::size_t lora_rank = 0;

  bool is_lora() const { return lora_rank > 0; }
};

AlgoSpec parse_algo(std::string_view name);
/// (rule_alpha, rule_beta) CSV labels: "1","inf" style, "fro" for sgd,
/// "na" for lora.
std::pair<std::string, std::string> rule_labels(const AlgoSpec& spec);

struct TrainConfig {
  model::ModelConfig model;
  std::string algo = "muon";
  double lr = 3e-3;
  double momentum = 0.95;
  /// Unset means the stage default: 0.1 for pretraining, 0 for SFT.
  std::optional<double> weight_decay;
  double warmup_frac = 0.1;
  double grad_clip = 1.0;
  std::size_t steps = 500;
  std::size_t batch_size = 8;
  /// Window length in tokens (input and target are window - 1 long); 0
  /// means seq_len + 1 capped by the block length.
  std::size_t window = 0;
  std::size_t eval_interval = 50;
  std::size_t eval_batches = 4;
  bool exact_msign = false;
  model::Precision precision = model::Precision::kF32;
  std::uint64_t seed = 0;
  /// LoRA scale; 0 means 2r.
  double lora_alpha = 0.0;

  void validate() const;
};

/// Train/validation block sets drawn from one corpus.
struct DataSplit {
  std::vector<corpus::CorpusBlock> train;
  std::vector<corpus::CorpusBlock> val;
};

/// Generates the corpus, cuts blocks (corrupting with probability alpha) and
/// holds out the last val_fraction of blocks.
DataSplit make_split(const corpus::CorpusSpec& spec, std::size_t block_len, double alpha, double val_fraction,
                     std::uint64_t seed);

struct TrainResult {
  model::Parameters params;
  std::vector<records::RunRecord> records;
  std::vector<double> train_losses;
  double initial_loss = 0.0;
  bool diverged = false;
};

/// Trains from `init` (fresh parameters when null; SFT requires it).
/// Records (forget, learn) validation losses at step 0, every eval_interval
/// and at the end. In pretraining both metrics are the pretraining loss.
TrainResult run_training(Stage stage, const TrainConfig& cfg, const model::Parameters* init,
                         const std::vector<corpus::CorpusBlock>& train,
                         const std::vector<corpus::CorpusBlock>& pretrain_val,
                         const std::vector<corpus::CorpusBlock>* sft_val = nullptr);

/// Mean validation loss over the first cfg.eval_batches deterministic batches.
double evaluate(const model::Parameters& params, const std::vector<corpus::CorpusBlock>& blocks,
                const TrainConfig& cfg);

struct GridConfig {
  TrainConfig base;
  std::vector<std::string> algos;
  std::vector<double> lrs;
  std::vector<std::uint64_t> seeds;
};

/// Full cross product of algos x lrs x seeds. Divergent or numerically failed
/// runs stay in the table as diverged rows.
std::vector<records::RunRecord> sweep_grid(Stage stage, const GridConfig& grid, const model::Parameters* init,
                                           const std::vector<corpus::CorpusBlock>& train,
                                           const std::vector<corpus::CorpusBlock>& pretrain_val,
                                           const std::vector<corpus::CorpusBlock>* sft_val = nullptr);

enum class Split { kClean, kCorrupted, kAll };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct MemEvalSpec {
  std::size_t a = 64;
  std::size_t b = 1;
  std::size_t subset = 1000;
  Split split = Split::kCorrupted;
  std::uint64_t seed = 0;
};

struct MemEvalResult {
  double accuracy = 0.0;
  std::size_t prompts = 0;
  std::size_t correct = 0;
  /// (block index, start offset) of every prompt.
  std::vector<std::pair<std::size_t, std::size_t>> positions;
};

/// Exact-match accuracy of greedy b-token completions of a-token prompts
/// sampled inside blocks of the requested split.
MemEvalResult memorization_accuracy(const model::Parameters& params, const std::vector<corpus::CorpusBlock>& blocks,
                                    const MemEvalSpec& spec, model::Precision precision = model::Precision::kF32);

/// Accuracy for each b in b_values on one prompt set sampled for max(b).
std::vector<double> memorization_curve(const model::Parameters& params,
                                       const std::vector<corpus::CorpusBlock>& blocks, MemEvalSpec spec,
                                       const std::vector<std::size_t>& b_values,
                                       model::Precision precision = model::Precision::kF32);

struct LayerProbe {
  std::string name;
  double input_sparsity = 0.0;
  double output_sparsity = 0.0;
  std::vector<std::pair<std::string, double>> split_sparsity;
  norms::SpectrumReport spectrum;
};

struct ProbeReport {
  std::vector<LayerProbe> layers;
  double mean_input_sparsity = 0.0;
  double mean_output_sparsity = 0.0;
  double mean_stable_rank = 0.0;
  double mean_singular_sparsity = 0.0;
};

/// Activation sparsity (per linear layer, uniform average) and weight spectra.
ProbeReport probe_activations(const model::Parameters& params, const std::vector<corpus::CorpusBlock>& blocks,
                              std::size_t max_windows, std::uint64_t seed,
                              model::Precision precision = model::Precision::kF32);

}  // namespace lmolab::harness
