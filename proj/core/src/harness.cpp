#include "lmolab/harness.hpp"

#include <algorithm>
#include <cmath>

#include "lmolab/error.hpp"
#include "lmolab/random.hpp"

namespace lmolab::harness {

namespace {

std::size_t window_length(const TrainConfig& cfg, const std::vector<corpus::CorpusBlock>& blocks) {
  std::size_t w = cfg.window > 0 ? cfg.window : cfg.model.seq_len + 1;
  for (const auto& b : blocks) w = std::min(w, b.tokens.size());
  return w;
}

std::vector<model::Batch> eval_batches(const std::vector<corpus::CorpusBlock>& blocks, const TrainConfig& cfg) {
  auto batches = corpus::batch_epoch(blocks, window_length(cfg, blocks), cfg.batch_size,
                                     substream_seed(cfg.seed, "eval.batches"));
  if (batches.size() > cfg.eval_batches) batches.resize(cfg.eval_batches);
  return batches;
}

double mean_loss(const model::Parameters& p, const std::vector<model::Batch>& batches, model::Precision prec) {
  require(!batches.empty(), ErrorKind::kInsufficientData, "no evaluation batches");
  double sum = 0.0;
  std::size_t tokens = 0;
  for (const auto& b : batches) {
    std::size_t n = 0;
    for (const auto& ex : b) n += ex.target.size();
    sum += model::loss(p, b, prec) * static_cast<double>(n);
    tokens += n;
  }
  return sum / static_cast<double>(tokens);
}

double finite_or_inf(double v) { return std::isfinite(v) ? v : kInf; }

std::vector<std::pair<std::size_t, std::size_t>> sample_positions(const std::vector<corpus::CorpusBlock>& blocks,
                                                                  const MemEvalSpec& spec) {
  require(spec.a >= 1 && spec.b >= 1, ErrorKind::kInvalidParameter, "memorization needs a >= 1 and b >= 1");
  require(spec.subset >= 1, ErrorKind::kInvalidParameter, "memorization subset must be >= 1");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const bool want = spec.split == Split::kAll || (spec.split == Split::kCorrupted) == blocks[i].corrupted;
    if (!want) continue;
    require(spec.a + spec.b <= blocks[i].tokens.size(), ErrorKind::kInvalidParameter,
            "a + b exceeds the block length");
    eligible.push_back(i);
  }
  require(!eligible.empty(), ErrorKind::kInsufficientData,
          "no blocks in split '" + std::string(to_string(spec.split)) + "'");
  Rng rng(spec.seed, "memorization.prompts");
  std::vector<std::pair<std::size_t, std::size_t>> pos;
  for (std::size_t k = 0; k < spec.subset; ++k) {
    const std::size_t blk = eligible[rng.index(eligible.size())];
    const std::size_t start = rng.index(blocks[blk].tokens.size() - spec.a - spec.b + 1);
    pos.emplace_back(blk, start);
  }
  return pos;
}

// Greedy continuations of max_b tokens for each sampled prompt, in chunks.
std::vector<std::vector<model::Token>> continuations(const model::Parameters& params,
                                                     const std::vector<corpus::CorpusBlock>& blocks,
                                                     const std::vector<std::pair<std::size_t, std::size_t>>& pos,
                                                     std::size_t a, std::size_t b, model::Precision prec) {
  constexpr std::size_t kChunk = 64;
  std::vector<std::vector<model::Token>> out;
  for (std::size_t s = 0; s < pos.size(); s += kChunk) {
    std::vector<std::vector<model::Token>> prompts;
    for (std::size_t k = s; k < std::min(s + kChunk, pos.size()); ++k) {
      const auto& toks = blocks[pos[k].first].tokens;
      const auto first = toks.begin() + static_cast<std::ptrdiff_t>(pos[k].second);
      prompts.emplace_back(first, first + static_cast<std::ptrdiff_t>(a));
    }
    auto gen = model::greedy_generate_batch(params, prompts, b, prec);
    for (auto& g : gen) out.push_back(std::move(g));
  }
  return out;
}

std::size_t matched_prefix(const std::vector<model::Token>& gen, const std::vector<model::Token>& src,
                           std::size_t start) {
  std::size_t k = 0;
  while (k < gen.size() && gen[k] == src[start + k]) ++k;
  return k;
}

}  // namespace

AlgoSpec parse_algo(std::string_view name) {
  AlgoSpec spec;
  spec.name = std::string(name);
  if (name.starts_with("lora(") && name.ends_with(")")) {
    const std::string digits(name.substr(5, name.size() - 6));
    require(!digits.empty() && std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }),
            ErrorKind::kInvalidParameter, "bad lora rank in '" + spec.name + "'");
    spec.lora_rank = std::stoul(digits);
    require(spec.lora_rank >= 1, ErrorKind::kInvalidParameter, "lora rank must be >= 1");
    spec.algo = {optim::Method::kAdamW, optim::UpdateRule::kSign};
    return spec;
  }
  spec.algo = optim::parse_algorithm(name);
  return spec;
}

std::pair<std::string, std::string> rule_labels(const AlgoSpec& spec) {
  if (spec.is_lora()) return {"na", "na"};
  // AdamW sits in the sign family.
  if (spec.algo.method == optim::Method::kAdamW) return {"1", "inf"};
  const auto pair = optim::label_pair(spec.algo.rule);
  if (!pair) return {"fro", "fro"};
  return {norms::index_label(pair->alpha), norms::index_label(pair->beta)};
}

void TrainConfig::validate() const {
  model.validate();
  parse_algo(algo);
  require(lr >= 0.0 && std::isfinite(lr), ErrorKind::kInvalidParameter, "lr must be finite and >= 0");
  require(momentum >= 0.0 && momentum < 1.0, ErrorKind::kInvalidParameter, "momentum must lie in [0,1)");
  require(!weight_decay || *weight_decay >= 0.0, ErrorKind::kInvalidParameter, "weight_decay must be >= 0");
  require(warmup_frac >= 0.0 && warmup_frac <= 1.0, ErrorKind::kInvalidParameter, "warmup_frac must lie in [0,1]");
  require(grad_clip > 0.0, ErrorKind::kInvalidParameter, "grad_clip must be positive");
  require(steps >= 1 && batch_size >= 1 && eval_interval >= 1 && eval_batches >= 1, ErrorKind::kInvalidParameter,
          "steps, batch_size, eval_interval and eval_batches must be >= 1");
  require(window == 0 || (window >= 2 && window <= model.seq_len + 1), ErrorKind::kInvalidParameter,
          "window must lie in [2, seq_len + 1]");
  require(lora_alpha >= 0.0, ErrorKind::kInvalidParameter, "lora_alpha must be >= 0");
}

DataSplit make_split(const corpus::CorpusSpec& spec, std::size_t block_len, double alpha, double val_fraction,
                     std::uint64_t seed) {
  require(val_fraction > 0.0 && val_fraction < 1.0, ErrorKind::kInvalidParameter, "val_fraction must lie in (0,1)");
  require(spec.tokens >= 2 * block_len, ErrorKind::kInvalidParameter, "corpus must hold at least two blocks");
  const auto tokens = corpus::generate_corpus(spec);
  auto blocks = corpus::corrupt_blocks(tokens, block_len, alpha, substream_seed(seed, "corruption"));
  const auto n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::round(val_fraction * static_cast<double>(blocks.size()))));
  require(n_val < blocks.size(), ErrorKind::kInvalidParameter, "validation split leaves no training blocks");
  DataSplit split;
  split.train.assign(blocks.begin(), blocks.end() - static_cast<std::ptrdiff_t>(n_val));
  split.val.assign(blocks.end() - static_cast<std::ptrdiff_t>(n_val), blocks.end());
  return split;
}

double evaluate(const model::Parameters& params, const std::vector<corpus::CorpusBlock>& blocks,
                const TrainConfig& cfg) {
  return mean_loss(params, eval_batches(blocks, cfg), cfg.precision);
}

TrainResult run_training(Stage stage, const TrainConfig& cfg, const model::Parameters* init,
                         const std::vector<corpus::CorpusBlock>& train,
                         const std::vector<corpus::CorpusBlock>& pretrain_val,
                         const std::vector<corpus::CorpusBlock>* sft_val) {
  cfg.validate();
  require(!train.empty(), ErrorKind::kInsufficientData, "no training blocks");
  const AlgoSpec spec = parse_algo(cfg.algo);
  TrainResult res;
  if (stage == Stage::kSft) {
    require(init != nullptr, ErrorKind::kInvalidState, "sft stage requires a pretrained checkpoint");
    require(sft_val != nullptr, ErrorKind::kInvalidParameter, "sft stage requires an sft validation set");
  }
  if (init != nullptr) {
    require(init->config == cfg.model, ErrorKind::kIncompatibleCheckpoint,
            "checkpoint model config differs from the requested model config");
    res.params = *init;
  } else {
    res.params = model::init_params(cfg.model, substream_seed(cfg.seed, "model.init"));
  }
  require(!spec.is_lora() || stage == Stage::kSft, ErrorKind::kInvalidParameter, "lora is an sft-only method");
  if (spec.is_lora() && !res.params.lora.attached()) {
    const double alpha = cfg.lora_alpha > 0.0 ? cfg.lora_alpha : 2.0 * static_cast<double>(spec.lora_rank);
    model::lora_attach(res.params, model::linear_layer_names(cfg.model), spec.lora_rank, alpha,
                       substream_seed(cfg.seed, "lora.init"));
  }

  const double decay = cfg.weight_decay.value_or(stage == Stage::kPretrain ? 0.1 : 0.0);
  optim::OptimizerConfig matrix_cfg;
  matrix_cfg.method = spec.algo.method;
  matrix_cfg.rule = spec.algo.rule;
  matrix_cfg.momentum = cfg.momentum;
  matrix_cfg.weight_decay = decay;
  matrix_cfg.exact_msign = cfg.exact_msign;
  optim::OptimizerConfig adam_cfg;
  adam_cfg.method = optim::Method::kAdamW;

  std::vector<std::string> trainable;
  for (const auto& [name, t] : res.params.tensors) {
    if (spec.is_lora() ? model::is_lora_factor(name) : !model::is_lora_factor(name)) trainable.push_back(name);
  }
  std::map<std::string, optim::OptimizerState> states;

  const auto pre_eval = eval_batches(pretrain_val, cfg);
  const std::vector<model::Batch> sft_eval = sft_val ? eval_batches(*sft_val, cfg) : std::vector<model::Batch>{};
  const auto labels = rule_labels(spec);
  auto record = [&](std::size_t step, bool diverged) {
    records::RunRecord r;
    r.algo = spec.name;
    r.rule_alpha = labels.first;
    r.rule_beta = labels.second;
    r.lr = cfg.lr;
    r.step = step;
    r.seed = cfg.seed;
    r.forget_metric = finite_or_inf(mean_loss(res.params, pre_eval, cfg.precision));
    r.learn_metric = sft_val ? finite_or_inf(mean_loss(res.params, sft_eval, cfg.precision)) : r.forget_metric;
    r.diverged = diverged;
    res.records.push_back(r);
  };
  record(0, false);

  corpus::BatchStream stream(train, window_length(cfg, train), cfg.batch_size,
                             substream_seed(cfg.seed, "train.batches"));
  Rng dropout_rng(cfg.seed, "dropout");
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    model::LossAndGrads lg = model::loss_and_grads(res.params, stream.next(), cfg.precision,
                                                   cfg.model.dropout > 0.0 ? &dropout_rng : nullptr);
    if (step == 0) res.initial_loss = lg.loss;
    res.train_losses.push_back(lg.loss);
    if (!std::isfinite(lg.loss) || lg.loss > res.initial_loss + 2.0) {
      res.diverged = true;
      record(step + 1, true);
      return res;
    }
    double sq = 0.0;
    for (const auto& name : trainable)
      for (double v : lg.grads.at(name).values()) sq += v * v;
    const double norm = std::sqrt(sq);
    const double clip = norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
    const double lr = cfg.lr * optim::cosine_schedule(step, cfg.steps, cfg.warmup_frac);
    matrix_cfg.lr = lr;
    adam_cfg.lr = lr;
    try {
      for (const auto& name : trainable) {
        Matrix& g = lg.grads.at(name);
        if (clip < 1.0) g *= clip;
        const bool matrix = model::is_linear_weight(name);
        optim::apply(res.params.at(name), g, states[name], matrix ? matrix_cfg : adam_cfg);
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNumericFailure) throw;
      res.diverged = true;
      record(step + 1, true);
      return res;
    }
    if ((step + 1) % cfg.eval_interval == 0 || step + 1 == cfg.steps) record(step + 1, false);
  }
  return res;
}

std::vector<records::RunRecord> sweep_grid(Stage stage, const GridConfig& grid, const model::Parameters* init,
                                           const std::vector<corpus::CorpusBlock>& train,
                                           const std::vector<corpus::CorpusBlock>& pretrain_val,
                                           const std::vector<corpus::CorpusBlock>* sft_val) {
  require(!grid.algos.empty() && !grid.lrs.empty() && !grid.seeds.empty(), ErrorKind::kInvalidParameter,
          "grid needs at least one algo, lr and seed");
  std::vector<records::RunRecord> table;
  for (const auto& algo : grid.algos) {
    for (double lr : grid.lrs) {
      for (std::uint64_t seed : grid.seeds) {
        TrainConfig cfg = grid.base;
        cfg.algo = algo;
        cfg.lr = lr;
        cfg.seed = seed;
        TrainResult r = run_training(stage, cfg, init, train, pretrain_val, sft_val);
        table.insert(table.end(), r.records.begin(), r.records.end());
      }
    }
  }
  return table;
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kClean: return "clean";
    case Split::kCorrupted: return "corrupted";
    case Split::kAll: return "all";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "clean") return Split::kClean;
  if (s == "corrupted") return Split::kCorrupted;
  if (s == "all") return Split::kAll;
  fail(ErrorKind::kInvalidParameter, "unknown split '" + std::string(s) + "'");
}

MemEvalResult memorization_accuracy(const model::Parameters& params, const std::vector<corpus::CorpusBlock>& blocks,
                                    const MemEvalSpec& spec, model::Precision precision) {
  MemEvalResult res;
  res.positions = sample_positions(blocks, spec);
  const auto gen = continuations(params, blocks, res.positions, spec.a, spec.b, precision);
  for (std::size_t k = 0; k < gen.size(); ++k) {
    const auto& [blk, start] = res.positions[k];
    if (matched_prefix(gen[k], blocks[blk].tokens, start + spec.a) == spec.b) ++res.correct;
  }
  res.prompts = gen.size();
  res.accuracy = static_cast<double>(res.correct) / static_cast<double>(res.prompts);
  return res;
}

std::vector<double> memorization_curve(const model::Parameters& params,
                                       const std::vector<corpus::CorpusBlock>& blocks, MemEvalSpec spec,
                                       const std::vector<std::size_t>& b_values, model::Precision precision) {
  require(!b_values.empty(), ErrorKind::kInvalidParameter, "memorization_curve needs b values");
  spec.b = *std::max_element(b_values.begin(), b_values.end());
  const auto pos = sample_positions(blocks, spec);
  const auto gen = continuations(params, blocks, pos, spec.a, spec.b, precision);
  std::vector<std::size_t> prefix(gen.size());
  for (std::size_t k = 0; k < gen.size(); ++k)
    prefix[k] = matched_prefix(gen[k], blocks[pos[k].first].tokens, pos[k].second + spec.a);
  std::vector<double> out;
  for (std::size_t b : b_values) {
    require(b >= 1, ErrorKind::kInvalidParameter, "b must be >= 1");
    const auto hits = std::count_if(prefix.begin(), prefix.end(), [b](std::size_t p) { return p >= b; });
    out.push_back(static_cast<double>(hits) / static_cast<double>(prefix.size()));
  }
  return out;
}

ProbeReport probe_activations(const model::Parameters& params, const std::vector<corpus::CorpusBlock>& blocks,
                              std::size_t max_windows, std::uint64_t seed, model::Precision precision) {
  require(!blocks.empty(), ErrorKind::kInsufficientData, "probe needs at least one block");
  const model::Parameters p = params.lora.attached() ? model::lora_merged_model(params) : params;
  const std::size_t window = std::min(p.config.seq_len + 1, blocks.front().tokens.size());
  model::ActivationTrace trace(substream_seed(seed, "probe.trace"));
  const auto batches = corpus::batch_epoch(blocks, window, 1, substream_seed(seed, "probe.windows"));
  std::size_t used = 0;
  for (const auto& b : batches) {
    if (used == max_windows) break;
    model::forward(p, b.front().input, &trace, precision);
    ++used;
  }
  ProbeReport rep;
  double sr = 0.0, ss = 0.0;
  for (const auto& l : trace.layers()) {
    LayerProbe lp;
    lp.name = l.name;
    lp.input_sparsity = l.mean_input_sparsity();
    lp.output_sparsity = l.mean_output_sparsity();
    for (std::size_t s = 0; s < l.split_names.size(); ++s)
      lp.split_sparsity.emplace_back(l.split_names[s], l.mean_split_sparsity(s));
    lp.spectrum = norms::spectrum_report(l.name, p.at(l.name));
    rep.mean_input_sparsity += lp.input_sparsity;
    rep.mean_output_sparsity += lp.output_sparsity;
    sr += lp.spectrum.stable_rank;
    ss += lp.spectrum.singular_sparsity;
    rep.layers.push_back(std::move(lp));
  }
  require(!rep.layers.empty(), ErrorKind::kInsufficientData, "probe captured no layers");
  const double n = static_cast<double>(rep.layers.size());
  rep.mean_input_sparsity /= n;
  rep.mean_output_sparsity /= n;
  rep.mean_stable_rank = sr / n;
  rep.mean_singular_sparsity = ss / n;
  return rep;
}

}  // namespace lmolab::harness
