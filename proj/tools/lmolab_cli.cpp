// lmolab: command line driver for the optimizer/forgetting lab.
//
// Every subcommand writes its artifacts below --out. A JSON --config file
// supplies option values by flag name ({"lr": 0.01, "algos": ["muon"]});
// values given on the command line win. An object keyed by a subcommand
// name ({"sft": {...}}) applies only to that subcommand.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lmolab/corpus.hpp"
#include "lmolab/error.hpp"
#include "lmolab/forgetting.hpp"
#include "lmolab/harness.hpp"
#include "lmolab/model.hpp"
#include "lmolab/norms.hpp"
#include "lmolab/optim.hpp"
#include "lmolab/pareto.hpp"
#include "lmolab/random.hpp"
#include "lmolab/records.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace lmolab;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  std::string out = ".";
  bool f64 = false;

  model::Precision precision() const { return f64 ? model::Precision::kF64 : model::Precision::kF32; }
  fs::path dir() const {
    fs::create_directories(out);
    return out;
  }
};

struct CorpusOpts {
  std::string path;
  std::string generator = "markov";
  std::size_t order = 1;
  std::size_t alphabet = 64;
  std::size_t branching = 4;
  double decay = 0.5;
  std::uint64_t transition_seed = 1;
  int grammar = 0;
  std::size_t tokens = 200000;
  std::size_t block_len = 256;
  double alpha = 0.0;
  double val_fraction = 0.05;

  corpus::CorpusSpec spec(std::uint64_t seed) const {
    corpus::CorpusSpec s;
    if (generator == "markov") {
      s.generator = corpus::GeneratorKind::kMarkov;
    } else if (generator == "template") {
      s.generator = corpus::GeneratorKind::kTemplate;
    } else {
      fail(ErrorKind::kInvalidParameter, "unknown generator '" + generator + "'");
    }
    s.order = order;
    s.alphabet = alphabet;
    s.branching = branching;
    s.decay = decay;
    s.transition_seed = transition_seed;
    s.grammar = grammar;
    s.tokens = tokens;
    s.seed = seed;
    s.validate();
    return s;
  }

  // Blocks from a file written by `corrupt`, or generated on the fly.
  std::vector<corpus::CorpusBlock> blocks(std::uint64_t seed, std::string_view name) const {
    if (!path.empty()) return corpus::read_corpus(path);
    const auto tokens_v = corpus::generate_corpus(spec(substream_seed(seed, std::string(name) + ".corpus")));
    return corpus::corrupt_blocks(tokens_v, block_len, alpha, substream_seed(seed, std::string(name) + ".corruption"));
  }

  harness::DataSplit split(std::uint64_t seed, std::string_view name) const {
    require(val_fraction > 0.0 && val_fraction < 1.0, ErrorKind::kInvalidParameter, "val-fraction must lie in (0,1)");
    auto all = blocks(seed, name);
    const auto n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::round(val_fraction * static_cast<double>(all.size()))));
    require(n_val < all.size(), ErrorKind::kInsufficientData, "corpus too small for a train/validation split");
    harness::DataSplit s;
    s.train.assign(all.begin(), all.end() - static_cast<std::ptrdiff_t>(n_val));
    s.val.assign(all.end() - static_cast<std::ptrdiff_t>(n_val), all.end());
    return s;
  }
};

void add_corpus_options(CLI::App* app, CorpusOpts& c, const std::string& prefix) {
  const std::string p = prefix.empty() ? "--" : "--" + prefix + "-";
  app->add_option(p + "data", c.path, "Corpus file written by `corrupt` (overrides generation)");
  app->add_option(p + "generator", c.generator, "markov | template")->capture_default_str();
  app->add_option(p + "order", c.order, "Markov context length")->capture_default_str();
  app->add_option(p + "alphabet", c.alphabet, "Markov alphabet size")->capture_default_str();
  app->add_option(p + "branching", c.branching, "Successors per context (0 = uniform)")->capture_default_str();
  app->add_option(p + "decay", c.decay, "Successor weight decay")->capture_default_str();
  app->add_option(p + "transition-seed", c.transition_seed, "Seed of the transition table")->capture_default_str();
  app->add_option(p + "grammar", c.grammar, "Template grammar id")->capture_default_str();
  app->add_option(p + "tokens", c.tokens, "Corpus length")->capture_default_str();
  app->add_option(p + "block-len", c.block_len, "Block length")->capture_default_str();
  app->add_option(p + "corrupt-alpha", c.alpha, "Probability that a block is permuted")->capture_default_str();
  app->add_option(p + "val-fraction", c.val_fraction, "Held-out fraction of blocks")->capture_default_str();
}

void add_model_options(CLI::App* app, model::ModelConfig& m) {
  app->add_option("--vocab", m.vocab)->capture_default_str();
  app->add_option("--dim", m.dim)->capture_default_str();
  app->add_option("--layers", m.layers)->capture_default_str();
  app->add_option("--heads", m.heads)->capture_default_str();
  app->add_option("--seq-len", m.seq_len)->capture_default_str();
  app->add_option("--mlp-hidden", m.mlp_hidden, "0 = round(8d/3)")->capture_default_str();
  app->add_option("--dropout", m.dropout)->capture_default_str();
}

struct TrainOpts {
  harness::TrainConfig cfg;
  double weight_decay = -1.0;

  harness::TrainConfig resolved(const Globals& g) const {
    harness::TrainConfig c = cfg;
    if (weight_decay >= 0.0) c.weight_decay = weight_decay;
    c.precision = g.precision();
    c.seed = g.seed;
    return c;
  }
};

void add_train_options(CLI::App* app, TrainOpts& t) {
  auto& c = t.cfg;
  app->add_option("--lr", c.lr)->capture_default_str();
  app->add_option("--momentum", c.momentum)->capture_default_str();
  app->add_option("--weight-decay", t.weight_decay, "Default: 0.1 for pretrain, 0 for sft");
  app->add_option("--warmup-frac", c.warmup_frac)->capture_default_str();
  app->add_option("--grad-clip", c.grad_clip)->capture_default_str();
  app->add_option("--steps", c.steps)->capture_default_str();
  app->add_option("--batch-size", c.batch_size)->capture_default_str();
  app->add_option("--window", c.window, "Tokens per training window (0 = seq_len + 1)")->capture_default_str();
  app->add_option("--eval-interval", c.eval_interval)->capture_default_str();
  app->add_option("--eval-batches", c.eval_batches)->capture_default_str();
  app->add_flag("--exact-msign", c.exact_msign, "Use the SVD polar factor instead of Newton-Schulz");
  app->add_option("--lora-alpha", c.lora_alpha, "LoRA scale (0 = 2r)")->capture_default_str();
}

void print_records(const std::vector<records::RunRecord>& rows) {
  for (const auto& r : rows) {
    std::printf("%-10s lr=%-8s step=%-6llu forget=%.5f learn=%.5f%s\n", r.algo.c_str(),
                records::format_double(r.lr).c_str(), static_cast<unsigned long long>(r.step), r.forget_metric,
                r.learn_metric, r.diverged ? " DIVERGED" : "");
  }
}

bool has_option(const CLI::App* app, const std::string& key) {
  return app->get_option_no_throw("--" + key) != nullptr;
}

// Config keys become "--key=value" tokens placed after the subcommand name.
// Flat keys apply wherever the subcommand (or the root) has that option; a
// key no command knows is an error.
std::vector<std::string> config_tokens(const json& j, const CLI::App& app, const CLI::App* sub) {
  std::vector<std::string> out;
  auto emit = [&](const std::string& key, const json& v) {
    std::string value;
    if (v.is_boolean()) {
      value = v.get<bool>() ? "true" : "false";
    } else if (v.is_array()) {
      for (const auto& e : v) {
        if (!value.empty()) value += ",";
        value += e.is_string() ? e.get<std::string>() : e.dump();
      }
    } else if (v.is_string()) {
      value = v.get<std::string>();
    } else {
      value = v.dump();
    }
    out.push_back("--" + key + "=" + value);
  };
  for (const auto& [key, v] : j.items()) {
    if (v.is_object()) {
      require(app.get_subcommand_no_throw(key) != nullptr, ErrorKind::kInvalidInput,
              "config section '" + key + "' names no subcommand");
      if (key != sub->get_name()) continue;
      for (const auto& [k2, v2] : v.items()) {
        require(has_option(sub, k2) || has_option(&app, k2), ErrorKind::kInvalidInput,
                "config key '" + k2 + "' is not an option of " + key);
        emit(k2, v2);
      }
      continue;
    }
    if (key == "config") continue;
    bool known = has_option(&app, key);
    for (const auto* s : app.get_subcommands({})) known = known || has_option(s, key);
    require(known, ErrorKind::kInvalidInput, "unknown config key '" + key + "'");
    if (has_option(sub, key) || has_option(&app, key)) emit(key, v);
  }
  return out;
}

std::vector<std::string> expand_config(int argc, char** argv, const CLI::App& app) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config;
  std::size_t sub_pos = args.size();
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
    if (sub_pos == args.size() && app.get_subcommand_no_throw(args[i]) != nullptr) sub_pos = i;
  }
  if (config.empty() || sub_pos == args.size()) return args;
  std::ifstream is(config);
  require(static_cast<bool>(is), ErrorKind::kInvalidInput, "cannot open config " + config);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::kInvalidInput, "config " + config + ": " + e.what());
  }
  require(j.is_object(), ErrorKind::kInvalidInput, "config must be a JSON object");
  // Config values go first so explicit flags, parsed later, take precedence.
  auto tokens = config_tokens(j, app, app.get_subcommand_no_throw(args[sub_pos]));
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1, tokens.begin(), tokens.end());
  return args;
}

bool is_validation(ErrorKind k) {
  switch (k) {
    case ErrorKind::kInvalidParameter:
    case ErrorKind::kInvalidInput:
    case ErrorKind::kUnsupportedNorm:
    case ErrorKind::kOracleTooLarge:
    case ErrorKind::kPreconditionViolation:
    case ErrorKind::kIncompatibleCheckpoint:
      return true;
    default:
      return false;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lmolab: norm-constrained optimizers, forgetting and memorization experiments"};
  app.option_defaults()->always_capture_default();
  Globals g;
  app.add_option("--seed", g.seed, "Root seed; every random stream derives from it");
  app.add_option("--config", g.config, "JSON file of option values");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--f64", g.f64, "Run the model in 64-bit floating point");
  app.require_subcommand(1);

  auto sub = [&](const char* name, const char* help) {
    auto* s = app.add_subcommand(name, help);
    s->fallthrough();
    return s;
  };

  // verify-norms
  std::size_t vn_trials = 1000, vn_rows = 4, vn_cols = 6, vn_oracle = 500, vn_max_dim = 5;
  double vn_slack = 1e-9;
  auto* verify = sub("verify-norms", "Norm comparison fuzzing and closed-form vs oracle agreement");
  verify->add_option("--trials", vn_trials);
  verify->add_option("--rows", vn_rows);
  verify->add_option("--cols", vn_cols);
  verify->add_option("--oracle-matrices", vn_oracle);
  verify->add_option("--max-dim", vn_max_dim);
  verify->add_option("--slack", vn_slack);

  // pretrain
  TrainOpts pre_opts;
  CorpusOpts pre_corpus;
  auto* pretrain = sub("pretrain", "Train from scratch; writes checkpoint.bin and records.csv");
  pretrain->add_option("--algo", pre_opts.cfg.algo, "adamw | muon | signsgd | rowmax | colmax | sgd | colnorm");
  add_train_options(pretrain, pre_opts);
  add_model_options(pretrain, pre_opts.cfg.model);
  add_corpus_options(pretrain, pre_corpus, "");

  // sft
  TrainOpts sft_opts;
  sft_opts.cfg.steps = 300;
  CorpusOpts sft_corpus, sft_pre_corpus;
  sft_corpus.generator = "template";
  sft_corpus.grammar = 1;
  std::string sft_init;
  auto* sft = sub("sft", "Finetune a checkpoint; records pretrain (forget) and sft (learn) validation loss");
  sft->add_option("--init", sft_init, "Pretrained checkpoint")->required();
  sft->add_option("--algo", sft_opts.cfg.algo, "Optimizer name or lora(r)");
  add_train_options(sft, sft_opts);
  add_corpus_options(sft, sft_corpus, "");
  add_corpus_options(sft, sft_pre_corpus, "pretrain");

  // grid
  TrainOpts grid_opts;
  CorpusOpts grid_corpus, grid_pre_corpus;
  grid_corpus.generator = "template";
  grid_corpus.grammar = 1;
  std::string grid_stage = "sft", grid_init;
  std::vector<std::string> grid_algos{"muon", "adamw"};
  std::vector<double> grid_lrs{1e-3, 3e-3, 1e-2};
  std::vector<std::uint64_t> grid_seeds;
  auto* grid = sub("grid", "Cross product of algorithms x learning rates x seeds; writes records.csv");
  grid->add_option("--stage", grid_stage, "pretrain | sft");
  grid->add_option("--init", grid_init, "Pretrained checkpoint (sft stage)");
  grid->add_option("--algos", grid_algos)->delimiter(',');
  grid->add_option("--lrs", grid_lrs)->delimiter(',');
  grid->add_option("--seeds", grid_seeds, "Default: --seed")->delimiter(',');
  add_train_options(grid, grid_opts);
  add_model_options(grid, grid_opts.cfg.model);
  add_corpus_options(grid, grid_corpus, "");
  add_corpus_options(grid, grid_pre_corpus, "pretrain");

  // pareto
  std::string pa_records;
  pareto::ParetoConfig pa_cfg;
  auto* par = sub("pareto", "Robust per-algorithm Pareto frontier of a records CSV");
  par->add_option("--records", pa_records)->required();
  par->add_option("--c", pa_cfg.c, "Improvement margin");
  par->add_flag("--higher-is-better", pa_cfg.higher_is_better, "Accuracy mode");

  // corrupt
  CorpusOpts co_corpus;
  auto* corrupt = sub("corrupt", "Generate a corpus, permute a fraction of its blocks; writes corpus.bin");
  add_corpus_options(corrupt, co_corpus, "");

  // eval-mem
  std::string em_ckpt;
  CorpusOpts em_corpus;
  harness::MemEvalSpec em_spec;
  std::vector<std::size_t> em_b{1};
  std::string em_split = "corrupted";
  auto* evalmem = sub("eval-mem", "Exact-match accuracy of greedy completions");
  evalmem->add_option("--checkpoint", em_ckpt)->required();
  evalmem->add_option("--a", em_spec.a, "Prompt length");
  evalmem->add_option("--b", em_b, "Generation lengths")->delimiter(',');
  evalmem->add_option("--subset", em_spec.subset, "Number of prompts");
  evalmem->add_option("--split", em_split, "clean | corrupted | all");
  add_corpus_options(evalmem, em_corpus, "");

  // probe-acts
  std::string pr_ckpt;
  CorpusOpts pr_corpus;
  std::size_t pr_windows = 64;
  auto* probe = sub("probe-acts", "Activation sparsity and weight spectra per linear layer");
  probe->add_option("--checkpoint", pr_ckpt)->required();
  probe->add_option("--windows", pr_windows);
  add_corpus_options(probe, pr_corpus, "");

  // forgetting-sim
  forgetting::ActivationProfile fs_profile;
  forgetting::InstanceOptions fs_inst;
  std::size_t fs_instances = 100;
  double fs_slack = 1.5;
  std::string fs_alpha = "1";
  auto* fsim = sub("forgetting-sim", "Forgetting of each LMO rule at a fixed SFT loss decrease");
  fsim->add_option("--alpha1", fs_alpha, "Activation regularity: 1 | 2 | inf");
  fsim->add_option("--dim", fs_profile.dim);
  fsim->add_option("--sparsity", fs_profile.sparsity);
  fsim->add_option("--zipf", fs_profile.zipf);
  fsim->add_option("--rows", fs_inst.rows);
  fsim->add_option("--batch", fs_inst.batch);
  fsim->add_option("--noise", fs_inst.noise);
  fsim->add_option("--h0", fs_inst.h0);
  fsim->add_option("--budget", fs_inst.budget);
  fsim->add_option("--instances", fs_instances);
  fsim->add_option("--slack", fs_slack);

  try {
    auto args = expand_config(argc, argv, app);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    if (*verify) {
      const auto ineq = norms::check_norm_inequalities(substream_seed(g.seed, "verify.matrices"), vn_trials, vn_rows,
                                                       vn_cols, vn_slack);
      const auto vec = norms::check_vector_norm_inequalities(substream_seed(g.seed, "verify.vectors"), vn_trials,
                                                             vn_slack);
      const auto orc =
          norms::check_oracle_agreement(substream_seed(g.seed, "verify.oracle"), vn_oracle, vn_max_dim, 1e-9);
      std::printf("vector inequalities: %zu checks, %zu violations, worst slack %.3e\n", vec.checks, vec.violations,
                  vec.worst_slack);
      std::printf("matrix inequalities: %zu checks, %zu violations, worst slack %.3e %s\n", ineq.checks,
                  ineq.violations, ineq.worst_slack, ineq.worst_case.c_str());
      std::printf("oracle agreement:    %zu comparisons, %zu mismatches, max |diff| %.3e\n", orc.comparisons,
                  orc.mismatches, orc.max_abs_diff);
      const bool ok = ineq.violations == 0 && vec.violations == 0 && orc.mismatches == 0;
      std::printf("%s\n", ok ? "OK" : "FAILED");
      return ok ? 0 : kExitRuntime;
    }

    if (*pretrain) {
      const auto cfg = pre_opts.resolved(g);
      const auto data = pre_corpus.split(g.seed, "pretrain");
      const auto res = harness::run_training(harness::Stage::kPretrain, cfg, nullptr, data.train, data.val);
      const auto dir = g.dir();
      model::save_checkpoint(res.params, dir / "checkpoint.bin", !g.f64);
      records::export_records(res.records, dir / "records.csv");
      print_records(res.records);
      return 0;
    }

    if (*sft) {
      const auto cfg = sft_opts.resolved(g);
      auto init = model::load_checkpoint(sft_init);
      auto c = cfg;
      c.model = init.config;
      const auto data = sft_corpus.split(g.seed, "sft");
      const auto pre = sft_pre_corpus.split(g.seed, "pretrain");
      const auto res = harness::run_training(harness::Stage::kSft, c, &init, data.train, pre.val, &data.val);
      const auto dir = g.dir();
      model::save_checkpoint(res.params, dir / "sft_checkpoint.bin", !g.f64);
      records::export_records(res.records, dir / "records.csv");
      print_records(res.records);
      return 0;
    }

    if (*grid) {
      harness::GridConfig gc;
      gc.base = grid_opts.resolved(g);
      gc.algos = grid_algos;
      gc.lrs = grid_lrs;
      gc.seeds = grid_seeds.empty() ? std::vector<std::uint64_t>{g.seed} : grid_seeds;
      std::vector<records::RunRecord> table;
      if (grid_stage == "pretrain") {
        const auto data = grid_corpus.split(g.seed, "pretrain");
        table = harness::sweep_grid(harness::Stage::kPretrain, gc, nullptr, data.train, data.val);
      } else if (grid_stage == "sft") {
        require(!grid_init.empty(), ErrorKind::kInvalidParameter, "sft grid needs --init");
        const auto init = model::load_checkpoint(grid_init);
        gc.base.model = init.config;
        const auto data = grid_corpus.split(g.seed, "sft");
        const auto pre = grid_pre_corpus.split(g.seed, "pretrain");
        table = harness::sweep_grid(harness::Stage::kSft, gc, &init, data.train, pre.val, &data.val);
      } else {
        fail(ErrorKind::kInvalidParameter, "unknown stage '" + grid_stage + "'");
      }
      records::export_records(table, g.dir() / "records.csv");
      print_records(table);
      return 0;
    }

    if (*par) {
      const auto table = records::import_records(pa_records);
      const auto fronts = pareto::pareto_by_algorithm(table, pa_cfg);
      std::vector<records::RunRecord> selected;
      for (const auto& [algo, res] : fronts) {
        std::printf("%s: %zu points on stage-1 frontier, %zu selected%s\n", algo.c_str(), res.stage1.size(),
                    res.selected.size(), res.fallback ? " (fallback)" : "");
        for (std::size_t i : res.selected) selected.push_back(table[i]);
      }
      records::export_records(selected, g.dir() / "pareto.csv");
      return 0;
    }

    if (*corrupt) {
      const auto blocks = co_corpus.blocks(g.seed, "corrupt");
      std::size_t corrupted = 0;
      for (const auto& b : blocks) corrupted += b.corrupted ? 1 : 0;
      const auto path = g.dir() / "corpus.bin";
      corpus::write_corpus(path, blocks);
      std::printf("%zu blocks of %zu tokens, %zu corrupted (%.4f); wrote %s\n", blocks.size(),
                  blocks.empty() ? std::size_t{0} : blocks.front().tokens.size(), corrupted,
                  blocks.empty() ? 0.0 : static_cast<double>(corrupted) / static_cast<double>(blocks.size()),
                  path.string().c_str());
      return 0;
    }

    if (*evalmem) {
      const auto params = model::load_checkpoint(em_ckpt);
      const auto blocks = em_corpus.blocks(g.seed, "pretrain");
      em_spec.split = harness::parse_split(em_split);
      em_spec.seed = substream_seed(g.seed, "eval-mem");
      const auto acc = harness::memorization_curve(params, blocks, em_spec, em_b, g.precision());
      std::ofstream os(g.dir() / "memorization.csv");
      os << "a,b,split,prompts,accuracy\n";
      for (std::size_t k = 0; k < em_b.size(); ++k) {
        std::printf("(a=%zu, b=%zu) %s: %.4f over %zu prompts\n", em_spec.a, em_b[k], em_split.c_str(), acc[k],
                    em_spec.subset);
        os << em_spec.a << ',' << em_b[k] << ',' << em_split << ',' << em_spec.subset << ','
           << records::format_double(acc[k]) << '\n';
      }
      return 0;
    }

    if (*probe) {
      const auto params = model::load_checkpoint(pr_ckpt);
      const auto blocks = pr_corpus.blocks(g.seed, "pretrain");
      const auto rep = harness::probe_activations(params, blocks, pr_windows, substream_seed(g.seed, "probe"),
                                                  g.precision());
      std::ofstream os(g.dir() / "probe.csv");
      os << "layer,input_sparsity,output_sparsity,stable_rank,singular_sparsity\n";
      for (const auto& l : rep.layers) {
        std::printf("%-22s in=%.4f out=%.4f srank=%.3f ssp=%.4f\n", l.name.c_str(), l.input_sparsity,
                    l.output_sparsity, l.spectrum.stable_rank, l.spectrum.singular_sparsity);
        os << l.name << ',' << records::format_double(l.input_sparsity) << ','
           << records::format_double(l.output_sparsity) << ',' << records::format_double(l.spectrum.stable_rank)
           << ',' << records::format_double(l.spectrum.singular_sparsity) << '\n';
      }
      std::printf("mean: in=%.4f out=%.4f srank=%.3f ssp=%.4f\n", rep.mean_input_sparsity, rep.mean_output_sparsity,
                  rep.mean_stable_rank, rep.mean_singular_sparsity);
      return 0;
    }

    if (*fsim) {
      if (fs_alpha == "1") {
        fs_profile.alpha_star = 1.0;
      } else if (fs_alpha == "2") {
        fs_profile.alpha_star = 2.0;
      } else if (fs_alpha == "inf") {
        fs_profile.alpha_star = kInf;
      } else {
        fail(ErrorKind::kInvalidParameter, "alpha1 must be 1, 2 or inf");
      }
      fs_profile.seed = substream_seed(g.seed, "forgetting-sim.profile");
      const auto summary = forgetting::instance_sweep(fs_profile, fs_instances, g.seed, fs_inst, fs_slack);
      std::ofstream os(g.dir() / "forgetting.csv");
      forgetting::write_forgetting_csv(os, summary);
      std::printf("alpha1=%s: matched rule within %.2fx of grid minimum in %zu/%zu instances (median %.3f, max %.3f)\n",
                  fs_alpha.c_str(), fs_slack, summary.within_slack, summary.instances, summary.median_ratio,
                  summary.max_ratio);
      std::printf("max |L_sft - C| = %.3e\n", summary.max_budget_error);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_validation(e.kind()) ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
