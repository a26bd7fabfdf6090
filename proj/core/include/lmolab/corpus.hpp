#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lmolab/model.hpp"

namespace lmolab::corpus {

using model::Token;

enum class GeneratorKind { kMarkov, kTemplate };

/// Synthetic corpus description.
///
/// Markov: the next token depends on the previous `order` tokens through a
/// hash of (transition_seed, context). Each context has `branching` candidate
/// successors with weights proportional to decay^i; branching 0 means the
/// uniform distribution over the alphabet.
///
/// Template: ASCII sentences from a small grammar (0 = arithmetic facts,
/// 1 = key-value records).
struct CorpusSpec {
  GeneratorKind generator = GeneratorKind::kMarkov;
  std::size_t order = 1;
  std::size_t alphabet = 64;
  std::size_t branching = 4;
  double decay = 0.5;
  std::uint64_t transition_seed = 1;
  int grammar = 0;
  std::size_t tokens = 200000;
  std::uint64_t seed = 0;

  void validate() const;
};

std::vector<Token> generate_corpus(const CorpusSpec& spec);

/// Empirical conditional entropy H(X_t | X_{t-order..t-1}) in nats.
double conditional_entropy(std::span<const Token> tokens, std::size_t order);

struct CorpusBlock {
  std::size_t index = 0;
  std::vector<Token> tokens;
  bool corrupted = false;
  std::uint64_t permutation_seed = 0;
};

/// Splits into blocks of block_len (trailing partial block dropped) and
/// uniformly permutes each block with probability alpha. Block i uses its
/// own seed derived from (seed, i) for both the coin and the permutation.
std::vector<CorpusBlock> corrupt_blocks(std::span<const Token> tokens, std::size_t block_len, double alpha,
                                        std::uint64_t seed);

/// Deterministic batches covering every block once. Windows of seq_len
/// tokens never cross a block boundary; each yields seq_len - 1 (input,
/// target) positions and inherits the block's corruption label.
std::vector<model::Batch> batch_epoch(const std::vector<CorpusBlock>& blocks, std::size_t seq_len,
                                      std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch = 0);

/// Endless stream chaining epochs of batch_epoch.
class BatchStream {
 public:
  BatchStream(const std::vector<CorpusBlock>& blocks, std::size_t seq_len, std::size_t batch_size,
              std::uint64_t seed);

  const model::Batch& next();
  std::uint64_t epoch() const { return epoch_; }

 private:
  const std::vector<CorpusBlock>& blocks_;
  std::size_t seq_len_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::size_t pos_ = 0;
  std::vector<model::Batch> current_;
};

/// Raw tokens as unsigned 16-bit little-endian.
void write_tokens(const std::filesystem::path& path, std::span<const Token> tokens);
std::vector<Token> read_tokens(const std::filesystem::path& path);

/// Corpus file plus "<path>.blocks.json" sidecar with the block table.
void write_corpus(const std::filesystem::path& path, const std::vector<CorpusBlock>& blocks);
std::vector<CorpusBlock> read_corpus(const std::filesystem::path& path);

std::vector<std::uint64_t> token_histogram(std::span<const Token> tokens, std::size_t vocab);
std::vector<std::uint64_t> token_histogram(const std::vector<CorpusBlock>& blocks, std::size_t vocab);

}  // namespace lmolab::corpus
