#include "lmolab/corpus.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <unordered_map>

#include "lmolab/error.hpp"
#include "lmolab/random.hpp"

namespace lmolab::corpus {

namespace {

struct Successors {
  std::vector<Token> tokens;
  std::vector<double> cumulative;
};

Successors make_successors(const CorpusSpec& spec, std::uint64_t context) {
  Rng rng(substream_seed(spec.transition_seed, "markov.context", context));
  Successors s;
  std::vector<Token> pool(spec.alphabet);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<Token>(i);
  // Partial Fisher-Yates: the first `branching` slots are a uniform sample.
  for (std::size_t i = 0; i < spec.branching; ++i) {
    const std::size_t j = i + rng.index(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  double total = 0.0;
  double w = 1.0;
  for (std::size_t i = 0; i < spec.branching; ++i) {
    s.tokens.push_back(pool[i]);
    total += w;
    s.cumulative.push_back(total);
    w *= spec.decay;
  }
  for (double& c : s.cumulative) c /= total;
  return s;
}

std::vector<Token> generate_markov(const CorpusSpec& spec) {
  Rng rng(spec.seed, "corpus.markov");
  std::vector<Token> out;
  out.reserve(spec.tokens);
  for (std::size_t i = 0; i < std::min(spec.order, spec.tokens); ++i)
    out.push_back(static_cast<Token>(rng.index(spec.alphabet)));
  std::unordered_map<std::uint64_t, Successors> table;
  while (out.size() < spec.tokens) {
    if (spec.branching == 0) {
      out.push_back(static_cast<Token>(rng.index(spec.alphabet)));
      continue;
    }
    std::uint64_t key = 0;
    for (std::size_t k = out.size() - spec.order; k < out.size(); ++k) key = key * spec.alphabet + out[k];
    auto it = table.find(key);
    if (it == table.end()) it = table.emplace(key, make_successors(spec, key)).first;
    const Successors& s = it->second;
    const double u = rng.uniform();
    std::size_t pick = 0;
    while (pick + 1 < s.cumulative.size() && u >= s.cumulative[pick]) ++pick;
    out.push_back(s.tokens[pick]);
  }
  return out;
}

void append(std::vector<Token>& out, const std::string& text) {
  for (unsigned char c : text) out.push_back(static_cast<Token>(c));
}

std::vector<Token> generate_template(const CorpusSpec& spec) {
  Rng rng(spec.seed, "corpus.template");
  std::vector<Token> out;
  out.reserve(spec.tokens + 32);
  if (spec.grammar == 0) {
    while (out.size() < spec.tokens) {
      const std::size_t a = rng.index(100);
      const std::size_t b = rng.index(100);
      const bool plus = rng.bernoulli(0.5);
      const std::size_t c = plus ? a + b : a * b;
      append(out, std::to_string(a) + (plus ? "+" : "*") + std::to_string(b) + "=" + std::to_string(c) + ";");
    }
  } else {
    // A fixed dictionary of facts restated in random order.
    constexpr std::size_t kKeys = 64;
    std::vector<std::string> values(kKeys);
    Rng dict(spec.transition_seed, "corpus.template.dict");
    for (auto& v : values) {
      const std::size_t len = 3 + dict.index(4);
      for (std::size_t i = 0; i < len; ++i) v.push_back(static_cast<char>('a' + dict.index(26)));
    }
    while (out.size() < spec.tokens) {
      const std::size_t k = rng.index(kKeys);
      append(out, "k" + std::to_string(k) + "=" + values[k] + ".");
    }
  }
  out.resize(spec.tokens);
  return out;
}

}  // namespace

void CorpusSpec::validate() const {
  require(tokens >= 2, ErrorKind::kInvalidParameter, "corpus needs at least 2 tokens");
  if (generator == GeneratorKind::kTemplate) {
    require(grammar == 0 || grammar == 1, ErrorKind::kInvalidParameter,
            "unknown grammar id " + std::to_string(grammar));
    return;
  }
  require(alphabet >= 2 && alphabet <= 65536, ErrorKind::kInvalidParameter, "alphabet must lie in [2, 65536]");
  require(order >= 1 && order <= 4, ErrorKind::kInvalidParameter, "markov order must lie in [1, 4]");
  require(branching <= alphabet, ErrorKind::kInvalidParameter, "branching exceeds alphabet");
  require(decay > 0.0 && decay <= 1.0, ErrorKind::kInvalidParameter, "decay must lie in (0, 1]");
}

std::vector<Token> generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  return spec.generator == GeneratorKind::kMarkov ? generate_markov(spec) : generate_template(spec);
}

double conditional_entropy(std::span<const Token> tokens, std::size_t order) {
  require(tokens.size() > order, ErrorKind::kInsufficientData, "conditional_entropy: sequence too short");
  std::map<std::vector<Token>, std::map<Token, std::uint64_t>> counts;
  for (std::size_t t = order; t < tokens.size(); ++t) {
    std::vector<Token> ctx(tokens.begin() + static_cast<std::ptrdiff_t>(t - order),
                           tokens.begin() + static_cast<std::ptrdiff_t>(t));
    ++counts[ctx][tokens[t]];
  }
  const double n = static_cast<double>(tokens.size() - order);
  double h = 0.0;
  for (const auto& [ctx, next] : counts) {
    double total = 0.0;
    for (const auto& [tok, c] : next) total += static_cast<double>(c);
    for (const auto& [tok, c] : next) {
      const double p = static_cast<double>(c) / total;
      h -= static_cast<double>(c) / n * std::log(p);
    }
  }
  return h;
}

std::vector<CorpusBlock> corrupt_blocks(std::span<const Token> tokens, std::size_t block_len, double alpha,
                                        std::uint64_t seed) {
  require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::kInvalidParameter, "corruption probability must lie in [0,1]");
  require(block_len >= 2, ErrorKind::kInvalidParameter, "block_len must be >= 2");
  require(block_len <= tokens.size(), ErrorKind::kInvalidParameter, "block_len exceeds token count");
  const std::size_t count = tokens.size() / block_len;
  std::vector<CorpusBlock> blocks(count);
  for (std::size_t i = 0; i < count; ++i) {
    CorpusBlock& b = blocks[i];
    b.index = i;
    b.tokens.assign(tokens.begin() + static_cast<std::ptrdiff_t>(i * block_len),
                    tokens.begin() + static_cast<std::ptrdiff_t>((i + 1) * block_len));
    b.permutation_seed = substream_seed(seed, "block", i);
    Rng rng(b.permutation_seed);
    b.corrupted = rng.bernoulli(alpha);
    if (b.corrupted) rng.shuffle(b.tokens);
  }
  return blocks;
}

std::vector<model::Batch> batch_epoch(const std::vector<CorpusBlock>& blocks, std::size_t seq_len,
                                      std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch) {
  require(seq_len >= 2, ErrorKind::kInvalidParameter, "seq_len must be >= 2");
  require(batch_size >= 1, ErrorKind::kInvalidParameter, "batch_size must be >= 1");
  std::vector<model::Batch> out;
  if (blocks.empty()) return out;
  Rng rng(substream_seed(seed, "batch.epoch", epoch));
  struct Window {
    std::size_t block;
    std::size_t start;
  };
  std::vector<Window> windows;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::size_t len = blocks[i].tokens.size();
    require(seq_len <= len, ErrorKind::kInvalidParameter, "seq_len exceeds block length");
    const std::size_t slots = len / seq_len;
    // One random shift per block keeps windows inside it while varying
    // which positions start a window across epochs.
    const std::size_t shift = rng.index(len - slots * seq_len + 1);
    for (std::size_t k = 0; k < slots; ++k) windows.push_back({i, shift + k * seq_len});
  }
  rng.shuffle(windows);
  for (std::size_t w = 0; w < windows.size(); w += batch_size) {
    model::Batch batch;
    for (std::size_t k = w; k < std::min(w + batch_size, windows.size()); ++k) {
      const CorpusBlock& b = blocks[windows[k].block];
      const auto first = b.tokens.begin() + static_cast<std::ptrdiff_t>(windows[k].start);
      model::Example ex;
      ex.input.assign(first, first + static_cast<std::ptrdiff_t>(seq_len - 1));
      ex.target.assign(first + 1, first + static_cast<std::ptrdiff_t>(seq_len));
      ex.corrupted = b.corrupted;
      batch.push_back(std::move(ex));
    }
    out.push_back(std::move(batch));
  }
  return out;
}

BatchStream::BatchStream(const std::vector<CorpusBlock>& blocks, std::size_t seq_len, std::size_t batch_size,
                         std::uint64_t seed)
    : blocks_(blocks), seq_len_(seq_len), batch_size_(batch_size), seed_(seed) {
  require(!blocks.empty(), ErrorKind::kInsufficientData, "batch stream over zero blocks");
  current_ = batch_epoch(blocks_, seq_len_, batch_size_, seed_, epoch_);
}

const model::Batch& BatchStream::next() {
  if (pos_ == current_.size()) {
    ++epoch_;
    current_ = batch_epoch(blocks_, seq_len_, batch_size_, seed_, epoch_);
    pos_ = 0;
  }
  return current_[pos_++];
}

void write_tokens(const std::filesystem::path& path, std::span<const Token> tokens) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(os), ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  for (Token t : tokens) {
    const unsigned char bytes[2] = {static_cast<unsigned char>(t & 0xFF), static_cast<unsigned char>(t >> 8)};
    os.write(reinterpret_cast<const char*>(bytes), 2);
  }
  require(static_cast<bool>(os), ErrorKind::kIo, "write failed for " + path.string());
}

std::vector<Token> read_tokens(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::kIo, "cannot open " + path.string());
  std::vector<Token> out;
  unsigned char bytes[2];
  while (is.read(reinterpret_cast<char*>(bytes), 2)) out.push_back(static_cast<Token>(bytes[0] | (bytes[1] << 8)));
  require(is.gcount() == 0, ErrorKind::kInvalidInput, "odd byte count in " + path.string());
  return out;
}

void write_corpus(const std::filesystem::path& path, const std::vector<CorpusBlock>& blocks) {
  std::vector<Token> flat;
  nlohmann::json table = nlohmann::json::array();
  for (const auto& b : blocks) {
    flat.insert(flat.end(), b.tokens.begin(), b.tokens.end());
    table.push_back({{"index", b.index}, {"corrupted", b.corrupted}, {"permutation_seed", b.permutation_seed}});
  }
  write_tokens(path, flat);
  const nlohmann::json doc = {{"block_len", blocks.empty() ? 0 : blocks.front().tokens.size()}, {"blocks", table}};
  const auto side = path.string() + ".blocks.json";
  std::ofstream os(side, std::ios::trunc);
  require(static_cast<bool>(os), ErrorKind::kIo, "cannot open " + side + " for writing");
  os << doc.dump(1) << '\n';
}

std::vector<CorpusBlock> read_corpus(const std::filesystem::path& path) {
  const std::vector<Token> flat = read_tokens(path);
  const auto side = path.string() + ".blocks.json";
  std::ifstream is(side);
  require(static_cast<bool>(is), ErrorKind::kIo, "cannot open " + side);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidInput, side + ": " + e.what());
  }
  const std::size_t block_len = doc.at("block_len").get<std::size_t>();
  const auto& table = doc.at("blocks");
  require(block_len * table.size() == flat.size(), ErrorKind::kInvalidInput,
          "block table does not match token count in " + path.string());
  std::vector<CorpusBlock> blocks;
  for (std::size_t i = 0; i < table.size(); ++i) {
    CorpusBlock b;
    b.index = table[i].at("index").get<std::size_t>();
    b.corrupted = table[i].at("corrupted").get<bool>();
    b.permutation_seed = table[i].at("permutation_seed").get<std::uint64_t>();
    b.tokens.assign(flat.begin() + static_cast<std::ptrdiff_t>(i * block_len),
                    flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * block_len));
    blocks.push_back(std::move(b));
  }
  return blocks;
}

std::vector<std::uint64_t> token_histogram(std::span<const Token> tokens, std::size_t vocab) {
  std::vector<std::uint64_t> h(vocab, 0);
  for (Token t : tokens) {
    require(t < vocab, ErrorKind::kInvalidInput, "token outside vocabulary");
    ++h[t];
  }
  return h;
}

std::vector<std::uint64_t> token_histogram(const std::vector<CorpusBlock>& blocks, std::size_t vocab) {
  std::vector<std::uint64_t> h(vocab, 0);
  for (const auto& b : blocks) {
    const auto part = token_histogram(b.tokens, vocab);
    for (std::size_t i = 0; i < vocab; ++i) h[i] += part[i];
  }
  return h;
}

}  // namespace lmolab::corpus
