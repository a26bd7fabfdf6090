#include "lmolab/model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "lmolab/error.hpp"
#include "lmolab/norms.hpp"

namespace lmolab::model {

namespace {

constexpr double kNormEps = 1e-6;

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Col = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
Mat<S> to_eigen(const Matrix& m) {
  return Eigen::Map<const Mat<double>>(m.data(), static_cast<Eigen::Index>(m.rows()),
                                       static_cast<Eigen::Index>(m.cols()))
      .template cast<S>();
}

template <typename S>
Matrix from_eigen(const Mat<S>& m) {
  Matrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  Eigen::Map<Mat<double>>(out.data(), m.rows(), m.cols()) = m.template cast<double>();
  return out;
}

template <typename S>
struct Linear {
  std::string name;
  Mat<S> w;
  bool lora = false;
  Mat<S> a;
  Mat<S> b;
  S scale = 0;
};

template <typename S>
struct Block {
  Mat<S> norm1, norm2;
  Linear<S> qkv, proj, fc1, fc2;
};

template <typename S>
struct Weights {
  Mat<S> tok, pos, norm_f;
  std::vector<Block<S>> blocks;
};

template <typename S>
Linear<S> load_linear(const Parameters& p, const std::string& name) {
  Linear<S> l;
  l.name = name;
  l.w = to_eigen<S>(p.at(name));
  const auto it = p.tensors.find(name + ".lora_a");
  if (it != p.tensors.end()) {
    l.lora = true;
    l.a = to_eigen<S>(it->second);
    l.b = to_eigen<S>(p.at(name + ".lora_b"));
    l.scale = static_cast<S>(p.lora.scale());
  }
  return l;
}

std::string block_prefix(std::size_t l) { return "blocks." + std::to_string(l) + "."; }

template <typename S>
Weights<S> load_weights(const Parameters& p) {
  Weights<S> w;
  w.tok = to_eigen<S>(p.at("tok_emb"));
  w.pos = to_eigen<S>(p.at("pos_emb"));
  w.norm_f = to_eigen<S>(p.at("norm_f"));
  for (std::size_t l = 0; l < p.config.layers; ++l) {
    const std::string pre = block_prefix(l);
    Block<S> b;
    b.norm1 = to_eigen<S>(p.at(pre + "norm1"));
    b.norm2 = to_eigen<S>(p.at(pre + "norm2"));
    b.qkv = load_linear<S>(p, pre + "attn.qkv");
    b.proj = load_linear<S>(p, pre + "attn.proj");
    b.fc1 = load_linear<S>(p, pre + "mlp.fc1");
    b.fc2 = load_linear<S>(p, pre + "mlp.fc2");
    w.blocks.push_back(std::move(b));
  }
  return w;
}

struct Layout {
  std::vector<std::size_t> offset;
  std::vector<std::size_t> length;
  std::size_t total = 0;
};

template <typename S>
struct BlockCache {
  Mat<S> x_in, h1, qkv, t_qkv, att, t_proj, x_mid, h2, u, t_fc1, z, t_fc2;
  Col<S> r1, r2;
  std::vector<Mat<S>> probs;
  Mat<S> mask_a, mask_f;
};

template <typename S>
struct Cache {
  std::vector<BlockCache<S>> blocks;
  Mat<S> x_final, hf;
  Col<S> rf;
};

template <typename S>
Mat<S> rms_forward(const Mat<S>& x, const Mat<S>& g, Col<S>& r) {
  const S d = static_cast<S>(x.cols());
  r = ((x.array().square().rowwise().sum() / d) + static_cast<S>(kNormEps)).rsqrt().matrix();
  Mat<S> y = x.array().colwise() * r.array();
  y.array().rowwise() *= g.row(0).array();
  return y;
}

template <typename S>
Mat<S> rms_backward(const Mat<S>& x, const Mat<S>& g, const Col<S>& r, const Mat<S>& dy, Mat<S>& dg) {
  const S d = static_cast<S>(x.cols());
  Mat<S> xr = x.array().colwise() * r.array();
  dg.row(0).array() += (dy.array() * xr.array()).colwise().sum();
  Mat<S> gdy = dy.array().rowwise() * g.row(0).array();
  Col<S> dot = (gdy.array() * x.array()).rowwise().sum().matrix();
  Col<S> coef = (r.array().cube() * dot.array() / d).matrix();
  Mat<S> dx = gdy.array().colwise() * r.array();
  dx.array() -= x.array().colwise() * coef.array();
  return dx;
}

template <typename S>
Mat<S> linear_forward(const Linear<S>& l, const Mat<S>& x, Mat<S>& t) {
  Mat<S> y = x * l.w.transpose();
  if (l.lora) {
    t = x * l.a.transpose();
    y.noalias() += l.scale * (t * l.b.transpose());
  }
  return y;
}

template <typename S>
struct Grads {
  std::map<std::string, Mat<S>> m;

  Mat<S>& get(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    auto it = m.find(name);
    if (it == m.end()) it = m.emplace(name, Mat<S>::Zero(rows, cols)).first;
    return it->second;
  }
};

template <typename S>
Mat<S> linear_backward(const Linear<S>& l, const Mat<S>& x, const Mat<S>& t, const Mat<S>& dy, Grads<S>& g) {
  g.get(l.name, l.w.rows(), l.w.cols()).noalias() += dy.transpose() * x;
  Mat<S> dx = dy * l.w;
  if (l.lora) {
    g.get(l.name + ".lora_b", l.b.rows(), l.b.cols()).noalias() += l.scale * (dy.transpose() * t);
    Mat<S> dt = l.scale * (dy * l.b);
    g.get(l.name + ".lora_a", l.a.rows(), l.a.cols()).noalias() += dt.transpose() * x;
    dx.noalias() += dt * l.a;
  }
  return dx;
}

template <typename S>
S silu(S a) {
  return a / (S(1) + std::exp(-a));
}

template <typename S>
void capture(ActivationTrace* trace, const std::string& name, const Mat<S>& x, const Mat<S>& y,
             std::size_t splits) {
  if (trace == nullptr) return;
  std::vector<double> xr(static_cast<std::size_t>(x.cols()));
  std::vector<double> yr(static_cast<std::size_t>(y.cols()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) xr[static_cast<std::size_t>(j)] = static_cast<double>(x(i, j));
    for (Eigen::Index j = 0; j < y.cols(); ++j) yr[static_cast<std::size_t>(j)] = static_cast<double>(y(i, j));
    trace->record(name, xr, yr, splits);
  }
}

template <typename S>
Mat<S> dropout_mask(Rng* rng, double p, Eigen::Index rows, Eigen::Index cols) {
  if (rng == nullptr || p <= 0.0) return {};
  Mat<S> mask(rows, cols);
  const S keep = static_cast<S>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng->bernoulli(p) ? S(0) : keep;
  return mask;
}

// Runs the transformer over the concatenated sequences. Returns logits
// (total x V). Fills `cache` when the backward pass will follow.
template <typename S>
Mat<S> run_forward(const Parameters& p, const Weights<S>& w, const std::vector<std::span<const Token>>& seqs,
                   const Layout& lay, Cache<S>* cache, ActivationTrace* trace, Rng* dropout_rng) {
  const ModelConfig& cfg = p.config;
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  const auto hid = static_cast<Eigen::Index>(cfg.hidden());
  const auto heads = cfg.heads;
  const auto dh = d / static_cast<Eigen::Index>(heads);
  const S att_scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  const auto n = static_cast<Eigen::Index>(lay.total);

  Mat<S> x(n, d);
  for (std::size_t e = 0; e < seqs.size(); ++e) {
    for (std::size_t t = 0; t < seqs[e].size(); ++t) {
      const auto row = static_cast<Eigen::Index>(lay.offset[e] + t);
      x.row(row) = w.tok.row(seqs[e][t]) + w.pos.row(static_cast<Eigen::Index>(t));
    }
  }
  if (cache) cache->blocks.resize(w.blocks.size());

  for (std::size_t l = 0; l < w.blocks.size(); ++l) {
    const Block<S>& b = w.blocks[l];
    BlockCache<S> local;
    BlockCache<S>& c = cache ? cache->blocks[l] : local;
    c.x_in = x;
    c.h1 = rms_forward(x, b.norm1, c.r1);
    c.qkv = linear_forward(b.qkv, c.h1, c.t_qkv);
    capture(trace, b.qkv.name, c.h1, c.qkv, 3);

    c.att = Mat<S>::Zero(n, d);
    c.probs.clear();
    for (std::size_t e = 0; e < seqs.size(); ++e) {
      const auto o = static_cast<Eigen::Index>(lay.offset[e]);
      const auto len = static_cast<Eigen::Index>(lay.length[e]);
      for (std::size_t h = 0; h < heads; ++h) {
        const auto col = static_cast<Eigen::Index>(h) * dh;
        Mat<S> s = (c.qkv.block(o, col, len, dh) * c.qkv.block(o, d + col, len, dh).transpose()) * att_scale;
        for (Eigen::Index i = 0; i < len; ++i) {
          const S peak = s.row(i).head(i + 1).maxCoeff();
          S sum = 0;
          for (Eigen::Index j = 0; j <= i; ++j) {
            s(i, j) = std::exp(s(i, j) - peak);
            sum += s(i, j);
          }
          s.row(i).head(i + 1) /= sum;
          s.row(i).tail(len - i - 1).setZero();
        }
        c.att.block(o, col, len, dh).noalias() = s * c.qkv.block(o, 2 * d + col, len, dh);
        if (cache) c.probs.push_back(std::move(s));
      }
    }
    Mat<S> a = linear_forward(b.proj, c.att, c.t_proj);
    capture(trace, b.proj.name, c.att, a, 1);
    c.mask_a = dropout_mask<S>(dropout_rng, cfg.dropout, n, d);
    if (c.mask_a.size() > 0) a.array() *= c.mask_a.array();
    c.x_mid = x + a;

    c.h2 = rms_forward(c.x_mid, b.norm2, c.r2);
    c.u = linear_forward(b.fc1, c.h2, c.t_fc1);
    capture(trace, b.fc1.name, c.h2, c.u, 2);
    c.z.resize(n, hid);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < hid; ++j) c.z(i, j) = silu(c.u(i, j)) * c.u(i, hid + j);
    Mat<S> f = linear_forward(b.fc2, c.z, c.t_fc2);
    capture(trace, b.fc2.name, c.z, f, 1);
    c.mask_f = dropout_mask<S>(dropout_rng, cfg.dropout, n, d);
    if (c.mask_f.size() > 0) f.array() *= c.mask_f.array();
    x = c.x_mid + f;
  }

  Col<S> rf;
  Mat<S> hf = rms_forward(x, w.norm_f, rf);
  Mat<S> logits = hf * w.tok.transpose();
  if (cache) {
    cache->x_final = std::move(x);
    cache->hf = std::move(hf);
    cache->rf = std::move(rf);
  }
  return logits;
}

Layout make_layout(const ModelConfig& cfg, const std::vector<std::span<const Token>>& seqs) {
  Layout lay;
  for (const auto& s : seqs) {
    require(!s.empty(), ErrorKind::kInvalidInput, "empty sequence");
    require(s.size() <= cfg.seq_len, ErrorKind::kInvalidInput,
            "sequence length " + std::to_string(s.size()) + " exceeds seq_len " + std::to_string(cfg.seq_len));
    for (Token t : s)
      require(t < cfg.vocab, ErrorKind::kInvalidInput, "token id " + std::to_string(t) + " out of range");
    lay.offset.push_back(lay.total);
    lay.length.push_back(s.size());
    lay.total += s.size();
  }
  return lay;
}

// Mean cross-entropy of logits against targets; optionally writes dlogits.
template <typename S>
double cross_entropy(Mat<S>& logits, const std::vector<Token>& targets, bool want_grad) {
  const Eigen::Index n = logits.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto row = logits.row(i);
    const S peak = row.maxCoeff();
    double sum = 0.0;
    for (Eigen::Index j = 0; j < row.size(); ++j) sum += std::exp(static_cast<double>(row(j) - peak));
    const auto tgt = static_cast<Eigen::Index>(targets[static_cast<std::size_t>(i)]);
    total += std::log(sum) - static_cast<double>(row(tgt) - peak);
    if (want_grad) {
      const double inv_n = 1.0 / static_cast<double>(n);
      for (Eigen::Index j = 0; j < row.size(); ++j)
        row(j) = static_cast<S>(std::exp(static_cast<double>(row(j) - peak)) / sum * inv_n);
      row(tgt) -= static_cast<S>(inv_n);
    }
  }
  return total / static_cast<double>(n);
}

template <typename S>
LossAndGrads loss_and_grads_impl(const Parameters& p, const Batch& batch, bool want_grad, Rng* dropout_rng) {
  require(!batch.empty(), ErrorKind::kInvalidInput, "empty batch");
  std::vector<std::span<const Token>> seqs;
  std::vector<Token> targets;
  for (const Example& ex : batch) {
    require(ex.input.size() == ex.target.size(), ErrorKind::kInvalidInput, "input/target length mismatch");
    seqs.emplace_back(ex.input);
    for (Token t : ex.target)
      require(t < p.config.vocab, ErrorKind::kInvalidInput, "target id out of range");
    targets.insert(targets.end(), ex.target.begin(), ex.target.end());
  }
  const Layout lay = make_layout(p.config, seqs);
  const Weights<S> w = load_weights<S>(p);
  Cache<S> cache;
  Mat<S> logits = run_forward<S>(p, w, seqs, lay, want_grad ? &cache : nullptr, nullptr, dropout_rng);

  LossAndGrads out;
  out.loss = cross_entropy(logits, targets, want_grad);
  if (!want_grad) return out;

  const ModelConfig& cfg = p.config;
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  const auto hid = static_cast<Eigen::Index>(cfg.hidden());
  const auto dh = d / static_cast<Eigen::Index>(cfg.heads);
  const S att_scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  const auto n = static_cast<Eigen::Index>(lay.total);

  Grads<S> g;
  Mat<S>& dtok = g.get("tok_emb", w.tok.rows(), w.tok.cols());
  dtok.noalias() += logits.transpose() * cache.hf;
  Mat<S> dhf = logits * w.tok;
  Mat<S> dx = rms_backward(cache.x_final, w.norm_f, cache.rf, dhf, g.get("norm_f", 1, d));

  for (std::size_t li = w.blocks.size(); li-- > 0;) {
    const Block<S>& b = w.blocks[li];
    BlockCache<S>& c = cache.blocks[li];
    const std::string pre = block_prefix(li);

    // MLP branch.
    Mat<S> df = dx;
    if (c.mask_f.size() > 0) df.array() *= c.mask_f.array();
    Mat<S> dz = linear_backward(b.fc2, c.z, c.t_fc2, df, g);
    Mat<S> du(n, 2 * hid);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < hid; ++j) {
        const S a = c.u(i, j);
        const S sig = S(1) / (S(1) + std::exp(-a));
        du(i, j) = dz(i, j) * c.u(i, hid + j) * sig * (S(1) + a * (S(1) - sig));
        du(i, hid + j) = dz(i, j) * a * sig;
      }
    }
    Mat<S> dh2 = linear_backward(b.fc1, c.h2, c.t_fc1, du, g);
    Mat<S> dmid = dx + rms_backward(c.x_mid, b.norm2, c.r2, dh2, g.get(pre + "norm2", 1, d));

    // Attention branch.
    Mat<S> da = dmid;
    if (c.mask_a.size() > 0) da.array() *= c.mask_a.array();
    Mat<S> datt = linear_backward(b.proj, c.att, c.t_proj, da, g);
    Mat<S> dqkv = Mat<S>::Zero(n, 3 * d);
    std::size_t idx = 0;
    for (std::size_t e = 0; e < lay.offset.size(); ++e) {
      const auto o = static_cast<Eigen::Index>(lay.offset[e]);
      const auto len = static_cast<Eigen::Index>(lay.length[e]);
      for (std::size_t h = 0; h < cfg.heads; ++h, ++idx) {
        const auto col = static_cast<Eigen::Index>(h) * dh;
        const Mat<S>& prob = c.probs[idx];
        const auto d_o = datt.block(o, col, len, dh);
        Mat<S> dp = d_o * c.qkv.block(o, 2 * d + col, len, dh).transpose();
        dqkv.block(o, 2 * d + col, len, dh).noalias() = prob.transpose() * d_o;
        Col<S> rowdot = (dp.array() * prob.array()).rowwise().sum().matrix();
        Mat<S> ds = prob.array() * (dp.array().colwise() - rowdot.array());
        ds *= att_scale;
        dqkv.block(o, col, len, dh).noalias() = ds * c.qkv.block(o, d + col, len, dh);
        dqkv.block(o, d + col, len, dh).noalias() = ds.transpose() * c.qkv.block(o, col, len, dh);
      }
    }
    Mat<S> dh1 = linear_backward(b.qkv, c.h1, c.t_qkv, dqkv, g);
    dx = dmid + rms_backward(c.x_in, b.norm1, c.r1, dh1, g.get(pre + "norm1", 1, d));
  }

  Mat<S>& dpos = g.get("pos_emb", w.pos.rows(), w.pos.cols());
  for (std::size_t e = 0; e < seqs.size(); ++e) {
    for (std::size_t t = 0; t < seqs[e].size(); ++t) {
      const auto row = static_cast<Eigen::Index>(lay.offset[e] + t);
      dtok.row(seqs[e][t]) += dx.row(row);
      dpos.row(static_cast<Eigen::Index>(t)) += dx.row(row);
    }
  }

  for (const auto& [name, tensor] : p.tensors) {
    const auto it = g.m.find(name);
    out.grads.emplace(name, it == g.m.end() ? Matrix(tensor.rows(), tensor.cols()) : from_eigen<S>(it->second));
  }
  return out;
}

template <typename S>
std::vector<std::vector<Token>> greedy_impl(const Parameters& p, const std::vector<std::vector<Token>>& prompts,
                                            std::size_t b) {
  std::vector<std::vector<Token>> out(prompts.size());
  if (b == 0 || prompts.empty()) return out;
  for (const auto& pr : prompts) {
    require(!pr.empty(), ErrorKind::kInvalidInput, "greedy_generate: empty prompt");
    require(pr.size() + b - 1 <= p.config.seq_len, ErrorKind::kInvalidInput,
            "greedy_generate: prompt plus generation exceeds seq_len");
  }
  const Weights<S> w = load_weights<S>(p);
  std::vector<std::vector<Token>> ctx = prompts;
  for (std::size_t step = 0; step < b; ++step) {
    std::vector<std::span<const Token>> seqs(ctx.begin(), ctx.end());
    const Layout lay = make_layout(p.config, seqs);
    const Mat<S> logits = run_forward<S>(p, w, seqs, lay, nullptr, nullptr, nullptr);
    for (std::size_t e = 0; e < ctx.size(); ++e) {
      const auto row = logits.row(static_cast<Eigen::Index>(lay.offset[e] + lay.length[e] - 1));
      Eigen::Index best = 0;
      for (Eigen::Index j = 1; j < row.size(); ++j)
        if (row(j) > row(best)) best = j;
      out[e].push_back(static_cast<Token>(best));
      ctx[e].push_back(static_cast<Token>(best));
    }
  }
  return out;
}

}  // namespace

std::size_t ModelConfig::hidden() const {
  if (mlp_hidden > 0) return mlp_hidden;
  const double target = 8.0 * static_cast<double>(dim) / 3.0;
  const auto h = static_cast<double>(heads);
  return static_cast<std::size_t>(std::max(1.0, std::round(target / h)) * h);
}

void ModelConfig::validate() const {
  require(vocab >= 2 && vocab <= 65536, ErrorKind::kInvalidParameter, "vocab must lie in [2, 65536]");
  require(dim >= 1 && layers >= 1 && heads >= 1, ErrorKind::kInvalidParameter, "dim, layers, heads must be >= 1");
  require(dim % heads == 0, ErrorKind::kInvalidParameter, "heads must divide dim");
  require(seq_len >= 2, ErrorKind::kInvalidParameter, "seq_len must be >= 2");
  require(dropout >= 0.0 && dropout < 1.0, ErrorKind::kInvalidParameter, "dropout must lie in [0,1)");
}

const Matrix& Parameters::at(const std::string& name) const {
  const auto it = tensors.find(name);
  require(it != tensors.end(), ErrorKind::kInvalidState, "missing parameter '" + name + "'");
  return it->second;
}

Matrix& Parameters::at(const std::string& name) {
  const auto it = tensors.find(name);
  require(it != tensors.end(), ErrorKind::kInvalidState, "missing parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> linear_layer_names(const ModelConfig& cfg) {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string pre = block_prefix(l);
    for (const char* leaf : {"attn.qkv", "attn.proj", "mlp.fc1", "mlp.fc2"}) names.push_back(pre + leaf);
  }
  return names;
}

bool is_lora_factor(const std::string& name) {
  return name.ends_with(".lora_a") || name.ends_with(".lora_b");
}

bool is_linear_weight(const std::string& name) {
  if (!name.starts_with("blocks.") || is_lora_factor(name)) return false;
  return name.ends_with(".attn.qkv") || name.ends_with(".attn.proj") || name.ends_with(".mlp.fc1") ||
         name.ends_with(".mlp.fc2");
}

Parameters init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Parameters p;
  p.config = cfg;
  const std::size_t d = cfg.dim;
  const std::size_t hid = cfg.hidden();
  const double resid = 0.02 / std::sqrt(2.0 * static_cast<double>(cfg.layers));
  auto normal = [&](const std::string& name, std::size_t r, std::size_t c, double std) {
    Rng rng(seed, "init." + name);
    p.tensors.emplace(name, rng.normal_matrix(r, c, std));
  };
  normal("tok_emb", cfg.vocab, d, 0.02);
  normal("pos_emb", cfg.seq_len, d, 0.02);
  p.tensors.emplace("norm_f", Matrix(1, d, 1.0));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string pre = block_prefix(l);
    p.tensors.emplace(pre + "norm1", Matrix(1, d, 1.0));
    p.tensors.emplace(pre + "norm2", Matrix(1, d, 1.0));
    normal(pre + "attn.qkv", 3 * d, d, 0.02);
    normal(pre + "attn.proj", d, d, resid);
    normal(pre + "mlp.fc1", 2 * hid, d, 0.02);
    normal(pre + "mlp.fc2", d, hid, resid);
  }
  return p;
}

double LayerTrace::mean_input_sparsity() const {
  require(input_sparsity_count > 0, ErrorKind::kInsufficientData, "no nonzero inputs recorded for " + name);
  return input_sparsity_sum / static_cast<double>(input_sparsity_count);
}

double LayerTrace::mean_output_sparsity() const {
  require(output_sparsity_count > 0, ErrorKind::kInsufficientData, "no nonzero outputs recorded for " + name);
  return output_sparsity_sum / static_cast<double>(output_sparsity_count);
}

double LayerTrace::mean_split_sparsity(std::size_t split) const {
  require(split < split_names.size() && split_sparsity_count[split] > 0, ErrorKind::kInsufficientData,
          "no samples for split of " + name);
  return split_sparsity_sum[split] / static_cast<double>(split_sparsity_count[split]);
}

ActivationTrace::ActivationTrace(std::uint64_t seed, std::size_t reservoir)
    : reservoir_(reservoir), rng_(seed, "activation_trace") {}

const LayerTrace& ActivationTrace::layer(const std::string& name) const {
  for (const auto& l : layers_)
    if (l.name == name) return l;
  fail(ErrorKind::kInvalidInput, "no trace for layer '" + name + "'");
}

LayerTrace& ActivationTrace::ensure(const std::string& name, std::size_t in_dim, std::size_t out_dim,
                                    std::size_t splits) {
  for (auto& l : layers_) {
    if (l.name != name) continue;
    require(l.in_dim == in_dim && l.out_dim == out_dim, ErrorKind::kInvalidInput,
            "activation shape changed for " + name);
    return l;
  }
  require(splits >= 1 && out_dim % splits == 0, ErrorKind::kInvalidParameter, "bad output split for " + name);
  LayerTrace l;
  l.name = name;
  l.in_dim = in_dim;
  l.out_dim = out_dim;
  l.xx_sum = Matrix(in_dim, in_dim);
  if (splits == 3) l.split_names = {"q", "k", "v"};
  else if (splits == 2) l.split_names = {"gate", "value"};
  else l.split_names = {"out"};
  l.split_sparsity_sum.assign(splits, 0.0);
  l.split_sparsity_count.assign(splits, 0);
  layers_.push_back(std::move(l));
  return layers_.back();
}

void ActivationTrace::record(const std::string& name, std::span<const double> x, std::span<const double> y,
                             std::size_t splits) {
  LayerTrace& l = ensure(name, x.size(), y.size(), splits);
  ++l.count;
  const std::size_t n = x.size();
  double* acc = l.xx_sum.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) acc[i * n + j] += xi * x[j];
  }
  auto sparsity = [](std::span<const double> v, double& sum, std::uint64_t& cnt) {
    if (std::all_of(v.begin(), v.end(), [](double a) { return a == 0.0; })) return;
    sum += norms::activation_sparsity(v);
    ++cnt;
  };
  sparsity(x, l.input_sparsity_sum, l.input_sparsity_count);
  sparsity(y, l.output_sparsity_sum, l.output_sparsity_count);
  const std::size_t width = y.size() / l.split_names.size();
  for (std::size_t s = 0; s < l.split_names.size(); ++s)
    sparsity(y.subspan(s * width, width), l.split_sparsity_sum[s], l.split_sparsity_count[s]);

  if (l.inputs.size() < reservoir_) {
    l.inputs.emplace_back(std::vector<double>(x.begin(), x.end()));
    l.outputs.emplace_back(std::vector<double>(y.begin(), y.end()));
  } else {
    const std::size_t slot = rng_.index(static_cast<std::size_t>(l.count));
    if (slot < reservoir_) {
      l.inputs[slot] = Vector(std::vector<double>(x.begin(), x.end()));
      l.outputs[slot] = Vector(std::vector<double>(y.begin(), y.end()));
    }
  }
}

double ActivationTrace::mean_input_sparsity() const {
  require(!layers_.empty(), ErrorKind::kInsufficientData, "empty activation trace");
  double sum = 0.0;
  for (const auto& l : layers_) sum += l.mean_input_sparsity();
  return sum / static_cast<double>(layers_.size());
}

Matrix forward(const Parameters& params, std::span<const Token> tokens, ActivationTrace* trace,
               Precision precision) {
  const std::vector<std::span<const Token>> seqs{tokens};
  const Layout lay = make_layout(params.config, seqs);
  if (precision == Precision::kF64) {
    const auto w = load_weights<double>(params);
    return from_eigen<double>(run_forward<double>(params, w, seqs, lay, nullptr, trace, nullptr));
  }
  const auto w = load_weights<float>(params);
  return from_eigen<float>(run_forward<float>(params, w, seqs, lay, nullptr, trace, nullptr));
}

LossAndGrads loss_and_grads(const Parameters& params, const Batch& batch, Precision precision, Rng* dropout_rng) {
  if (precision == Precision::kF64) return loss_and_grads_impl<double>(params, batch, true, dropout_rng);
  return loss_and_grads_impl<float>(params, batch, true, dropout_rng);
}

double loss(const Parameters& params, const Batch& batch, Precision precision) {
  if (precision == Precision::kF64) return loss_and_grads_impl<double>(params, batch, false, nullptr).loss;
  return loss_and_grads_impl<float>(params, batch, false, nullptr).loss;
}

GradCheckReport gradient_check(const Parameters& params, const Batch& batch, double epsilon, std::uint64_t seed,
                               double fraction, double floor) {
  require(epsilon > 0.0, ErrorKind::kInvalidParameter, "gradient_check: epsilon must be positive");
  const LossAndGrads analytic = loss_and_grads(params, batch, Precision::kF64);
  Parameters probe = params;
  Rng rng(seed, "gradient_check");
  GradCheckReport rep;
  for (auto& [name, tensor] : probe.tensors) {
    const std::size_t size = tensor.size();
    const auto want = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(fraction * static_cast<double>(size))));
    std::vector<std::size_t> idx(size);
    for (std::size_t k = 0; k < size; ++k) idx[k] = k;
    rng.shuffle(idx);
    idx.resize(std::min(want, size));
    const Matrix& grad = analytic.grads.at(name);
    double err2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t k : idx) {
      const double orig = tensor.values()[k];
      tensor.values()[k] = orig + epsilon;
      const double up = loss(probe, batch, Precision::kF64);
      tensor.values()[k] = orig - epsilon;
      const double down = loss(probe, batch, Precision::kF64);
      tensor.values()[k] = orig;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = grad.values()[k];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      err2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      ++rep.coordinates;
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_param = name;
      }
    }
    const double tensor_rel = std::sqrt(err2) / std::max({std::sqrt(a2), std::sqrt(n2), floor});
    if (tensor_rel > rep.max_tensor_rel_error) {
      rep.max_tensor_rel_error = tensor_rel;
      rep.worst_tensor = name;
    }
  }
  return rep;
}

std::vector<Token> greedy_generate(const Parameters& params, std::span<const Token> prompt, std::size_t b,
                                   Precision precision) {
  require(!prompt.empty(), ErrorKind::kInvalidInput, "greedy_generate: empty prompt");
  return greedy_generate_batch(params, {std::vector<Token>(prompt.begin(), prompt.end())}, b, precision).front();
}

std::vector<std::vector<Token>> greedy_generate_batch(const Parameters& params,
                                                      const std::vector<std::vector<Token>>& prompts,
                                                      std::size_t b, Precision precision) {
  if (precision == Precision::kF64) return greedy_impl<double>(params, prompts, b);
  return greedy_impl<float>(params, prompts, b);
}

void lora_attach(Parameters& params, const std::vector<std::string>& targets, std::size_t rank, double alpha,
                 std::uint64_t seed) {
  require(rank >= 1, ErrorKind::kInvalidParameter, "lora rank must be >= 1");
  require(alpha > 0.0, ErrorKind::kInvalidParameter, "lora alpha must be positive");
  require(!targets.empty(), ErrorKind::kInvalidParameter, "lora needs at least one target layer");
  if (params.lora.attached()) {
    require(params.lora.rank == rank && params.lora.alpha == alpha, ErrorKind::kInvalidState,
            "lora already attached with a different rank or alpha");
  }
  for (const auto& t : targets) {
    require(is_linear_weight(t) && params.tensors.contains(t), ErrorKind::kInvalidParameter,
            "lora target '" + t + "' is not a linear layer");
    require(!params.tensors.contains(t + ".lora_a"), ErrorKind::kInvalidState,
            "lora already attached to '" + t + "'");
  }
  for (const auto& t : targets) {
    const Matrix& w = params.at(t);
    Rng rng(seed, "lora." + t);
    params.tensors.emplace(t + ".lora_a",
                           rng.normal_matrix(rank, w.cols(), 1.0 / std::sqrt(static_cast<double>(w.cols()))));
    params.tensors.emplace(t + ".lora_b", Matrix(w.rows(), rank));
    params.lora.targets.push_back(t);
  }
  params.lora.rank = rank;
  params.lora.alpha = alpha;
}

ParamMap lora_merge(const Parameters& params) {
  require(params.lora.attached(), ErrorKind::kInvalidState, "no lora adapter attached");
  ParamMap out;
  for (const auto& t : params.lora.targets) {
    Matrix delta = matmul(params.at(t + ".lora_b"), params.at(t + ".lora_a"));
    delta *= params.lora.scale();
    out.emplace(t, std::move(delta));
  }
  return out;
}

Parameters lora_merged_model(const Parameters& params) {
  const ParamMap delta = lora_merge(params);
  Parameters out;
  out.config = params.config;
  for (const auto& [name, tensor] : params.tensors) {
    if (is_lora_factor(name)) continue;
    const auto it = delta.find(name);
    out.tensors.emplace(name, it == delta.end() ? tensor : tensor + it->second);
  }
  return out;
}

}  // namespace lmolab::model
