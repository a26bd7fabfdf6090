#include <bit>
#include <cstring>
#include <fstream>

#include "lmolab/error.hpp"
#include "lmolab/model.hpp"

namespace lmolab::model {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'L', 'M', 'O', 'L'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kF32 = 0;
constexpr std::uint8_t kF64 = 1;
const std::string kConfigName = "__config__";
const std::string kLoraName = "__lora__";

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<bool>(is), ErrorKind::kIncompatibleCheckpoint, "truncated checkpoint " + path);
  return v;
}

void write_tensor(std::ostream& os, const std::string& name, std::span<const double> data,
                  std::vector<std::uint64_t> dims, bool as_f32) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint8_t>(os, as_f32 ? kF32 : kF64);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) put<std::uint64_t>(os, d);
  if (as_f32) {
    for (double v : data) put<float>(os, static_cast<float>(v));
  } else {
    os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
}

struct RawTensor {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};

}  // namespace

void save_checkpoint(const Parameters& params, const std::filesystem::path& path, bool as_f32) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(os), ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  const ModelConfig& c = params.config;
  const std::vector<double> cfg = {static_cast<double>(c.vocab),   static_cast<double>(c.dim),
                                   static_cast<double>(c.layers),  static_cast<double>(c.heads),
                                   static_cast<double>(c.seq_len), static_cast<double>(c.mlp_hidden),
                                   c.dropout};
  const bool lora = params.lora.attached();
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(params.tensors.size() + 1 + (lora ? 1 : 0)));
  write_tensor(os, kConfigName, cfg, {cfg.size()}, false);
  if (lora) {
    const std::vector<double> meta = {static_cast<double>(params.lora.rank), params.lora.alpha};
    write_tensor(os, kLoraName, meta, {meta.size()}, false);
  }
  for (const auto& [name, m] : params.tensors) write_tensor(os, name, m.values(), {m.rows(), m.cols()}, as_f32);
  require(static_cast<bool>(os), ErrorKind::kIo, "write failed for " + path.string());
}

Parameters load_checkpoint(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::kIo, "cannot open " + where);
  char magic[4];
  is.read(magic, 4);
  require(static_cast<bool>(is) && std::memcmp(magic, kMagic, 4) == 0, ErrorKind::kIncompatibleCheckpoint,
          "bad magic in " + where);
  const auto version = get<std::uint32_t>(is, where);
  require(version == kVersion, ErrorKind::kIncompatibleCheckpoint,
          "unsupported checkpoint version " + std::to_string(version));
  const auto count = get<std::uint32_t>(is, where);

  std::map<std::string, RawTensor> raw;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto len = get<std::uint32_t>(is, where);
    require(len > 0 && len < 4096, ErrorKind::kIncompatibleCheckpoint, "bad tensor name length in " + where);
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto dtype = get<std::uint8_t>(is, where);
    require(dtype == kF32 || dtype == kF64, ErrorKind::kIncompatibleCheckpoint, "bad dtype for " + name);
    const auto rank = get<std::uint32_t>(is, where);
    require(rank >= 1 && rank <= 2, ErrorKind::kIncompatibleCheckpoint, "bad rank for " + name);
    RawTensor r;
    std::uint64_t size = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      r.dims.push_back(get<std::uint64_t>(is, where));
      size *= r.dims.back();
    }
    require(size > 0 && size < (std::uint64_t{1} << 32), ErrorKind::kIncompatibleCheckpoint,
            "bad size for " + name);
    r.data.resize(size);
    if (dtype == kF64) {
      is.read(reinterpret_cast<char*>(r.data.data()), static_cast<std::streamsize>(size * sizeof(double)));
    } else {
      for (auto& v : r.data) v = get<float>(is, where);
    }
    require(static_cast<bool>(is), ErrorKind::kIncompatibleCheckpoint, "truncated tensor " + name);
    require(raw.emplace(std::move(name), std::move(r)).second, ErrorKind::kIncompatibleCheckpoint,
            "duplicate tensor in " + where);
  }

  const auto cit = raw.find(kConfigName);
  require(cit != raw.end() && cit->second.data.size() == 7, ErrorKind::kIncompatibleCheckpoint,
          "missing model config in " + where);
  const auto& c = cit->second.data;
  Parameters p;
  p.config.vocab = static_cast<std::size_t>(c[0]);
  p.config.dim = static_cast<std::size_t>(c[1]);
  p.config.layers = static_cast<std::size_t>(c[2]);
  p.config.heads = static_cast<std::size_t>(c[3]);
  p.config.seq_len = static_cast<std::size_t>(c[4]);
  p.config.mlp_hidden = static_cast<std::size_t>(c[5]);
  p.config.dropout = c[6];
  p.config.validate();
  raw.erase(cit);

  if (const auto lit = raw.find(kLoraName); lit != raw.end()) {
    require(lit->second.data.size() == 2, ErrorKind::kIncompatibleCheckpoint, "bad lora metadata");
    p.lora.rank = static_cast<std::size_t>(lit->second.data[0]);
    p.lora.alpha = lit->second.data[1];
    raw.erase(lit);
  }

  // Shapes must match a fresh model of the stored config.
  const Parameters ref = init_params(p.config, 0);
  for (const auto& [name, m] : ref.tensors) {
    const auto it = raw.find(name);
    require(it != raw.end(), ErrorKind::kIncompatibleCheckpoint, "checkpoint lacks tensor " + name);
    const auto& dims = it->second.dims;
    require(dims.size() == 2 && dims[0] == m.rows() && dims[1] == m.cols(), ErrorKind::kIncompatibleCheckpoint,
            "shape mismatch for " + name);
  }
  for (auto& [name, r] : raw) {
    require(r.dims.size() == 2, ErrorKind::kIncompatibleCheckpoint, "tensor " + name + " is not a matrix");
    if (is_lora_factor(name)) {
      require(p.lora.attached(), ErrorKind::kIncompatibleCheckpoint, "lora factor without lora metadata");
      if (name.ends_with(".lora_a")) p.lora.targets.push_back(name.substr(0, name.size() - 7));
    } else {
      require(ref.tensors.contains(name), ErrorKind::kIncompatibleCheckpoint, "unexpected tensor " + name);
    }
    p.tensors.emplace(name, Matrix(r.dims[0], r.dims[1], std::move(r.data)));
  }
  return p;
}

}  // namespace lmolab::model
