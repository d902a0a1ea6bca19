#include "cah/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cah {

namespace {

// Explicit little-endian encoding, independent of the host byte order.
class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void raw(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }

 private:
  void le(std::uint64_t v, int bytes) {
    char b[8];
    for (int i = 0; i < bytes; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(b, bytes);
  }
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::string str(std::uint32_t limit = 1u << 20) {
    const auto n = u32();
    if (n > limit) fail("string length " + std::to_string(n) + " exceeds limit");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void bytes(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) fail("unexpected end of file");
  }
  [[noreturn]] void fail(const std::string& what) const { throw CheckpointError(source_ + ": " + what); }

 private:
  std::uint64_t le(int n) {
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::istream& in_;
  std::string source_;
};

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::size_t> split_sizes(const std::string& s, const std::string& key) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoul(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw CheckpointError("checkpoint metadata '" + key + "' is not a list of sizes: " + s);
    }
  }
  return out;
}

const std::string& need(const std::map<std::string, std::string>& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw CheckpointError("checkpoint metadata lacks '" + key + "'");
  return it->second;
}

std::size_t need_size(const std::map<std::string, std::string>& m, const std::string& key) {
  const auto v = split_sizes(need(m, key), key);
  if (v.size() != 1) throw CheckpointError("checkpoint metadata '" + key + "' must be a single size");
  return v[0];
}

bool need_bool(const std::map<std::string, std::string>& m, const std::string& key) {
  const auto& v = need(m, key);
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw CheckpointError("checkpoint metadata '" + key + "' must be 0 or 1");
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  Writer w(out);
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u64(d);
    for (double v : t.data()) w.f64(v);
  }
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  char magic[sizeof kCheckpointMagic];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) r.fail("not a checkpoint (bad magic)");
  const auto version = r.u32();
  if (version != kCheckpointVersion) r.fail("unsupported format version " + std::to_string(version));
  Checkpoint ckpt;
  const auto nmeta = r.u32();
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    auto k = r.str();
    ckpt.metadata[k] = r.str();
  }
  const auto ntensors = r.u32();
  for (std::uint32_t i = 0; i < ntensors; ++i) {
    auto name = r.str();
    const auto rank = r.u32();
    if (rank > 8) r.fail("tensor '" + name + "' has implausible rank " + std::to_string(rank));
    Shape shape(rank);
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = r.u64();
      count *= d;
      if (count > (1ull << 32)) r.fail("tensor '" + name + "' is implausibly large");
    }
    std::vector<double> values(count);
    for (auto& v : values) v = r.f64();
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (in.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes after last tensor");
  return ckpt;
}

std::map<std::string, std::string> model_metadata(const ModelConfig& c, const ForwardOptions& options) {
  return {
      {"model.variant", to_string(c.variant)},
      {"model.feature_channels", std::to_string(c.feature_channels)},
      {"model.feature_widths", join(c.feature_widths)},
      {"model.normalize_features", c.normalize_features ? "1" : "0"},
      {"model.mask_widths", join(c.mask_widths)},
      {"model.stem_width", std::to_string(c.stem_width)},
      {"model.stage_widths", join(c.stage_widths)},
      {"model.estimator_blocks", join(c.estimator_blocks)},
      {"model.input_height", std::to_string(c.input_height)},
      {"model.input_width", std::to_string(c.input_width)},
      {"inference.mask_attention", options.mask_attention ? "1" : "0"},
      {"inference.identity_features", options.identity_features ? "1" : "0"},
  };
}

void save_model(const std::filesystem::path& path, const Model& model, const ForwardOptions& options,
                const std::map<std::string, std::string>& extra) {
  Checkpoint ckpt;
  ckpt.metadata = extra;
  for (auto& [k, v] : model_metadata(model.config, options)) ckpt.metadata[k] = v;
  for (const auto& [name, t] : model.params.entries()) ckpt.tensors.emplace_back(name, t);
  write_checkpoint(path, ckpt);
}

LoadedModel load_model(const std::filesystem::path& path) {
  auto ckpt = read_checkpoint(path);
  const auto& m = ckpt.metadata;
  ModelConfig c;
  try {
    c.variant = parse_model_variant(need(m, "model.variant"));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  c.feature_channels = need_size(m, "model.feature_channels");
  c.feature_widths = split_sizes(need(m, "model.feature_widths"), "model.feature_widths");
  c.normalize_features = need_bool(m, "model.normalize_features");
  c.mask_widths = split_sizes(need(m, "model.mask_widths"), "model.mask_widths");
  c.stem_width = need_size(m, "model.stem_width");
  c.stage_widths = split_sizes(need(m, "model.stage_widths"), "model.stage_widths");
  c.estimator_blocks = split_sizes(need(m, "model.estimator_blocks"), "model.estimator_blocks");
  c.input_height = need_size(m, "model.input_height");
  c.input_width = need_size(m, "model.input_width");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  LoadedModel out;
  out.options.mask_attention = need_bool(m, "inference.mask_attention");
  out.options.identity_features = need_bool(m, "inference.identity_features");
  out.metadata = m;
  out.model = init_model<double>(c, 0);
  auto& entries = out.model.params.entries();
  if (entries.size() != ckpt.tensors.size()) {
    throw CheckpointError(path.string() + ": expected " + std::to_string(entries.size()) + " tensors for this model, found " +
                          std::to_string(ckpt.tensors.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, stored] = ckpt.tensors[i];
    if (name != entries[i].first || stored.shape() != entries[i].second.shape()) {
      throw CheckpointError(path.string() + ": tensor " + std::to_string(i) + " is '" + name + "' " +
                            shape_str(stored.shape()) + ", model expects '" + entries[i].first + "' " +
                            shape_str(entries[i].second.shape()));
    }
    auto dst = entries[i].second.mutable_data();
    std::copy(stored.data().begin(), stored.data().end(), dst.begin());
  }
  return out;
}

}  // namespace cah
