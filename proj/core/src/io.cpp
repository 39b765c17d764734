#include "spam/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "spam/error.hpp"

namespace spam {

namespace {

using json = nlohmann::json;

constexpr std::size_t kMagicLen = 8;

template <typename T>
T to_le(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw ResourceError("cannot open " + path.string() + " for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u64(std::uint64_t v) {
    v = to_le(v);
    bytes(&v, sizeof v);
  }
  void f64s(std::span<const double> v) {
    for (double d : v) {
      d = to_le(d);
      bytes(&d, sizeof d);
    }
  }
  void header(const char* magic, const json& h) {
    bytes(magic, kMagicLen);
    const std::string s = h.dump();
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void close() {
    out_.close();
    if (!out_) throw ResourceError("write failed for " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), name_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ResourceError("cannot open " + path.string());
    data_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  const unsigned char* take(std::size_t n) {
    if (n > data_.size() - pos_) {
      throw FormatError(path_.string() + ": truncated at byte offset " + std::to_string(pos_) + " (need " +
                        std::to_string(n) + " more bytes)");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(data_.data()) + pos_;
    pos_ += n;
    return p;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    std::memcpy(&v, take(sizeof v), sizeof v);
    return to_le(v);
  }
  std::vector<double> f64s(std::size_t n) {
    if (n > (data_.size() - pos_) / sizeof(double)) take(n * sizeof(double));
    std::vector<double> v(n);
    const auto* p = take(n * sizeof(double));
    for (std::size_t k = 0; k < n; ++k) {
      std::memcpy(&v[k], p + k * sizeof(double), sizeof(double));
      v[k] = to_le(v[k]);
    }
    return v;
  }
  json header(const char* magic) {
    const auto* m = take(kMagicLen);
    if (std::memcmp(m, magic, kMagicLen) != 0)
      throw FormatError(path_.string() + ": bad magic at byte offset 0, expected " + std::string(magic, kMagicLen));
    const std::uint64_t len = u64();
    const std::size_t at = pos_;
    const auto* h = take(len);
    try {
      return json::parse(h, h + len);
    } catch (const json::exception& e) {
      throw FormatError(path_.string() + ": malformed header at byte offset " + std::to_string(at) + ": " + e.what());
    }
  }
  std::size_t offset() const { return pos_; }
  void expect_end() const {
    if (pos_ != data_.size())
      throw FormatError(path_.string() + ": trailing bytes after offset " + std::to_string(pos_));
  }
  const std::string& name() const { return name_; }

 private:
  std::filesystem::path path_;
  std::string name_;
  std::string data_;
  std::size_t pos_ = 0;
};

json layers_json(const std::vector<LayerSpec>& layers) {
  json arr = json::array();
  for (const auto& s : layers)
    arr.push_back({{"in", s.in_dim}, {"out", s.out_dim}, {"activation", to_string(s.activation)}, {"bias", s.has_bias}});
  return arr;
}

std::vector<LayerSpec> layers_from(const json& arr, const std::string& file) {
  try {
    std::vector<LayerSpec> out;
    for (const auto& l : arr)
      out.push_back({l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>(),
                     activation_from_string(l.at("activation").get<std::string>()), l.at("bias").get<bool>()});
    return out;
  } catch (const json::exception& e) {
    throw FormatError(file + ": bad layer list in header: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(file + ": " + e.what());
  }
}

template <typename F>
auto header_field(const std::string& file, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw FormatError(file + ": bad header: " + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const Network& net = ckpt.net;
  json h = {{"format_version", 1},
            {"layers", layers_json(net.layers())},
            {"num_params", net.num_params()},
            {"seed", ckpt.seed},
            {"training", ckpt.training},
            {"has_mask", net.has_mask()},
            {"prior", nullptr}};
  if (ckpt.prior) h["prior"] = {{"kind", to_string(ckpt.prior->kind)}, {"count", ckpt.prior->log_delta.size()}};
  Writer w(path);
  w.header("SPAMCKPT", h);
  w.f64s(net.params());
  if (net.has_mask()) w.bytes(net.mask()->data(), net.mask()->size());
  if (ckpt.prior) w.f64s(ckpt.prior->log_delta);
  w.close();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  const json h = r.header("SPAMCKPT");
  Checkpoint c;
  const auto layers = layers_from(header_field(r.name(), [&] { return h.at("layers"); }), r.name());
  try {
    c.net = Network(layers);
  } catch (const StructuralError& e) {
    throw FormatError(r.name() + ": " + e.what());
  }
  const auto p = header_field(r.name(), [&] { return h.at("num_params").get<std::size_t>(); });
  if (p != c.net.num_params())
    throw FormatError(r.name() + ": header parameter count " + std::to_string(p) + " does not match the layers");
  c.seed = header_field(r.name(), [&] { return h.at("seed").get<std::uint64_t>(); });
  c.training = header_field(r.name(), [&] { return h.value("training", std::string()); });
  const bool has_mask = header_field(r.name(), [&] { return h.at("has_mask").get<bool>(); });
  c.net.set_params(r.f64s(p));
  if (has_mask) {
    const std::size_t at = r.offset();
    const auto* m = r.take(p);
    std::vector<std::uint8_t> bits(m, m + p);
    for (std::size_t k = 0; k < p; ++k)
      if (bits[k] > 1) throw FormatError(r.name() + ": mask byte at offset " + std::to_string(at + k) + " is not 0/1");
    c.net.set_mask(std::move(bits));
  }
  if (h.contains("prior") && !h["prior"].is_null()) {
    PriorSpec prior;
    prior.kind = header_field(r.name(), [&] { return prior_kind_from_string(h["prior"].at("kind").get<std::string>()); });
    const auto k = header_field(r.name(), [&] { return h["prior"].at("count").get<std::size_t>(); });
    if (k != PriorSpec::hyper_count(prior.kind, c.net))
      throw FormatError(r.name() + ": prior length does not match the network");
    prior.log_delta = r.f64s(k);
    c.prior = std::move(prior);
  }
  r.expect_end();
  return c;
}

void save_posterior(const std::filesystem::path& path, const PosteriorState& ps) {
  json h = {{"format_version", 1},
            {"kind", ps.is_kfac() ? "kfac" : "diag"},
            {"layers", layers_json(ps.layers())},
            {"num_params", ps.num_params()},
            {"temperature", ps.temperature()},
            {"snapshot_id", ps.snapshot_id()}};
  Writer w(path);
  w.header("SPAMPOST", h);
  w.f64s(ps.theta_star());
  w.f64s(ps.delta());
  if (const auto* d = std::get_if<DiagCurvature>(&ps.curvature())) {
    w.f64s(d->h);
  } else {
    const auto& k = std::get<KfacCurvature>(ps.curvature());
    for (std::size_t l = 0; l < k.layers.size(); ++l) {
      const auto& f = k.layers[l];
      w.f64s(f.a.values());
      w.f64s(f.g.values());
      w.f64s(f.eig_a.eigenvalues);
      w.f64s(f.eig_a.eigenvectors.values());
      w.f64s(f.eig_g.eigenvalues);
      w.f64s(f.eig_g.eigenvectors.values());
      w.f64s(ps.corrected_eigenvalues()[l]);
    }
  }
  w.close();
}

PosteriorState load_posterior(const std::filesystem::path& path) {
  Reader r(path);
  const json h = r.header("SPAMPOST");
  const auto layers = layers_from(header_field(r.name(), [&] { return h.at("layers"); }), r.name());
  Network net;
  try {
    net = Network(layers);
  } catch (const StructuralError& e) {
    throw FormatError(r.name() + ": " + e.what());
  }
  const auto p = header_field(r.name(), [&] { return h.at("num_params").get<std::size_t>(); });
  if (p != net.num_params()) throw FormatError(r.name() + ": parameter count does not match the layers");
  const auto kind = header_field(r.name(), [&] { return h.at("kind").get<std::string>(); });
  const double temperature = header_field(r.name(), [&] { return h.at("temperature").get<double>(); });
  const auto snapshot = header_field(r.name(), [&] { return h.at("snapshot_id").get<std::uint64_t>(); });
  net.set_params(r.f64s(p));
  auto delta = r.f64s(p);
  CurvatureEstimate curv;
  std::vector<std::vector<double>> stored_lambda;
  if (kind == "diag") {
    curv = DiagCurvature{r.f64s(p)};
  } else if (kind == "kfac") {
    KfacCurvature k;
    for (const auto& s : layers) {
      const std::size_t da = s.in_dim + (s.has_bias ? 1 : 0);
      const std::size_t dg = s.out_dim;
      KfacFactors f;
      f.a = Matrix(da, da, r.f64s(da * da));
      f.g = Matrix(dg, dg, r.f64s(dg * dg));
      f.eig_a.eigenvalues = r.f64s(da);
      f.eig_a.eigenvectors = Matrix(da, da, r.f64s(da * da));
      f.eig_g.eigenvalues = r.f64s(dg);
      f.eig_g.eigenvectors = Matrix(dg, dg, r.f64s(dg * dg));
      stored_lambda.push_back(r.f64s(da * dg));
      k.layers.push_back(std::move(f));
    }
    curv = std::move(k);
  } else {
    throw FormatError(r.name() + ": unknown posterior kind '" + kind + "'");
  }
  r.expect_end();
  PosteriorState ps(net, std::move(curv), std::move(delta), temperature);
  if (ps.snapshot_id() != snapshot) throw FormatError(r.name() + ": snapshot id does not match the stored parameters");
  if (!stored_lambda.empty() && stored_lambda != ps.corrected_eigenvalues())
    throw FormatError(r.name() + ": stored corrected eigenvalues disagree with the factors");
  return ps;
}

void save_mask(const std::filesystem::path& path, const PruneMask& mask, const MaskFileInfo& info) {
  json removed = json::array();
  for (const auto& u : mask.removed_units) removed.push_back({u.layer, u.unit});
  json h = {{"format_version", 1},
            {"num_params", mask.bits.size()},
            {"criterion", info.criterion},
            {"seed", info.seed},
            {"snapshot_id", info.snapshot_id},
            {"sparsity", mask.sparsity},
            {"requested", mask.requested},
            {"scope", to_string(mask.scope)},
            {"structured", mask.structured},
            {"exempt_last", mask.exempt_last},
            {"removed_units", removed}};
  std::vector<std::uint8_t> packed((mask.bits.size() + 7) / 8, 0);
  for (std::size_t p = 0; p < mask.bits.size(); ++p)
    if (mask.bits[p]) packed[p / 8] |= static_cast<std::uint8_t>(1u << (p % 8));
  Writer w(path);
  w.header("SPAMMASK", h);
  w.bytes(packed.data(), packed.size());
  w.close();
}

PruneMask load_mask(const std::filesystem::path& path, MaskFileInfo* info) {
  Reader r(path);
  const json h = r.header("SPAMMASK");
  PruneMask m;
  const auto p = header_field(r.name(), [&] { return h.at("num_params").get<std::size_t>(); });
  header_field(r.name(), [&] {
    m.sparsity = h.at("sparsity").get<double>();
    m.requested = h.at("requested").get<double>();
    m.scope = scope_from_string(h.at("scope").get<std::string>());
    m.structured = h.at("structured").get<bool>();
    m.exempt_last = h.at("exempt_last").get<bool>();
    for (const auto& u : h.at("removed_units")) m.removed_units.push_back({u.at(0).get<std::size_t>(), u.at(1).get<std::size_t>()});
    if (info != nullptr) {
      info->criterion = h.at("criterion").get<std::string>();
      info->seed = h.at("seed").get<std::uint64_t>();
      info->snapshot_id = h.at("snapshot_id").get<std::uint64_t>();
    }
    return 0;
  });
  const auto* packed = r.take((p + 7) / 8);
  m.bits.resize(p);
  for (std::size_t k = 0; k < p; ++k) m.bits[k] = (packed[k / 8] >> (k % 8)) & 1u;
  r.expect_end();
  return m;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ResourceError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

}  // namespace spam
