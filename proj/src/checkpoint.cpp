#include "dfq/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dfq::bench {

namespace {

constexpr char kMagic[4] = {'D', 'F', 'Q', 'C'};

void put_bytes(std::string& out, const void* p, size_t n) {
  out.append(reinterpret_cast<const char*>(p), n);
}

void put_u32(std::string& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  put_bytes(out, b, 4);
}

void put_u64(std::string& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  put_bytes(out, b, 8);
}

void put_i64(std::string& out, int64_t v) { put_u64(out, static_cast<uint64_t>(v)); }

void put_f64(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void put_str(std::string& out, const std::string& s) {
  put_u64(out, s.size());
  out.append(s);
}

class Reader {
public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  void raw(void* p, size_t n) {
    if (pos_ + n > data_.size()) throw std::runtime_error("checkpoint: truncated file");
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  uint32_t u32() {
    unsigned char b[4];
    raw(b, 4);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  uint64_t u64() {
    unsigned char b[8];
    raw(b, 8);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  int64_t i64() { return static_cast<int64_t>(u64()); }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str() {
    uint64_t n = u64();
    if (pos_ + n > data_.size()) throw std::runtime_error("checkpoint: truncated string");
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

private:
  std::string data_;
  size_t pos_ = 0;
};

void atomic_write(const std::string& path, const std::string& payload) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + tmp);
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("rename failed: " + path);
}

}  // namespace

void Checkpoint::add(const std::string& name, Tensor t) {
  if (has(name)) throw std::invalid_argument("checkpoint: duplicate tensor " + name);
  tensors_.emplace_back(name, std::move(t));
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : tensors_)
    if (n == name) return true;
  return false;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors_)
    if (n == name) return t;
  throw std::out_of_range("checkpoint: missing tensor " + name);
}

void Checkpoint::add_qparams(const std::string& name, quant::QuantParams p) {
  if (has_qparams(name)) throw std::invalid_argument("checkpoint: duplicate qparams " + name);
  qparams_.emplace_back(name, std::move(p));
}

bool Checkpoint::has_qparams(const std::string& name) const {
  for (const auto& [n, p] : qparams_)
    if (n == name) return true;
  return false;
}

const quant::QuantParams& Checkpoint::qparams(const std::string& name) const {
  for (const auto& [n, p] : qparams_)
    if (n == name) return p;
  throw std::out_of_range("checkpoint: missing qparams " + name);
}

void Checkpoint::save(const std::string& path) const {
  std::string out;
  put_bytes(out, kMagic, 4);
  put_u32(out, kVersion);
  put_str(out, config_echo);

  put_u64(out, tensors_.size());
  for (const auto& [name, t] : tensors_) {
    put_str(out, name);
    put_u32(out, 2);  // dtype tag: f64
    put_u32(out, static_cast<uint32_t>(t.rank()));
    for (int64_t i = 0; i < t.rank(); ++i) put_i64(out, t.dim(i));
    for (int64_t i = 0; i < t.numel(); ++i) put_f64(out, t[i]);
  }

  put_u64(out, qparams_.size());
  for (const auto& [name, p] : qparams_) {
    put_str(out, name);
    put_u32(out, static_cast<uint32_t>(p.n_bits));
    put_i64(out, p.channel_axis);
    put_u64(out, p.theta_min.size());
    for (double v : p.theta_min) put_f32(out, static_cast<float>(v));
    for (double v : p.theta_max) put_f32(out, static_cast<float>(v));
    for (uint8_t d : p.degenerate) out.push_back(static_cast<char>(d));
  }

  atomic_write(path, out);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(std::move(data));

  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  ck.config_echo = r.str();

  uint64_t n_tensors = r.u64();
  for (uint64_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    uint32_t dtype = r.u32();
    if (dtype != 2) throw std::runtime_error("checkpoint: unsupported dtype tag");
    uint32_t rank = r.u32();
    std::vector<int64_t> shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = r.i64();
    Tensor t(shape);
    for (int64_t j = 0; j < t.numel(); ++j) t[j] = r.f64();
    ck.tensors_.emplace_back(std::move(name), std::move(t));
  }

  uint64_t n_qp = r.u64();
  for (uint64_t i = 0; i < n_qp; ++i) {
    std::string name = r.str();
    quant::QuantParams p;
    p.n_bits = r.u32();
    p.channel_axis = r.i64();
    uint64_t ch = r.u64();
    p.theta_min.resize(ch);
    p.theta_max.resize(ch);
    p.degenerate.resize(ch);
    for (uint64_t c = 0; c < ch; ++c) p.theta_min[c] = r.f32();
    for (uint64_t c = 0; c < ch; ++c) p.theta_max[c] = r.f32();
    for (uint64_t c = 0; c < ch; ++c) {
      char b;
      r.raw(&b, 1);
      p.degenerate[c] = static_cast<uint8_t>(b);
    }
    ck.qparams_.emplace_back(std::move(name), std::move(p));
  }
  return ck;
}

// ---- model packing ----------------------------------------------------

namespace {

Tensor meta_tensor(const std::vector<int64_t>& vals) {
  Tensor t({static_cast<int64_t>(vals.size())});
  for (size_t i = 0; i < vals.size(); ++i) t[static_cast<int64_t>(i)] = static_cast<double>(vals[i]);
  return t;
}

std::vector<int64_t> meta_values(const Tensor& t) {
  std::vector<int64_t> vals(static_cast<size_t>(t.numel()));
  for (int64_t i = 0; i < t.numel(); ++i) vals[static_cast<size_t>(i)] = static_cast<int64_t>(t[i]);
  return vals;
}

}  // namespace

void pack_classifier(Checkpoint& ck, const std::string& prefix, const Classifier& c) {
  std::vector<int64_t> meta = {c.cfg.in_dim, c.cfg.num_classes,
                               static_cast<int64_t>(c.cfg.hidden.size())};
  for (int64_t h : c.cfg.hidden) meta.push_back(h);
  ck.add(prefix + "meta", meta_tensor(meta));
  for (size_t i = 0; i < c.fc.size(); ++i) {
    std::string p = prefix + "fc" + std::to_string(i) + ".";
    ck.add(p + "W", c.fc[i].W.value());
    ck.add(p + "b", c.fc[i].b.value());
    std::string q = prefix + "bn" + std::to_string(i) + ".";
    ck.add(q + "gamma", c.bn[i].gamma.value());
    ck.add(q + "beta", c.bn[i].beta.value());
    ck.add(q + "running_mean", c.bn[i].running_mean);
    ck.add(q + "running_var", c.bn[i].running_var);
  }
  ck.add(prefix + "head.W", c.head.W.value());
  ck.add(prefix + "head.b", c.head.b.value());
}

Classifier unpack_classifier(const Checkpoint& ck, const std::string& prefix) {
  std::vector<int64_t> meta = meta_values(ck.tensor(prefix + "meta"));
  if (meta.size() < 3) throw std::runtime_error("checkpoint: bad classifier meta");
  Classifier c;
  c.cfg.in_dim = meta[0];
  c.cfg.num_classes = meta[1];
  size_t n_hidden = static_cast<size_t>(meta[2]);
  for (size_t i = 0; i < n_hidden; ++i) c.cfg.hidden.push_back(meta[3 + i]);
  for (size_t i = 0; i < n_hidden; ++i) {
    std::string p = prefix + "fc" + std::to_string(i) + ".";
    Linear l;
    l.W = Var(ck.tensor(p + "W"), true);
    l.b = Var(ck.tensor(p + "b"), true);
    c.fc.push_back(std::move(l));
    std::string q = prefix + "bn" + std::to_string(i) + ".";
    BatchNorm n;
    n.gamma = Var(ck.tensor(q + "gamma"), true);
    n.beta = Var(ck.tensor(q + "beta"), true);
    n.running_mean = ck.tensor(q + "running_mean");
    n.running_var = ck.tensor(q + "running_var");
    c.bn.push_back(std::move(n));
  }
  c.head.W = Var(ck.tensor(prefix + "head.W"), true);
  c.head.b = Var(ck.tensor(prefix + "head.b"), true);
  return c;
}

void pack_quantized_classifier(Checkpoint& ck, const std::string& prefix,
                               const QuantizedClassifier& q) {
  pack_classifier(ck, prefix + "net.", q.net);
  ck.add(prefix + "meta", meta_tensor({q.weight_bits, q.act_bits}));
  for (size_t i = 0; i < q.act_trackers.size(); ++i) {
    const auto& t = q.act_trackers[i];
    if (!t.initialized()) continue;
    ck.add_qparams(prefix + "act" + std::to_string(i), t.params(q.act_bits));
  }
}

QuantizedClassifier unpack_quantized_classifier(const Checkpoint& ck, const std::string& prefix) {
  std::vector<int64_t> meta = meta_values(ck.tensor(prefix + "meta"));
  QuantizedClassifier q(unpack_classifier(ck, prefix + "net."), meta.at(0), meta.at(1));
  for (size_t i = 0; i < q.act_trackers.size(); ++i) {
    std::string name = prefix + "act" + std::to_string(i);
    if (!ck.has_qparams(name)) continue;
    const auto& p = ck.qparams(name);
    q.act_trackers[i].restore(p.theta_min.at(0), p.theta_max.at(0));
  }
  return q;
}

void pack_generator(Checkpoint& ck, const std::string& prefix, const gen::Generator& g) {
  std::vector<int64_t> meta = {g.cfg.latent_dim,
                               g.cfg.num_classes,
                               g.cfg.out_channels,
                               g.cfg.out_height,
                               g.cfg.out_width,
                               g.cfg.use_conditional_bn ? 1 : 0,
                               static_cast<int64_t>(g.cfg.hidden.size())};
  for (int64_t h : g.cfg.hidden) meta.push_back(h);
  ck.add(prefix + "meta", meta_tensor(meta));
  for (size_t i = 0; i < g.fc.size(); ++i) {
    std::string p = prefix + "fc" + std::to_string(i) + ".";
    ck.add(p + "W", g.fc[i].W.value());
    ck.add(p + "b", g.fc[i].b.value());
    std::string q = prefix + (g.cfg.use_conditional_bn ? "cbn" : "bn") + std::to_string(i) + ".";
    if (g.cfg.use_conditional_bn) {
      ck.add(q + "gammas", g.cbn[i].gammas.value());
      ck.add(q + "betas", g.cbn[i].betas.value());
      ck.add(q + "running_mean", g.cbn[i].running_mean);
      ck.add(q + "running_var", g.cbn[i].running_var);
    } else {
      ck.add(q + "gamma", g.bn[i].gamma.value());
      ck.add(q + "beta", g.bn[i].beta.value());
      ck.add(q + "running_mean", g.bn[i].running_mean);
      ck.add(q + "running_var", g.bn[i].running_var);
    }
  }
  ck.add(prefix + "out.W", g.out.W.value());
  ck.add(prefix + "out.b", g.out.b.value());
}

gen::Generator unpack_generator(const Checkpoint& ck, const std::string& prefix) {
  std::vector<int64_t> meta = meta_values(ck.tensor(prefix + "meta"));
  if (meta.size() < 7) throw std::runtime_error("checkpoint: bad generator meta");
  gen::Generator g;
  g.cfg.latent_dim = meta[0];
  g.cfg.num_classes = meta[1];
  g.cfg.out_channels = meta[2];
  g.cfg.out_height = meta[3];
  g.cfg.out_width = meta[4];
  g.cfg.use_conditional_bn = meta[5] != 0;
  size_t n_hidden = static_cast<size_t>(meta[6]);
  g.cfg.hidden.clear();
  for (size_t i = 0; i < n_hidden; ++i) g.cfg.hidden.push_back(meta[7 + i]);

  for (size_t i = 0; i < n_hidden; ++i) {
    std::string p = prefix + "fc" + std::to_string(i) + ".";
    Linear l;
    l.W = Var(ck.tensor(p + "W"), true);
    l.b = Var(ck.tensor(p + "b"), true);
    g.fc.push_back(std::move(l));
    if (g.cfg.use_conditional_bn) {
      std::string q = prefix + "cbn" + std::to_string(i) + ".";
      gen::CondBatchNorm n;
      n.gammas = Var(ck.tensor(q + "gammas"), true);
      n.betas = Var(ck.tensor(q + "betas"), true);
      n.running_mean = ck.tensor(q + "running_mean");
      n.running_var = ck.tensor(q + "running_var");
      g.cbn.push_back(std::move(n));
    } else {
      std::string q = prefix + "bn" + std::to_string(i) + ".";
      BatchNorm n;
      n.gamma = Var(ck.tensor(q + "gamma"), true);
      n.beta = Var(ck.tensor(q + "beta"), true);
      n.running_mean = ck.tensor(q + "running_mean");
      n.running_var = ck.tensor(q + "running_var");
      g.bn.push_back(std::move(n));
    }
  }
  g.out.W = Var(ck.tensor(prefix + "out.W"), true);
  g.out.b = Var(ck.tensor(prefix + "out.b"), true);
  return g;
}

void pack_embeddings(Checkpoint& ck, const std::string& prefix,
                     const latent::EmbeddingTable& table) {
  ck.add(prefix + "meta", meta_tensor({table.trainable ? 1 : 0, table.frozen ? 1 : 0}));
  ck.add(prefix + "E", table.E.value());
}

latent::EmbeddingTable unpack_embeddings(const Checkpoint& ck, const std::string& prefix) {
  std::vector<int64_t> meta = meta_values(ck.tensor(prefix + "meta"));
  latent::EmbeddingTable t;
  t.trainable = meta.at(0) != 0;
  t.frozen = meta.at(1) != 0;
  t.E = Var(ck.tensor(prefix + "E"), t.trainable && !t.frozen);
  return t;
}

void pack_disentanglement_map(Checkpoint& ck, const std::string& prefix,
                              const latent::DisentanglementMap& dm) {
  ck.add(prefix + "meta", meta_tensor({dm.layer_count, dm.in_dim, dm.out_dim}));
  for (size_t i = 0; i < dm.layers.size(); ++i) {
    std::string p = prefix + "layer" + std::to_string(i) + ".";
    ck.add(p + "W", dm.layers[i].W.value());
    ck.add(p + "b", dm.layers[i].b.value());
  }
}

latent::DisentanglementMap unpack_disentanglement_map(const Checkpoint& ck,
                                                      const std::string& prefix) {
  std::vector<int64_t> meta = meta_values(ck.tensor(prefix + "meta"));
  latent::DisentanglementMap dm;
  dm.layer_count = meta.at(0);
  dm.in_dim = meta.at(1);
  dm.out_dim = meta.at(2);
  for (int64_t i = 0; i < dm.layer_count; ++i) {
    std::string p = prefix + "layer" + std::to_string(i) + ".";
    Linear l;
    l.W = Var(ck.tensor(p + "W"), true);
    l.b = Var(ck.tensor(p + "b"), true);
    dm.layers.push_back(std::move(l));
  }
  return dm;
}

}  // namespace dfq::bench
