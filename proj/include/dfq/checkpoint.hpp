#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dfq/generator.hpp"
#include "dfq/latent.hpp"
#include "dfq/nn.hpp"
#include "dfq/quant.hpp"
#include "dfq/tensor.hpp"

namespace dfq::bench {

/// Versioned binary container: magic, version, config echo, named tensors
/// (64-bit floats), and named quantization ranges (32-bit floats, little
/// endian). Files are written to a temp path and renamed into place.
class Checkpoint {
public:
  static constexpr uint32_t kVersion = 1;

  std::string config_echo;

  void add(const std::string& name, Tensor t);
  bool has(const std::string& name) const;
  const Tensor& tensor(const std::string& name) const;

  void add_qparams(const std::string& name, quant::QuantParams p);
  bool has_qparams(const std::string& name) const;
  const quant::QuantParams& qparams(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor>>& tensors() const { return tensors_; }

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

private:
  std::vector<std::pair<std::string, Tensor>> tensors_;
  std::vector<std::pair<std::string, quant::QuantParams>> qparams_;
};

// Model packing. Prefixes keep several models in one file
// (e.g. "teacher.", "student.", "gen.").
void pack_classifier(Checkpoint& ck, const std::string& prefix, const Classifier& c);
Classifier unpack_classifier(const Checkpoint& ck, const std::string& prefix);

void pack_quantized_classifier(Checkpoint& ck, const std::string& prefix,
                               const QuantizedClassifier& q);
QuantizedClassifier unpack_quantized_classifier(const Checkpoint& ck, const std::string& prefix);

void pack_generator(Checkpoint& ck, const std::string& prefix, const gen::Generator& g);
gen::Generator unpack_generator(const Checkpoint& ck, const std::string& prefix);

void pack_embeddings(Checkpoint& ck, const std::string& prefix,
                     const latent::EmbeddingTable& table);
latent::EmbeddingTable unpack_embeddings(const Checkpoint& ck, const std::string& prefix);

void pack_disentanglement_map(Checkpoint& ck, const std::string& prefix,
                              const latent::DisentanglementMap& dm);
latent::DisentanglementMap unpack_disentanglement_map(const Checkpoint& ck,
                                                      const std::string& prefix);

}  // namespace dfq::bench
