#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dfq/dataset.hpp"
#include "dfq/generator.hpp"
#include "dfq/latent.hpp"
#include "dfq/losses.hpp"
#include "dfq/nn.hpp"

namespace dfq::train {

struct TrainSchedule {
  int64_t epochs = 40;
  int64_t iters_per_epoch = 50;
  int64_t batch_size = 32;
  double g_lr = 1e-3;              // adaptive-moment optimizer
  double q_lr = 1e-4;              // momentum optimizer
  double q_momentum = 0.9;
  double q_weight_decay = 1e-4;
  bool q_nesterov = true;
  double lr_decay_factor = 0.1;
  int64_t lr_decay_every_epochs = 100;

  void validate() const;
  /// lr multiplier at a given epoch: decay^floor(epoch / every).
  double lr_scale_at(int64_t epoch) const;

  /// Full-scale settings: 400 epochs x 200 iterations, batch 64, decay 0.1
  /// every 100 epochs.
  static TrainSchedule reference_defaults();
  /// Desk-scale settings sized for a laptop CPU.
  static TrainSchedule toy_defaults();
};

struct LossRecord {
  int64_t epoch = 0;
  int64_t iter = 0;
  double loss_g = 0, ce_g = 0, bns = 0;
  double loss_q = 0, ce_q = 0, kd = 0;
};

struct RunHistory {
  std::vector<LossRecord> records;
  std::vector<std::pair<int64_t, double>> eval_accuracy;  // (epoch, top-1)
  uint64_t seed = 0;
  std::string config_echo;

  void write_csv(const std::string& path) const;
  void write_eval_csv(const std::string& path) const;
};

/// Which latent conditioning the run uses. NoiseOnly disables superposition
/// (p = 0); SampleMixup replaces latent superposition with sample-space
/// mixing of two regular batches.
enum class Baseline { None, NoiseOnly, SampleMixup };

struct TrainOptions {
  TrainSchedule schedule;
  latent::SuperpositionSpec superposition;
  int64_t weight_bits = 4;
  int64_t act_bits = 4;
  int64_t dm_layers = 1;
  int64_t dm_out_dim = 64;
  bool extracted_init = true;
  bool freeze_embeddings = false;
  Baseline baseline = Baseline::None;
  std::vector<int64_t> gen_hidden = {128, 128};
  bool conditional_bn = true;
  uint64_t seed = 1;
  int64_t eval_every_epochs = 1;
  loss::LossWeights weights;
  /// When non-empty, checkpoints and history CSVs are written here.
  std::string out_dir;
  /// Echoed into checkpoints and the run history.
  std::string config_echo;
};

/// Everything train_step needs; run() assembles one of these.
struct TrainContext {
  gen::Generator* G = nullptr;
  QuantizedClassifier* Q = nullptr;
  Classifier* P = nullptr;
  latent::EmbeddingTable* table = nullptr;
  latent::DisentanglementMap* dm = nullptr;
  const loss::BNStatsSnapshot* snapshot = nullptr;
  Adam* g_opt = nullptr;
  SgdMomentum* q_opt = nullptr;
  const latent::SuperpositionSpec* spec = nullptr;
  Baseline baseline = Baseline::None;
  int64_t batch_size = 32;
  loss::LossWeights weights;
  Rng* rng = nullptr;
};

struct TrainResult {
  Classifier teacher;
  QuantizedClassifier student;
  gen::Generator generator;
  latent::EmbeddingTable table;
  latent::DisentanglementMap dm;
  RunHistory history;
};

/// Reads every BN layer's running statistics, in model order. A model
/// without BN layers yields an empty snapshot (alignment term becomes 0).
loss::BNStatsSnapshot capture_bn_snapshot(const Classifier& fp);

/// One joint step: generator update, then student update, on a freshly
/// drawn latent batch. Throws on non-finite losses after recording a
/// diagnostic. The teacher is never touched.
LossRecord train_step(TrainContext& ctx, int64_t epoch, int64_t iter);

/// Full fine-tuning loop against a frozen pretrained teacher. Evaluation
/// uses only the dataset's eval split; the data-free guard fails the run if
/// any training sample is read.
TrainResult run(const Classifier& teacher, const bench::ToyDataset& data,
                const TrainOptions& options);

}  // namespace dfq::train
