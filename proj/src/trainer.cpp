#include "dfq/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "dfq/checkpoint.hpp"
#include "dfq/ioutil.hpp"
#include "dfq/metrics.hpp"

namespace dfq::train {

void TrainSchedule::validate() const {
  if (epochs < 0 || iters_per_epoch < 1 || batch_size < 1)
    throw std::invalid_argument("TrainSchedule: non-positive sizes");
  if (g_lr <= 0 || q_lr <= 0) throw std::invalid_argument("TrainSchedule: non-positive lr");
  if (lr_decay_factor <= 0 || lr_decay_factor > 1)
    throw std::invalid_argument("TrainSchedule: decay factor outside (0,1]");
  if (lr_decay_every_epochs < 1)
    throw std::invalid_argument("TrainSchedule: decay interval must be >= 1");
}

double TrainSchedule::lr_scale_at(int64_t epoch) const {
  return std::pow(lr_decay_factor, static_cast<double>(epoch / lr_decay_every_epochs));
}

TrainSchedule TrainSchedule::reference_defaults() {
  TrainSchedule s;
  s.epochs = 400;
  s.iters_per_epoch = 200;
  s.batch_size = 64;
  s.g_lr = 1e-3;
  s.q_lr = 1e-4;
  s.q_momentum = 0.9;
  s.q_weight_decay = 1e-4;
  s.q_nesterov = true;
  s.lr_decay_factor = 0.1;
  s.lr_decay_every_epochs = 100;
  return s;
}

TrainSchedule TrainSchedule::toy_defaults() {
  TrainSchedule s;
  s.epochs = 40;
  s.iters_per_epoch = 50;
  s.batch_size = 32;
  s.g_lr = 1e-3;
  s.q_lr = 1e-4;
  s.q_momentum = 0.9;
  s.q_weight_decay = 1e-4;
  s.q_nesterov = true;
  s.lr_decay_factor = 0.1;
  s.lr_decay_every_epochs = 15;
  return s;
}

namespace {

std::string fmt(double v) { return fmt_double(v); }

}  // namespace

void RunHistory::write_csv(const std::string& path) const {
  std::string out = "epoch,iter,loss_G,CE_G,BNS,loss_Q,CE_Q,KD\n";
  for (const auto& r : records) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.iter) + "," + fmt(r.loss_g) + "," +
           fmt(r.ce_g) + "," + fmt(r.bns) + "," + fmt(r.loss_q) + "," + fmt(r.ce_q) + "," +
           fmt(r.kd) + "\n";
  }
  write_text_atomic(path, out);
}

void RunHistory::write_eval_csv(const std::string& path) const {
  std::string out = "epoch,top1\n";
  for (const auto& [e, acc] : eval_accuracy)
    out += std::to_string(e) + "," + fmt(acc) + "\n";
  write_text_atomic(path, out);
}

loss::BNStatsSnapshot capture_bn_snapshot(const Classifier& fp) {
  loss::BNStatsSnapshot snap;
  for (const auto& layer : fp.bn) {
    snap.means.push_back(layer.running_mean);
    snap.vars.push_back(layer.running_var);
  }
  return snap;
}

namespace {

latent::SuperpositionSpec regular_only(const latent::SuperpositionSpec& spec) {
  latent::SuperpositionSpec s = spec;
  s.p = 0.0;
  return s;
}

}  // namespace

LossRecord train_step(TrainContext& ctx, int64_t epoch, int64_t iter) {
  const bool mixup = ctx.baseline == Baseline::SampleMixup;
  const latent::SuperpositionSpec spec =
      (ctx.baseline == Baseline::None) ? *ctx.spec : regular_only(*ctx.spec);

  // Generator update on a freshly drawn latent batch. With sample-space
  // mixing the generator itself always trains on regular batches.
  latent::LatentBatch lb =
      latent::draw_latent_batch(spec, ctx.batch_size, *ctx.table, *ctx.dm, *ctx.rng);
  Var lat = latent::latent_vectors(*ctx.table, *ctx.dm, lb.soft_labels, lb.noise);
  Var samples = ctx.G->forward(lat, lb.soft_labels, Mode::Train);
  auto g_parts = loss::generator_loss(samples, lb.soft_labels, *ctx.P, *ctx.snapshot,
                                      ctx.weights);
  ctx.g_opt->zero_grad();
  backward(g_parts.total);
  ctx.g_opt->step();

  // Student update on the same samples, detached from the generator.
  Tensor student_x = samples.value();
  Tensor student_y = lb.soft_labels;
  if (mixup && ctx.rng->uniform() < ctx.spec->p) {
    // Mix the batch with a second regular batch in sample space.
    latent::LatentBatch lb2 = latent::draw_latent_batch(regular_only(*ctx.spec), ctx.batch_size,
                                                        *ctx.table, *ctx.dm, *ctx.rng);
    Tensor other = ctx.G->forward(Var(lb2.vectors, false), lb2.soft_labels, Mode::Train).value();
    for (int64_t r = 0; r < student_x.dim(0); ++r) {
      double lambda = latent::sample_mixing_coefficients(2, *ctx.rng)[0];
      for (int64_t c = 0; c < student_x.dim(1); ++c)
        student_x.at(r, c) = lambda * student_x.at(r, c) + (1.0 - lambda) * other.at(r, c);
      for (int64_t c = 0; c < student_y.dim(1); ++c)
        student_y.at(r, c) =
            lambda * student_y.at(r, c) + (1.0 - lambda) * lb2.soft_labels.at(r, c);
    }
  }
  auto q_parts = loss::student_loss(student_x, student_y, *ctx.Q, *ctx.P, ctx.weights);
  ctx.q_opt->zero_grad();
  backward(q_parts.total);
  ctx.q_opt->step();

  LossRecord rec;
  rec.epoch = epoch;
  rec.iter = iter;
  rec.loss_g = g_parts.total.value()[0];
  rec.ce_g = g_parts.ce;
  rec.bns = g_parts.bns;
  rec.loss_q = q_parts.total.value()[0];
  rec.ce_q = q_parts.ce;
  rec.kd = q_parts.kd;
  return rec;
}

TrainResult run(const Classifier& teacher, const bench::ToyDataset& data,
                const TrainOptions& options) {
  options.schedule.validate();

  TrainResult result;
  result.teacher = teacher.clone();
  result.teacher.set_requires_grad(false);
  Classifier& P = result.teacher;
  const uint64_t teacher_checksum = P.state_checksum();
  const int64_t train_reads_before = data.train_reads();

  const int64_t C = P.num_classes();
  const int64_t D = P.feature_dim();

  latent::SuperpositionSpec spec = options.superposition;
  if (options.baseline == Baseline::NoiseOnly) spec.p = 0.0;
  spec.validate(C);

  Rng master(options.seed);
  Rng init_rng = master.split(1);
  Rng train_rng = master.split(2);

  // Student: fake-quantized copy of the teacher.
  result.student = QuantizedClassifier(teacher.clone(), options.weight_bits, options.act_bits);
  result.student.net.set_requires_grad(true);

  // Latent machinery.
  result.table = options.extracted_init
                     ? latent::init_embeddings_extracted(P.head_weight(),
                                                         options.freeze_embeddings)
                     : latent::init_embeddings_random(D, C, init_rng);
  if (options.freeze_embeddings) result.table.frozen = true;
  int64_t dm_out = options.dm_layers == 0 ? D : options.dm_out_dim;
  result.dm = latent::make_disentanglement_map(options.dm_layers, D, dm_out, init_rng);

  gen::GeneratorConfig gcfg;
  gcfg.latent_dim = result.dm.out_dim;
  gcfg.num_classes = C;
  gcfg.out_channels = data.spec().channels;
  gcfg.out_height = data.spec().height;
  gcfg.out_width = data.spec().width;
  gcfg.hidden = options.gen_hidden;
  gcfg.use_conditional_bn = options.conditional_bn;
  if (gcfg.out_dim() != P.cfg.in_dim)
    throw std::invalid_argument("run: generator output dim != classifier input dim");
  result.generator = gen::Generator(gcfg, init_rng);

  const loss::BNStatsSnapshot snapshot = capture_bn_snapshot(P);

  std::vector<Var> g_params = result.generator.parameters();
  for (const Var& v : result.table.parameters()) g_params.push_back(v);
  for (const Var& v : result.dm.parameters()) g_params.push_back(v);
  Adam g_opt(g_params, options.schedule.g_lr);
  SgdMomentum q_opt(result.student.parameters(), options.schedule.q_lr,
                    options.schedule.q_momentum, options.schedule.q_weight_decay,
                    options.schedule.q_nesterov);

  TrainContext ctx;
  ctx.G = &result.generator;
  ctx.Q = &result.student;
  ctx.P = &P;
  ctx.table = &result.table;
  ctx.dm = &result.dm;
  ctx.snapshot = &snapshot;
  ctx.g_opt = &g_opt;
  ctx.q_opt = &q_opt;
  ctx.spec = &spec;
  ctx.baseline = options.baseline;
  ctx.batch_size = options.schedule.batch_size;
  ctx.weights = options.weights;
  ctx.rng = &train_rng;

  RunHistory& history = result.history;
  history.seed = options.seed;
  history.config_echo = options.config_echo;

  auto evaluate = [&](int64_t epoch) {
    history.eval_accuracy.emplace_back(epoch, metrics::top1_accuracy(result.student, data.eval()));
  };
  auto save_checkpoint = [&](const std::string& name) {
    if (options.out_dir.empty()) return;
    bench::Checkpoint ck;
    ck.config_echo = options.config_echo;
    bench::pack_classifier(ck, "teacher.", P);
    bench::pack_quantized_classifier(ck, "student.", result.student);
    bench::pack_generator(ck, "gen.", result.generator);
    bench::pack_embeddings(ck, "latent.", result.table);
    bench::pack_disentanglement_map(ck, "dm.", result.dm);
    ck.save(options.out_dir + "/" + name);
  };

  evaluate(0);
  for (int64_t e = 0; e < options.schedule.epochs; ++e) {
    double scale = options.schedule.lr_scale_at(e);
    g_opt.lr = options.schedule.g_lr * scale;
    q_opt.lr = options.schedule.q_lr * scale;
    if (e > 0 && e % options.schedule.lr_decay_every_epochs == 0)
      save_checkpoint("ckpt_epoch_" + std::to_string(e) + ".dfq");

    for (int64_t it = 0; it < options.schedule.iters_per_epoch; ++it) {
      LossRecord rec = train_step(ctx, e, it);
      history.records.push_back(rec);
      if (!std::isfinite(rec.loss_g) || !std::isfinite(rec.loss_q)) {
        if (!options.out_dir.empty()) history.write_csv(options.out_dir + "/history.csv");
        throw std::runtime_error("run: non-finite loss at epoch " + std::to_string(e) +
                                 " iter " + std::to_string(it));
      }
    }
    bool last_epoch = e + 1 == options.schedule.epochs;
    if (last_epoch ||
        (options.eval_every_epochs > 0 && (e + 1) % options.eval_every_epochs == 0))
      evaluate(e + 1);
  }

  if (P.state_checksum() != teacher_checksum)
    throw std::logic_error("run: teacher parameters changed during training");
  if (data.train_reads() != train_reads_before)
    throw std::logic_error("run: data-free guard tripped (training split was read)");

  save_checkpoint("ckpt_final.dfq");
  if (!options.out_dir.empty()) {
    history.write_csv(options.out_dir + "/history.csv");
    history.write_eval_csv(options.out_dir + "/eval.csv");
  }
  return result;
}

}  // namespace dfq::train
