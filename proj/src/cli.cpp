#include "dfq/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "dfq/checkpoint.hpp"
#include "dfq/config.hpp"
#include "dfq/ioutil.hpp"
#include "dfq/metrics.hpp"
#include "dfq/plots.hpp"
#include "dfq/pretrain.hpp"
#include "dfq/trainer.hpp"

namespace dfq::bench {

namespace {

namespace fs = std::filesystem;

struct CliOverrides {
  std::string config_path;
  std::string teacher_path;
  std::string out_dir;
  std::string bits;
  std::string baseline;
  int64_t seed = -1;
  int64_t k = -1;
  double p = -1;
  double sigma_z = -1;
  int64_t dm_layers = -1;
  bool freeze_embeddings = false;
  bool no_ee_init = false;
};

RunConfig load_config(const CliOverrides& ov) {
  if (ov.config_path.empty()) throw ConfigError("--config is required");
  RunConfig cfg = RunConfig::parse_file(ov.config_path);
  if (ov.seed >= 0) cfg.seed = static_cast<uint64_t>(ov.seed);
  if (!ov.out_dir.empty()) cfg.out_dir = ov.out_dir;
  if (!ov.teacher_path.empty()) cfg.teacher_checkpoint = ov.teacher_path;
  if (!ov.bits.empty()) {
    auto [wb, ab] = parse_bits(ov.bits);
    cfg.weight_bits = wb;
    cfg.act_bits = ab;
  }
  if (ov.k >= 0) cfg.k = ov.k;
  if (ov.p >= 0) cfg.p = ov.p;
  if (ov.sigma_z >= 0) cfg.sigma_z = ov.sigma_z;
  if (ov.dm_layers >= 0) cfg.dm_layers = ov.dm_layers;
  if (ov.freeze_embeddings) cfg.freeze_embeddings = true;
  if (ov.no_ee_init) cfg.extracted_init = false;
  if (!ov.baseline.empty()) cfg.baseline = ov.baseline;
  cfg.validate();
  return cfg;
}

void add_common_flags(CLI::App* cmd, CliOverrides& ov) {
  cmd->add_option("--config", ov.config_path, "run configuration file");
  cmd->add_option("--seed", ov.seed, "override [run] seed");
  cmd->add_option("--out", ov.out_dir, "override output directory");
}

void add_distill_flags(CLI::App* cmd, CliOverrides& ov) {
  cmd->add_option("--teacher", ov.teacher_path, "teacher checkpoint path");
  cmd->add_option("--bits", ov.bits, "quantization bits, nwma notation (e.g. 4w4a)");
  cmd->add_option("--k", ov.k, "classes superposed per sample");
  cmd->add_option("--p", ov.p, "superposed batch fraction");
  cmd->add_option("--sigma-z", ov.sigma_z, "latent noise stddev");
  cmd->add_option("--dm-layers", ov.dm_layers, "disentanglement map layer count");
  cmd->add_flag("--freeze-embeddings", ov.freeze_embeddings,
                "freeze the embedding table after initialization");
  cmd->add_flag("--no-ee-init", ov.no_ee_init, "random embedding init instead of extracted");
  cmd->add_option("--baseline", ov.baseline, "none | noise-only | mixup")
      ->check(CLI::IsMember({"none", "noise-only", "mixup"}));
}

int run_pretrain(const CliOverrides& ov) {
  RunConfig cfg = load_config(ov);
  fs::create_directories(cfg.out_dir);
  ToyDataset data = make_toy_dataset(cfg.dataset);

  PretrainOptions popt;
  popt.epochs = cfg.pretrain_epochs;
  popt.batch_size = cfg.pretrain_batch;
  popt.lr = cfg.pretrain_lr;
  popt.seed = cfg.seed;
  PretrainResult res = pretrain_reference_model(data, popt);

  Checkpoint ck;
  ck.config_echo = cfg.echo();
  pack_classifier(ck, "teacher.", res.model);
  std::string path = cfg.out_dir + "/teacher.dfq";
  ck.save(path);

  std::string hist = "epoch,loss\n";
  for (size_t i = 0; i < res.epoch_loss.size(); ++i)
    hist += std::to_string(i) + "," + fmt_double(res.epoch_loss[i]) + "\n";
  write_text_atomic(cfg.out_dir + "/pretrain_history.csv", hist);
  write_text_atomic(cfg.out_dir + "/config_echo.cfg", cfg.echo());

  std::cout << "teacher checkpoint: " << path << "\n"
            << "eval top1: " << fmt_double(res.eval_accuracy) << "\n";
  return 0;
}

int run_distill(const CliOverrides& ov) {
  RunConfig cfg = load_config(ov);
  if (cfg.teacher_checkpoint.empty())
    throw ConfigError("distill: no teacher checkpoint (set [run] teacher_checkpoint or --teacher)");
  if (!fs::exists(cfg.teacher_checkpoint))
    throw std::runtime_error("distill: teacher checkpoint not found: " + cfg.teacher_checkpoint);
  fs::create_directories(cfg.out_dir);

  Checkpoint teacher_ck = Checkpoint::load(cfg.teacher_checkpoint);
  Classifier teacher = unpack_classifier(teacher_ck, "teacher.");
  ToyDataset data = make_toy_dataset(cfg.dataset);

  train::TrainOptions opt = cfg.train_options();
  opt.out_dir = cfg.out_dir;
  opt.config_echo = cfg.echo();
  train::TrainResult res = train::run(teacher, data, opt);

  write_text_atomic(cfg.out_dir + "/config_echo.cfg", cfg.echo());
  double final_acc = res.history.eval_accuracy.empty() ? 0.0
                                                       : res.history.eval_accuracy.back().second;
  std::cout << "distilled checkpoint: " << cfg.out_dir << "/ckpt_final.dfq\n"
            << "final top1: " << fmt_double(final_acc) << "\n";
  return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& data_cfg_path) {
  Checkpoint ck = Checkpoint::load(ckpt_path);
  RunConfig data_cfg = RunConfig::parse_file(data_cfg_path);
  ToyDataset data = make_toy_dataset(data_cfg.dataset);

  double acc;
  if (ck.has("student.meta")) {
    QuantizedClassifier q = unpack_quantized_classifier(ck, "student.");
    q.freeze_ranges();
    acc = metrics::top1_accuracy(q, data.eval());
    std::cout << "model: student (" << q.weight_bits << "w" << q.act_bits << "a)\n";
  } else {
    Classifier c = unpack_classifier(ck, "teacher.");
    acc = metrics::top1_accuracy(c, data.eval());
    std::cout << "model: teacher (full precision)\n";
  }
  std::cout << "eval top1: " << fmt_double(acc) << "\n";
  return 0;
}

struct VizModels {
  RunConfig cfg;
  Classifier teacher;
  gen::Generator generator;
  latent::EmbeddingTable table;
  latent::DisentanglementMap dm;
};

VizModels load_viz_models(const std::string& ckpt_path) {
  Checkpoint ck = Checkpoint::load(ckpt_path);
  if (!ck.has("gen.meta"))
    throw std::runtime_error("viz: checkpoint has no generator (need a distill checkpoint)");
  VizModels m;
  m.cfg = RunConfig::parse_string(ck.config_echo);
  m.teacher = unpack_classifier(ck, "teacher.");
  m.generator = unpack_generator(ck, "gen.");
  m.table = unpack_embeddings(ck, "latent.");
  m.dm = unpack_disentanglement_map(ck, "dm.");
  return m;
}

/// Regular (one-hot) synthetic samples for one class, with latent noise.
Tensor synth_regular(VizModels& m, int64_t cls, int64_t count, Rng& rng) {
  const int64_t C = m.table.classes();
  Tensor labels({count, C});
  for (int64_t r = 0; r < count; ++r) labels.at(r, cls) = 1.0;
  Tensor noise = rng.randn({count, m.dm.out_dim}, m.cfg.sigma_z);
  Var lat = latent::latent_vectors(m.table, m.dm, labels, noise);
  return m.generator.forward(Var(lat.value(), false), labels, Mode::Eval).value();
}

int run_viz_pca(const std::string& ckpt_path, const std::string& out_dir) {
  VizModels m = load_viz_models(ckpt_path);
  fs::create_directories(out_dir);
  Rng rng(1234);

  ToyDataset data = make_toy_dataset(m.cfg.dataset);
  const int64_t C = m.table.classes();
  const int64_t per_class = 30;

  std::vector<metrics::FeatureExtraction> groups;
  // Real eval samples (reporting only).
  groups.push_back(metrics::extract_features(m.teacher, data.eval().x, data.eval().y,
                                             metrics::SourceTag::Real));
  // Regular synthetic per class.
  for (int64_t c = 0; c < C; ++c) {
    Tensor s = synth_regular(m, c, per_class, rng);
    groups.push_back(metrics::extract_features(
        m.teacher, s, std::vector<int64_t>(static_cast<size_t>(per_class), c),
        metrics::SourceTag::SyntheticRegular));
  }
  // Superposed synthetic: pairs, lambda from the mixing distribution.
  {
    const int64_t count = per_class * C;
    Tensor labels({count, C});
    std::vector<int64_t> dominant(static_cast<size_t>(count));
    for (int64_t r = 0; r < count; ++r) {
      auto classes = rng.choice_without_replacement(C, 2);
      auto lambda = latent::sample_mixing_coefficients(2, rng);
      labels.at(r, classes[0]) = lambda[0];
      labels.at(r, classes[1]) = lambda[1];
      dominant[static_cast<size_t>(r)] = lambda[0] >= lambda[1] ? classes[0] : classes[1];
    }
    Tensor noise = rng.randn({count, m.dm.out_dim}, m.cfg.sigma_z);
    Var lat = latent::latent_vectors(m.table, m.dm, labels, noise);
    Tensor s = m.generator.forward(Var(lat.value(), false), labels, Mode::Eval).value();
    groups.push_back(
        metrics::extract_features(m.teacher, s, dominant, metrics::SourceTag::SyntheticSuperposed));
  }

  int64_t total = 0;
  for (const auto& g : groups) total += g.features.dim(0);
  Tensor all({total, groups[0].features.dim(1)});
  int64_t row = 0;
  for (const auto& g : groups)
    for (int64_t r = 0; r < g.features.dim(0); ++r, ++row)
      for (int64_t c = 0; c < g.features.dim(1); ++c) all.at(row, c) = g.features.at(r, c);

  metrics::PcaResult pca = metrics::pca_project(all, 2);

  CsvTable t;
  t.columns = {"x", "y", "label", "source"};
  row = 0;
  for (const auto& g : groups) {
    for (int64_t r = 0; r < g.features.dim(0); ++r, ++row) {
      const char* source = g.tags[static_cast<size_t>(r)] == metrics::SourceTag::Real
                               ? "real"
                               : g.tags[static_cast<size_t>(r)] ==
                                         metrics::SourceTag::SyntheticRegular
                                     ? "regular"
                                     : "superposed";
      t.rows.push_back({fmt_double(pca.projected.at(row, 0)), fmt_double(pca.projected.at(row, 1)),
                        std::to_string(g.labels[static_cast<size_t>(r)]), source});
    }
  }
  t.write(out_dir + "/pca_points.csv");
  write_pca_scatter_svg(t, out_dir + "/pca.svg");
  std::cout << "wrote " << out_dir << "/pca_points.csv and pca.svg (explained variance "
            << fmt_double(pca.explained[0]) << ", " << fmt_double(pca.explained[1]) << ")\n";
  return 0;
}

int run_viz_path(const std::string& ckpt_path, const std::string& out_dir,
                 const std::string& pair_arg) {
  VizModels m = load_viz_models(ckpt_path);
  fs::create_directories(out_dir);
  Rng rng(1234);

  int64_t y1 = 0, y2 = 1;
  if (!pair_arg.empty()) {
    size_t comma = pair_arg.find(',');
    if (comma == std::string::npos) throw ConfigError("--pair expects 'a,b'");
    y1 = std::stoll(pair_arg.substr(0, comma));
    y2 = std::stoll(pair_arg.substr(comma + 1));
  }

  metrics::PairDiagnostics diag =
      metrics::pair_path_diagnostics(m.generator, m.dm, m.table, m.teacher, y1, y2);

  // Cluster clouds of the two classes for context.
  const int64_t per_class = 60;
  Tensor s1 = synth_regular(m, y1, per_class, rng);
  Tensor s2 = synth_regular(m, y2, per_class, rng);
  auto f1 = metrics::extract_features(m.teacher, s1,
                                      std::vector<int64_t>(static_cast<size_t>(per_class), y1),
                                      metrics::SourceTag::SyntheticRegular);
  auto f2 = metrics::extract_features(m.teacher, s2,
                                      std::vector<int64_t>(static_cast<size_t>(per_class), y2),
                                      metrics::SourceTag::SyntheticRegular);

  const int64_t steps = diag.path_features.dim(0);
  const int64_t F = diag.path_features.dim(1);
  Tensor all({per_class * 2 + steps, F});
  int64_t row = 0;
  for (int64_t r = 0; r < per_class; ++r, ++row)
    for (int64_t c = 0; c < F; ++c) all.at(row, c) = f1.features.at(r, c);
  for (int64_t r = 0; r < per_class; ++r, ++row)
    for (int64_t c = 0; c < F; ++c) all.at(row, c) = f2.features.at(r, c);
  for (int64_t r = 0; r < steps; ++r, ++row)
    for (int64_t c = 0; c < F; ++c) all.at(row, c) = diag.path_features.at(r, c);

  metrics::PcaResult pca = metrics::pca_project(all, 2);

  CsvTable clouds;
  clouds.columns = {"x", "y", "label"};
  row = 0;
  for (int64_t r = 0; r < per_class; ++r, ++row)
    clouds.rows.push_back({fmt_double(pca.projected.at(row, 0)),
                           fmt_double(pca.projected.at(row, 1)), std::to_string(y1)});
  for (int64_t r = 0; r < per_class; ++r, ++row)
    clouds.rows.push_back({fmt_double(pca.projected.at(row, 0)),
                           fmt_double(pca.projected.at(row, 1)), std::to_string(y2)});

  CsvTable pathcsv;
  pathcsv.columns = {"x", "y", "index"};
  for (int64_t r = 0; r < steps; ++r, ++row)
    pathcsv.rows.push_back({fmt_double(pca.projected.at(row, 0)),
                            fmt_double(pca.projected.at(row, 1)), std::to_string(r)});

  clouds.write(out_dir + "/path_clouds.csv");
  pathcsv.write(out_dir + "/path_points.csv");
  write_path_plot_svg(pathcsv, &clouds, out_dir + "/path.svg");
  std::cout << "pair (" << y1 << "," << y2 << "): distance_ratio "
            << fmt_double(diag.distance_ratio) << ", intrusion "
            << fmt_double(diag.intrusion_score) << "\n";
  return 0;
}

int run_viz_table4(const std::string& ckpt_path, const std::string& out_dir) {
  VizModels m = load_viz_models(ckpt_path);
  fs::create_directories(out_dir);

  const int64_t C = m.table.classes();
  CsvTable t;
  t.columns = {"y1",
               "y2",
               "distance_ratio",
               "intrusion_score",
               "mixup_distance_ratio",
               "mixup_intrusion_score"};
  double sum_dr = 0, sum_in = 0, sum_mdr = 0, sum_min = 0;
  int64_t pairs = 0;
  for (int64_t a = 0; a < C; ++a) {
    for (int64_t b = a + 1; b < C; ++b) {
      auto se = metrics::pair_path_diagnostics(m.generator, m.dm, m.table, m.teacher, a, b);
      auto mx = metrics::mixup_path_diagnostics(m.generator, m.dm, m.table, m.teacher, a, b);
      t.rows.push_back({std::to_string(a), std::to_string(b), fmt_double(se.distance_ratio),
                        fmt_double(se.intrusion_score), fmt_double(mx.distance_ratio),
                        fmt_double(mx.intrusion_score)});
      sum_dr += se.distance_ratio;
      sum_in += se.intrusion_score;
      sum_mdr += mx.distance_ratio;
      sum_min += mx.intrusion_score;
      ++pairs;
    }
  }
  t.write(out_dir + "/table4.csv");
  std::cout << "pairs: " << pairs << "\n"
            << "mean distance_ratio: superposed " << fmt_double(sum_dr / pairs) << " vs mixup "
            << fmt_double(sum_mdr / pairs) << "\n"
            << "mean intrusion: superposed " << fmt_double(sum_in / pairs) << " vs mixup "
            << fmt_double(sum_min / pairs) << "\n";
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"data-free quantization workbench"};
  app.require_subcommand(1);

  CliOverrides ov;
  CLI::App* pretrain_cmd = app.add_subcommand("pretrain", "train the full-precision teacher");
  add_common_flags(pretrain_cmd, ov);

  CLI::App* distill_cmd =
      app.add_subcommand("distill", "data-free quantization run against a teacher checkpoint");
  add_common_flags(distill_cmd, ov);
  add_distill_flags(distill_cmd, ov);

  std::string eval_ckpt, eval_data;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset config");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "config file providing the [dataset] section")
      ->required();

  std::string viz_ckpt, viz_out, viz_pair;
  CLI::App* viz_cmd = app.add_subcommand("viz", "visualization and metric exports");
  viz_cmd->require_subcommand(1);
  CLI::App* viz_pca = viz_cmd->add_subcommand("pca", "feature-space PCA scatter");
  CLI::App* viz_path = viz_cmd->add_subcommand("path", "centroid-to-centroid feature path");
  CLI::App* viz_table4 = viz_cmd->add_subcommand("table4", "distance ratio and intrusion per pair");
  for (CLI::App* c : {viz_pca, viz_path, viz_table4}) {
    c->add_option("--checkpoint", viz_ckpt, "distill checkpoint")->required();
    c->add_option("--out", viz_out, "output directory")->required();
  }
  viz_path->add_option("--pair", viz_pair, "class pair 'a,b' (default 0,1)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (pretrain_cmd->parsed()) return run_pretrain(ov);
    if (distill_cmd->parsed()) return run_distill(ov);
    if (eval_cmd->parsed()) return run_eval(eval_ckpt, eval_data);
    if (viz_cmd->parsed()) {
      if (viz_pca->parsed()) return run_viz_pca(viz_ckpt, viz_out);
      if (viz_path->parsed()) return run_viz_path(viz_ckpt, viz_out, viz_pair);
      if (viz_table4->parsed()) return run_viz_table4(viz_ckpt, viz_out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace dfq::bench
