#include "dfq/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace dfq::bench {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

int64_t to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int64_t r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (...) {
    throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (...) {
    throw ConfigError("config: bad number for " + key + ": '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

std::vector<int64_t> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_int(key, trim(item)));
  if (out.empty()) throw ConfigError("config: empty list for " + key);
  return out;
}

}  // namespace

std::pair<int64_t, int64_t> parse_bits(const std::string& notation) {
  // nwma, e.g. "4w4a": n-bit weights, m-bit activations.
  size_t w = notation.find('w');
  size_t a = notation.find('a');
  if (w == std::string::npos || a == std::string::npos || a != notation.size() - 1 || w == 0 ||
      a <= w + 1)
    throw ConfigError("bad bits notation '" + notation + "' (expected e.g. 4w4a)");
  int64_t wb = to_int("bits", notation.substr(0, w));
  int64_t ab = to_int("bits", notation.substr(w + 1, a - w - 1));
  if (wb < 2 || wb > 16 || ab < 2 || ab > 16)
    throw ConfigError("bits out of range in '" + notation + "'");
  return {wb, ab};
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_string(ss.str());
}

RunConfig RunConfig::parse_string(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": bad section header");
      section = s.substr(1, s.size() - 2);
      continue;
    }
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    std::string qual = section + "." + key;

    if (qual == "run.seed") cfg.seed = static_cast<uint64_t>(to_int(qual, value));
    else if (qual == "run.out_dir") cfg.out_dir = value;
    else if (qual == "run.teacher_checkpoint") cfg.teacher_checkpoint = value;
    else if (qual == "run.baseline") {
      if (value != "none" && value != "noise-only" && value != "mixup")
        throw ConfigError("config: unknown baseline '" + value + "'");
      cfg.baseline = value;
    }
    else if (qual == "dataset.num_classes") cfg.dataset.num_classes = to_int(qual, value);
    else if (qual == "dataset.train_per_class") cfg.dataset.train_per_class = to_int(qual, value);
    else if (qual == "dataset.eval_per_class") cfg.dataset.eval_per_class = to_int(qual, value);
    else if (qual == "dataset.channels") cfg.dataset.channels = to_int(qual, value);
    else if (qual == "dataset.height") cfg.dataset.height = to_int(qual, value);
    else if (qual == "dataset.width") cfg.dataset.width = to_int(qual, value);
    else if (qual == "dataset.separation") cfg.dataset.separation = to_double(qual, value);
    else if (qual == "dataset.radius") cfg.dataset.radius = to_double(qual, value);
    else if (qual == "dataset.seed") cfg.dataset.seed = static_cast<uint64_t>(to_int(qual, value));
    else if (qual == "pretrain.epochs") cfg.pretrain_epochs = to_int(qual, value);
    else if (qual == "pretrain.batch_size") cfg.pretrain_batch = to_int(qual, value);
    else if (qual == "pretrain.lr") cfg.pretrain_lr = to_double(qual, value);
    else if (qual == "quant.bits") {
      auto [wb, ab] = parse_bits(value);
      cfg.weight_bits = wb;
      cfg.act_bits = ab;
    }
    else if (qual == "quant.weight_bits") cfg.weight_bits = to_int(qual, value);
    else if (qual == "quant.act_bits") cfg.act_bits = to_int(qual, value);
    else if (qual == "latent.k") cfg.k = to_int(qual, value);
    else if (qual == "latent.p") cfg.p = to_double(qual, value);
    else if (qual == "latent.sigma_z") cfg.sigma_z = to_double(qual, value);
    else if (qual == "latent.dm_layers") cfg.dm_layers = to_int(qual, value);
    else if (qual == "latent.dm_out_dim") cfg.dm_out_dim = to_int(qual, value);
    else if (qual == "latent.extracted_init") cfg.extracted_init = to_bool(qual, value);
    else if (qual == "latent.freeze_embeddings") cfg.freeze_embeddings = to_bool(qual, value);
    else if (qual == "generator.hidden") cfg.gen_hidden = to_int_list(qual, value);
    else if (qual == "generator.conditional_bn") cfg.conditional_bn = to_bool(qual, value);
    else if (qual == "schedule.epochs") cfg.schedule.epochs = to_int(qual, value);
    else if (qual == "schedule.iters_per_epoch") cfg.schedule.iters_per_epoch = to_int(qual, value);
    else if (qual == "schedule.batch_size") cfg.schedule.batch_size = to_int(qual, value);
    else if (qual == "schedule.g_lr") cfg.schedule.g_lr = to_double(qual, value);
    else if (qual == "schedule.q_lr") cfg.schedule.q_lr = to_double(qual, value);
    else if (qual == "schedule.q_momentum") cfg.schedule.q_momentum = to_double(qual, value);
    else if (qual == "schedule.q_weight_decay") cfg.schedule.q_weight_decay = to_double(qual, value);
    else if (qual == "schedule.q_nesterov") cfg.schedule.q_nesterov = to_bool(qual, value);
    else if (qual == "schedule.lr_decay_factor") cfg.schedule.lr_decay_factor = to_double(qual, value);
    else if (qual == "schedule.lr_decay_every_epochs") cfg.schedule.lr_decay_every_epochs = to_int(qual, value);
    else if (qual == "loss.alpha") cfg.alpha = to_double(qual, value);
    else if (qual == "loss.delta") cfg.delta = to_double(qual, value);
    else throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + qual + "'");
  }
  cfg.validate();
  return cfg;
}

std::string RunConfig::echo() const {
  std::ostringstream o;
  o.precision(17);
  o << "[run]\n";
  o << "seed=" << seed << "\n";
  o << "out_dir=" << out_dir << "\n";
  if (!teacher_checkpoint.empty()) o << "teacher_checkpoint=" << teacher_checkpoint << "\n";
  o << "baseline=" << baseline << "\n";
  o << "[dataset]\n";
  o << "num_classes=" << dataset.num_classes << "\n";
  o << "train_per_class=" << dataset.train_per_class << "\n";
  o << "eval_per_class=" << dataset.eval_per_class << "\n";
  o << "channels=" << dataset.channels << "\n";
  o << "height=" << dataset.height << "\n";
  o << "width=" << dataset.width << "\n";
  o << "separation=" << dataset.separation << "\n";
  o << "radius=" << dataset.radius << "\n";
  o << "seed=" << dataset.seed << "\n";
  o << "[pretrain]\n";
  o << "epochs=" << pretrain_epochs << "\n";
  o << "batch_size=" << pretrain_batch << "\n";
  o << "lr=" << pretrain_lr << "\n";
  o << "[quant]\n";
  o << "weight_bits=" << weight_bits << "\n";
  o << "act_bits=" << act_bits << "\n";
  o << "[latent]\n";
  o << "k=" << k << "\n";
  o << "p=" << p << "\n";
  o << "sigma_z=" << sigma_z << "\n";
  o << "dm_layers=" << dm_layers << "\n";
  o << "dm_out_dim=" << dm_out_dim << "\n";
  o << "extracted_init=" << (extracted_init ? "true" : "false") << "\n";
  o << "freeze_embeddings=" << (freeze_embeddings ? "true" : "false") << "\n";
  o << "[generator]\n";
  o << "hidden=";
  for (size_t i = 0; i < gen_hidden.size(); ++i) o << (i ? "," : "") << gen_hidden[i];
  o << "\n";
  o << "conditional_bn=" << (conditional_bn ? "true" : "false") << "\n";
  o << "[schedule]\n";
  o << "epochs=" << schedule.epochs << "\n";
  o << "iters_per_epoch=" << schedule.iters_per_epoch << "\n";
  o << "batch_size=" << schedule.batch_size << "\n";
  o << "g_lr=" << schedule.g_lr << "\n";
  o << "q_lr=" << schedule.q_lr << "\n";
  o << "q_momentum=" << schedule.q_momentum << "\n";
  o << "q_weight_decay=" << schedule.q_weight_decay << "\n";
  o << "q_nesterov=" << (schedule.q_nesterov ? "true" : "false") << "\n";
  o << "lr_decay_factor=" << schedule.lr_decay_factor << "\n";
  o << "lr_decay_every_epochs=" << schedule.lr_decay_every_epochs << "\n";
  o << "[loss]\n";
  o << "alpha=" << alpha << "\n";
  o << "delta=" << delta << "\n";
  return o.str();
}

train::TrainOptions RunConfig::train_options() const {
  train::TrainOptions opt;
  opt.schedule = schedule;
  opt.superposition.k = k;
  opt.superposition.p = baseline == "noise-only" ? 0.0 : p;
  opt.superposition.sigma_z = sigma_z;
  opt.superposition.seed = seed;
  opt.weight_bits = weight_bits;
  opt.act_bits = act_bits;
  opt.dm_layers = dm_layers;
  opt.dm_out_dim = dm_out_dim;
  opt.extracted_init = extracted_init;
  opt.freeze_embeddings = freeze_embeddings;
  opt.gen_hidden = gen_hidden;
  opt.conditional_bn = conditional_bn;
  opt.seed = seed;
  opt.weights.alpha = alpha;
  opt.weights.delta = delta;
  if (baseline == "noise-only") opt.baseline = train::Baseline::NoiseOnly;
  else if (baseline == "mixup") opt.baseline = train::Baseline::SampleMixup;
  else opt.baseline = train::Baseline::None;
  return opt;
}

void RunConfig::validate() const {
  dataset.validate();
  schedule.validate();
  if (weight_bits < 2 || weight_bits > 16 || act_bits < 2 || act_bits > 16)
    throw ConfigError("config: bits out of range");
  if (k < 1 || k > dataset.num_classes) throw ConfigError("config: latent.k out of range");
  if (p < 0 || p > 1) throw ConfigError("config: latent.p outside [0,1]");
  if (sigma_z <= 0) throw ConfigError("config: latent.sigma_z must be positive");
  if (dm_layers < 0) throw ConfigError("config: latent.dm_layers negative");
  if (alpha < 0 || delta < 0) throw ConfigError("config: loss weights must be non-negative");
  if (baseline != "none" && baseline != "noise-only" && baseline != "mixup")
    throw ConfigError("config: unknown baseline '" + baseline + "'");
}

}  // namespace dfq::bench
