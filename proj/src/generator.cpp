#include "dfq/generator.hpp"

#include <stdexcept>

namespace dfq::gen {

CondBatchNorm::CondBatchNorm(int64_t num_classes, int64_t features)
    : gammas(Tensor::full({num_classes, features}, 1.0), true),
      betas(Tensor::zeros({num_classes, features}), true),
      running_mean(Tensor::zeros({features})),
      running_var(Tensor::full({features}, 1.0)) {}

Var CondBatchNorm::forward(const Var& x, const Tensor& soft_labels, Mode mode) {
  if (x.value().dim(1) != features())
    throw std::invalid_argument("CondBatchNorm: feature dim mismatch");
  if (soft_labels.dim(0) != x.value().dim(0) || soft_labels.dim(1) != gammas.value().dim(0))
    throw std::invalid_argument("CondBatchNorm: label shape mismatch");

  Var mean_v, var_v;
  if (mode == Mode::Train) {
    mean_v = col_mean(x);
    var_v = col_var(x);
    for (int64_t i = 0; i < features(); ++i) {
      running_mean[i] = (1.0 - momentum) * running_mean[i] + momentum * mean_v.value()[i];
      running_var[i] = (1.0 - momentum) * running_var[i] + momentum * var_v.value()[i];
    }
  } else {
    mean_v = Var(running_mean, false);
    var_v = Var(running_var, false);
  }

  Var xhat = mul_rowvec(sub_rowvec(x, mean_v), rsqrt_eps(var_v, eps));
  Var labels(soft_labels, false);
  Var gamma_eff = matmul(labels, gammas);  // [batch, F]
  Var beta_eff = matmul(labels, betas);
  return add(hadamard(xhat, gamma_eff), beta_eff);
}

Generator::Generator(GeneratorConfig cfg_in, Rng& rng) : cfg(std::move(cfg_in)) {
  int64_t d = cfg.latent_dim;
  for (int64_t h : cfg.hidden) {
    fc.emplace_back(d, h, rng);
    if (cfg.use_conditional_bn)
      cbn.emplace_back(cfg.num_classes, h);
    else
      bn.emplace_back(h);
    d = h;
  }
  out = Linear(d, cfg.out_dim(), rng);
}

Var Generator::forward(const Var& latents, const Tensor& soft_labels, Mode mode) {
  if (latents.value().dim(1) != cfg.latent_dim)
    throw std::invalid_argument("Generator: latent dim mismatch, got " +
                                latents.value().shape_str());
  Var h = latents;
  for (size_t i = 0; i < fc.size(); ++i) {
    h = fc[i].forward(h);
    h = cfg.use_conditional_bn ? cbn[i].forward(h, soft_labels, mode)
                               : bn[i].forward(h, mode);
    h = leaky_relu(h, 0.2);
  }
  return vtanh(out.forward(h));
}

std::vector<Var> Generator::parameters() {
  std::vector<Var> params;
  for (auto& l : fc) {
    params.push_back(l.W);
    params.push_back(l.b);
  }
  for (auto& c : cbn) {
    params.push_back(c.gammas);
    params.push_back(c.betas);
  }
  for (auto& n : bn) {
    params.push_back(n.gamma);
    params.push_back(n.beta);
  }
  params.push_back(out.W);
  params.push_back(out.b);
  return params;
}

SyntheticBatch generate(Generator& g, const latent::LatentBatch& latents, Mode mode) {
  SyntheticBatch batch;
  Var x = g.forward(Var(latents.vectors, false), latents.soft_labels, mode);
  batch.samples = x.value();
  batch.soft_labels = latents.soft_labels;
  batch.sample_shape = {g.cfg.out_channels, g.cfg.out_height, g.cfg.out_width};
  return batch;
}

}  // namespace dfq::gen
