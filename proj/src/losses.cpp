#include "dfq/losses.hpp"

#include <stdexcept>

namespace dfq::loss {

Var bns_loss(const std::vector<BatchStats>& batch_stats, const BNStatsSnapshot& snapshot) {
  if (batch_stats.size() != snapshot.layer_count())
    throw std::invalid_argument("bns_loss: batch stats and snapshot disagree on layer count");
  if (snapshot.layer_count() == 0) return Var(Tensor::scalar(0.0), false);

  Var total;
  for (size_t i = 0; i < batch_stats.size(); ++i) {
    Var term = add(sum_sq_diff(batch_stats[i].mean, snapshot.means[i]),
                   sum_sq_diff(batch_stats[i].var, snapshot.vars[i]));
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, 1.0 / static_cast<double>(snapshot.layer_count()));
}

Var kd_loss(const Var& student_logits, const Tensor& teacher_logits) {
  return kl_divergence(teacher_logits, student_logits);
}

GeneratorLossParts generator_loss(const Var& samples, const Tensor& soft_labels, Classifier& fp,
                                  const BNStatsSnapshot& snapshot, const LossWeights& weights) {
  std::vector<BatchStats> captured;
  Var logits = fp.forward(samples, Mode::Eval, &captured);
  Var ce = soft_cross_entropy(logits, soft_labels);
  Var bns = bns_loss(captured, snapshot);

  GeneratorLossParts parts;
  parts.ce = ce.value()[0];
  parts.bns = bns.value()[0];
  parts.total = weights.alpha == 0.0 ? ce : add(ce, scale(bns, weights.alpha));
  return parts;
}

StudentLossParts student_loss(const Tensor& samples, const Tensor& soft_labels,
                              QuantizedClassifier& q, Classifier& fp, const LossWeights& weights) {
  Var x(samples, false);
  Var student_logits = q.forward(x, Mode::Train);
  Tensor teacher_logits = fp.forward(x, Mode::Eval).value();

  Var ce = soft_cross_entropy(student_logits, soft_labels);
  Var kd = kd_loss(student_logits, teacher_logits);

  StudentLossParts parts;
  parts.ce = ce.value()[0];
  parts.kd = kd.value()[0];
  parts.total = weights.delta == 0.0 ? ce : add(ce, scale(kd, weights.delta));
  return parts;
}

}  // namespace dfq::loss
