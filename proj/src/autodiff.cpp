#include "dfq/autodiff.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace dfq {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

namespace {

ECMap as_mat(const Tensor& t) {
  if (t.rank() != 2) throw std::invalid_argument("expected rank-2 tensor, got " + t.shape_str());
  return ECMap(t.data(), t.dim(0), t.dim(1));
}

EMap as_mat(Tensor& t) {
  if (t.rank() != 2) throw std::invalid_argument("expected rank-2 tensor, got " + t.shape_str());
  return EMap(t.data(), t.dim(0), t.dim(1));
}

bool any_requires_grad(std::initializer_list<const Var*> vars) {
  for (const Var* v : vars)
    if (v->requires_grad()) return true;
  return false;
}

std::shared_ptr<Node> make_node(Tensor value, std::vector<std::shared_ptr<Node>> parents,
                                bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  n->requires_grad = requires_grad;
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.value().shape_str() +
                                " vs " + b.value().shape_str());
}

}  // namespace

void Node::accum_grad(const Tensor& g) {
  if (grad.numel() == 0) {
    grad = g;
    return;
  }
  for (int64_t i = 0; i < grad.numel(); ++i) grad[i] += g[i];
}

Var::Var(Tensor value, bool requires_grad) {
  node_ = std::make_shared<Node>();
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void backward(const Var& loss) {
  if (!loss.defined() || loss.value().numel() != 1)
    throw std::invalid_argument("backward: loss must be a defined scalar");

  // Iterative post-order DFS over parents.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({loss.node().get(), 0});
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx == 0 && visited.count(n)) {
      stack.pop_back();
      continue;
    }
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx].get();
      ++idx;
      if (!visited.count(p)) stack.push_back({p, 0});
    } else {
      visited.insert(n);
      order.push_back(n);
      stack.pop_back();
    }
  }

  loss.node()->accum_grad(Tensor::scalar(1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.numel() > 0) n->backward_fn(n->grad);
  }
}

// ---------------------------------------------------------------------

Tensor matmul_values(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " + a.shape_str() + " x " +
                                b.shape_str());
  Tensor out({a.dim(0), b.dim(1)});
  as_mat(out) = as_mat(a) * as_mat(b);
  return out;
}

Tensor transpose_values(const Tensor& a) {
  Tensor out({a.dim(1), a.dim(0)});
  as_mat(out) = as_mat(a).transpose();
  return out;
}

Var matmul(const Var& a, const Var& b) {
  Tensor value = matmul_values(a.value(), b.value());
  bool rg = any_requires_grad({&a, &b});
  auto node = make_node(std::move(value), {a.node(), b.node()}, rg);
  if (rg) {
    auto an = a.node(), bn = b.node();
    node->backward_fn = [an, bn](const Tensor& up) {
      if (an->requires_grad) {
        Tensor ga({an->value.dim(0), an->value.dim(1)});
        as_mat(ga) = as_mat(up) * as_mat(bn->value).transpose();
        an->accum_grad(ga);
      }
      if (bn->requires_grad) {
        Tensor gb({bn->value.dim(0), bn->value.dim(1)});
        as_mat(gb) = as_mat(an->value).transpose() * as_mat(up);
        bn->accum_grad(gb);
      }
    };
  }
  return Var::from_node(node);
}

Var transpose(const Var& a) {
  Tensor value = transpose_values(a.value());
  bool rg = a.requires_grad();
  auto node = make_node(std::move(value), {a.node()}, rg);
  if (rg) {
    auto an = a.node();
    node->backward_fn = [an](const Tensor& up) { an->accum_grad(transpose_values(up)); };
  }
  return Var::from_node(node);
}

namespace {

Var elementwise_binary(const Var& a, const Var& b, const char* name,
                       double (*fwd)(double, double), double (*da)(double, double),
                       double (*db)(double, double)) {
  check_same_shape(a, b, name);
  Tensor value(a.value().shape());
  for (int64_t i = 0; i < value.numel(); ++i) value[i] = fwd(a.value()[i], b.value()[i]);
  bool rg = any_requires_grad({&a, &b});
  auto node = make_node(std::move(value), {a.node(), b.node()}, rg);
  if (rg) {
    auto an = a.node(), bn = b.node();
    node->backward_fn = [an, bn, da, db](const Tensor& up) {
      if (an->requires_grad) {
        Tensor g(up.shape());
        for (int64_t i = 0; i < g.numel(); ++i) g[i] = up[i] * da(an->value[i], bn->value[i]);
        an->accum_grad(g);
      }
      if (bn->requires_grad) {
        Tensor g(up.shape());
        for (int64_t i = 0; i < g.numel(); ++i) g[i] = up[i] * db(an->value[i], bn->value[i]);
        bn->accum_grad(g);
      }
    };
  }
  return Var::from_node(node);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return elementwise_binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return elementwise_binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var hadamard(const Var& a, const Var& b) {
  return elementwise_binary(
      a, b, "hadamard", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

namespace {

// Shared implementation for the {add,sub,mul}_rowvec family.
enum class RowOp { Add, Sub, Mul };

Var rowvec_op(const Var& x, const Var& v, RowOp op) {
  const Tensor& xv = x.value();
  const Tensor& vv = v.value();
  if (xv.rank() != 2 || vv.numel() != xv.dim(1))
    throw std::invalid_argument("rowvec op: need [m,n] and [n], got " + xv.shape_str() + " and " +
                                vv.shape_str());
  int64_t m = xv.dim(0), n = xv.dim(1);
  Tensor value({m, n});
  for (int64_t r = 0; r < m; ++r)
    for (int64_t c = 0; c < n; ++c) {
      double a = xv.at(r, c), b = vv[c];
      value.at(r, c) = op == RowOp::Add ? a + b : op == RowOp::Sub ? a - b : a * b;
    }
  bool rg = any_requires_grad({&x, &v});
  auto node = make_node(std::move(value), {x.node(), v.node()}, rg);
  if (rg) {
    auto xn = x.node(), vn = v.node();
    node->backward_fn = [xn, vn, op, m, n](const Tensor& up) {
      if (xn->requires_grad) {
        Tensor g(up.shape());
        for (int64_t r = 0; r < m; ++r)
          for (int64_t c = 0; c < n; ++c)
            g.at(r, c) = op == RowOp::Mul ? up.at(r, c) * vn->value[c] : up.at(r, c);
        xn->accum_grad(g);
      }
      if (vn->requires_grad) {
        Tensor g(vn->value.shape());
        for (int64_t r = 0; r < m; ++r)
          for (int64_t c = 0; c < n; ++c) {
            double u = up.at(r, c);
            if (op == RowOp::Add) g[c] += u;
            else if (op == RowOp::Sub) g[c] -= u;
            else g[c] += u * xn->value.at(r, c);
          }
        vn->accum_grad(g);
      }
    };
  }
  return Var::from_node(node);
}

}  // namespace

Var add_rowvec(const Var& x, const Var& v) { return rowvec_op(x, v, RowOp::Add); }
Var sub_rowvec(const Var& x, const Var& v) { return rowvec_op(x, v, RowOp::Sub); }
Var mul_rowvec(const Var& x, const Var& v) { return rowvec_op(x, v, RowOp::Mul); }

Var scale(const Var& x, double c) {
  Tensor value(x.value().shape());
  for (int64_t i = 0; i < value.numel(); ++i) value[i] = x.value()[i] * c;
  bool rg = x.requires_grad();
  auto node = make_node(std::move(value), {x.node()}, rg);
  if (rg) {
    auto xn = x.node();
    node->backward_fn = [xn, c](const Tensor& up) {
      Tensor g(up.shape());
      for (int64_t i = 0; i < g.numel(); ++i) g[i] = up[i] * c;
      xn->accum_grad(g);
    };
  }
  return Var::from_node(node);
}

Var add_const(const Var& x, const Tensor& t) {
  if (!x.value().same_shape(t))
    throw std::invalid_argument("add_const: shape mismatch");
  Tensor value(x.value().shape());
  for (int64_t i = 0; i < value.numel(); ++i) value[i] = x.value()[i] + t[i];
  bool rg = x.requires_grad();
  auto node = make_node(std::move(value), {x.node()}, rg);
  if (rg) {
    auto xn = x.node();
    node->backward_fn = [xn](const Tensor& up) { xn->accum_grad(up); };
  }
  return Var::from_node(node);
}

Var mul_const(const Var& x, const Tensor& t) {
  if (!x.value().same_shape(t))
    throw std::invalid_argument("mul_const: shape mismatch");
  Tensor value(x.value().shape());
  for (int64_t i = 0; i < value.numel(); ++i) value[i] = x.value()[i] * t[i];
  bool rg = x.requires_grad();
  auto node = make_node(std::move(value), {x.node()}, rg);
  if (rg) {
    auto xn = x.node();
    Tensor mult = t;
    node->backward_fn = [xn, mult](const Tensor& up) {
      Tensor g(up.shape());
      for (int64_t i = 0; i < g.numel(); ++i) g[i] = up[i] * mult[i];
      xn->accum_grad(g);
    };
  }
  return Var::from_node(node);
}

namespace {

Var elementwise_unary(const Var& x, double (*fwd)(double), double (*dfd)(double)) {
  Tensor value(x.value().shape());
  for (int64_t i = 0; i < value.numel(); ++i) value[i] = fwd(x.value()[i]);
  bool rg = x.requires_grad();
  auto node = make_node(std::move(value), {x.node()}, rg);
  if (rg) {
    auto xn = x.node();
    node->backward_fn = [xn, dfd](const Tensor& up) {
      Tensor g(up.shape());
      for (int64_t i = 0; i < g.numel(); ++i) g[i] = up[i] * dfd(xn->value[i]);
      xn->accum_grad(g);
    };
  }
  return Var::from_node(node);
}

}  // namespace

Var relu(const Var& x) {
  return elementwise_unary(
      x, [](double v) { return v > 0 ? v : 0.0; }, [](double v) { return v > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& x, double slope) {
  Tensor value(x.value().shape());
  for (int64_t i = 0; i < value.numel(); ++i) {
    double v = x.value()[i];
    value[i] = v > 0 ? v : slope * v;
  }
  bool rg = x.requires_grad();
  auto node = make_node(std::move(value), {x.node()}, rg);
  if (rg) {
    auto xn = x.node();
    node->backward_fn = [xn, slope](const Tensor& up) {
      Tensor g(up.shape());
      for (int64_t i = 0; i < g.numel(); ++i)
        g[i] = up[i] * (xn->value[i] > 0 ? 1.0 : slope);
      xn->accum_grad(g);
    };
  }
  return Var::from_node(node);
}

Var vtanh(const Var& x) {
  Tensor value(x.value().shape());
  for (int64_t i = 0; i < value.numel(); ++i) value[i] = std::tanh(x.value()[i]);
  bool rg = x.requires_grad();
  auto node = make_node(std::move(value), {x.node()}, rg);
  if (rg) {
    auto xn = x.node();
    auto out = node;
    node->backward_fn = [xn, out_w = std::weak_ptr<Node>(out)](const Tensor& up) {
      auto out_n = out_w.lock();
      Tensor g(up.shape());
      for (int64_t i = 0; i < g.numel(); ++i) {
        double t = out_n->value[i];
        g[i] = up[i] * (1.0 - t * t);
      }
      xn->accum_grad(g);
    };
  }
  return Var::from_node(node);
}

Var rsqrt_eps(const Var& v, double eps) {
  Tensor value(v.value().shape());
  for (int64_t i = 0; i < value.numel(); ++i) value[i] = 1.0 / std::sqrt(v.value()[i] + eps);
  bool rg = v.requires_grad();
  auto node = make_node(std::move(value), {v.node()}, rg);
  if (rg) {
    auto vn = v.node();
    node->backward_fn = [vn, eps](const Tensor& up) {
      Tensor g(up.shape());
      for (int64_t i = 0; i < g.numel(); ++i) {
        double r = 1.0 / std::sqrt(vn->value[i] + eps);
        g[i] = up[i] * (-0.5 * r * r * r);
      }
      vn->accum_grad(g);
    };
  }
  return Var::from_node(node);
}

Var col_mean(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw std::invalid_argument("col_mean: expected rank-2");
  int64_t m = xv.dim(0), n = xv.dim(1);
  Tensor value({n});
  for (int64_t r = 0; r < m; ++r)
    for (int64_t c = 0; c < n; ++c) value[c] += xv.at(r, c);
  for (int64_t c = 0; c < n; ++c) value[c] /= static_cast<double>(m);
  bool rg = x.requires_grad();
  auto node = make_node(std::move(value), {x.node()}, rg);
  if (rg) {
    auto xn = x.node();
    node->backward_fn = [xn, m, n](const Tensor& up) {
      Tensor g({m, n});
      for (int64_t r = 0; r < m; ++r)
        for (int64_t c = 0; c < n; ++c) g.at(r, c) = up[c] / static_cast<double>(m);
      xn->accum_grad(g);
    };
  }
  return Var::from_node(node);
}

Var col_var(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw std::invalid_argument("col_var: expected rank-2");
  int64_t m = xv.dim(0), n = xv.dim(1);
  Tensor mean({n});
  for (int64_t r = 0; r < m; ++r)
    for (int64_t c = 0; c < n; ++c) mean[c] += xv.at(r, c);
  for (int64_t c = 0; c < n; ++c) mean[c] /= static_cast<double>(m);
  Tensor value({n});
  for (int64_t r = 0; r < m; ++r)
    for (int64_t c = 0; c < n; ++c) {
      double d = xv.at(r, c) - mean[c];
      value[c] += d * d;
    }
  for (int64_t c = 0; c < n; ++c) value[c] /= static_cast<double>(m);
  bool rg = x.requires_grad();
  auto node = make_node(std::move(value), {x.node()}, rg);
  if (rg) {
    auto xn = x.node();
    Tensor mean_copy = mean;
    node->backward_fn = [xn, m, n, mean_copy](const Tensor& up) {
      Tensor g({m, n});
      for (int64_t r = 0; r < m; ++r)
        for (int64_t c = 0; c < n; ++c)
          g.at(r, c) = up[c] * 2.0 * (xn->value.at(r, c) - mean_copy[c]) / static_cast<double>(m);
      xn->accum_grad(g);
    };
  }
  return Var::from_node(node);
}

Var sum(const Var& x) {
  double s = 0;
  for (int64_t i = 0; i < x.value().numel(); ++i) s += x.value()[i];
  bool rg = x.requires_grad();
  auto node = make_node(Tensor::scalar(s), {x.node()}, rg);
  if (rg) {
    auto xn = x.node();
    node->backward_fn = [xn](const Tensor& up) {
      xn->accum_grad(Tensor::full(xn->value.shape(), up[0]));
    };
  }
  return Var::from_node(node);
}

Var mean_all(const Var& x) {
  int64_t n = x.value().numel();
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var reshape(const Var& x, std::vector<int64_t> shape) {
  Tensor value = x.value().reshaped(shape);
  bool rg = x.requires_grad();
  auto node = make_node(std::move(value), {x.node()}, rg);
  if (rg) {
    auto xn = x.node();
    node->backward_fn = [xn](const Tensor& up) {
      xn->accum_grad(up.reshaped(xn->value.shape()));
    };
  }
  return Var::from_node(node);
}

Var detach(const Var& x) { return Var(x.value(), false); }

Tensor softmax_rows(const Tensor& logits) {
  Tensor out(logits.shape());
  int64_t m = logits.dim(0), n = logits.dim(1);
  for (int64_t r = 0; r < m; ++r) {
    double mx = logits.at(r, 0);
    for (int64_t c = 1; c < n; ++c) mx = std::max(mx, logits.at(r, c));
    double z = 0;
    for (int64_t c = 0; c < n; ++c) {
      out.at(r, c) = std::exp(logits.at(r, c) - mx);
      z += out.at(r, c);
    }
    for (int64_t c = 0; c < n; ++c) out.at(r, c) /= z;
  }
  return out;
}

Tensor log_softmax_rows(const Tensor& logits) {
  Tensor out(logits.shape());
  int64_t m = logits.dim(0), n = logits.dim(1);
  for (int64_t r = 0; r < m; ++r) {
    double mx = logits.at(r, 0);
    for (int64_t c = 1; c < n; ++c) mx = std::max(mx, logits.at(r, c));
    double z = 0;
    for (int64_t c = 0; c < n; ++c) z += std::exp(logits.at(r, c) - mx);
    double lz = std::log(z) + mx;
    for (int64_t c = 0; c < n; ++c) out.at(r, c) = logits.at(r, c) - lz;
  }
  return out;
}

Var soft_cross_entropy(const Var& logits, const Tensor& targets) {
  const Tensor& lv = logits.value();
  if (!lv.same_shape(targets))
    throw std::invalid_argument("soft_cross_entropy: logits/targets shape mismatch");
  int64_t m = lv.dim(0), n = lv.dim(1);
  Tensor logp = log_softmax_rows(lv);
  double loss = 0;
  for (int64_t r = 0; r < m; ++r)
    for (int64_t c = 0; c < n; ++c) loss -= targets.at(r, c) * logp.at(r, c);
  loss /= static_cast<double>(m);
  bool rg = logits.requires_grad();
  auto node = make_node(Tensor::scalar(loss), {logits.node()}, rg);
  if (rg) {
    auto ln = logits.node();
    Tensor y = targets;
    node->backward_fn = [ln, y, m, n](const Tensor& up) {
      // d/dlogits = (softmax - target) / m, scaled by the row's target mass.
      Tensor p = softmax_rows(ln->value);
      Tensor g({m, n});
      for (int64_t r = 0; r < m; ++r) {
        double mass = 0;
        for (int64_t c = 0; c < n; ++c) mass += y.at(r, c);
        for (int64_t c = 0; c < n; ++c)
          g.at(r, c) = up[0] * (mass * p.at(r, c) - y.at(r, c)) / static_cast<double>(m);
      }
      ln->accum_grad(g);
    };
  }
  return Var::from_node(node);
}

Var kl_divergence(const Tensor& teacher_logits, const Var& student_logits) {
  const Tensor& sv = student_logits.value();
  if (!sv.same_shape(teacher_logits))
    throw std::invalid_argument("kl_divergence: logits shape mismatch");
  int64_t m = sv.dim(0), n = sv.dim(1);
  Tensor pt = softmax_rows(teacher_logits);
  Tensor log_pt = log_softmax_rows(teacher_logits);
  Tensor log_ps = log_softmax_rows(sv);
  double loss = 0;
  for (int64_t r = 0; r < m; ++r)
    for (int64_t c = 0; c < n; ++c)
      loss += pt.at(r, c) * (log_pt.at(r, c) - log_ps.at(r, c));
  loss /= static_cast<double>(m);
  bool rg = student_logits.requires_grad();
  auto node = make_node(Tensor::scalar(loss), {student_logits.node()}, rg);
  if (rg) {
    auto sn = student_logits.node();
    node->backward_fn = [sn, pt, m, n](const Tensor& up) {
      Tensor ps = softmax_rows(sn->value);
      Tensor g({m, n});
      for (int64_t r = 0; r < m; ++r)
        for (int64_t c = 0; c < n; ++c)
          g.at(r, c) = up[0] * (ps.at(r, c) - pt.at(r, c)) / static_cast<double>(m);
      sn->accum_grad(g);
    };
  }
  return Var::from_node(node);
}

Var sum_sq_diff(const Var& a, const Tensor& target) {
  if (!a.value().same_shape(target))
    throw std::invalid_argument("sum_sq_diff: shape mismatch");
  double s = 0;
  for (int64_t i = 0; i < a.value().numel(); ++i) {
    double d = a.value()[i] - target[i];
    s += d * d;
  }
  bool rg = a.requires_grad();
  auto node = make_node(Tensor::scalar(s), {a.node()}, rg);
  if (rg) {
    auto an = a.node();
    Tensor t = target;
    node->backward_fn = [an, t](const Tensor& up) {
      Tensor g(an->value.shape());
      for (int64_t i = 0; i < g.numel(); ++i) g[i] = up[0] * 2.0 * (an->value[i] - t[i]);
      an->accum_grad(g);
    };
  }
  return Var::from_node(node);
}

}  // namespace dfq
