#include "ham/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ham::ad {

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw DomainError("operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) throw DomainError("operands recorded on different tapes");
  return tape_of(a);
}

void require_same_shape(Var a, Var b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
  }
}

void add_into(Tensor* dst, const Tensor& src, double s = 1.0) {
  if (!dst) return;
  auto d = dst->data();
  auto v = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * v[i];
}

Tensor scalar(double v) { return Tensor(Shape{1}, v); }

}  // namespace

// ---- Var / Tape --------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.tape_ != this) throw DomainError("operand recorded on a different tape");
    needs = needs || nodes_[v.id_].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Tensor{}, needs ? std::move(backward) : nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw DomainError("backward: loss belongs to another tape");
  if (nodes_[loss.id_].value.size() != 1) {
    throw DomainError("backward: loss must be a scalar, got shape " +
                      nodes_[loss.id_].value.shape().str());
  }
  for (Node& n : nodes_) {
    if (n.requires_grad) n.grad = Tensor(n.value.shape(), 0.0);
  }
  if (!nodes_[loss.id_].requires_grad) return;
  nodes_[loss.id_].grad[0] = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward) n.backward(*this, n.grad);
  }
}

Tensor* Tape::accumulate(Var v) {
  Node& n = nodes_[v.id_];
  return n.requires_grad ? &n.grad : nullptr;
}

const Tensor& Tape::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) {
    throw DomainError("gradient requested for a node without one (constant or before backward)");
  }
  return n.grad;
}

// ---- elementwise -------------------------------------------------------

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  return tape_of(a, b).record(a.value() + b.value(), {a, b},
                              [a, b](Tape& t, const Tensor& g) {
                                add_into(t.accumulate(a), g);
                                add_into(t.accumulate(b), g);
                              });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  return tape_of(a, b).record(a.value() - b.value(), {a, b},
                              [a, b](Tape& t, const Tensor& g) {
                                add_into(t.accumulate(a), g);
                                add_into(t.accumulate(b), g, -1.0);
                              });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  return tape_of(a, b).record(hadamard(a.value(), b.value()), {a, b},
                              [a, b](Tape& t, const Tensor& g) {
                                if (auto* ga = t.accumulate(a)) add_into(ga, hadamard(g, b.value()));
                                if (auto* gb = t.accumulate(b)) add_into(gb, hadamard(g, a.value()));
                              });
}

Var scale(Var a, double s) {
  return tape_of(a).record(s * a.value(), {a},
                           [a, s](Tape& t, const Tensor& g) { add_into(t.accumulate(a), g, s); });
}

Var add_bias(Var x, Var bias) {
  const Shape& xs = x.shape();
  if (bias.shape().rank() != 1 || xs[xs.rank() - 1] != bias.shape()[0]) {
    throw DimensionError("add_bias: " + xs.str() + " + " + bias.shape().str());
  }
  const std::size_t width = bias.shape()[0];
  Tensor out = x.value();
  auto o = out.data();
  auto bv = bias.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i % width];
  return tape_of(x, bias).record(std::move(out), {x, bias},
                                 [x, bias, width](Tape& t, const Tensor& g) {
                                   add_into(t.accumulate(x), g);
                                   if (auto* gb = t.accumulate(bias)) {
                                     auto gv = g.data();
                                     auto d = gb->data();
                                     for (std::size_t i = 0; i < gv.size(); ++i) d[i % width] += gv[i];
                                   }
                                 });
}

// ---- linear algebra ----------------------------------------------------

Var matmul(Var a, Var b) {
  Tensor out = ham::matmul(a.value(), b.value());
  return tape_of(a, b).record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (auto* ga = t.accumulate(a)) {
      // dA = G B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
          (*ga)[i * k + p] += s;
        }
    }
    if (auto* gb = t.accumulate(b)) {
      // dB = A^T G
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) (*gb)[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Var matvec(Var a, Var x) {
  const Shape& as = a.shape();
  if (as.rank() != 2 || x.shape().rank() != 1 || as[1] != x.shape()[0]) {
    throw DimensionError("matvec: " + as.str() + " . " + x.shape().str());
  }
  const std::size_t m = as[0], k = as[1];
  Tensor out(Shape{m});
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t p = 0; p < k; ++p) s += a.value()[i * k + p] * x.value()[p];
    out[i] = s;
  }
  return tape_of(a, x).record(std::move(out), {a, x}, [a, x, m, k](Tape& t, const Tensor& g) {
    if (auto* ga = t.accumulate(a))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) (*ga)[i * k + p] += g[i] * x.value()[p];
    if (auto* gx = t.accumulate(x))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) (*gx)[p] += g[i] * a.value()[i * k + p];
  });
}

Var vecmat(Var x, Var a) {
  const Shape& as = a.shape();
  if (as.rank() != 2 || x.shape().rank() != 1 || as[0] != x.shape()[0]) {
    throw DimensionError("vecmat: " + x.shape().str() + " . " + as.str());
  }
  const std::size_t m = as[0], k = as[1];
  Tensor out(Shape{k});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) out[p] += x.value()[i] * a.value()[i * k + p];
  return tape_of(x, a).record(std::move(out), {x, a}, [x, a, m, k](Tape& t, const Tensor& g) {
    if (auto* gx = t.accumulate(x))
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += g[p] * a.value()[i * k + p];
        (*gx)[i] += s;
      }
    if (auto* ga = t.accumulate(a))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) (*ga)[i * k + p] += x.value()[i] * g[p];
  });
}

Var transpose(Var a) {
  return tape_of(a).record(ham::transpose(a.value()), {a}, [a](Tape& t, const Tensor& g) {
    add_into(t.accumulate(a), ham::transpose(g));
  });
}

Var concat(Var a, Var b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.rank() != bs.rank() || as.rank() > 2 || (as.rank() == 2 && as[0] != bs[0])) {
    throw DimensionError("concat: " + as.str() + " with " + bs.str());
  }
  const std::size_t rows = as.rank() == 2 ? as[0] : 1;
  const std::size_t wa = as[as.rank() - 1], wb = bs[bs.rank() - 1];
  Tensor out(as.rank() == 2 ? Shape{rows, wa + wb} : Shape{wa + wb});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.value().data().begin() + r * wa, wa, out.data().begin() + r * (wa + wb));
    std::copy_n(b.value().data().begin() + r * wb, wb, out.data().begin() + r * (wa + wb) + wa);
  }
  return tape_of(a, b).record(std::move(out), {a, b},
                              [a, b, rows, wa, wb](Tape& t, const Tensor& g) {
                                auto* ga = t.accumulate(a);
                                auto* gb = t.accumulate(b);
                                for (std::size_t r = 0; r < rows; ++r) {
                                  const std::size_t base = r * (wa + wb);
                                  if (ga)
                                    for (std::size_t j = 0; j < wa; ++j) (*ga)[r * wa + j] += g[base + j];
                                  if (gb)
                                    for (std::size_t j = 0; j < wb; ++j)
                                      (*gb)[r * wb + j] += g[base + wa + j];
                                }
                              });
}

Var dot(Var a, Var b) {
  if (a.value().size() != b.value().size()) {
    throw DimensionError("dot: " + a.shape().str() + " vs " + b.shape().str());
  }
  return tape_of(a, b).record(scalar(ham::dot(a.value(), b.value())), {a, b},
                              [a, b](Tape& t, const Tensor& g) {
                                add_into(t.accumulate(a), b.value(), g[0]);
                                add_into(t.accumulate(b), a.value(), g[0]);
                              });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return tape_of(a).record(scalar(s), {a}, [a](Tape& t, const Tensor& g) {
    if (auto* ga = t.accumulate(a))
      for (double& v : ga->data()) v += g[0];
  });
}

Var l2_norm(Var a) {
  const double n = ham::l2_norm(a.value());
  return tape_of(a).record(scalar(n), {a}, [a, n](Tape& t, const Tensor& g) {
    if (n > 0.0) add_into(t.accumulate(a), a.value(), g[0] / n);
  });
}

// ---- nonlinearities ----------------------------------------------------

Var tanh(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = std::tanh(v);
  Tensor y = out;
  return tape_of(a).record(std::move(out), {a}, [a, y = std::move(y)](Tape& t, const Tensor& g) {
    if (auto* ga = t.accumulate(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var sigmoid(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  Tensor y = out;
  return tape_of(a).record(std::move(out), {a}, [a, y = std::move(y)](Tape& t, const Tensor& g) {
    if (auto* ga = t.accumulate(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var softmax(Var a) {
  const Shape& s = a.shape();
  if (s.rank() > 2) throw DimensionError("softmax: rank must be 1 or 2, got " + s.str());
  Tensor p = s.rank() == 1 ? ham::softmax_vec(a.value()) : ham::softmax_rows(a.value());
  const std::size_t width = s[s.rank() - 1];
  Tensor y = p;
  return tape_of(a).record(std::move(p), {a},
                           [a, width, y = std::move(y)](Tape& t, const Tensor& g) {
                             auto* ga = t.accumulate(a);
                             if (!ga) return;
                             for (std::size_t base = 0; base < y.size(); base += width) {
                               double gp = 0.0;
                               for (std::size_t j = 0; j < width; ++j) gp += g[base + j] * y[base + j];
                               for (std::size_t j = 0; j < width; ++j)
                                 (*ga)[base + j] += y[base + j] * (g[base + j] - gp);
                             }
                           });
}

// ---- structural --------------------------------------------------------

Var weighted_sum(std::span<const Var> xs, Var alpha) {
  if (xs.empty()) throw DomainError("weighted_sum: no terms");
  if (alpha.shape().rank() != 1 || alpha.shape()[0] != xs.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(xs.size()) + " terms but weights " +
                         alpha.shape().str());
  }
  Tape& t0 = tape_of(alpha);
  Tensor out(xs.front().shape());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i].shape() == out.shape())) {
      throw DimensionError("weighted_sum: term " + std::to_string(i) + " has shape " +
                           xs[i].shape().str());
    }
    add_into(&out, xs[i].value(), alpha.value()[i]);
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  inputs.push_back(alpha);
  std::vector<Var> terms(xs.begin(), xs.end());
  return t0.record(std::move(out), inputs,
                   [terms = std::move(terms), alpha](Tape& t, const Tensor& g) {
                     auto* galpha = t.accumulate(alpha);
                     for (std::size_t i = 0; i < terms.size(); ++i) {
                       add_into(t.accumulate(terms[i]), g, alpha.value()[i]);
                       if (galpha) (*galpha)[i] += ham::dot(terms[i].value(), g);
                     }
                   });
}

Var embedding(Var table, std::span<const int> ids) {
  const Shape& s = table.shape();
  if (s.rank() != 2) throw DimensionError("embedding: table must be a matrix, got " + s.str());
  if (ids.empty()) throw DomainError("embedding: no ids");
  const std::size_t width = s[1];
  Tensor out(Shape{ids.size(), width});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= s[0]) {
      throw DomainError("embedding: id " + std::to_string(ids[r]) + " outside vocabulary of " +
                        std::to_string(s[0]));
    }
    std::copy_n(table.value().data().begin() + ids[r] * width, width,
                out.data().begin() + r * width);
  }
  std::vector<int> rows(ids.begin(), ids.end());
  return tape_of(table).record(std::move(out), {table},
                               [table, width, rows = std::move(rows)](Tape& t, const Tensor& g) {
                                 auto* gt = t.accumulate(table);
                                 if (!gt) return;
                                 for (std::size_t r = 0; r < rows.size(); ++r)
                                   for (std::size_t j = 0; j < width; ++j)
                                     (*gt)[rows[r] * width + j] += g[r * width + j];
                               });
}

Var stack(std::span<const Var> xs) {
  if (xs.empty()) throw DomainError("stack: no inputs");
  const Shape& s = xs.front().shape();
  if (s.rank() != 2) throw DimensionError("stack: inputs must be matrices, got " + s.str());
  const std::size_t batch = s[0], width = s[1], n = xs.size();
  Tensor out(Shape{batch, n, width});
  for (std::size_t t = 0; t < n; ++t) {
    if (!(xs[t].shape() == s)) {
      throw DimensionError("stack: input " + std::to_string(t) + " has shape " + xs[t].shape().str());
    }
    for (std::size_t b = 0; b < batch; ++b)
      std::copy_n(xs[t].value().data().begin() + b * width, width,
                  out.data().begin() + (b * n + t) * width);
  }
  std::vector<Var> parts(xs.begin(), xs.end());
  Tape& tape = tape_of(xs.front());
  return tape.record(std::move(out), xs,
                     [parts, batch, width, n](Tape& t, const Tensor& g) {
                       for (std::size_t i = 0; i < n; ++i) {
                         auto* gi = t.accumulate(parts[i]);
                         if (!gi) continue;
                         for (std::size_t b = 0; b < batch; ++b)
                           for (std::size_t j = 0; j < width; ++j)
                             (*gi)[b * width + j] += g[(b * n + i) * width + j];
                       }
                     });
}

Var batched_matvec(Var a, Var x) {
  const Shape& as = a.shape();
  const Shape& xs = x.shape();
  if (as.rank() != 3 || xs.rank() != 2 || as[0] != xs[0] || as[2] != xs[1]) {
    throw DimensionError("batched_matvec: " + as.str() + " . " + xs.str());
  }
  const std::size_t batch = as[0], n = as[1], k = as[2];
  Tensor out(Shape{batch, n});
  const auto av = a.value().data();
  const auto xv = x.value().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += av[(b * n + i) * k + p] * xv[b * k + p];
      out[b * n + i] = s;
    }
  return tape_of(a, x).record(std::move(out), {a, x},
                              [a, x, batch, n, k](Tape& t, const Tensor& g) {
                                auto* ga = t.accumulate(a);
                                auto* gx = t.accumulate(x);
                                const auto av = a.value().data();
                                const auto xv = x.value().data();
                                for (std::size_t b = 0; b < batch; ++b)
                                  for (std::size_t i = 0; i < n; ++i) {
                                    const double gi = g[b * n + i];
                                    for (std::size_t p = 0; p < k; ++p) {
                                      if (ga) (*ga)[(b * n + i) * k + p] += gi * xv[b * k + p];
                                      if (gx) (*gx)[b * k + p] += gi * av[(b * n + i) * k + p];
                                    }
                                  }
                              });
}

Var batched_vecmat(Var p, Var a) {
  const Shape& ps = p.shape();
  const Shape& as = a.shape();
  if (as.rank() != 3 || ps.rank() != 2 || as[0] != ps[0] || as[1] != ps[1]) {
    throw DimensionError("batched_vecmat: " + ps.str() + " . " + as.str());
  }
  const std::size_t batch = as[0], n = as[1], k = as[2];
  Tensor out(Shape{batch, k});
  const auto av = a.value().data();
  const auto pv = p.value().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < n; ++i) {
      const double w = pv[b * n + i];
      for (std::size_t j = 0; j < k; ++j) out[b * k + j] += w * av[(b * n + i) * k + j];
    }
  return tape_of(p, a).record(std::move(out), {p, a},
                              [p, a, batch, n, k](Tape& t, const Tensor& g) {
                                auto* gp = t.accumulate(p);
                                auto* ga = t.accumulate(a);
                                const auto av = a.value().data();
                                const auto pv = p.value().data();
                                for (std::size_t b = 0; b < batch; ++b)
                                  for (std::size_t i = 0; i < n; ++i) {
                                    double s = 0.0;
                                    for (std::size_t j = 0; j < k; ++j) {
                                      s += g[b * k + j] * av[(b * n + i) * k + j];
                                      if (ga) (*ga)[(b * n + i) * k + j] += pv[b * n + i] * g[b * k + j];
                                    }
                                    if (gp) (*gp)[b * n + i] += s;
                                  }
                              });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  const Shape& s = logits.shape();
  if (s.rank() > 2) throw DimensionError("cross_entropy: logits rank must be 1 or 2");
  const std::size_t rows = s.rank() == 2 ? s[0] : 1;
  const std::size_t width = s[s.rank() - 1];
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(rows) + " rows");
  }
  Tensor probs(s);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int y = targets[r];
    if (y < 0 || static_cast<std::size_t>(y) >= width) {
      throw DomainError("cross_entropy: target " + std::to_string(y) + " outside " +
                        std::to_string(width) + " classes");
    }
    auto row = logits.value().data().subspan(r * width, width);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    loss += lse - row[y];
    for (std::size_t j = 0; j < width; ++j) probs[r * width + j] = std::exp(row[j] - lse);
  }
  loss /= static_cast<double>(rows);
  std::vector<int> ys(targets.begin(), targets.end());
  return tape_of(logits).record(
      scalar(loss), {logits},
      [logits, rows, width, ys = std::move(ys), probs = std::move(probs)](Tape& t, const Tensor& g) {
        auto* gl = t.accumulate(logits);
        if (!gl) return;
        const double s = g[0] / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < width; ++j) (*gl)[r * width + j] += s * probs[r * width + j];
          (*gl)[r * width + ys[r]] -= s;
        }
      });
}

Var operator+(Var a, Var b) { return add(a, b); }
Var operator-(Var a, Var b) { return sub(a, b); }
Var operator*(Var a, Var b) { return mul(a, b); }

// ---- gradient checking -------------------------------------------------

GradCheckResult grad_check(const ScalarFn& f, std::span<const Tensor> inputs, double h) {
  std::vector<Tensor> grads;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& x : inputs) vars.push_back(tape.leaf(x));
    Var loss = f(tape, vars);
    tape.backward(loss);
    for (const Var& v : vars) grads.push_back(v.grad());
  }

  auto evaluate = [&](const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& x : xs) vars.push_back(tape.constant(x));
    Var loss = f(tape, vars);
    if (loss.value().size() != 1) throw DomainError("grad_check: function must return a scalar");
    return loss.value()[0];
  };

  GradCheckResult result;
  std::vector<Tensor> probe(inputs.begin(), inputs.end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    for (std::size_t c = 0; c < probe[i].size(); ++c) {
      const double orig = probe[i][c];
      probe[i][c] = orig + h;
      const double up = evaluate(probe);
      probe[i][c] = orig - h;
      const double down = evaluate(probe);
      probe[i][c] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grads[i][c];
      const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
      if (err > result.max_rel_error || !std::isfinite(err)) {
        result = {std::isfinite(err) ? err : std::numeric_limits<double>::infinity(), i, c};
      }
    }
  }
  return result;
}

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double h) {
  ScalarFn wrapped = [&f](Tape& t, std::span<const Var> v) { return f(t, v[0]); };
  return grad_check(wrapped, std::span<const Tensor>(&x, 1), h).max_rel_error;
}

}  // namespace ham::ad
