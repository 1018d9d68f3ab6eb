#include "tlstm/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "tlstm/kernels.hpp"

namespace tlstm::ad {

namespace kp = kernels::parallel;

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Tensor value) {
  nodes_.push_back({std::move(value), {}, {}, {}, false, true});
  return {nodes_.size() - 1};
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back({std::move(value), {}, {}, {}, true, true});
  return {nodes_.size() - 1};
}

bool Tape::any_requires_grad(std::initializer_list<Var> vars) const {
  return std::any_of(vars.begin(), vars.end(), [&](Var v) { return requires_grad(v); });
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward fn) {
  Node node;
  node.value = std::move(value);
  for (Var v : inputs) {
    if (v.id >= nodes_.size()) throw ContractError("tape input recorded after its consumer");
    node.inputs.push_back(v.id);
    node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return {nodes_.size() - 1};
}

Tensor* Tape::grad_sink(Var v) {
  Node& n = nodes_.at(v.id);
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return &n.grad;
}

void Tape::backward(Var loss) {
  Node& root = nodes_.at(loss.id);
  if (root.value.size() != 1)
    throw ContractError("backward() needs a scalar loss, got shape " + to_string(root.value.shape()));
  if (root.requires_grad) {
    grad_sink(loss)->fill(1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      n.backward(*this, n.grad);
    }
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].leaf && nodes_[i].requires_grad) grad_sink({i});
}

// ---------------------------------------------------------------------------
// Elementwise and structural operations

namespace {

std::span<double> sink_span(Tape& t, Var v) {
  Tensor* g = t.grad_sink(v);
  return g ? g->data() : std::span<double>{};
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  require_same_shape(x, y, "add");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    for (Var v : {a, b})
      if (Tensor* s = t.grad_sink(v))
        for (std::size_t i = 0; i < g.size(); ++i) (*s)[i] += g[i];
  });
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  require_same_shape(x, y, "mul");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_sink(a)) {
      const Tensor& y = t.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) (*s)[i] += g[i] * y[i];
    }
    if (Tensor* s = t.grad_sink(b)) {
      const Tensor& x = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) (*s)[i] += g[i] * x[i];
    }
  });
}

Var scale(Tape& t, Var a, double k) {
  const Tensor& x = t.value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = k * x[i];
  return t.record(std::move(out), {a}, [a, k](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_sink(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*s)[i] += k * g[i];
  });
}

Var tanh(Tape& t, Var a) {
  Tensor out = elementwise(Activation::tanh, t.value(a));
  Var self{t.size()};
  return t.record(std::move(out), {a}, [a, self](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(self);
    if (Tensor* s = t.grad_sink(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*s)[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var sigmoid(Tape& t, Var a) {
  Tensor out = elementwise(Activation::sigmoid, t.value(a));
  Var self{t.size()};
  return t.record(std::move(out), {a}, [a, self](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(self);
    if (Tensor* s = t.grad_sink(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*s)[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var sum(Tape& t, Var a) {
  double acc = 0.0;
  for (double v : t.value(a).data()) acc += v;
  return t.record(Tensor::scalar(acc), {a}, [a](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_sink(a))
      for (double& v : s->data()) v += g[0];
  });
}

Var softmax(Tape& t, Var a) {
  Tensor out = softmax_last_axis(t.value(a));
  Var self{t.size()};
  return t.record(std::move(out), {a}, [a, self](Tape& t, const Tensor& g) {
    Tensor* s = t.grad_sink(a);
    if (!s) return;
    const Tensor& y = t.value(self);
    const std::size_t k = y.shape().back();
    for (std::size_t base = 0; base < y.size(); base += k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < k; ++i) dot += g[base + i] * y[base + i];
      for (std::size_t i = 0; i < k; ++i) (*s)[base + i] += y[base + i] * (g[base + i] - dot);
    }
  });
}

Var slice_channels(Tape& t, Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = t.value(a);
  const std::size_t c = x.shape().back();
  if (count == 0 || begin + count > c)
    throw DimensionError("channel slice [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + to_string(x.shape()));
  Shape shape = x.shape();
  shape.back() = count;
  Tensor out(shape);
  const std::size_t rows = x.size() / c;
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(&x[r * c + begin], count, &out[r * count]);
  return t.record(std::move(out), {a}, [a, begin, count, c, rows](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_sink(a))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < count; ++i) (*s)[r * c + begin + i] += g[r * count + i];
  });
}

Var concat_channels(Tape& t, Var a, Var b) {
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  const std::size_t ca = x.shape().back(), cb = y.shape().back();
  if (!std::equal(x.shape().begin(), x.shape().end() - 1, y.shape().begin(), y.shape().end() - 1))
    throw DimensionError("concat_channels: " + to_string(x.shape()) + " vs " + to_string(y.shape()));
  Shape shape = x.shape();
  shape.back() = ca + cb;
  Tensor out(shape);
  const std::size_t rows = x.size() / ca;
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(&x[r * ca], ca, &out[r * (ca + cb)]);
    std::copy_n(&y[r * cb], cb, &out[r * (ca + cb) + ca]);
  }
  return t.record(std::move(out), {a, b}, [a, b, ca, cb, rows](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_sink(a))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < ca; ++i) (*s)[r * ca + i] += g[r * (ca + cb) + i];
    if (Tensor* s = t.grad_sink(b))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < cb; ++i) (*s)[r * cb + i] += g[r * (ca + cb) + ca + i];
  });
}

Var select_location(Tape& t, Var a, std::size_t grid_rank, std::size_t location) {
  const Tensor& x = t.value(a);
  if (x.rank() != grid_rank + 2)
    throw DimensionError("select_location expects [batch] x grid x M, got " + to_string(x.shape()));
  const std::size_t batch = x.dim(0), m = x.shape().back();
  const std::size_t locations = x.size() / (batch * m);
  if (location >= locations) throw DimensionError("select_location: location out of range");
  Tensor out({batch, m});
  for (std::size_t n = 0; n < batch; ++n) std::copy_n(&x[(n * locations + location) * m], m, &out[n * m]);
  return t.record(std::move(out), {a}, [a, batch, m, locations, location](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_sink(a))
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t i = 0; i < m; ++i) (*s)[(n * locations + location) * m + i] += g[n * m + i];
  });
}

// ---------------------------------------------------------------------------
// Model primitives

Var affine(Tape& t, Var x, Var w, Var b) {
  const auto d = plan_affine(t.value(x).shape(), t.value(w).shape(), t.value(b).shape());
  Tensor out(d.out_shape);
  kp::affine_forward(d.rows, d.in, d.out, t.value(x).data(), t.value(w).data(), t.value(b).data(), out.data());
  return t.record(std::move(out), {x, w, b}, [x, w, b, d](Tape& t, const Tensor& g) {
    kp::affine_backward(d.rows, d.in, d.out, t.value(x).data(), t.value(w).data(), g.data(),
                        sink_span(t, x), sink_span(t, w), sink_span(t, b));
  });
}

Var concat_input(Tape& t, Var proj, Var prev, std::size_t grid_rank) {
  const Tensor& p = t.value(proj);
  const Tensor& h = t.value(prev);
  if (h.rank() != grid_rank + 2 || p.rank() != 2 || p.dim(0) != h.dim(0) || p.dim(1) != h.shape().back())
    throw DimensionError("concat_input: projection " + to_string(p.shape()) + " incompatible with state " +
                         to_string(h.shape()));
  const std::size_t batch = h.dim(0), m = h.shape().back();
  Shape shape = h.shape();
  for (std::size_t a = 1; a <= grid_rank; ++a) shape[a] += 1;
  const std::size_t in_locs = h.size() / (batch * m);
  const std::size_t out_locs = volume(shape) / (batch * m);
  // target[l] = concatenated location of state location l (shifted by +1 on every axis)
  std::vector<std::size_t> target(in_locs);
  for (std::size_t l = 0; l < in_locs; ++l) {
    std::size_t rem = l, lin = 0, stride = 1;
    for (std::size_t a = grid_rank; a >= 1; --a) {
      const std::size_t idx = rem % h.dim(a);
      rem /= h.dim(a);
      lin += (idx + 1) * stride;
      stride *= shape[a];
    }
    target[l] = lin;
  }
  Tensor out(shape);
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(&p[n * m], m, &out[n * out_locs * m]);
    for (std::size_t l = 0; l < in_locs; ++l)
      std::copy_n(&h[(n * in_locs + l) * m], m, &out[(n * out_locs + target[l]) * m]);
  }
  return t.record(std::move(out), {proj, prev},
                  [proj, prev, batch, m, in_locs, out_locs, target](Tape& t, const Tensor& g) {
                    if (Tensor* s = t.grad_sink(proj))
                      for (std::size_t n = 0; n < batch; ++n)
                        for (std::size_t i = 0; i < m; ++i) (*s)[n * m + i] += g[n * out_locs * m + i];
                    if (Tensor* s = t.grad_sink(prev))
                      for (std::size_t n = 0; n < batch; ++n)
                        for (std::size_t l = 0; l < in_locs; ++l)
                          for (std::size_t i = 0; i < m; ++i)
                            (*s)[(n * in_locs + l) * m + i] += g[(n * out_locs + target[l]) * m + i];
                  });
}

Var cross_layer_conv(Tape& t, Var hcat, Var w, Var b) {
  auto plan = plan_cross_layer(t.value(hcat).shape(), t.value(w).shape(), t.value(b).shape());
  Tensor out(plan.out_shape);
  kp::cross_layer_forward(plan.dims, plan.taps, t.value(hcat).data(), t.value(w).data(), t.value(b).data(),
                          out.data());
  return t.record(std::move(out), {hcat, w, b},
                  [hcat, w, b, dims = plan.dims, taps = std::move(plan.taps)](Tape& t, const Tensor& g) {
                    kp::cross_layer_backward(dims, taps, t.value(hcat).data(), t.value(w).data(), g.data(),
                                             sink_span(t, hcat), sink_span(t, w), sink_span(t, b));
                  });
}

Var memory_cell_conv(Tape& t, Var c, Var bank, const std::vector<std::size_t>& kernel) {
  auto plan = plan_memory_cell(t.value(c).shape(), t.value(bank).shape(), kernel);
  Tensor out(t.value(c).shape());
  kp::memory_cell_forward(plan.dims, plan.taps, t.value(c).data(), t.value(bank).data(), out.data());
  return t.record(std::move(out), {c, bank},
                  [c, bank, dims = plan.dims, taps = std::move(plan.taps)](Tape& t, const Tensor& g) {
                    kp::memory_cell_backward(dims, taps, t.value(c).data(), t.value(bank).data(), g.data(),
                                             sink_span(t, c), sink_span(t, bank));
                  });
}

namespace {

Var normalise(Tape& t, Var z, Var gain, Var bias, NormScope scope) {
  const auto d = plan_norm(t.value(z).shape(), t.value(gain).shape(), t.value(bias).shape(), scope);
  Tensor out(t.value(z).shape()), normalized(t.value(z).shape());
  std::vector<double> inv_std(d.batch * d.groups);
  kp::group_norm_forward(d, t.value(z).data(), t.value(gain).data(), t.value(bias).data(), out.data(),
                         normalized.data(), inv_std);
  return t.record(std::move(out), {z, gain, bias},
                  [z, gain, bias, d, normalized = std::move(normalized), inv_std = std::move(inv_std)](
                      Tape& t, const Tensor& g) {
                    kp::group_norm_backward(d, normalized.data(), inv_std, t.value(gain).data(), g.data(),
                                            sink_span(t, z), sink_span(t, gain), sink_span(t, bias));
                  });
}

}  // namespace

Var channel_norm(Tape& t, Var z, Var gain, Var bias) { return normalise(t, z, gain, bias, NormScope::channel); }
Var layer_norm(Tape& t, Var z, Var gain, Var bias) { return normalise(t, z, gain, bias, NormScope::layer); }

Var softmax_nll(Tape& t, Var logits, std::span<const int> targets, std::span<const double> weights) {
  const Tensor& z = t.value(logits);
  if (z.rank() != 2 || targets.size() != z.dim(0) || weights.size() != z.dim(0))
    throw DimensionError("softmax_nll: logits " + to_string(z.shape()) + " with " +
                         std::to_string(targets.size()) + " targets");
  const std::size_t rows = z.dim(0), k = z.dim(1);
  Tensor prob(z.shape());
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = &z[r * k];
    const double mx = *std::max_element(zr, zr + k);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += (prob[r * k + i] = std::exp(zr[i] - mx));
    for (std::size_t i = 0; i < k; ++i) prob[r * k + i] /= sum;
    if (weights[r] == 0.0) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= k)
      throw ContractError("softmax_nll: target class out of range");
    loss += weights[r] * (mx + std::log(sum) - zr[targets[r]]);
  }
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<double> wt(weights.begin(), weights.end());
  return t.record(Tensor::scalar(loss), {logits},
                  [logits, prob = std::move(prob), tg = std::move(tg), wt = std::move(wt), k](Tape& t,
                                                                                             const Tensor& g) {
                    Tensor* s = t.grad_sink(logits);
                    if (!s) return;
                    for (std::size_t r = 0; r < tg.size(); ++r) {
                      if (wt[r] == 0.0) continue;
                      const double c = g[0] * wt[r];
                      for (std::size_t i = 0; i < k; ++i) (*s)[r * k + i] += c * prob[r * k + i];
                      (*s)[r * k + static_cast<std::size_t>(tg[r])] -= c;
                    }
                  });
}

// ---------------------------------------------------------------------------
// Parameters, gradients and the finite-difference oracle

Bound::Bound(Tape& tape, const ParameterSet& params, bool trainable) : tape_(&tape) {
  for (const auto& [name, value] : params)
    vars_.emplace_back(name, trainable ? tape.leaf(value) : tape.constant(value));
}

Var Bound::operator[](std::string_view name) const {
  for (const auto& [n, v] : vars_)
    if (n == name) return v;
  throw ContractError("parameter '" + std::string(name) + "' is not bound");
}

bool Bound::contains(std::string_view name) const {
  return std::any_of(vars_.begin(), vars_.end(), [&](const auto& e) { return e.first == name; });
}

Gradients Bound::gradients() const {
  Gradients out;
  for (const auto& [name, v] : vars_) {
    const Tensor& g = tape_->grad(v);
    out.add(name, g.empty() ? Tensor(tape_->value(v).shape()) : g);
  }
  return out;
}

Gradients backward(const ParameterSet& params, const std::function<Var(Tape&, const Bound&)>& loss_of) {
  Tape tape;
  Bound bound(tape, params);
  Var loss = loss_of(tape, bound);
  tape.backward(loss);
  return bound.gradients();
}

Gradients finite_diff(const std::function<double(const ParameterSet&)>& f, const ParameterSet& theta,
                      double step) {
  if (!(step > 0.0)) throw ContractError("finite_diff step must be positive");
  Gradients out = theta.zeros_like();
  ParameterSet probe = theta;
  for (auto& [name, value] : probe) {
    Tensor& g = out[name];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double orig = value[i];
      value[i] = orig + step;
      const double up = f(probe);
      value[i] = orig - step;
      const double down = f(probe);
      value[i] = orig;
      g[i] = (up - down) / (2.0 * step);
    }
  }
  return out;
}

double max_relative_error(const Gradients& analytic, const Gradients& numeric, double floor) {
  double worst = 0.0;
  for (const auto& [name, a] : analytic) {
    const Tensor& n = numeric[name];
    require_same_shape(a, n, "max_relative_error");
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double denom = std::max({std::abs(a[i]), std::abs(n[i]), floor});
      worst = std::max(worst, std::abs(a[i] - n[i]) / denom);
    }
  }
  return worst;
}

}  // namespace tlstm::ad
