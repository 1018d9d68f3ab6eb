#include "tlstm/cells.hpp"

#include <algorithm>

namespace tlstm {

namespace {

Shape state_shape(const TlstmConfig& cfg, std::size_t batch) {
  Shape s{batch};
  if (cfg.variant == Variant::slstm) {
    s.push_back(cfg.layers);
  } else {
    for (std::size_t d : cfg.grid_shape()) s.push_back(d);
  }
  s.push_back(cfg.channels);
  return s;
}

}  // namespace

CellState zero_state(const TlstmConfig& cfg, std::size_t batch) {
  const Shape s = state_shape(cfg, batch);
  CellState out{Tensor(s), Tensor()};
  if (cfg.has_memory()) out.c = Tensor(s);
  return out;
}

void check_state(const CellState& s, const TlstmConfig& cfg, std::size_t batch) {
  const Shape want = state_shape(cfg, batch);
  if (s.h.shape() != want)
    throw DimensionError("hidden state " + to_string(s.h.shape()) + " does not match " + to_string(want));
  if (cfg.has_memory() && s.c.shape() != want)
    throw DimensionError("memory state " + to_string(s.c.shape()) + " does not match " + to_string(want));
  if (!cfg.has_memory() && !s.c.empty()) throw DimensionError("tRNN state carries a memory tensor");
}

namespace cell {

using ad::Bound;
using ad::Tape;
using ad::Var;

namespace {

// Splits a [N, L, M] tensor into L tensors of [N, M].
std::vector<Var> split_layers(Tape& t, const Tensor& s) {
  const std::size_t n = s.dim(0), layers = s.dim(1), m = s.dim(2);
  std::vector<Var> out;
  for (std::size_t l = 0; l < layers; ++l) {
    Tensor part({n, m});
    for (std::size_t b = 0; b < n; ++b) std::copy_n(&s[(b * layers + l) * m], m, &part[b * m]);
    out.push_back(t.constant(std::move(part)));
  }
  return out;
}

Tensor stack_layers(const Tape& t, const std::vector<Var>& vs) {
  const Tensor& first = t.value(vs.front());
  const std::size_t n = first.dim(0), m = first.dim(1), layers = vs.size();
  Tensor out({n, layers, m});
  for (std::size_t l = 0; l < layers; ++l) {
    const Tensor& part = t.value(vs[l]);
    for (std::size_t b = 0; b < n; ++b) std::copy_n(&part[b * m], m, &out[(b * layers + l) * m]);
  }
  return out;
}

Var normalised(Tape& t, const Bound& p, const TlstmConfig& cfg, Var z) {
  switch (cfg.norm) {
    case Norm::none: return z;
    case Norm::channel: return ad::channel_norm(t, z, p["norm.gain"], p["norm.bias"]);
    case Norm::layer: return ad::layer_norm(t, z, p["norm.gain"], p["norm.bias"]);
  }
  return z;
}

void require_variant(const TlstmConfig& cfg, Variant v) {
  if (cfg.variant != v)
    throw ContractError("step for " + std::string(to_string(v)) + " called with a " +
                        std::string(to_string(cfg.variant)) + " config");
}

// Gates g, i, f, o from the first 4M channels of the activation tensor.
struct Gates {
  Var g, i, f, o;
};

Gates split_gates(Tape& t, Var a, std::size_t m) {
  return {ad::tanh(t, ad::slice_channels(t, a, 0, m)), ad::sigmoid(t, ad::slice_channels(t, a, m, m)),
          ad::sigmoid(t, ad::slice_channels(t, a, 2 * m, m)), ad::sigmoid(t, ad::slice_channels(t, a, 3 * m, m))};
}

Vars lstm_like(Tape& t, const Bound& p, const TlstmConfig& cfg, Var x, const Vars& prev, bool memory_conv) {
  const std::size_t m = cfg.channels;
  Var hcat = concat_input(t, p, cfg, x, prev.h.at(0));
  Var a = ad::cross_layer_conv(t, hcat, p["hidden.weight"], p["hidden.bias"]);
  Gates gt = split_gates(t, a, m);
  Var carried = prev.c.at(0);
  if (memory_conv) {
    Var q = ad::softmax(t, ad::slice_channels(t, a, 4 * m, cfg.kernel_volume()));
    carried = ad::memory_cell_conv(t, carried, q, cfg.kernel_shape());
  }
  Var c = ad::add(t, ad::mul(t, gt.g, gt.i), ad::mul(t, carried, gt.f));
  Var h = ad::mul(t, ad::tanh(t, normalised(t, p, cfg, c)), gt.o);
  return {{h}, {c}};
}

}  // namespace

Vars constant_state(Tape& t, const TlstmConfig& cfg, const CellState& s) {
  Vars v;
  if (cfg.variant == Variant::slstm) {
    v.h = split_layers(t, s.h);
    v.c = split_layers(t, s.c);
    return v;
  }
  v.h.push_back(t.constant(s.h));
  if (cfg.has_memory()) v.c.push_back(t.constant(s.c));
  return v;
}

CellState values(const Tape& t, const TlstmConfig& cfg, const Vars& v) {
  if (cfg.variant == Variant::slstm) return {stack_layers(t, v.h), stack_layers(t, v.c)};
  CellState s{t.value(v.h.at(0)), Tensor()};
  if (cfg.has_memory()) s.c = t.value(v.c.at(0));
  return s;
}

Var concat_input(Tape& t, const Bound& p, const TlstmConfig& cfg, Var x, Var h_prev) {
  const Shape& hs = t.value(h_prev).shape();
  Shape grid(hs.begin() + 1, hs.end() - (hs.empty() ? 0 : 1));
  if (hs.size() != cfg.grid_rank() + 2 || grid != cfg.grid_shape() || hs.back() != cfg.channels)
    throw DimensionError("concat_input: state " + to_string(hs) + " does not fit grid " +
                         to_string(cfg.grid_shape()) + " x " + std::to_string(cfg.channels));
  Var proj = ad::affine(t, x, p["input.weight"], p["input.bias"]);
  return ad::concat_input(t, proj, h_prev, cfg.grid_rank());
}

Vars trnn_step(Tape& t, const Bound& p, const TlstmConfig& cfg, Var x, const Vars& prev) {
  require_variant(cfg, Variant::trnn);
  Var hcat = concat_input(t, p, cfg, x, prev.h.at(0));
  Var a = ad::cross_layer_conv(t, hcat, p["hidden.weight"], p["hidden.bias"]);
  return {{ad::tanh(t, normalised(t, p, cfg, a))}, {}};
}

Vars tlstm_step_no_mem(Tape& t, const Bound& p, const TlstmConfig& cfg, Var x, const Vars& prev) {
  require_variant(cfg, Variant::tlstm_no_mem);
  return lstm_like(t, p, cfg, x, prev, false);
}

Vars tlstm_step(Tape& t, const Bound& p, const TlstmConfig& cfg, Var x, const Vars& prev) {
  require_variant(cfg, Variant::tlstm);
  return lstm_like(t, p, cfg, x, prev, true);
}

Vars slstm_step(Tape& t, const Bound& p, const TlstmConfig& cfg, Var x, const Vars& prev) {
  require_variant(cfg, Variant::slstm);
  const std::size_t m = cfg.channels;
  if (prev.h.size() != cfg.layers || prev.c.size() != cfg.layers)
    throw DimensionError("sLSTM state has " + std::to_string(prev.h.size()) + " layers, config has " +
                         std::to_string(cfg.layers));
  Var below = ad::affine(t, x, p["input.weight"], p["input.bias"]);
  Vars next;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    Var z = ad::affine(t, ad::concat_channels(t, below, prev.h[l]), p["lstm.weight"], p["lstm.bias"]);
    Gates gt = split_gates(t, z, m);
    Var c = ad::add(t, ad::mul(t, gt.g, gt.i), ad::mul(t, prev.c[l], gt.f));
    Var h = ad::mul(t, ad::tanh(t, c), gt.o);
    next.h.push_back(h);
    next.c.push_back(c);
    below = h;
  }
  return next;
}

Vars step(Tape& t, const Bound& p, const TlstmConfig& cfg, Var x, const Vars& prev) {
  switch (cfg.variant) {
    case Variant::trnn: return trnn_step(t, p, cfg, x, prev);
    case Variant::tlstm_no_mem: return tlstm_step_no_mem(t, p, cfg, x, prev);
    case Variant::tlstm: return tlstm_step(t, p, cfg, x, prev);
    case Variant::slstm: return slstm_step(t, p, cfg, x, prev);
  }
  throw ContractError("unknown variant");
}

Var output_logits(Tape& t, const Bound& p, const TlstmConfig& cfg, const Vars& state) {
  Var top = cfg.variant == Variant::slstm
                ? state.h.back()
                : ad::select_location(t, state.h.at(0), cfg.grid_rank(), cfg.locations() - 1);
  return ad::affine(t, top, p["output.weight"], p["output.bias"]);
}

Var extract_output(Tape& t, const Bound& p, const TlstmConfig& cfg, const Vars& state) {
  return ad::softmax(t, output_logits(t, p, cfg, state));
}

}  // namespace cell
}  // namespace tlstm
