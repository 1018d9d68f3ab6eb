#pragma once

// Reverse-mode differentiation over tensor values.
//
// A Tape records every operation executed through the functions in this
// header, in execution order, together with a closure that pushes the output
// gradient back to the inputs. Nodes only ever reference earlier nodes, so a
// single reverse sweep in recording order is a valid topological traversal.

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "tlstm/parameters.hpp"
#include "tlstm/tensor.hpp"
#include "tlstm/tensor_ops.hpp"

namespace tlstm::ad {

struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const { return id != npos; }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  /// Leaf that never receives a gradient (inputs, carried state).
  Var constant(Tensor value);
  /// Leaf whose gradient is collected by backward().
  Var leaf(Tensor value);
  /// Appends an interior node. `fn` may be empty when no input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward fn);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool any_requires_grad(std::initializer_list<Var> vars) const;

  /// Gradient accumulator of v, zero-initialised on first use; nullptr when v
  /// does not require a gradient.
  Tensor* grad_sink(Var v);
  /// Accumulated gradient, or an empty tensor if none was propagated.
  const Tensor& grad(Var v) const { return nodes_.at(v.id).grad; }

  /// Reverse sweep from a scalar loss. Every leaf receives a (possibly
  /// zero) gradient. Throws ContractError for a non-scalar loss.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::size_t>& inputs(Var v) const { return nodes_.at(v.id).inputs; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    Backward backward;
    bool requires_grad = false;
    bool leaf = false;
  };
  std::deque<Node> nodes_;
};

// Elementwise and structural operations.
Var add(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
Var tanh(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var sum(Tape& t, Var a);
Var softmax(Tape& t, Var a);
/// Last-axis slice [begin, begin + count).
Var slice_channels(Tape& t, Var a, std::size_t begin, std::size_t count);
/// Concatenation along the last axis.
Var concat_channels(Tape& t, Var a, Var b);
/// Channel vector at linear grid location `location` of a
/// [batch] x grid x M tensor whose grid has `grid_rank` axes: returns [batch, M].
Var select_location(Tape& t, Var a, std::size_t grid_rank, std::size_t location);

// Model primitives.
Var affine(Tape& t, Var x, Var w, Var b);
/// proj: [batch, M], prev: [batch] x P-grid x M  ->  [batch] x (P+1)-grid x M.
/// The all-zero corner holds proj, locations with every index >= 1 hold
/// prev shifted by one along every axis, all others are zero.
Var concat_input(Tape& t, Var proj, Var prev, std::size_t grid_rank);
Var cross_layer_conv(Tape& t, Var hcat, Var w, Var b);
Var memory_cell_conv(Tape& t, Var c, Var bank, const std::vector<std::size_t>& kernel);
Var channel_norm(Tape& t, Var z, Var gain, Var bias);
Var layer_norm(Tape& t, Var z, Var gain, Var bias);
/// Sum over rows n of weight[n] * -log softmax(logits[n])[target[n]].
/// Rows with weight 0 contribute nothing.
Var softmax_nll(Tape& t, Var logits, std::span<const int> targets, std::span<const double> weights);

/// Parameters bound to leaves of a tape.
class Bound {
 public:
  /// With trainable = false the parameters enter the tape as constants and
  /// no backward closures are recorded.
  Bound(Tape& tape, const ParameterSet& params, bool trainable = true);
  Var operator[](std::string_view name) const;
  bool contains(std::string_view name) const;
  /// dLoss/dθ after tape.backward(); zero tensors for unused parameters.
  Gradients gradients() const;

 private:
  Tape* tape_;
  std::vector<std::pair<std::string, Var>> vars_;
};

/// Records `loss_of` on a fresh tape, runs backward, returns the gradients.
Gradients backward(const ParameterSet& params,
                   const std::function<Var(Tape&, const Bound&)>& loss_of);

/// Central differences (f(θ + h e_i) - f(θ - h e_i)) / 2h for every scalar.
Gradients finite_diff(const std::function<double(const ParameterSet&)>& f, const ParameterSet& theta,
                      double step = 1e-5);

/// max over all entries of |a - n| / max(|a|, |n|, floor).
double max_relative_error(const Gradients& analytic, const Gradients& numeric, double floor = 1e-8);

}  // namespace tlstm::ad
