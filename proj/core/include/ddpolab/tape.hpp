#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ddpolab/params.hpp"
#include "ddpolab/tensor.hpp"

namespace ddpolab::nn {

using VarId = int;

// Reverse-mode tape over the fixed layer inventory. Tensor-valued nodes hold
// float32 payloads; scalar nodes (losses, log-probabilities, ratios) hold
// doubles so finite-difference checks are not drowned by float rounding of
// the loss value itself. Nodes are created in topological order, so the
// backward sweep is a single reverse pass.
class Tape {
 public:
  // leaves
  VarId leaf(Tensor value);
  VarId scalar_leaf(double value);

  // tensor ops
  VarId conv3x3(VarId x, VarId w, VarId b);
  VarId affine(VarId x, VarId w, VarId b);
  VarId silu(VarId x);
  VarId add(VarId a, VarId b);
  VarId axpby(double a, VarId x, double b, VarId y);
  VarId channel_bias(VarId x, VarId b);
  VarId nearest_down2(VarId x);
  VarId nearest_up2(VarId x);
  VarId avgpool2(VarId x);
  VarId flatten(VarId x);

  // tensor -> scalar bridges (double accumulation)
  VarId sum_sq_diff(VarId x, Tensor target);
  VarId bce_logits_mean(VarId logits, Tensor targets);
  // log N(x; mu, sigma^2 I) as a function of mu; x is data, sigma constant
  VarId gaussian_logprob(VarId mu, Tensor x, double sigma);

  // scalar ops
  VarId s_add(VarId a, VarId b);
  VarId s_sub(VarId a, VarId b);
  VarId s_scale(VarId a, double k);
  VarId s_add_const(VarId a, double k);
  VarId s_exp(VarId a);
  VarId s_min(VarId a, VarId b);
  VarId s_clamp(VarId a, double lo, double hi);
  VarId s_mean(const std::vector<VarId>& terms);

  const Tensor& value(VarId id) const { return nodes_[id].value; }
  double scalar_value(VarId id) const { return nodes_[id].sval; }
  bool is_scalar(VarId id) const { return nodes_[id].is_scalar; }

  // Runs the reverse sweep from a scalar node. Gradients accumulate; call
  // once per tape.
  void backward_from(VarId loss);

  // Gradient of the swept scalar w.r.t. a leaf; zeros if the leaf did not
  // participate.
  Tensor grad_of(VarId leaf) const;
  double scalar_grad_of(VarId id) const { return nodes_[id].sgrad; }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    double sval = 0.0;
    double sgrad = 0.0;
    bool is_scalar = false;
    bool grad_alloc = false;
    std::vector<VarId> inputs;
    std::function<void(Tape&, VarId)> backward;
  };

  VarId push(Node n);
  Tensor& grad_buf(VarId id);
  void check_tensor(VarId id, const char* what) const;
  void check_scalar(VarId id, const char* what) const;

  std::vector<Node> nodes_;
};

// A recorded scalar loss: the tape, the loss node, and the parameter leaves
// it was built over. backward() turns it into one gradient per parameter.
struct LossRecord {
  Tape tape;
  VarId loss = -1;
  double value = 0.0;
  std::vector<std::pair<std::string, VarId>> param_ids;
  std::vector<std::vector<int>> param_shapes;
};

GradSet backward(LossRecord& record);

// Mean of per-term losses and gradients, terms evaluated on independent
// tapes. Reduction runs in double in fixed term order, so the result does
// not depend on the thread count. term_fn must be safe to call from
// multiple threads.
struct TermMean {
  double loss = 0.0;
  GradSet grads;
};
TermMean mean_term_grads(std::size_t n_terms,
                         const std::function<LossRecord(std::size_t)>& term_fn, int threads);

// Inserts every parameter of `params` as a tape leaf and remembers the ids.
class TapedParams {
 public:
  TapedParams(Tape& tape, const ModelParams& params);

  VarId id(const std::string& name) const;
  const std::vector<std::pair<std::string, VarId>>& ids() const { return ids_; }
  std::vector<std::vector<int>> shapes() const;

 private:
  const ModelParams* params_;
  std::vector<std::pair<std::string, VarId>> ids_;
};

}  // namespace ddpolab::nn
