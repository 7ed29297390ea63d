#include "ddpolab/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "ddpolab/layers.hpp"
#include "parallel_util.hpp"

namespace ddpolab::nn {

VarId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<VarId>(nodes_.size() - 1);
}

Tensor& Tape::grad_buf(VarId id) {
  Node& n = nodes_[id];
  if (!n.grad_alloc) {
    n.grad = Tensor::zeros(n.value.shape());
    n.grad_alloc = true;
  }
  return n.grad;
}

void Tape::check_tensor(VarId id, const char* what) const {
  if (id < 0 || id >= static_cast<VarId>(nodes_.size()) || nodes_[id].is_scalar) {
    throw std::invalid_argument(std::string(what) + ": expected tensor node");
  }
}

void Tape::check_scalar(VarId id, const char* what) const {
  if (id < 0 || id >= static_cast<VarId>(nodes_.size()) || !nodes_[id].is_scalar) {
    throw std::invalid_argument(std::string(what) + ": expected scalar node");
  }
}

VarId Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

VarId Tape::scalar_leaf(double value) {
  Node n;
  n.is_scalar = true;
  n.sval = value;
  return push(std::move(n));
}

VarId Tape::conv3x3(VarId x, VarId w, VarId b) {
  check_tensor(x, "conv3x3");
  Node n;
  n.value = nn::conv3x3(nodes_[x].value, nodes_[w].value, nodes_[b].value);
  n.inputs = {x, w, b};
  n.backward = [](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    conv3x3_backward(t.nodes_[s.inputs[0]].value, t.nodes_[s.inputs[1]].value, s.grad,
                     t.grad_buf(s.inputs[0]), t.grad_buf(s.inputs[1]), t.grad_buf(s.inputs[2]));
  };
  return push(std::move(n));
}

VarId Tape::affine(VarId x, VarId w, VarId b) {
  check_tensor(x, "affine");
  Node n;
  n.value = nn::affine(nodes_[x].value, nodes_[w].value, nodes_[b].value);
  n.inputs = {x, w, b};
  n.backward = [](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    affine_backward(t.nodes_[s.inputs[0]].value, t.nodes_[s.inputs[1]].value, s.grad,
                    t.grad_buf(s.inputs[0]), t.grad_buf(s.inputs[1]), t.grad_buf(s.inputs[2]));
  };
  return push(std::move(n));
}

VarId Tape::silu(VarId x) {
  check_tensor(x, "silu");
  Node n;
  n.value = nn::silu(nodes_[x].value);
  n.inputs = {x};
  n.backward = [](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    silu_backward(t.nodes_[s.inputs[0]].value, s.grad, t.grad_buf(s.inputs[0]));
  };
  return push(std::move(n));
}

VarId Tape::add(VarId a, VarId b) {
  check_tensor(a, "add");
  check_tensor(b, "add");
  Node n;
  n.value = nn::add(nodes_[a].value, nodes_[b].value);
  n.inputs = {a, b};
  n.backward = [](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    for (int k = 0; k < 2; ++k) {
      Tensor& g = t.grad_buf(s.inputs[k]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s.grad[i];
    }
  };
  return push(std::move(n));
}

VarId Tape::axpby(double a, VarId x, double b, VarId y) {
  check_tensor(x, "axpby");
  check_tensor(y, "axpby");
  Node n;
  n.value = nn::axpby(a, nodes_[x].value, b, nodes_[y].value);
  n.inputs = {x, y};
  n.backward = [a, b](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    Tensor& gx = t.grad_buf(s.inputs[0]);
    Tensor& gy2 = t.grad_buf(s.inputs[1]);
    for (std::size_t i = 0; i < s.grad.size(); ++i) {
      gx[i] += static_cast<float>(a * s.grad[i]);
      gy2[i] += static_cast<float>(b * s.grad[i]);
    }
  };
  return push(std::move(n));
}

VarId Tape::channel_bias(VarId x, VarId b) {
  check_tensor(x, "channel_bias");
  Node n;
  n.value = nn::channel_bias(nodes_[x].value, nodes_[b].value);
  n.inputs = {x, b};
  n.backward = [](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    channel_bias_backward(s.grad, t.grad_buf(s.inputs[0]), t.grad_buf(s.inputs[1]));
  };
  return push(std::move(n));
}

VarId Tape::nearest_down2(VarId x) {
  check_tensor(x, "nearest_down2");
  Node n;
  n.value = nn::nearest_down2(nodes_[x].value);
  n.inputs = {x};
  n.backward = [](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    nearest_down2_backward(t.nodes_[s.inputs[0]].value, s.grad, t.grad_buf(s.inputs[0]));
  };
  return push(std::move(n));
}

VarId Tape::nearest_up2(VarId x) {
  check_tensor(x, "nearest_up2");
  Node n;
  n.value = nn::nearest_up2(nodes_[x].value);
  n.inputs = {x};
  n.backward = [](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    nearest_up2_backward(t.nodes_[s.inputs[0]].value, s.grad, t.grad_buf(s.inputs[0]));
  };
  return push(std::move(n));
}

VarId Tape::avgpool2(VarId x) {
  check_tensor(x, "avgpool2");
  Node n;
  n.value = nn::avgpool2(nodes_[x].value);
  n.inputs = {x};
  n.backward = [](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    avgpool2_backward(t.nodes_[s.inputs[0]].value, s.grad, t.grad_buf(s.inputs[0]));
  };
  return push(std::move(n));
}

VarId Tape::flatten(VarId x) {
  check_tensor(x, "flatten");
  Node n;
  n.value = reshape(nodes_[x].value, {static_cast<int>(nodes_[x].value.size())});
  n.inputs = {x};
  n.backward = [](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    Tensor& g = t.grad_buf(s.inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s.grad[i];
  };
  return push(std::move(n));
}

VarId Tape::sum_sq_diff(VarId x, Tensor target) {
  check_tensor(x, "sum_sq_diff");
  check_same_shape(nodes_[x].value, target, "sum_sq_diff");
  Node n;
  n.is_scalar = true;
  const Tensor& xv = nodes_[x].value;
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double d = static_cast<double>(xv[i]) - target[i];
    acc += d * d;
  }
  n.sval = acc;
  n.inputs = {x};
  auto tgt = std::make_shared<Tensor>(std::move(target));
  n.backward = [tgt](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    const Tensor& xv = t.nodes_[s.inputs[0]].value;
    Tensor& gx = t.grad_buf(s.inputs[0]);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      gx[i] += static_cast<float>(2.0 * (static_cast<double>(xv[i]) - (*tgt)[i]) * s.sgrad);
    }
  };
  return push(std::move(n));
}

VarId Tape::bce_logits_mean(VarId logits, Tensor targets) {
  check_tensor(logits, "bce_logits_mean");
  check_same_shape(nodes_[logits].value, targets, "bce_logits_mean");
  const Tensor& z = nodes_[logits].value;
  const std::size_t h = z.size();
  Node n;
  n.is_scalar = true;
  double acc = 0.0;
  for (std::size_t i = 0; i < h; ++i) {
    const double zi = z[i], yi = targets[i];
    // stable form of -[y log s + (1-y) log(1-s)]
    acc += std::max(zi, 0.0) - zi * yi + std::log1p(std::exp(-std::abs(zi)));
  }
  n.sval = acc / static_cast<double>(h);
  n.inputs = {logits};
  auto tgt = std::make_shared<Tensor>(std::move(targets));
  n.backward = [tgt, h](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    const Tensor& z = t.nodes_[s.inputs[0]].value;
    Tensor& gz = t.grad_buf(s.inputs[0]);
    for (std::size_t i = 0; i < h; ++i) {
      gz[i] += static_cast<float>((sigmoid(z[i]) - (*tgt)[i]) / static_cast<double>(h) * s.sgrad);
    }
  };
  return push(std::move(n));
}

VarId Tape::gaussian_logprob(VarId mu, Tensor x, double sigma) {
  check_tensor(mu, "gaussian_logprob");
  check_same_shape(nodes_[mu].value, x, "gaussian_logprob");
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_logprob: sigma must be positive");
  const Tensor& m = nodes_[mu].value;
  const std::size_t d = m.size();
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  Node n;
  n.is_scalar = true;
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double r = static_cast<double>(x[i]) - m[i];
    acc += r * r;
  }
  n.sval = -acc / (2.0 * sigma * sigma) - static_cast<double>(d) * (std::log(sigma) + kHalfLog2Pi);
  n.inputs = {mu};
  auto xv = std::make_shared<Tensor>(std::move(x));
  const double inv_var = 1.0 / (sigma * sigma);
  n.backward = [xv, inv_var](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    const Tensor& m = t.nodes_[s.inputs[0]].value;
    Tensor& gm = t.grad_buf(s.inputs[0]);
    for (std::size_t i = 0; i < m.size(); ++i) {
      gm[i] += static_cast<float>(((*xv)[i] - static_cast<double>(m[i])) * inv_var * s.sgrad);
    }
  };
  return push(std::move(n));
}

VarId Tape::s_add(VarId a, VarId b) {
  check_scalar(a, "s_add");
  check_scalar(b, "s_add");
  Node n;
  n.is_scalar = true;
  n.sval = nodes_[a].sval + nodes_[b].sval;
  n.inputs = {a, b};
  n.backward = [](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    t.nodes_[s.inputs[0]].sgrad += s.sgrad;
    t.nodes_[s.inputs[1]].sgrad += s.sgrad;
  };
  return push(std::move(n));
}

VarId Tape::s_sub(VarId a, VarId b) {
  check_scalar(a, "s_sub");
  check_scalar(b, "s_sub");
  Node n;
  n.is_scalar = true;
  n.sval = nodes_[a].sval - nodes_[b].sval;
  n.inputs = {a, b};
  n.backward = [](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    t.nodes_[s.inputs[0]].sgrad += s.sgrad;
    t.nodes_[s.inputs[1]].sgrad -= s.sgrad;
  };
  return push(std::move(n));
}

VarId Tape::s_scale(VarId a, double k) {
  check_scalar(a, "s_scale");
  Node n;
  n.is_scalar = true;
  n.sval = nodes_[a].sval * k;
  n.inputs = {a};
  n.backward = [k](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    t.nodes_[s.inputs[0]].sgrad += k * s.sgrad;
  };
  return push(std::move(n));
}

VarId Tape::s_add_const(VarId a, double k) {
  check_scalar(a, "s_add_const");
  Node n;
  n.is_scalar = true;
  n.sval = nodes_[a].sval + k;
  n.inputs = {a};
  n.backward = [](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    t.nodes_[s.inputs[0]].sgrad += s.sgrad;
  };
  return push(std::move(n));
}

VarId Tape::s_exp(VarId a) {
  check_scalar(a, "s_exp");
  Node n;
  n.is_scalar = true;
  n.sval = std::exp(nodes_[a].sval);
  n.inputs = {a};
  const double ev = n.sval;
  n.backward = [ev](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    t.nodes_[s.inputs[0]].sgrad += ev * s.sgrad;
  };
  return push(std::move(n));
}

VarId Tape::s_min(VarId a, VarId b) {
  check_scalar(a, "s_min");
  check_scalar(b, "s_min");
  Node n;
  n.is_scalar = true;
  // ties take the first argument
  const bool take_a = nodes_[a].sval <= nodes_[b].sval;
  n.sval = take_a ? nodes_[a].sval : nodes_[b].sval;
  n.inputs = {a, b};
  n.backward = [take_a](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    t.nodes_[s.inputs[take_a ? 0 : 1]].sgrad += s.sgrad;
  };
  return push(std::move(n));
}

VarId Tape::s_clamp(VarId a, double lo, double hi) {
  check_scalar(a, "s_clamp");
  Node n;
  n.is_scalar = true;
  const double v = nodes_[a].sval;
  n.sval = std::clamp(v, lo, hi);
  n.inputs = {a};
  const bool inside = v >= lo && v <= hi;
  n.backward = [inside](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    if (inside) t.nodes_[s.inputs[0]].sgrad += s.sgrad;
  };
  return push(std::move(n));
}

VarId Tape::s_mean(const std::vector<VarId>& terms) {
  if (terms.empty()) throw std::invalid_argument("s_mean: empty term list");
  Node n;
  n.is_scalar = true;
  double acc = 0.0;
  for (VarId id : terms) {
    check_scalar(id, "s_mean");
    acc += nodes_[id].sval;
  }
  n.sval = acc / static_cast<double>(terms.size());
  n.inputs = terms;
  n.backward = [](Tape& t, VarId self) {
    const Node& s = t.nodes_[self];
    const double g = s.sgrad / static_cast<double>(s.inputs.size());
    for (VarId id : s.inputs) t.nodes_[id].sgrad += g;
  };
  return push(std::move(n));
}

void Tape::backward_from(VarId loss) {
  check_scalar(loss, "backward_from");
  nodes_[loss].sgrad = 1.0;
  for (VarId id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.backward) continue;
    if (n.is_scalar) {
      if (n.sgrad == 0.0) continue;
    } else if (!n.grad_alloc) {
      continue;
    }
    n.backward(*this, id);
  }
}

Tensor Tape::grad_of(VarId leaf) const {
  const Node& n = nodes_[leaf];
  if (n.is_scalar) throw std::invalid_argument("grad_of: tensor leaf expected");
  if (!n.grad_alloc) return Tensor::zeros(n.value.shape());
  return n.grad;
}

GradSet backward(LossRecord& record) {
  record.tape.backward_from(record.loss);
  GradSet gs;
  gs.grads.reserve(record.param_ids.size());
  for (std::size_t i = 0; i < record.param_ids.size(); ++i) {
    const auto& [name, id] = record.param_ids[i];
    gs.grads.emplace_back(name, record.tape.grad_of(id));
  }
  return gs;
}

TermMean mean_term_grads(std::size_t n_terms,
                         const std::function<LossRecord(std::size_t)>& term_fn, int threads) {
  if (n_terms == 0) throw std::invalid_argument("mean_term_grads: no terms");
  if (threads < 1) threads = 1;

  std::vector<double> losses(n_terms, 0.0);
  std::vector<GradSet> grads(n_terms);
  detail::parallel_for(n_terms, threads, [&](std::size_t i) {
    LossRecord rec = term_fn(i);
    losses[i] = rec.value;
    grads[i] = backward(rec);
  });

  TermMean out;
  const double inv = 1.0 / static_cast<double>(n_terms);
  for (std::size_t i = 0; i < n_terms; ++i) out.loss += losses[i];
  out.loss *= inv;

  out.grads.grads.reserve(grads[0].grads.size());
  for (std::size_t p = 0; p < grads[0].grads.size(); ++p) {
    const auto& [name, g0] = grads[0].grads[p];
    std::vector<double> acc(g0.size(), 0.0);
    for (std::size_t i = 0; i < n_terms; ++i) {
      const Tensor& g = grads[i].grads[p].second;
      for (std::size_t j = 0; j < g.size(); ++j) acc[j] += g[j];
    }
    Tensor mean_g(g0.shape());
    for (std::size_t j = 0; j < mean_g.size(); ++j) {
      mean_g[j] = static_cast<float>(acc[j] * inv);
    }
    out.grads.grads.emplace_back(name, std::move(mean_g));
  }
  return out;
}

TapedParams::TapedParams(Tape& tape, const ModelParams& params) : params_(&params) {
  ids_.reserve(params.entries.size());
  for (const auto& e : params.entries) {
    ids_.emplace_back(e.name, tape.leaf(e.value));
  }
}

VarId TapedParams::id(const std::string& name) const {
  for (const auto& [n, id] : ids_) {
    if (n == name) return id;
  }
  throw std::invalid_argument("TapedParams: unknown parameter " + name);
}

std::vector<std::vector<int>> TapedParams::shapes() const {
  std::vector<std::vector<int>> out;
  out.reserve(params_->entries.size());
  for (const auto& e : params_->entries) out.push_back(e.value.shape());
  return out;
}

}  // namespace ddpolab::nn
