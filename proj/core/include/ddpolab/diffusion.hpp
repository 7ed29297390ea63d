#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ddpolab/attributes.hpp"
#include "ddpolab/dataset.hpp"
#include "ddpolab/models.hpp"
#include "ddpolab/rng.hpp"
#include "ddpolab/schedule.hpp"
#include "ddpolab/tape.hpp"
#include "ddpolab/tensor.hpp"

namespace ddpolab {

// One full reverse chain: latents x_T..x_0 and the per-step log-densities
// under the parameters that generated them. reward is set later by the
// reward module.
struct Trajectory {
  AttributeVector c;
  std::vector<nn::Tensor> latents;
  std::vector<double> logprobs_old;
  double reward = 0.0;
  bool reward_set = false;

  const nn::Tensor& x0() const { return latents.back(); }
};

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) noise
nn::Tensor q_sample(const nn::Tensor& x0, int t, const nn::Tensor& noise,
                    const VarianceSchedule& sched);

// Mean epsilon-MSE over the batch; t uniform on 1..T and noise standard
// normal, drawn from rng per sample. Returns the recorded loss for
// backward() plus its value.
nn::LossRecord diffusion_loss(const nn::ModelParams& params, const std::vector<nn::Tensor>& x0s,
                              const std::vector<AttributeVector>& cs, Rng& rng,
                              const VarianceSchedule& sched);

// Reverse-step Gaussian: mu from the epsilon prediction, sigma from the
// floored posterior variance. sigma never depends on x_t or params.
std::pair<nn::Tensor, double> p_mean_std(const nn::ModelParams& params, const nn::Tensor& x_t,
                                         int t, const AttributeVector& c,
                                         const VarianceSchedule& sched);

// log N(x; mu, sigma^2 I), summed over coordinates
double gaussian_logprob(const nn::Tensor& x, const nn::Tensor& mu, double sigma);

// One ancestral step: x_{t-1} = mu + sigma z, with its log-density.
std::pair<nn::Tensor, double> sample_step(Rng& rng, const nn::ModelParams& params,
                                          const nn::Tensor& x_t, int t, const AttributeVector& c,
                                          const VarianceSchedule& sched);

Trajectory sample_trajectory(Rng& rng, const nn::ModelParams& params, const AttributeVector& c,
                             const VarianceSchedule& sched);

// n terminal images, clamped to [0,1] for serialization and evaluation.
// Per-sample seeds are derived from one rng draw, so results do not depend
// on how the loop is scheduled.
std::vector<nn::Tensor> sample_images(Rng& rng, const nn::ModelParams& params,
                                      const AttributeVector& c, int n,
                                      const VarianceSchedule& sched, int threads = 1);

// Taped log-density of the stored transition x_t -> x_prev under the
// current parameters; the node is differentiable w.r.t. the TapedParams
// leaves. Shares its mean arithmetic with p_mean_std bit for bit.
nn::VarId taped_step_logprob(nn::Tape& tape, const nn::TapedParams& tp, const std::string& arch,
                             const nn::Tensor& x_t, const nn::Tensor& x_prev, int t,
                             const AttributeVector& c, const VarianceSchedule& sched);

nn::Tensor clamp01(const nn::Tensor& x);

struct DiffusionTrainConfig {
  std::string arch = nn::kDenoiser16;
  int epochs = 30;
  int batch = 64;
  double lr = 1e-3;
  int threads = 1;
};

struct DiffusionTrainStats {
  std::vector<double> train_loss;  // mean per-sample epsilon-MSE per epoch
};

// Supervised denoiser training. Per-sample (t, noise) draws come from seeds
// derived per sample, so the result is identical for every thread count.
nn::ModelParams train_diffusion(const Dataset& train, std::uint64_t seed,
                                const VarianceSchedule& sched,
                                const DiffusionTrainConfig& cfg = {},
                                DiffusionTrainStats* stats = nullptr);

}  // namespace ddpolab
