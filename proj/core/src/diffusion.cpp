#include "ddpolab/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ddpolab/adam.hpp"
#include "ddpolab/layers.hpp"
#include "parallel_util.hpp"

namespace ddpolab {

using nn::Tensor;

namespace {

// mu = a*x_t + b*eps_hat; shared by the pure and taped paths so both
// produce the same float32 mean.
std::pair<double, double> mu_coeffs(const VarianceSchedule& sched, int t) {
  const double a = 1.0 / std::sqrt(sched.alpha_at(t));
  const double b = -sched.beta_at(t) / (std::sqrt(1.0 - sched.alpha_bar_at(t)) *
                                        std::sqrt(sched.alpha_at(t)));
  return {a, b};
}

constexpr double kHalfLog2Pi = 0.91893853320467274178;

}  // namespace

Tensor q_sample(const Tensor& x0, int t, const Tensor& noise, const VarianceSchedule& sched) {
  sched.check_step(t);
  nn::check_same_shape(x0, noise, "q_sample");
  const double ab = sched.alpha_bar_at(t);
  return nn::axpby(std::sqrt(ab), x0, std::sqrt(1.0 - ab), noise);
}

nn::LossRecord diffusion_loss(const nn::ModelParams& params, const std::vector<Tensor>& x0s,
                              const std::vector<AttributeVector>& cs, Rng& rng,
                              const VarianceSchedule& sched) {
  if (x0s.empty()) throw std::invalid_argument("diffusion_loss: empty batch");
  if (x0s.size() != cs.size()) {
    throw std::invalid_argument("diffusion_loss: image/label count mismatch");
  }

  nn::LossRecord rec;
  nn::TapedParams tp(rec.tape, params);
  std::vector<nn::VarId> terms;
  terms.reserve(x0s.size());
  for (std::size_t i = 0; i < x0s.size(); ++i) {
    const int t = static_cast<int>(rng.uniform_int(1, sched.T));
    Tensor eps(x0s[i].shape());
    for (std::size_t j = 0; j < eps.size(); ++j) eps[j] = static_cast<float>(rng.normal());
    const Tensor x_t = q_sample(x0s[i], t, eps, sched);
    const nn::VarId out =
        nn::taped_denoiser_forward(rec.tape, tp, params.arch, rec.tape.leaf(x_t), t, cs[i]);
    terms.push_back(rec.tape.sum_sq_diff(out, eps));
  }
  rec.loss = rec.tape.s_mean(terms);
  rec.value = rec.tape.scalar_value(rec.loss);
  rec.param_ids = tp.ids();
  rec.param_shapes = tp.shapes();
  return rec;
}

std::pair<Tensor, double> p_mean_std(const nn::ModelParams& params, const Tensor& x_t, int t,
                                     const AttributeVector& c, const VarianceSchedule& sched) {
  sched.check_step(t);
  const Tensor eps_hat = nn::denoiser_forward(params, x_t, t, c);
  const auto [a, b] = mu_coeffs(sched, t);
  return {nn::axpby(a, x_t, b, eps_hat), sched.sigma(t)};
}

double gaussian_logprob(const Tensor& x, const Tensor& mu, double sigma) {
  nn::check_same_shape(x, mu, "gaussian_logprob");
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_logprob: sigma must be positive");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = static_cast<double>(x[i]) - static_cast<double>(mu[i]);
    acc += r * r;
  }
  return -acc / (2.0 * sigma * sigma) -
         static_cast<double>(x.size()) * (std::log(sigma) + kHalfLog2Pi);
}

std::pair<Tensor, double> sample_step(Rng& rng, const nn::ModelParams& params, const Tensor& x_t,
                                      int t, const AttributeVector& c,
                                      const VarianceSchedule& sched) {
  const auto [mu, sigma] = p_mean_std(params, x_t, t, c, sched);
  Tensor x_prev(mu.shape());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    x_prev[i] = static_cast<float>(static_cast<double>(mu[i]) + sigma * rng.normal());
  }
  const double lp = gaussian_logprob(x_prev, mu, sigma);
  return {std::move(x_prev), lp};
}

Trajectory sample_trajectory(Rng& rng, const nn::ModelParams& params, const AttributeVector& c,
                             const VarianceSchedule& sched) {
  Trajectory traj;
  traj.c = c;
  traj.latents.reserve(sched.T + 1);
  traj.logprobs_old.reserve(sched.T);

  Tensor x(nn::arch_spec(params.arch).image_shape);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.normal());
  traj.latents.push_back(x);

  for (int t = sched.T; t >= 1; --t) {
    // a blown-up forward pass throws before the latent check, so fold the
    // step index into whatever failure surfaces
    try {
      auto [x_prev, lp] = sample_step(rng, params, traj.latents.back(), t, c, sched);
      if (!x_prev.all_finite()) {
        throw std::runtime_error("non-finite latent");
      }
      traj.latents.push_back(std::move(x_prev));
      traj.logprobs_old.push_back(lp);
    } catch (const std::exception& e) {
      throw std::runtime_error("sample_trajectory: step t=" + std::to_string(t) + ": " +
                               e.what());
    }
  }
  return traj;
}

Tensor clamp01(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::min(1.0f, std::max(0.0f, x[i]));
  }
  return y;
}

std::vector<Tensor> sample_images(Rng& rng, const nn::ModelParams& params,
                                  const AttributeVector& c, int n, const VarianceSchedule& sched,
                                  int threads) {
  if (n < 1) throw std::invalid_argument("sample_images: n must be at least 1");
  const std::uint64_t base = rng.next_u64();
  std::vector<Tensor> out(n);
  detail::parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
    Rng r(sample_seed(base, i));
    out[i] = clamp01(sample_trajectory(r, params, c, sched).x0());
  });
  return out;
}

nn::VarId taped_step_logprob(nn::Tape& tape, const nn::TapedParams& tp, const std::string& arch,
                             const Tensor& x_t, const Tensor& x_prev, int t,
                             const AttributeVector& c, const VarianceSchedule& sched) {
  sched.check_step(t);
  const nn::VarId x_leaf = tape.leaf(x_t);
  const nn::VarId eps_hat = nn::taped_denoiser_forward(tape, tp, arch, x_leaf, t, c);
  const auto [a, b] = mu_coeffs(sched, t);
  const nn::VarId mu = tape.axpby(a, x_leaf, b, eps_hat);
  return tape.gaussian_logprob(mu, x_prev, sched.sigma(t));
}

nn::ModelParams train_diffusion(const Dataset& train, std::uint64_t seed,
                                const VarianceSchedule& sched, const DiffusionTrainConfig& cfg,
                                DiffusionTrainStats* stats) {
  if (train.samples.empty()) throw std::invalid_argument("train_diffusion: empty dataset");
  if (cfg.epochs < 1 || cfg.batch < 1 || cfg.lr <= 0.0) {
    throw std::invalid_argument("train_diffusion: bad config");
  }
  const nn::ArchSpec& spec = nn::arch_spec(cfg.arch);
  if (!nn::is_denoiser_arch(cfg.arch)) {
    throw std::invalid_argument("train_diffusion: \"" + cfg.arch + "\" is not a denoiser");
  }
  if (train.samples[0].image.shape() != spec.image_shape) {
    throw std::invalid_argument("train_diffusion: image shape does not match " + cfg.arch);
  }

  nn::ModelParams params = nn::init_params(cfg.arch, seed);
  nn::AdamState adam = nn::AdamState::init(params, cfg.lr);
  Rng shuffle_rng(stage_seed(seed, "diffusion/shuffle"));
  Rng noise_master(stage_seed(seed, "diffusion/noise"));

  const std::size_t n = train.samples.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = shuffle_rng.uniform_int(0, i);
      std::swap(order[i], order[j]);
    }

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch) {
      const std::size_t end = std::min(n, begin + cfg.batch);
      const std::uint64_t base = noise_master.next_u64();
      auto term = [&](std::size_t i) {
        const ImageSample& s = train.samples[order[begin + i]];
        Rng r(sample_seed(base, i));
        const int t = static_cast<int>(r.uniform_int(1, sched.T));
        Tensor eps(s.image.shape());
        for (std::size_t j = 0; j < eps.size(); ++j) eps[j] = static_cast<float>(r.normal());
        const Tensor x_t = q_sample(s.image, t, eps, sched);
        nn::LossRecord rec;
        nn::TapedParams tp(rec.tape, params);
        const nn::VarId out =
            nn::taped_denoiser_forward(rec.tape, tp, cfg.arch, rec.tape.leaf(x_t), t, s.label);
        rec.loss = rec.tape.sum_sq_diff(out, eps);
        rec.value = rec.tape.scalar_value(rec.loss);
        rec.param_ids = tp.ids();
        rec.param_shapes = tp.shapes();
        return rec;
      };
      nn::TermMean tm = nn::mean_term_grads(end - begin, term, cfg.threads);
      nn::adam_step(params, tm.grads, adam);
      epoch_loss += tm.loss;
      ++batches;
    }
    if (stats) stats->train_loss.push_back(epoch_loss / static_cast<double>(batches));
  }
  return params;
}

}  // namespace ddpolab
