#include "ddpolab/ddpo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <utility>

#include "ddpolab/adam.hpp"
#include "parallel_util.hpp"

namespace ddpolab {

using nn::Tensor;

RolloutBatch collect_rollouts(const nn::ModelParams& params_old,
                              const std::vector<AttributeVector>& prompts, int per_prompt,
                              Rng& rng, const VarianceSchedule& sched, const RewardFn& reward,
                              int threads) {
  if (prompts.empty()) throw std::invalid_argument("collect_rollouts: empty prompt set");
  if (per_prompt < 1) throw std::invalid_argument("collect_rollouts: per_prompt must be >= 1");
  if (!nn::is_denoiser_arch(params_old.arch)) {
    throw std::invalid_argument("collect_rollouts: params are \"" + params_old.arch + "\"");
  }
  for (const AttributeVector& c : prompts) {
    if (!c.valid()) throw std::invalid_argument("collect_rollouts: invalid prompt vector");
  }

  RolloutBatch batch;
  batch.prompts = prompts;
  batch.snapshot_revision = params_old.revision;
  batch.sched = sched;

  const std::size_t n = prompts.size() * static_cast<std::size_t>(per_prompt);
  batch.trajectories.resize(n);
  batch.prompt_index.resize(n);
  const std::uint64_t base = rng.next_u64();
  detail::parallel_for(n, threads, [&](std::size_t i) {
    const int p = static_cast<int>(i / static_cast<std::size_t>(per_prompt));
    Rng r(sample_seed(base, i));
    Trajectory tr = sample_trajectory(r, params_old, prompts[p], sched);
    tr.reward = reward(tr.x0(), tr.c);
    tr.reward_set = true;
    batch.prompt_index[i] = p;
    batch.trajectories[i] = std::move(tr);
  });
  return batch;
}

RolloutBatch collect_rollouts(const nn::ModelParams& params_old,
                              const std::vector<AttributeVector>& prompts, int per_prompt,
                              Rng& rng, const VarianceSchedule& sched,
                              const nn::ModelParams& classifier, int threads) {
  return collect_rollouts(params_old, prompts, per_prompt, rng, sched,
                          make_classifier_reward(classifier), threads);
}

std::vector<double> recompute_logprobs(const nn::ModelParams& params, const Trajectory& traj,
                                       const VarianceSchedule& sched) {
  if (traj.latents.size() != static_cast<std::size_t>(sched.T) + 1) {
    throw std::invalid_argument("recompute_logprobs: trajectory length does not match schedule");
  }
  std::vector<double> out;
  out.reserve(sched.T);
  for (int k = 0; k < sched.T; ++k) {
    const int t = sched.T - k;
    const auto [mu, sigma] = p_mean_std(params, traj.latents[k], t, traj.c, sched);
    out.push_back(gaussian_logprob(traj.latents[k + 1], mu, sigma));
  }
  return out;
}

void compute_advantages(RolloutBatch& batch, bool normalize) {
  if (batch.trajectories.empty()) throw std::invalid_argument("compute_advantages: empty batch");
  const std::size_t n = batch.trajectories.size();
  for (const Trajectory& tr : batch.trajectories) {
    if (!tr.reward_set) throw std::invalid_argument("compute_advantages: rewards not set");
  }

  batch.advantages.assign(n, 0.0);
  if (!normalize) {
    for (std::size_t i = 0; i < n; ++i) batch.advantages[i] = batch.trajectories[i].reward;
    return;
  }

  const std::size_t groups = batch.prompts.size();
  std::vector<double> sum(groups, 0.0), sumsq(groups, 0.0);
  std::vector<std::size_t> count(groups, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int g = batch.prompt_index[i];
    const double r = batch.trajectories[i].reward;
    sum[g] += r;
    sumsq[g] += r * r;
    count[g] += 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int g = batch.prompt_index[i];
    if (count[g] < 2) continue;  // singleton groups keep advantage 0
    const double m = sum[g] / static_cast<double>(count[g]);
    const double var = std::max(0.0, sumsq[g] / static_cast<double>(count[g]) - m * m);
    const double sd = std::max(std::sqrt(var), 1e-4);
    batch.advantages[i] = (batch.trajectories[i].reward - m) / sd;
  }
}

std::vector<StepRef> all_steps(const RolloutBatch& batch) {
  std::vector<StepRef> steps;
  steps.reserve(batch.trajectories.size() * static_cast<std::size_t>(batch.sched.T));
  for (std::size_t i = 0; i < batch.trajectories.size(); ++i) {
    for (int k = 0; k < batch.sched.T; ++k) {
      steps.push_back({static_cast<int>(i), k});
    }
  }
  return steps;
}

namespace {

struct StepTerm {
  nn::VarId objective;  // min(ratio*A, clip(ratio)*A)
  double ratio = 0.0;
  double kl = 0.0;  // logp_old - logp_theta
};

StepTerm append_step_term(nn::Tape& tape, const nn::TapedParams& tp, const std::string& arch,
                          const RolloutBatch& batch, const StepRef& ref, double clip_eps) {
  const Trajectory& tr = batch.trajectories[static_cast<std::size_t>(ref.traj)];
  const int t = batch.sched.T - ref.step;
  const Tensor& x_t = tr.latents[static_cast<std::size_t>(ref.step)];
  const Tensor& x_prev = tr.latents[static_cast<std::size_t>(ref.step) + 1];
  const double lp_old = tr.logprobs_old[static_cast<std::size_t>(ref.step)];
  const double adv = batch.advantages[static_cast<std::size_t>(ref.traj)];

  const nn::VarId lp_new =
      taped_step_logprob(tape, tp, arch, x_t, x_prev, t, tr.c, batch.sched);
  const nn::VarId ratio = tape.s_exp(tape.s_sub(lp_new, tape.scalar_leaf(lp_old)));
  const double ratio_v = tape.scalar_value(ratio);
  if (!std::isfinite(ratio_v)) {
    throw std::runtime_error("ppo_clip_loss: non-finite importance ratio at t=" +
                             std::to_string(t));
  }
  const nn::VarId unclipped = tape.s_scale(ratio, adv);
  const nn::VarId clipped =
      tape.s_scale(tape.s_clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps), adv);
  StepTerm out;
  out.objective = tape.s_min(unclipped, clipped);
  out.ratio = ratio_v;
  out.kl = lp_old - tape.scalar_value(lp_new);
  return out;
}

void check_loss_inputs(const nn::ModelParams& params, const RolloutBatch& batch,
                       const std::vector<StepRef>& steps, double clip_eps) {
  if (steps.empty()) throw std::invalid_argument("ppo_clip_loss: no steps");
  if (batch.advantages.size() != batch.trajectories.size()) {
    throw std::invalid_argument("ppo_clip_loss: advantages not computed");
  }
  if (clip_eps <= 0.0 || clip_eps >= 1.0) {
    throw std::invalid_argument("ppo_clip_loss: clip_eps must be in (0,1)");
  }
  if (!nn::is_denoiser_arch(params.arch)) {
    throw std::invalid_argument("ppo_clip_loss: params are \"" + params.arch + "\"");
  }
  const auto n = static_cast<int>(batch.trajectories.size());
  for (const StepRef& ref : steps) {
    if (ref.traj < 0 || ref.traj >= n || ref.step < 0 || ref.step >= batch.sched.T) {
      throw std::invalid_argument("ppo_clip_loss: step reference out of range");
    }
  }
}

}  // namespace

nn::LossRecord ppo_clip_loss(const nn::ModelParams& params, const RolloutBatch& batch,
                             const std::vector<StepRef>& steps, double clip_eps,
                             PpoDiagnostics* diag) {
  check_loss_inputs(params, batch, steps, clip_eps);

  nn::LossRecord rec;
  nn::TapedParams tp(rec.tape, params);
  std::vector<nn::VarId> terms;
  terms.reserve(steps.size());
  double sum_ratio = 0.0, sum_kl = 0.0;
  std::size_t clipped_terms = 0;
  for (const StepRef& ref : steps) {
    const StepTerm st = append_step_term(rec.tape, tp, params.arch, batch, ref, clip_eps);
    terms.push_back(st.objective);
    sum_ratio += st.ratio;
    sum_kl += st.kl;
    if (std::fabs(st.ratio - 1.0) > clip_eps) ++clipped_terms;
  }
  rec.loss = rec.tape.s_scale(rec.tape.s_mean(terms), -1.0);
  rec.value = rec.tape.scalar_value(rec.loss);
  rec.param_ids = tp.ids();
  rec.param_shapes = tp.shapes();

  if (diag) {
    const double n = static_cast<double>(steps.size());
    diag->mean_ratio = sum_ratio / n;
    diag->clip_fraction = static_cast<double>(clipped_terms) / n;
    diag->approx_kl = sum_kl / n;
    diag->terms = steps.size();
  }
  return rec;
}

nn::LossRecord ppo_clip_loss(const nn::ModelParams& params, const RolloutBatch& batch,
                             double clip_eps, PpoDiagnostics* diag) {
  return ppo_clip_loss(params, batch, all_steps(batch), clip_eps, diag);
}

DdpoResult ddpo_finetune(const nn::ModelParams& start, const RewardFn& reward, Rng& rng,
                         const VarianceSchedule& sched, const DdpoConfig& cfg) {
  if (cfg.prompts.empty()) throw std::invalid_argument("ddpo_finetune: empty prompt set");
  for (const AttributeVector& c : cfg.prompts) {
    if (!c.valid()) throw std::invalid_argument("ddpo_finetune: invalid prompt vector");
  }
  if (cfg.per_prompt < 1 || cfg.rounds < 1 || cfg.minibatch < 1 || cfg.max_epochs < 1) {
    throw std::invalid_argument("ddpo_finetune: counts must be >= 1");
  }
  if (cfg.clip_eps <= 0.0 || cfg.clip_eps >= 1.0) {
    throw std::invalid_argument("ddpo_finetune: clip_eps must be in (0,1)");
  }
  if (cfg.stop_tol <= 0.0 || cfg.stop_window < 2) {
    throw std::invalid_argument("ddpo_finetune: stop_tol must be > 0 and stop_window >= 2");
  }
  if (cfg.lr < 0.0 || cfg.kl_limit <= 0.0) {
    throw std::invalid_argument("ddpo_finetune: lr must be >= 0 and kl_limit > 0");
  }
  if (!nn::is_denoiser_arch(start.arch)) {
    throw std::invalid_argument("ddpo_finetune: params are \"" + start.arch + "\"");
  }
  nn::validate_params(start);

  DdpoResult result;
  result.params = start;
  nn::AdamState adam = nn::AdamState::init(result.params, cfg.lr);
  std::vector<double> reward_hist;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const nn::ModelParams snapshot = result.params;
    DdpoEpochStats row;
    row.epoch = epoch;

    try {
      RolloutBatch batch = collect_rollouts(result.params, cfg.prompts, cfg.per_prompt, rng,
                                            sched, reward, cfg.threads);
      double mean_r = 0.0;
      for (const Trajectory& tr : batch.trajectories) mean_r += tr.reward;
      mean_r /= static_cast<double>(batch.trajectories.size());
      row.mean_reward = mean_r;

      compute_advantages(batch, cfg.normalize_advantages);
      std::vector<StepRef> steps = all_steps(batch);

      double sum_clip = 0.0, sum_kl = 0.0;
      std::size_t seen_terms = 0;
      for (int round = 0; round < cfg.rounds && !row.kl_abort; ++round) {
        for (std::size_t i = steps.size() - 1; i > 0; --i) {
          const std::size_t j = rng.uniform_int(0, i);
          std::swap(steps[i], steps[j]);
        }
        for (std::size_t begin = 0; begin < steps.size() && !row.kl_abort;
             begin += cfg.minibatch) {
          const std::size_t end = std::min(steps.size(), begin + cfg.minibatch);
          const std::size_t mb = end - begin;
          std::vector<double> ratios(mb, 0.0), kls(mb, 0.0);
          auto term = [&](std::size_t i) {
            nn::LossRecord rec;
            nn::TapedParams tp(rec.tape, result.params);
            const StepTerm st = append_step_term(rec.tape, tp, result.params.arch, batch,
                                                 steps[begin + i], cfg.clip_eps);
            rec.loss = rec.tape.s_scale(st.objective, -1.0);
            rec.value = rec.tape.scalar_value(rec.loss);
            rec.param_ids = tp.ids();
            rec.param_shapes = tp.shapes();
            ratios[i] = st.ratio;
            kls[i] = st.kl;
            return rec;
          };
          nn::TermMean tm = nn::mean_term_grads(mb, term, cfg.threads);
          if (!std::isfinite(tm.loss) || !tm.grads.all_finite()) {
            throw std::runtime_error("non-finite minibatch loss");
          }
          double mb_kl = 0.0;
          for (std::size_t i = 0; i < mb; ++i) {
            mb_kl += kls[i];
            if (std::fabs(ratios[i] - 1.0) > cfg.clip_eps) sum_clip += 1.0;
          }
          mb_kl /= static_cast<double>(mb);
          sum_kl += mb_kl * static_cast<double>(mb);
          seen_terms += mb;
          if (mb_kl > cfg.kl_limit) {
            row.kl_abort = true;  // drift too large; skip remaining rounds
            break;
          }
          nn::adam_step(result.params, tm.grads, adam);
        }
      }
      if (seen_terms > 0) {
        row.clip_fraction = sum_clip / static_cast<double>(seen_terms);
        row.approx_kl = sum_kl / static_cast<double>(seen_terms);
      }
    } catch (const std::exception& ex) {
      result.params = snapshot;
      result.aborted = true;
      result.abort_reason = ex.what();
      break;
    }

    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(row);
    reward_hist.push_back(row.mean_reward);

    if (epoch >= cfg.stop_window - 1) {
      bool plateau = true;
      for (int w = 1; w < cfg.stop_window; ++w) {
        if (std::fabs(reward_hist[epoch] - reward_hist[epoch - w]) >= cfg.stop_tol) {
          plateau = false;
          break;
        }
      }
      if (plateau) {
        result.stopped_early = true;
        break;
      }
    }
  }
  return result;
}

DdpoResult ddpo_finetune(const nn::ModelParams& start, const nn::ModelParams& classifier,
                         Rng& rng, const VarianceSchedule& sched, const DdpoConfig& cfg) {
  return ddpo_finetune(start, make_classifier_reward(classifier), rng, sched, cfg);
}

std::vector<AttributeVector> default_ddpo_prompts() {
  std::vector<AttributeVector> prompts;
  for (int mel = 1; mel >= 0; --mel) {
    for (int k = 0; k < kNumArtifacts; ++k) {
      prompts.push_back(
          AttributeVector::make(mel == 1, k == 0, k == 1, k == 2, k == 3));
    }
  }
  return prompts;
}

void write_history_csv(const std::string& path, const std::vector<DdpoEpochStats>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "epoch,mean_reward,clip_fraction,approx_kl,wall_seconds\n";
  char buf[160];
  for (const DdpoEpochStats& row : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g\n", row.epoch, row.mean_reward,
                  row.clip_fraction, row.approx_kl, row.wall_seconds);
    out << buf;
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace ddpolab
