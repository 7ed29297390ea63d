#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddpolab/diffusion.hpp"
#include "ddpolab/reward.hpp"
#include "ddpolab/rng.hpp"
#include "ddpolab/schedule.hpp"
#include "ddpolab/tape.hpp"

namespace ddpolab {

// One epoch's trajectories, all generated by a single parameter snapshot.
// Stored log-densities are never recomputed after an update; the revision
// ties the batch to the snapshot that produced it.
struct RolloutBatch {
  std::vector<Trajectory> trajectories;
  std::vector<int> prompt_index;         // trajectory -> group
  std::vector<AttributeVector> prompts;  // group -> prompt
  std::uint64_t snapshot_revision = 0;
  std::vector<double> advantages;  // empty until compute_advantages
  VarianceSchedule sched;
};

// M trajectories per prompt under frozen params_old, rewards filled from the
// terminal image. Per-trajectory seeds derive from one rng draw, so the batch
// is identical for every thread count. `reward` must be safe to call from
// multiple threads.
RolloutBatch collect_rollouts(const nn::ModelParams& params_old,
                              const std::vector<AttributeVector>& prompts, int per_prompt,
                              Rng& rng, const VarianceSchedule& sched, const RewardFn& reward,
                              int threads = 1);
RolloutBatch collect_rollouts(const nn::ModelParams& params_old,
                              const std::vector<AttributeVector>& prompts, int per_prompt,
                              Rng& rng, const VarianceSchedule& sched,
                              const nn::ModelParams& classifier, int threads = 1);

// Log-density of each stored transition under `params` (same order as
// Trajectory.logprobs_old).
std::vector<double> recompute_logprobs(const nn::ModelParams& params, const Trajectory& traj,
                                       const VarianceSchedule& sched);

// normalize=true: A_i = (r_i - group mean)/max(group std, 1e-4) with the
// population std per prompt group; singleton groups get 0. normalize=false
// keeps the raw rewards as advantages.
void compute_advantages(RolloutBatch& batch, bool normalize = true);

struct StepRef {
  int traj = 0;
  int step = 0;  // 0 addresses the t=T transition
};

std::vector<StepRef> all_steps(const RolloutBatch& batch);

struct PpoDiagnostics {
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;  // fraction of terms with |ratio - 1| > eps
  double approx_kl = 0.0;      // mean(logp_old - logp_theta)
  std::size_t terms = 0;
};

// loss = -mean over steps of min(ratio*A, clip(ratio, 1-eps, 1+eps)*A) with
// ratio = exp(logp_theta - logp_old). Differentiable w.r.t. params; throws
// on a non-finite ratio.
nn::LossRecord ppo_clip_loss(const nn::ModelParams& params, const RolloutBatch& batch,
                             const std::vector<StepRef>& steps, double clip_eps,
                             PpoDiagnostics* diag = nullptr);
nn::LossRecord ppo_clip_loss(const nn::ModelParams& params, const RolloutBatch& batch,
                             double clip_eps, PpoDiagnostics* diag = nullptr);

struct DdpoConfig {
  std::vector<AttributeVector> prompts;
  int per_prompt = 16;  // M, trajectories per prompt per epoch
  int rounds = 2;       // K, gradient rounds per batch
  double clip_eps = 0.1;
  double lr = 1e-4;
  int minibatch = 64;  // step-level terms per optimizer update
  int max_epochs = 30;
  double stop_tol = 0.01;  // delta
  int stop_window = 3;     // W
  bool normalize_advantages = true;
  double kl_limit = 0.05;  // skip remaining rounds when the estimate exceeds this
  int threads = 1;
};

struct DdpoEpochStats {
  int epoch = 0;
  double mean_reward = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double wall_seconds = 0.0;
  bool kl_abort = false;  // guard fired; remaining rounds were skipped
};

struct DdpoResult {
  nn::ModelParams params;
  std::vector<DdpoEpochStats> history;
  bool stopped_early = false;  // reward plateau fired before max_epochs
  bool aborted = false;        // numeric failure; params is the last good state
  std::string abort_reason;
};

// Algorithm: per epoch, collect a batch under the current snapshot, compute
// advantages, then K rounds of Adam updates over shuffled step-level
// minibatches. Stops when every reward delta inside the trailing window is
// below stop_tol.
DdpoResult ddpo_finetune(const nn::ModelParams& start, const RewardFn& reward, Rng& rng,
                         const VarianceSchedule& sched, const DdpoConfig& cfg);
DdpoResult ddpo_finetune(const nn::ModelParams& start, const nn::ModelParams& classifier,
                         Rng& rng, const VarianceSchedule& sched, const DdpoConfig& cfg);

// Header "epoch,mean_reward,clip_fraction,approx_kl,wall_seconds", one row
// per epoch.
void write_history_csv(const std::string& path, const std::vector<DdpoEpochStats>& history);

// Each disease paired with each single artifact: eight prompts.
std::vector<AttributeVector> default_ddpo_prompts();

}  // namespace ddpolab
