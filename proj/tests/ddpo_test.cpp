// Rollout collection, advantages, the clipped importance-sampled objective,
// and the fine-tuning outer loop with its stopping and abort rules.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ddpolab/ddpo.hpp"
#include "ddpolab/diffusion.hpp"
#include "ddpolab/gradcheck.hpp"
#include "ddpolab/models.hpp"
#include "ddpolab/reward.hpp"
#include "ddpolab/rng.hpp"
#include "doctest.h"

using namespace ddpolab;
using nn::Tensor;

namespace fs = std::filesystem;

namespace {

VarianceSchedule toy_schedule() { return make_schedule(3, 0.2, 0.5); }

nn::ModelParams toy_params(std::uint64_t seed) {
  return nn::init_params(nn::kToyDenoiser2, seed);
}

// reward tied to the terminal image so epochs differ by sampling noise only
double pixel_reward(const Tensor& x0, const AttributeVector&) {
  double s = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) s += x0[i];
  return 1.0 / (1.0 + std::exp(-s));
}

bool same_pixels(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

bool same_params(const nn::ModelParams& a, const nn::ModelParams& b) {
  for (const nn::ModelParams::Entry& e : a.entries) {
    if (!same_pixels(e.value, b.at(e.name))) return false;
  }
  return true;
}

// Batch with scripted per-trajectory rewards across three prompt groups.
RolloutBatch scripted_batch(const std::vector<double>& rewards,
                            const std::vector<int>& groups) {
  RolloutBatch batch;
  batch.sched = toy_schedule();
  batch.prompts = {AttributeVector::from_index(0), AttributeVector::from_index(17),
                   AttributeVector::from_index(31)};
  Rng rng(5);
  const nn::ModelParams p = toy_params(1);
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    Trajectory tr = sample_trajectory(rng, p, batch.prompts[groups[i]], batch.sched);
    tr.reward = rewards[i];
    tr.reward_set = true;
    batch.trajectories.push_back(std::move(tr));
    batch.prompt_index.push_back(groups[i]);
  }
  return batch;
}

}  // namespace

TEST_CASE("advantages normalize per prompt group") {
  RolloutBatch batch = scripted_batch({0.0, 1.0, 0.5, 0.5, 0.25}, {0, 0, 1, 1, 2});
  compute_advantages(batch);
  REQUIRE(batch.advantages.size() == 5);
  // group 0: rewards {0,1}, mean 0.5, population std 0.5
  CHECK(batch.advantages[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(batch.advantages[1] == doctest::Approx(1.0).epsilon(1e-12));
  // group 1: constant rewards, zero spread
  CHECK(batch.advantages[2] == 0.0);
  CHECK(batch.advantages[3] == 0.0);
  // group 2: singleton
  CHECK(batch.advantages[4] == 0.0);
}

TEST_CASE("raw advantage mode keeps the rewards") {
  RolloutBatch batch = scripted_batch({0.125, 0.75, 0.5}, {0, 0, 1});
  compute_advantages(batch, false);
  CHECK(batch.advantages == std::vector<double>{0.125, 0.75, 0.5});
}

TEST_CASE("advantage computation validates its inputs") {
  RolloutBatch empty;
  CHECK_THROWS_AS(compute_advantages(empty), std::invalid_argument);
  RolloutBatch batch = scripted_batch({0.5, 0.5}, {0, 0});
  batch.trajectories[1].reward_set = false;
  CHECK_THROWS_AS(compute_advantages(batch), std::invalid_argument);
}

TEST_CASE("all_steps enumerates every trajectory and step once") {
  const RolloutBatch batch = scripted_batch({0.1, 0.2}, {0, 1});
  const std::vector<StepRef> steps = all_steps(batch);
  REQUIRE(steps.size() == 2 * 3);
  std::set<std::pair<int, int>> seen;
  for (const StepRef& s : steps) {
    CHECK(s.traj >= 0);
    CHECK(s.traj < 2);
    CHECK(s.step >= 0);
    CHECK(s.step < 3);
    seen.insert({s.traj, s.step});
  }
  CHECK(seen.size() == steps.size());
}

TEST_CASE("collect_rollouts groups M trajectories per prompt") {
  const VarianceSchedule sched = toy_schedule();
  nn::ModelParams p = toy_params(3);
  p.revision = 41;
  const std::vector<AttributeVector> prompts = {
      AttributeVector::from_index(0), AttributeVector::from_index(5),
      AttributeVector::from_index(16), AttributeVector::from_index(31)};

  Rng rng(9);
  const RolloutBatch batch = collect_rollouts(p, prompts, 8, rng, sched, pixel_reward);
  REQUIRE(batch.trajectories.size() == 32);
  REQUIRE(batch.prompt_index.size() == 32);
  CHECK(batch.prompts.size() == 4);
  CHECK(batch.snapshot_revision == 41);
  CHECK(batch.advantages.empty());

  std::array<int, 4> per_group{};
  for (std::size_t i = 0; i < 32; ++i) {
    const int g = batch.prompt_index[i];
    REQUIRE(g >= 0);
    REQUIRE(g < 4);
    ++per_group[g];
    CHECK(batch.trajectories[i].c == prompts[g]);
    CHECK(batch.trajectories[i].reward_set);
    CHECK(batch.trajectories[i].reward ==
          pixel_reward(batch.trajectories[i].x0(), prompts[g]));
  }
  for (int g = 0; g < 4; ++g) CHECK(per_group[g] == 8);

  // stored log-densities match a recomputation under the generating params
  for (const Trajectory& tr : batch.trajectories) {
    const std::vector<double> again = recompute_logprobs(p, tr, sched);
    REQUIRE(again.size() == tr.logprobs_old.size());
    for (std::size_t k = 0; k < again.size(); ++k) {
      CHECK(again[k] == doctest::Approx(tr.logprobs_old[k]).epsilon(1e-5));
    }
  }

  // deterministic under the seed and invariant to the thread count
  Rng rng_b(9), rng_c(9);
  const RolloutBatch b = collect_rollouts(p, prompts, 8, rng_b, sched, pixel_reward);
  const RolloutBatch c = collect_rollouts(p, prompts, 8, rng_c, sched, pixel_reward, 3);
  for (std::size_t i = 0; i < 32; ++i) {
    CHECK(same_pixels(batch.trajectories[i].x0(), b.trajectories[i].x0()));
    CHECK(batch.trajectories[i].logprobs_old == c.trajectories[i].logprobs_old);
    CHECK(same_pixels(batch.trajectories[i].x0(), c.trajectories[i].x0()));
  }

  CHECK_THROWS_AS(collect_rollouts(p, {}, 4, rng, sched, pixel_reward),
                  std::invalid_argument);
  CHECK_THROWS_AS(collect_rollouts(p, prompts, 0, rng, sched, pixel_reward),
                  std::invalid_argument);
}

TEST_CASE("classifier overload matches the wrapped reward closure") {
  // full-size denoiser: the classifier reads 16x16 terminal images
  const VarianceSchedule sched = toy_schedule();
  const nn::ModelParams p = nn::init_params(nn::kDenoiser16, 2);
  const nn::ModelParams clf = stub_classifier({3, -3, 3, -3, 3, -3});
  const std::vector<AttributeVector> prompts = {AttributeVector::from_index(0),
                                                AttributeVector::from_index(21)};
  Rng rng_d(9), rng_e(9);
  const RolloutBatch d = collect_rollouts(p, prompts, 2, rng_d, sched, clf);
  const RolloutBatch e =
      collect_rollouts(p, prompts, 2, rng_e, sched, make_classifier_reward(clf));
  REQUIRE(d.trajectories.size() == 4);
  for (std::size_t i = 0; i < d.trajectories.size(); ++i) {
    CHECK(d.trajectories[i].reward == e.trajectories[i].reward);
    CHECK(d.trajectories[i].reward ==
          attribute_reward(clf, d.trajectories[i].x0(), d.trajectories[i].c).reward);
  }
}

TEST_CASE("recomputed log-densities match at the generating parameters") {
  const VarianceSchedule sched = toy_schedule();
  const nn::ModelParams p = toy_params(7);
  Rng rng(21);
  const Trajectory tr = sample_trajectory(rng, p, AttributeVector::from_index(3), sched);

  const std::vector<double> same = recompute_logprobs(p, tr, sched);
  REQUIRE(int(same.size()) == sched.T);
  for (std::size_t k = 0; k < same.size(); ++k) {
    CHECK(same[k] == doctest::Approx(tr.logprobs_old[k]).epsilon(1e-5));
  }

  // perturbing one weight moves at least one step density
  nn::ModelParams q = p;
  q.at("conv.w")[4] += 0.05f;
  const std::vector<double> moved = recompute_logprobs(q, tr, sched);
  bool changed = false;
  for (std::size_t k = 0; k < moved.size(); ++k) {
    if (moved[k] != same[k]) changed = true;
  }
  CHECK(changed);

  Trajectory bad = tr;
  bad.latents.pop_back();
  CHECK_THROWS_AS(recompute_logprobs(p, bad, sched), std::invalid_argument);
}

TEST_CASE("summed step log-densities pass grad_check") {
  const VarianceSchedule sched = toy_schedule();
  for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
    const nn::ModelParams p = toy_params(stage_seed(seed, "lpgrad"));
    Rng rng(stage_seed(seed, "lpgrad-traj"));
    const Trajectory tr = sample_trajectory(rng, p, AttributeVector::from_index(9), sched);

    auto fn = [&](const nn::ModelParams& mp) {
      nn::LossRecord rec;
      nn::TapedParams tp(rec.tape, mp);
      std::vector<nn::VarId> terms;
      // skip t=1: its floored sigma puts finite differences below float32
      // resolution; the taped code path is shared by every step. h=5e-2 is
      // free of truncation error because the mean is linear in the
      // parameters, so the log-density is quadratic along any coordinate.
      for (int i = 0; i + 1 < sched.T; ++i) {
        terms.push_back(taped_step_logprob(rec.tape, tp, mp.arch, tr.latents[i],
                                           tr.latents[i + 1], sched.T - i, tr.c, sched));
      }
      rec.loss = rec.tape.s_mean(terms);
      rec.value = rec.tape.scalar_value(rec.loss);
      rec.param_ids = tp.ids();
      rec.param_shapes = tp.shapes();
      return rec;
    };
    const nn::GradCheckResult res = nn::grad_check(p, fn, 5e-2, 200, seed);
    CHECK_MESSAGE(res.max_rel_err < 1e-2, "seed ", seed, " err ", res.max_rel_err, " at ",
                  res.worst_param);
  }
}

TEST_CASE("ratios are one at the generating parameters") {
  const VarianceSchedule sched = toy_schedule();
  const nn::ModelParams p = toy_params(11);
  const std::vector<AttributeVector> prompts = {AttributeVector::from_index(2),
                                                AttributeVector::from_index(20)};
  Rng rng(31);
  RolloutBatch batch = collect_rollouts(p, prompts, 4, rng, sched, pixel_reward);
  compute_advantages(batch);

  PpoDiagnostics diag;
  const nn::LossRecord rec = ppo_clip_loss(p, batch, 0.1, &diag);
  CHECK(diag.terms == 8 * 3);
  CHECK(diag.mean_ratio == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(diag.clip_fraction == 0.0);
  CHECK(diag.approx_kl == doctest::Approx(0.0).epsilon(1e-4));

  // with every ratio 1 the objective reduces to the mean advantage
  double mean_adv = 0.0;
  for (const StepRef& s : all_steps(batch)) mean_adv += batch.advantages[s.traj];
  mean_adv /= double(diag.terms);
  CHECK(rec.value == doctest::Approx(-mean_adv).epsilon(1e-6));
}

TEST_CASE("clip hand cases pin the objective") {
  const VarianceSchedule sched = toy_schedule();
  const nn::ModelParams p = toy_params(13);
  Rng rng(41);
  RolloutBatch batch =
      collect_rollouts(p, {AttributeVector::from_index(4)}, 1, rng, sched, pixel_reward);
  const std::vector<double> lp = recompute_logprobs(p, batch.trajectories[0], sched);
  const std::vector<StepRef> one = {{0, 0}};

  // ratio 1.5, advantage +1, eps 0.2: min(1.5, 1.2) = 1.2
  batch.trajectories[0].logprobs_old[0] = lp[0] - std::log(1.5);
  batch.advantages = {1.0};
  PpoDiagnostics diag;
  const nn::LossRecord up = ppo_clip_loss(p, batch, one, 0.2, &diag);
  CHECK(up.value == doctest::Approx(-1.2).epsilon(1e-4));
  CHECK(diag.terms == 1);
  CHECK(diag.mean_ratio == doctest::Approx(1.5).epsilon(1e-4));
  CHECK(diag.clip_fraction == 1.0);
  CHECK(diag.approx_kl == doctest::Approx(-std::log(1.5)).epsilon(1e-4));

  // ratio 0.5, advantage -1, eps 0.2: min(-0.5, -0.8) = -0.8
  batch.trajectories[0].logprobs_old[0] = lp[0] + std::log(2.0);
  batch.advantages = {-1.0};
  PpoDiagnostics diag2;
  const nn::LossRecord down = ppo_clip_loss(p, batch, one, 0.2, &diag2);
  CHECK(down.value == doctest::Approx(0.8).epsilon(1e-4));
  CHECK(diag2.mean_ratio == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(diag2.clip_fraction == 1.0);
  CHECK(diag2.approx_kl == doctest::Approx(std::log(2.0)).epsilon(1e-4));
}

TEST_CASE("clipped objective never exceeds the unclipped one") {
  const VarianceSchedule sched = toy_schedule();
  const nn::ModelParams p = toy_params(17);
  const std::vector<AttributeVector> prompts = {AttributeVector::from_index(1),
                                                AttributeVector::from_index(18)};
  Rng rng(51);
  RolloutBatch batch = collect_rollouts(p, prompts, 3, rng, sched, pixel_reward);
  compute_advantages(batch);

  // evaluate under slightly moved parameters
  nn::ModelParams q = p;
  Rng noise(52);
  for (nn::ModelParams::Entry& e : q.entries) {
    for (float& v : e.value.data()) v += static_cast<float>(noise.normal() * 1e-4);
  }

  const double eps = 0.2;
  double clipped_sum = 0.0, unclipped_sum = 0.0;
  std::size_t terms = 0;
  for (std::size_t i = 0; i < batch.trajectories.size(); ++i) {
    const Trajectory& tr = batch.trajectories[i];
    const std::vector<double> lp = recompute_logprobs(q, tr, sched);
    for (int k = 0; k < sched.T; ++k) {
      const double ratio = std::exp(lp[k] - tr.logprobs_old[k]);
      const double adv = batch.advantages[i];
      const double unclipped = ratio * adv;
      const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv;
      CHECK(std::min(unclipped, clipped) <= unclipped);
      clipped_sum += std::min(unclipped, clipped);
      unclipped_sum += unclipped;
      ++terms;
    }
  }
  const double manual_loss = -clipped_sum / double(terms);

  // the taped log-density shares its arithmetic with recompute_logprobs, so
  // the only slack is the final mean reduction
  const nn::LossRecord rec = ppo_clip_loss(q, batch, eps);
  CHECK(rec.value == doctest::Approx(manual_loss).epsilon(1e-6));
  CHECK(rec.value >= -unclipped_sum / double(terms) - 1e-9);
}

TEST_CASE("ppo loss validates inputs and rejects non-finite ratios") {
  const VarianceSchedule sched = toy_schedule();
  const nn::ModelParams p = toy_params(19);
  Rng rng(61);
  RolloutBatch batch =
      collect_rollouts(p, {AttributeVector::from_index(6)}, 2, rng, sched, pixel_reward);

  CHECK_THROWS_AS(ppo_clip_loss(p, batch, 0.1), std::invalid_argument);  // no advantages
  compute_advantages(batch);
  CHECK_THROWS_AS(ppo_clip_loss(p, batch, {}, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(ppo_clip_loss(p, batch, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(ppo_clip_loss(p, batch, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ppo_clip_loss(p, batch, {{0, 99}}, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(ppo_clip_loss(p, batch, {{5, 0}}, 0.1), std::invalid_argument);

  batch.trajectories[0].logprobs_old[0] = -1e9;  // ratio overflows to inf
  CHECK_THROWS_WITH_AS(ppo_clip_loss(p, batch, {{0, 0}}, 0.1),
                       doctest::Contains("non-finite"), std::runtime_error);
}

TEST_CASE("constant reward stops after exactly the window length") {
  DdpoConfig cfg;
  cfg.prompts = {AttributeVector::from_index(0), AttributeVector::from_index(16)};
  cfg.per_prompt = 2;
  cfg.minibatch = 6;
  cfg.max_epochs = 20;
  cfg.stop_window = 3;
  cfg.stop_tol = 0.01;
  cfg.lr = 1e-5;

  Rng rng(71);
  const DdpoResult res = ddpo_finetune(
      toy_params(23), [](const Tensor&, const AttributeVector&) { return 0.5; }, rng,
      toy_schedule(), cfg);
  CHECK(res.stopped_early);
  CHECK_FALSE(res.aborted);
  REQUIRE(res.history.size() == 3);  // exactly W epochs
  for (const DdpoEpochStats& row : res.history) {
    CHECK(row.mean_reward == 0.5);
    CHECK(row.wall_seconds >= 0.0);
  }
  CHECK(res.history[0].epoch == 0);
  CHECK(res.history[2].epoch == 2);
}

TEST_CASE("zero learning rate leaves parameters untouched for the whole run") {
  DdpoConfig cfg;
  cfg.prompts = {AttributeVector::from_index(3)};
  cfg.per_prompt = 3;
  cfg.minibatch = 16;
  cfg.max_epochs = 4;
  cfg.lr = 0.0;
  cfg.stop_tol = 1e-12;  // sampling noise never counts as a plateau

  const nn::ModelParams start = toy_params(29);
  Rng rng(81);
  const DdpoResult res = ddpo_finetune(start, pixel_reward, rng, toy_schedule(), cfg);
  CHECK_FALSE(res.stopped_early);
  CHECK_FALSE(res.aborted);
  REQUIRE(res.history.size() == 4);
  CHECK(same_params(res.params, start));
  // rewards fluctuate by sampling noise only, but stay within range
  for (const DdpoEpochStats& row : res.history) {
    CHECK(row.mean_reward > 0.0);
    CHECK(row.mean_reward < 1.0);
  }
}

TEST_CASE("non-finite rewards abort and keep the epoch-start snapshot") {
  DdpoConfig cfg;
  cfg.prompts = {AttributeVector::from_index(1), AttributeVector::from_index(17)};
  cfg.per_prompt = 2;
  cfg.minibatch = 4;
  cfg.max_epochs = 6;
  cfg.stop_tol = 1e-12;

  const int first_batch = int(cfg.prompts.size()) * cfg.per_prompt;
  auto poisoned = [first_batch, calls = 0](const Tensor& x0,
                                           const AttributeVector& c) mutable {
    ++calls;
    if (calls > first_batch) return std::nan("");
    return pixel_reward(x0, c);
  };

  const nn::ModelParams start = toy_params(37);
  Rng rng(91);
  const DdpoResult res = ddpo_finetune(start, poisoned, rng, toy_schedule(), cfg);
  CHECK(res.aborted);
  CHECK_FALSE(res.abort_reason.empty());
  CHECK(res.history.size() == 1);  // only epoch 0 completed

  // the kept parameters equal those of an identically seeded one-epoch run
  DdpoConfig one = cfg;
  one.max_epochs = 1;
  Rng rng2(91);
  const DdpoResult base = ddpo_finetune(start, pixel_reward, rng2, toy_schedule(), one);
  CHECK(same_params(res.params, base.params));
  for (const nn::ModelParams::Entry& e : res.params.entries) {
    CHECK(e.value.all_finite());
  }
}

TEST_CASE("kl guard skips remaining rounds when drift explodes") {
  DdpoConfig cfg;
  cfg.prompts = {AttributeVector::from_index(2)};
  cfg.per_prompt = 4;
  cfg.minibatch = 64;  // one update per round
  cfg.max_epochs = 1;
  cfg.rounds = 3;
  cfg.lr = 5e-2;  // huge step so round two's ratios drift far

  Rng rng(101);
  const DdpoResult res = ddpo_finetune(toy_params(43), pixel_reward, rng, toy_schedule(), cfg);
  CHECK_FALSE(res.aborted);
  REQUIRE(res.history.size() == 1);
  CHECK(res.history[0].kl_abort);
}

TEST_CASE("fine-tuning is deterministic and thread-invariant") {
  DdpoConfig cfg;
  cfg.prompts = {AttributeVector::from_index(0), AttributeVector::from_index(21)};
  cfg.per_prompt = 2;
  cfg.minibatch = 5;
  cfg.max_epochs = 2;
  cfg.stop_tol = 1e-12;
  cfg.lr = 1e-4;

  Rng ra(111), rb(111), rc(111);
  const DdpoResult a = ddpo_finetune(toy_params(47), pixel_reward, ra, toy_schedule(), cfg);
  const DdpoResult b = ddpo_finetune(toy_params(47), pixel_reward, rb, toy_schedule(), cfg);
  DdpoConfig threaded = cfg;
  threaded.threads = 3;
  const DdpoResult c =
      ddpo_finetune(toy_params(47), pixel_reward, rc, toy_schedule(), threaded);

  REQUIRE(a.history.size() == b.history.size());
  REQUIRE(a.history.size() == c.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].mean_reward == b.history[i].mean_reward);
    CHECK(a.history[i].approx_kl == b.history[i].approx_kl);
    CHECK(a.history[i].mean_reward == c.history[i].mean_reward);
    CHECK(a.history[i].approx_kl == c.history[i].approx_kl);
  }
  CHECK(same_params(a.params, b.params));
  CHECK(same_params(a.params, c.params));
  CHECK(a.params.revision > 0);
}

TEST_CASE("fine-tune configuration is validated up front") {
  const nn::ModelParams p = toy_params(53);
  Rng rng(121);
  const VarianceSchedule sched = toy_schedule();

  DdpoConfig cfg;
  CHECK_THROWS_AS(ddpo_finetune(p, pixel_reward, rng, sched, cfg), std::invalid_argument);

  cfg.prompts = {AttributeVector::from_index(0)};
  DdpoConfig bad = cfg;
  bad.per_prompt = 0;
  CHECK_THROWS_AS(ddpo_finetune(p, pixel_reward, rng, sched, bad), std::invalid_argument);
  bad = cfg;
  bad.clip_eps = 1.5;
  CHECK_THROWS_AS(ddpo_finetune(p, pixel_reward, rng, sched, bad), std::invalid_argument);
  bad = cfg;
  bad.stop_window = 1;
  CHECK_THROWS_AS(ddpo_finetune(p, pixel_reward, rng, sched, bad), std::invalid_argument);
  bad = cfg;
  bad.lr = -1.0;
  CHECK_THROWS_AS(ddpo_finetune(p, pixel_reward, rng, sched, bad), std::invalid_argument);

  nn::ModelParams clf = nn::init_params(nn::kClassifier16, 1);
  CHECK_THROWS_AS(ddpo_finetune(clf, pixel_reward, rng, sched, cfg), std::invalid_argument);
}

TEST_CASE("history csv bytes are pinned") {
  std::vector<DdpoEpochStats> history(2);
  history[0].epoch = 0;
  history[0].mean_reward = 0.625;
  history[0].clip_fraction = 0.0078125;
  history[0].approx_kl = 2.0;
  history[0].wall_seconds = 1.5;
  history[1].epoch = 1;
  history[1].mean_reward = 1.0 / 3.0;
  history[1].clip_fraction = 0.0;
  history[1].approx_kl = -0.25;
  history[1].wall_seconds = 12.0;

  const fs::path path = fs::temp_directory_path() / "ddpolab_history_test.csv";
  write_history_csv(path.string(), history);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text ==
        "epoch,mean_reward,clip_fraction,approx_kl,wall_seconds\n"
        "0,0.625,0.0078125,2,1.5\n"
        "1,0.333333333,0,-0.25,12\n");
  fs::remove(path);

  CHECK_THROWS_AS(write_history_csv("/nonexistent-dir/x.csv", history), std::runtime_error);
}

TEST_CASE("default prompt set pairs each disease with each single artifact") {
  const std::vector<AttributeVector> prompts = default_ddpo_prompts();
  REQUIRE(prompts.size() == 8);
  int mel = 0;
  std::set<int> indices;
  for (const AttributeVector& c : prompts) {
    CHECK(c.valid());
    CHECK(c.artifact_count() == 1);
    mel += c.is_mel() ? 1 : 0;
    indices.insert(c.index());
  }
  CHECK(mel == 4);
  CHECK(indices.size() == 8);
}
