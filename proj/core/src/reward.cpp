#include "ddpolab/reward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "ddpolab/adam.hpp"
#include "ddpolab/rng.hpp"
#include "ddpolab/tape.hpp"

namespace ddpolab {

using nn::Tensor;

namespace {

double sigmoid_stable(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Tensor label_tensor(const AttributeVector& a) {
  Tensor y = Tensor::zeros({kNumAttributes});
  for (int k = 0; k < kNumAttributes; ++k) y[k] = static_cast<float>(a.bits[k]);
  return y;
}

}  // namespace

HeadReadout classify_image(const nn::ModelParams& clf, const Tensor& image) {
  const nn::ClassifierOut out = nn::classifier_forward(clf, image);
  HeadReadout r;
  for (int k = 0; k < kNumAttributes; ++k) {
    r.prob[k] = sigmoid_stable(out.logits[k]);
    r.predicted.bits[k] = r.prob[k] > 0.5 ? 1 : 0;
  }
  return r;
}

RewardReport attribute_reward(const nn::ModelParams& clf, const Tensor& image,
                              const AttributeVector& target) {
  if (!target.valid()) throw std::invalid_argument("attribute_reward: invalid target vector");
  const HeadReadout r = classify_image(clf, image);
  RewardReport rep;
  int correct = 0;
  for (int k = 0; k < kNumAttributes; ++k) {
    rep.head_correct[k] = r.predicted.bits[k] == target.bits[k];
    if (rep.head_correct[k]) ++correct;
  }
  rep.reward = correct / 6.0;
  return rep;
}

RewardBatch batch_rewards(const nn::ModelParams& clf, const std::vector<Tensor>& images,
                          const std::vector<AttributeVector>& targets) {
  if (images.empty()) throw std::invalid_argument("batch_rewards: empty batch");
  if (images.size() != targets.size()) {
    throw std::invalid_argument("batch_rewards: image/target count mismatch");
  }
  RewardBatch out;
  out.rewards.reserve(images.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const double r = attribute_reward(clf, images[i], targets[i]).reward;
    out.rewards.push_back(r);
    sum += r;
  }
  out.mean = sum / static_cast<double>(images.size());
  return out;
}

RewardBatch batch_rewards(const nn::ModelParams& clf, std::vector<Trajectory>& trajectories) {
  if (trajectories.empty()) throw std::invalid_argument("batch_rewards: empty batch");
  RewardBatch out;
  out.rewards.reserve(trajectories.size());
  double sum = 0.0;
  for (Trajectory& tr : trajectories) {
    if (tr.latents.empty()) throw std::invalid_argument("batch_rewards: trajectory has no x0");
    const double r = attribute_reward(clf, tr.x0(), tr.c).reward;
    tr.reward = r;
    tr.reward_set = true;
    out.rewards.push_back(r);
    sum += r;
  }
  out.mean = sum / static_cast<double>(trajectories.size());
  return out;
}

RewardFn make_classifier_reward(nn::ModelParams clf) {
  return [clf = std::move(clf)](const Tensor& image, const AttributeVector& target) {
    return attribute_reward(clf, image, target).reward;
  };
}

nn::ModelParams stub_classifier(const std::array<float, kNumAttributes>& logits) {
  const nn::ArchSpec& spec = nn::arch_spec(nn::kClassifier16);
  nn::ModelParams p;
  p.arch = spec.name;
  for (const auto& [name, shape] : spec.params) {
    p.entries.push_back({name, Tensor::zeros(shape)});
  }
  Tensor& b = p.at("fc2.b");
  for (int k = 0; k < kNumAttributes; ++k) b[k] = logits[k];
  return p;
}

nn::ModelParams train_classifier(const Dataset& train, const Dataset& val, std::uint64_t seed,
                                 const ClassifierTrainConfig& cfg, ClassifierTrainStats* stats) {
  if (train.samples.empty() || val.samples.empty()) {
    throw std::invalid_argument("train_classifier: empty split");
  }
  if (cfg.epochs < 1 || cfg.batch < 1 || cfg.lr <= 0.0) {
    throw std::invalid_argument("train_classifier: bad config");
  }

  nn::ModelParams params = nn::init_params(nn::kClassifier16, seed);
  nn::AdamState adam = nn::AdamState::init(params, cfg.lr);
  Rng shuffle_rng(stage_seed(seed, "classifier/shuffle"));

  const std::size_t n = train.samples.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  nn::ModelParams best = params;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = shuffle_rng.uniform_int(0, i);
      std::swap(order[i], order[j]);
    }

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch) {
      const std::size_t end = std::min(n, begin + cfg.batch);
      auto term = [&](std::size_t i) {
        const ImageSample& s = train.samples[order[begin + i]];
        nn::LossRecord rec;
        nn::TapedParams tp(rec.tape, params);
        const nn::VarId z = nn::taped_classifier_logits(rec.tape, tp, params.arch,
                                                        rec.tape.leaf(s.image));
        rec.loss = rec.tape.bce_logits_mean(z, label_tensor(s.label));
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

    double vloss = 0.0;
    double vacc = 0.0;
    for (const ImageSample& s : val.samples) {
      const nn::ClassifierOut out = nn::classifier_forward(params, s.image);
      for (int k = 0; k < kNumAttributes; ++k) {
        const double z = out.logits[k];
        const double y = s.label.bits[k];
        vloss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
        const int call = sigmoid_stable(z) > 0.5 ? 1 : 0;
        if (call == s.label.bits[k]) vacc += 1.0;
      }
    }
    const double denom = static_cast<double>(val.samples.size()) * kNumAttributes;
    vloss /= denom;
    vacc /= denom;

    if (stats) {
      stats->train_loss.push_back(epoch_loss / static_cast<double>(batches));
      stats->val_loss.push_back(vloss);
      stats->val_head_acc.push_back(vacc);
    }
    if (vloss < best_val) {
      best_val = vloss;
      best = params;
      best_epoch = epoch;
    }
  }

  if (stats) stats->best_epoch = best_epoch;
  return best;
}

}  // namespace ddpolab
