#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "ddpolab/dataset.hpp"
#include "ddpolab/diffusion.hpp"
#include "ddpolab/models.hpp"
#include "ddpolab/tensor.hpp"

namespace ddpolab {

// Per-head sigmoid probabilities and the thresholded attribute calls for
// one image under a classifier.
struct HeadReadout {
  std::array<double, kNumAttributes> prob;
  AttributeVector predicted;
};

HeadReadout classify_image(const nn::ModelParams& clf, const nn::Tensor& image);

// One image scored against its target attributes.
struct RewardReport {
  std::array<bool, kNumAttributes> head_correct{};
  double reward = 0.0;  // correct heads / 6, always k/6.0 for integer k
};

RewardReport attribute_reward(const nn::ModelParams& clf, const nn::Tensor& image,
                              const AttributeVector& target);

struct RewardBatch {
  std::vector<double> rewards;
  double mean = 0.0;
};

// Throws on an empty batch or mismatched lengths.
RewardBatch batch_rewards(const nn::ModelParams& clf, const std::vector<nn::Tensor>& images,
                          const std::vector<AttributeVector>& targets);

// Fills Trajectory.reward from the terminal (unclamped) x0 and returns the
// per-trajectory rewards with their mean. Throws on an empty batch.
RewardBatch batch_rewards(const nn::ModelParams& clf, std::vector<Trajectory>& trajectories);

// Reward seam used by the fine-tuner, so tests can swap in scripted rewards.
using RewardFn = std::function<double(const nn::Tensor&, const AttributeVector&)>;

RewardFn make_classifier_reward(nn::ModelParams clf);

// All-zero classifier16 whose fc2.b entries are the logits every image
// receives, giving tests full control of every head outcome.
nn::ModelParams stub_classifier(const std::array<float, kNumAttributes>& logits);

struct ClassifierTrainConfig {
  int epochs = 20;
  int batch = 32;
  double lr = 2e-3;
  int threads = 1;
};

struct ClassifierTrainStats {
  std::vector<double> train_loss;  // mean per-sample BCE per epoch
  std::vector<double> val_loss;
  std::vector<double> val_head_acc;  // mean over heads and samples
  int best_epoch = -1;               // epoch whose checkpoint was returned
};

// Multi-label BCE training of classifier16; returns the checkpoint with the
// lowest validation loss. Deterministic in (data, seed, config).
nn::ModelParams train_classifier(const Dataset& train, const Dataset& val, std::uint64_t seed,
                                 const ClassifierTrainConfig& cfg = {},
                                 ClassifierTrainStats* stats = nullptr);

}  // namespace ddpolab
