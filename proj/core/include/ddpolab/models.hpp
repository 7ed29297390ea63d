#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddpolab/attributes.hpp"
#include "ddpolab/params.hpp"
#include "ddpolab/tape.hpp"
#include "ddpolab/tensor.hpp"

namespace ddpolab::nn {

// Architecture ids. The 16x16 pair is the real lab; the miniatures exist so
// gradient oracles can run thousands of evaluations cheaply.
inline constexpr const char* kDenoiser16 = "denoiser16";
inline constexpr const char* kClassifier16 = "classifier16";
inline constexpr const char* kToyDenoiser2 = "toydenoiser2";
inline constexpr const char* kToyClassifier4 = "toyclassifier4";

// Fixed parameter inventory for one architecture, in forward order.
struct ArchSpec {
  std::string name;
  std::vector<int> image_shape;
  std::vector<std::pair<std::string, std::vector<int>>> params;
};

const ArchSpec& arch_spec(const std::string& arch);
bool is_denoiser_arch(const std::string& arch);
bool is_classifier_arch(const std::string& arch);

// He-style normal weights, zero biases, deterministic in (arch, seed).
ModelParams init_params(const std::string& arch, std::uint64_t seed);

// Throws if names/shapes do not match the descriptor for params.arch.
void validate_params(const ModelParams& params);

// Conditioning input: sinusoidal time embedding of t (8 dims) followed by
// the 6 attribute bits.
inline constexpr int kTimeEmbedDim = 8;
inline constexpr int kCondDim = kTimeEmbedDim + kNumAttributes;
Tensor cond_vector(int t, const AttributeVector& c);

// Predicted noise for x_t under (t, c). Pure function of its arguments.
Tensor denoiser_forward(const ModelParams& params, const Tensor& x_t, int t,
                        const AttributeVector& c);

// Same computation recorded on a tape; x_t is an existing tape node.
VarId taped_denoiser_forward(Tape& tape, const TapedParams& tp, const std::string& arch,
                             VarId x_t, int t, const AttributeVector& c);

struct ClassifierOut {
  Tensor logits;    // {6}
  Tensor features;  // penultimate activations; {32} for classifier16
};

ClassifierOut classifier_forward(const ModelParams& params, const Tensor& x);

VarId taped_classifier_logits(Tape& tape, const TapedParams& tp, const std::string& arch,
                              VarId x);

}  // namespace ddpolab::nn
