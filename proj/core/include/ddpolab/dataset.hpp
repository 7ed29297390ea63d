#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ddpolab/render.hpp"

namespace ddpolab {

enum class Split { Train, Val, Test };
inline constexpr std::array<const char*, 3> kSplitNames = {"train", "val", "test"};

// Per-cell sample counts for each split, where a cell is one of the 32
// (disease x artifact-subset) combinations in AttributeVector index order.
struct DatasetManifest {
  int version = 1;
  std::uint64_t seed = 0;
  std::string profile;
  std::array<std::array<int, kNumPrompts>, 3> counts{};

  int split_total(Split s) const;
  std::uint64_t split_seed(Split s) const;
  void validate() const;
};

// Scaled-down version of the reference class balance: heavy disease and
// artifact imbalance, two attribute combinations held out of training
// entirely. Used for stage-1 diffusion training and all evaluation splits.
DatasetManifest table1_manifest(std::uint64_t seed);

// All 32 cells equally filled; used to train the reward and oracle
// classifiers so no head starves.
DatasetManifest balanced_manifest(std::uint64_t seed);

// The two combinations with zero training images in table1_manifest.
std::array<AttributeVector, 2> held_out_combos();

struct Dataset {
  std::vector<ImageSample> samples;
};

struct DatasetBundle {
  DatasetManifest manifest;
  Dataset train, val, test;

  const Dataset& split(Split s) const;
};

// Renders every split and persists it under dir/{train,val,test} plus
// dir/manifest.txt. Regeneration with the same manifest is byte-identical.
void make_dataset(const DatasetManifest& manifest, const std::string& dir);

// In-memory generation without touching disk.
DatasetBundle generate_dataset(const DatasetManifest& manifest);

DatasetBundle load_dataset(const std::string& dir);
DatasetManifest load_manifest(const std::string& path);

// Raw file helpers, little-endian float32 / one byte per label bit. Image
// files carry N flattened {1,16,16} records.
void write_images_f32(const std::string& path, const std::vector<nn::Tensor>& images);
std::vector<nn::Tensor> read_images_f32(const std::string& path);
void write_labels_u8(const std::string& path, const std::vector<AttributeVector>& labels);
std::vector<AttributeVector> read_labels_u8(const std::string& path);

// Sample dumps: images.f32 + labels.u8 + prompts.txt (one canonical prompt
// per line, aligned with image order).
void write_sample_dump(const std::string& dir, const std::vector<nn::Tensor>& images,
                       const std::vector<AttributeVector>& labels);
std::pair<std::vector<nn::Tensor>, std::vector<AttributeVector>> read_sample_dump(
    const std::string& dir);

}  // namespace ddpolab
