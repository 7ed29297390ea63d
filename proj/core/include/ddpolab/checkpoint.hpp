#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ddpolab/params.hpp"

namespace ddpolab::nn {

// Ordered key=value metadata stored alongside the tensors. Saving always
// records "arch" and "revision" from the parameter set; callers add run
// facts such as schedule settings, seed, and step count.
struct CheckpointMeta {
  std::vector<std::pair<std::string, std::string>> items;

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
};

enum class CheckpointErrorKind { BadMagic, Truncated, ShapeMismatch };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

// Layout: 8-byte magic "DDPOLAB1"; u32 metadata byte count; metadata as
// UTF-8 "key=value\n" lines; then one record per tensor: u32 name length,
// name bytes, u32 rank, u32 extents, raw little-endian float32 data.
std::vector<std::uint8_t> checkpoint_save(const ModelParams& params, const CheckpointMeta& meta);

// Inverse of checkpoint_save. Validates magic, completeness, and agreement
// with the named architecture descriptor; if expected_arch is nonempty the
// checkpoint must be for that architecture.
std::pair<ModelParams, CheckpointMeta> checkpoint_load(const std::vector<std::uint8_t>& bytes,
                                                       const std::string& expected_arch = "");

void save_checkpoint_file(const std::string& path, const ModelParams& params,
                          const CheckpointMeta& meta);
std::pair<ModelParams, CheckpointMeta> load_checkpoint_file(const std::string& path,
                                                            const std::string& expected_arch = "");

}  // namespace ddpolab::nn
