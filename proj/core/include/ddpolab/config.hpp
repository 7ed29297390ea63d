#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddpolab/attributes.hpp"
#include "ddpolab/schedule.hpp"

namespace ddpolab {

// Full run configuration. Parsed from line-based key=value text with '#'
// comments; later keys override earlier ones, except prompt= lines, which
// accumulate in order.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string data_dir = "data";
  std::string out_dir = "out";
  std::string profile = "table1";  // dataset profile: table1 or balanced

  int T = kDefaultT;
  double beta_min = kDefaultBetaMin;
  double beta_max = kDefaultBetaMax;

  int diffusion_epochs = 30;
  int diffusion_batch = 64;
  double diffusion_lr = 1e-3;

  int classifier_epochs = 20;
  int classifier_batch = 32;
  double classifier_lr = 2e-3;

  int per_prompt = 16;  // M
  int rounds = 2;       // K
  double clip_eps = 0.1;
  double ddpo_lr = 1e-4;
  int minibatch = 64;
  int max_epochs = 30;
  double stop_tol = 0.01;
  int stop_window = 3;
  bool normalize_advantages = true;
  double kl_limit = 0.05;

  int samples = 64;  // sample count for sampling and evaluation commands
  int threads = 1;

  std::vector<AttributeVector> prompts;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_ = 0;
};

// Closed schema: unknown keys and unparsable values raise ConfigError with
// the offending line number.
RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

// Round-trip echo of every field; feeding the output back into parse_config
// reproduces the configuration.
std::string serialize_config(const RunConfig& cfg);
void save_config_file(const RunConfig& cfg, const std::string& path);

}  // namespace ddpolab
