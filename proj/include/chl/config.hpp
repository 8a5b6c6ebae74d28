#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "chl/augment.hpp"
#include "chl/encoder.hpp"
#include "chl/finetune.hpp"
#include "chl/losses.hpp"
#include "chl/stain.hpp"

namespace chl {

// Flat key-value run configuration with [section] headers and # comments.
// Unknown sections or keys are config errors; missing keys take defaults.
// The CHL_SEED environment variable overrides [run] seed.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "runs/out";
  std::string manifest_path;
  std::string magnification = "ALL";
  int fold = 0;
  int n_folds = 5;
  std::array<double, 3> ratios = {0.6, 0.2, 0.2};
  double relax_threshold = 0.5;
  bool skip_relax = false;

  StainConfig stain;
  AugmentPipeline augment;  // augment.stain mirrors `stain`
  EncoderConfig encoder;
  LossConfig loss;
  TrainConfig train;        // contrastive stages
  FinetuneConfig finetune;

  static RunConfig defaults();
  static RunConfig load(const std::string& path);
  static RunConfig parse(const std::string& text, const std::string& origin);

  void validate() const;

  // Fully resolved (all defaults expanded), written alongside every run.
  std::string resolved_text() const;
  void write_resolved(const std::string& path) const;

  // Documented key listing for --help.
  static std::string describe_keys();
};

}  // namespace chl
