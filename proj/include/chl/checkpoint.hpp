#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "chl/encoder.hpp"

namespace chl {

enum class StageTag : std::uint32_t { kPretrain = 0, kRelax = 1, kFinetune = 2 };

std::string stage_name(StageTag stage);
StageTag parse_stage(const std::string& name);

// Versioned binary artifact: header {magic, version, stage, epoch, rng seed,
// parent file hash, encoder config}, then the parameter tensors in
// declaration order as 64-bit floats with (rows, cols) shape prefixes.
// parent_hash chains each stage to the file it was trained from.
struct Checkpoint {
  StageTag stage = StageTag::kPretrain;
  std::uint32_t epoch = 0;
  std::uint64_t rng_seed = 0;
  std::uint64_t parent_hash = 0;
  EncoderConfig encoder_config;
  std::vector<Eigen::MatrixXd> encoder_tensors;
  std::vector<Eigen::MatrixXd> head_tensors;  // present for finetune checkpoints

  EncoderParams encoder_params() const { return EncoderParams::from_tensors(encoder_config, encoder_tensors); }
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// FNV-1a over the file bytes; used for the stage hash chain and the
// similarity cache key.
std::uint64_t file_hash(const std::string& path);

bool files_identical(const std::string& a, const std::string& b);

}  // namespace chl
