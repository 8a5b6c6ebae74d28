#include "chl/checkpoint.hpp"

#include <fstream>

#include "chl/error.hpp"

namespace chl {

namespace {

constexpr std::uint64_t kCkptMagic = 0x43484c434b505431ull;  // "CHLCKPT1"
constexpr std::uint32_t kCkptVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); }
void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); }

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_tensor(std::ostream& out, const Eigen::MatrixXd& t) {
  write_u32(out, static_cast<std::uint32_t>(t.rows()));
  write_u32(out, static_cast<std::uint32_t>(t.cols()));
  out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

Eigen::MatrixXd read_tensor(std::istream& in) {
  const std::uint32_t rows = read_u32(in);
  const std::uint32_t cols = read_u32(in);
  Eigen::MatrixXd t(rows, cols);
  in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  return t;
}

}  // namespace

std::string stage_name(StageTag stage) {
  switch (stage) {
    case StageTag::kPretrain: return "pretrain";
    case StageTag::kRelax: return "relax";
    case StageTag::kFinetune: return "finetune";
  }
  throw DataError("unknown stage tag");
}

StageTag parse_stage(const std::string& name) {
  if (name == "pretrain") return StageTag::kPretrain;
  if (name == "relax") return StageTag::kRelax;
  if (name == "finetune") return StageTag::kFinetune;
  throw DataError("unknown stage name: " + name);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  write_u64(out, kCkptMagic);
  write_u32(out, kCkptVersion);
  write_u32(out, static_cast<std::uint32_t>(ckpt.stage));
  write_u32(out, ckpt.epoch);
  write_u64(out, ckpt.rng_seed);
  write_u64(out, ckpt.parent_hash);
  write_u32(out, static_cast<std::uint32_t>(ckpt.encoder_config.input_size));
  write_u32(out, static_cast<std::uint32_t>(ckpt.encoder_config.embed_dim));
  write_u32(out, static_cast<std::uint32_t>(ckpt.encoder_config.channels.size()));
  for (int c : ckpt.encoder_config.channels) write_u32(out, static_cast<std::uint32_t>(c));
  write_u32(out, static_cast<std::uint32_t>(ckpt.encoder_tensors.size()));
  write_u32(out, static_cast<std::uint32_t>(ckpt.head_tensors.size()));
  for (const auto& t : ckpt.encoder_tensors) write_tensor(out, t);
  for (const auto& t : ckpt.head_tensors) write_tensor(out, t);
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint: " + path);
  if (read_u64(in) != kCkptMagic || !in) throw DataError("not a checkpoint file: " + path);
  if (read_u32(in) != kCkptVersion) throw DataError("unsupported checkpoint version: " + path);
  Checkpoint ckpt;
  const std::uint32_t stage = read_u32(in);
  if (stage > 2) throw DataError("invalid stage tag in checkpoint: " + path);
  ckpt.stage = static_cast<StageTag>(stage);
  ckpt.epoch = read_u32(in);
  ckpt.rng_seed = read_u64(in);
  ckpt.parent_hash = read_u64(in);
  ckpt.encoder_config.input_size = static_cast<int>(read_u32(in));
  ckpt.encoder_config.embed_dim = static_cast<int>(read_u32(in));
  const std::uint32_t blocks = read_u32(in);
  ckpt.encoder_config.channels.clear();
  for (std::uint32_t i = 0; i < blocks; ++i) ckpt.encoder_config.channels.push_back(static_cast<int>(read_u32(in)));
  const std::uint32_t n_enc = read_u32(in);
  const std::uint32_t n_head = read_u32(in);
  if (!in) throw DataError("truncated checkpoint: " + path);
  for (std::uint32_t i = 0; i < n_enc; ++i) ckpt.encoder_tensors.push_back(read_tensor(in));
  for (std::uint32_t i = 0; i < n_head; ++i) ckpt.head_tensors.push_back(read_tensor(in));
  if (!in) throw DataError("truncated checkpoint: " + path);
  return ckpt;
}

std::uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot hash file: " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
    if (!in) break;
  }
  return h;
}

bool files_identical(const std::string& a, const std::string& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) throw DataError("cannot compare files: " + a + " vs " + b);
  char ba[4096], bb[4096];
  while (true) {
    fa.read(ba, sizeof(ba));
    fb.read(bb, sizeof(bb));
    if (fa.gcount() != fb.gcount()) return false;
    if (fa.gcount() == 0) return true;
    if (!std::equal(ba, ba + fa.gcount(), bb)) return false;
  }
}

}  // namespace chl
