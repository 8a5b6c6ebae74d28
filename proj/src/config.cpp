#include "chl/config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "chl/error.hpp"

namespace chl {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": expected a number, got '" + value + "'");
  }
}

int to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": expected an integer, got '" + value + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": expected an unsigned integer, got '" + value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  std::string v = value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + key + ": expected a boolean, got '" + value + "'");
}

std::vector<int> to_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::istringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_int(key, trim(item)));
  if (out.empty()) throw ConfigError("config key " + key + ": empty list");
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

RunConfig RunConfig::defaults() { return RunConfig{}; }

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = parse(ss.str(), path);
  if (const char* env = std::getenv("CHL_SEED")) cfg.seed = to_u64("CHL_SEED", env);
  return cfg;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(row) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "run" && section != "stain" && section != "augment" && section != "encoder" &&
          section != "loss" && section != "train" && section != "finetune")
        throw ConfigError(origin + ":" + std::to_string(row) + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(row) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string qualified = section + "." + key;

    if (section == "run") {
      if (key == "seed") cfg.seed = to_u64(qualified, value);
      else if (key == "out_dir") cfg.out_dir = value;
      else if (key == "manifest") cfg.manifest_path = value;
      else if (key == "magnification") cfg.magnification = value;
      else if (key == "fold") cfg.fold = to_int(qualified, value);
      else if (key == "n_folds") cfg.n_folds = to_int(qualified, value);
      else if (key == "train_ratio") cfg.ratios[0] = to_double(qualified, value);
      else if (key == "val_ratio") cfg.ratios[1] = to_double(qualified, value);
      else if (key == "test_ratio") cfg.ratios[2] = to_double(qualified, value);
      else if (key == "relax_threshold") cfg.relax_threshold = to_double(qualified, value);
      else if (key == "skip_relax") cfg.skip_relax = to_bool(qualified, value);
      else throw ConfigError(origin + ":" + std::to_string(row) + ": unknown key " + qualified);
    } else if (section == "stain") {
      if (key == "sparsity_weight") cfg.stain.sparsity_weight = to_double(qualified, value);
      else if (key == "max_iterations") cfg.stain.max_iterations = to_int(qualified, value);
      else if (key == "tolerance") cfg.stain.tolerance = to_double(qualified, value);
      else throw ConfigError(origin + ":" + std::to_string(row) + ": unknown key " + qualified);
    } else if (section == "augment") {
      if (key == "crop_prob") cfg.augment.crop_prob = to_double(qualified, value);
      else if (key == "crop_scale_min") cfg.augment.crop_scale_min = to_double(qualified, value);
      else if (key == "crop_scale_max") cfg.augment.crop_scale_max = to_double(qualified, value);
      else if (key == "jitter_prob") cfg.augment.jitter_prob = to_double(qualified, value);
      else if (key == "jitter_min") cfg.augment.jitter_min = to_double(qualified, value);
      else if (key == "jitter_max") cfg.augment.jitter_max = to_double(qualified, value);
      else if (key == "blur_prob") cfg.augment.blur_prob = to_double(qualified, value);
      else if (key == "blur_sigma_min") cfg.augment.blur_sigma_min = to_double(qualified, value);
      else if (key == "blur_sigma_max") cfg.augment.blur_sigma_max = to_double(qualified, value);
      else if (key == "geometric_prob") cfg.augment.geometric_prob = to_double(qualified, value);
      else if (key == "hed_prob") cfg.augment.hed_prob = to_double(qualified, value);
      else if (key == "hed_strength") cfg.augment.hed_strength = to_double(qualified, value);
      else throw ConfigError(origin + ":" + std::to_string(row) + ": unknown key " + qualified);
    } else if (section == "encoder") {
      if (key == "input_size") cfg.encoder.input_size = to_int(qualified, value);
      else if (key == "channels") cfg.encoder.channels = to_int_list(qualified, value);
      else if (key == "embed_dim") cfg.encoder.embed_dim = to_int(qualified, value);
      else throw ConfigError(origin + ":" + std::to_string(row) + ": unknown key " + qualified);
    } else if (section == "loss") {
      if (key == "tau") cfg.loss.tau = to_double(qualified, value);
      else if (key == "lambda_neg") cfg.loss.lambda_neg = to_double(qualified, value);
      else if (key == "alpha_mode") {
        if (value == "uniform") cfg.loss.alpha_mode = AlphaMode::kUniform;
        else if (value == "inverse_class_frequency") cfg.loss.alpha_mode = AlphaMode::kInverseClassFrequency;
        else throw ConfigError(origin + ":" + std::to_string(row) + ": alpha_mode must be uniform or inverse_class_frequency");
      } else if (key == "loss_combination") cfg.loss.combination = LossCombination::parse(value);
      else throw ConfigError(origin + ":" + std::to_string(row) + ": unknown key " + qualified);
    } else if (section == "train") {
      if (key == "learning_rate") cfg.train.learning_rate = to_double(qualified, value);
      else if (key == "epochs") cfg.train.epochs = to_int(qualified, value);
      else if (key == "batch_size") cfg.train.batch_size = to_int(qualified, value);
      else if (key == "beta1") cfg.train.beta1 = to_double(qualified, value);
      else if (key == "beta2") cfg.train.beta2 = to_double(qualified, value);
      else if (key == "adam_eps") cfg.train.adam_eps = to_double(qualified, value);
      else throw ConfigError(origin + ":" + std::to_string(row) + ": unknown key " + qualified);
    } else if (section == "finetune") {
      if (key == "eta") cfg.finetune.eta = to_double(qualified, value);
      else if (key == "dropout_p") cfg.finetune.dropout_p = to_double(qualified, value);
      else if (key == "learning_rate") cfg.finetune.learning_rate = to_double(qualified, value);
      else if (key == "epochs") cfg.finetune.epochs = to_int(qualified, value);
      else if (key == "batch_size") cfg.finetune.batch_size = to_int(qualified, value);
      else if (key == "hidden1") cfg.finetune.hidden1 = to_int(qualified, value);
      else if (key == "hidden2") cfg.finetune.hidden2 = to_int(qualified, value);
      else if (key == "aux_sign_mode") {
        if (value == "reversal") cfg.finetune.aux_sign = AuxSignMode::kReversal;
        else if (value == "literal") cfg.finetune.aux_sign = AuxSignMode::kLiteral;
        else throw ConfigError(origin + ":" + std::to_string(row) + ": aux_sign_mode must be reversal or literal");
      } else if (key == "class_weight_mode") {
        if (value == "uniform") cfg.finetune.class_weight_mode = AlphaMode::kUniform;
        else if (value == "inverse_class_frequency") cfg.finetune.class_weight_mode = AlphaMode::kInverseClassFrequency;
        else throw ConfigError(origin + ":" + std::to_string(row) + ": class_weight_mode must be uniform or inverse_class_frequency");
      } else throw ConfigError(origin + ":" + std::to_string(row) + ": unknown key " + qualified);
    } else {
      throw ConfigError(origin + ":" + std::to_string(row) + ": key outside any section: " + key);
    }
  }
  cfg.augment.stain = cfg.stain;
  return cfg;
}

void RunConfig::validate() const {
  if (fold < 0 || fold >= n_folds) throw ConfigError("fold must be in [0, n_folds)");
  if (n_folds < 1) throw ConfigError("n_folds must be >= 1");
  if (relax_threshold <= -1.0 || relax_threshold >= 1.0) throw ConfigError("relax_threshold must be in (-1, 1)");
  stain.validate();
  augment.validate();
  encoder.validate();
  loss.validate();
  train.validate();
  finetune.validate();
}

std::string RunConfig::resolved_text() const {
  std::ostringstream out;
  out << "[run]\n";
  out << "seed = " << seed << "\n";
  out << "out_dir = " << out_dir << "\n";
  out << "manifest = " << manifest_path << "\n";
  out << "magnification = " << magnification << "\n";
  out << "fold = " << fold << "\n";
  out << "n_folds = " << n_folds << "\n";
  out << "train_ratio = " << fmt(ratios[0]) << "\n";
  out << "val_ratio = " << fmt(ratios[1]) << "\n";
  out << "test_ratio = " << fmt(ratios[2]) << "\n";
  out << "relax_threshold = " << fmt(relax_threshold) << "\n";
  out << "skip_relax = " << (skip_relax ? "true" : "false") << "\n";
  out << "\n[stain]\n";
  out << "sparsity_weight = " << fmt(stain.sparsity_weight) << "\n";
  out << "max_iterations = " << stain.max_iterations << "\n";
  out << "tolerance = " << fmt(stain.tolerance) << "\n";
  out << "\n[augment]\n";
  out << "crop_prob = " << fmt(augment.crop_prob) << "\n";
  out << "crop_scale_min = " << fmt(augment.crop_scale_min) << "\n";
  out << "crop_scale_max = " << fmt(augment.crop_scale_max) << "\n";
  out << "jitter_prob = " << fmt(augment.jitter_prob) << "\n";
  out << "jitter_min = " << fmt(augment.jitter_min) << "\n";
  out << "jitter_max = " << fmt(augment.jitter_max) << "\n";
  out << "blur_prob = " << fmt(augment.blur_prob) << "\n";
  out << "blur_sigma_min = " << fmt(augment.blur_sigma_min) << "\n";
  out << "blur_sigma_max = " << fmt(augment.blur_sigma_max) << "\n";
  out << "geometric_prob = " << fmt(augment.geometric_prob) << "\n";
  out << "hed_prob = " << fmt(augment.hed_prob) << "\n";
  out << "hed_strength = " << fmt(augment.hed_strength) << "\n";
  out << "\n[encoder]\n";
  out << "input_size = " << encoder.input_size << "\n";
  out << "channels = ";
  for (std::size_t i = 0; i < encoder.channels.size(); ++i)
    out << (i ? "," : "") << encoder.channels[i];
  out << "\n";
  out << "embed_dim = " << encoder.embed_dim << "\n";
  out << "\n[loss]\n";
  out << "tau = " << fmt(loss.tau) << "\n";
  out << "lambda_neg = " << fmt(loss.lambda_neg) << "\n";
  out << "alpha_mode = " << (loss.alpha_mode == AlphaMode::kUniform ? "uniform" : "inverse_class_frequency") << "\n";
  out << "loss_combination = " << [this] {
    if (loss.combination.modified) return std::string("modified");
    const LossCombination& c = loss.combination;
    if (c.sup && c.elim && c.self) return std::string("comb7");
    if (c.elim && c.self) return std::string("comb6");
    if (c.sup && c.self) return std::string("comb5");
    if (c.sup && c.elim) return std::string("comb4");
    if (c.self) return std::string("comb3");
    if (c.elim) return std::string("comb2");
    return std::string("comb1");
  }() << "\n";
  out << "\n[train]\n";
  out << "learning_rate = " << fmt(train.learning_rate) << "\n";
  out << "epochs = " << train.epochs << "\n";
  out << "batch_size = " << train.batch_size << "\n";
  out << "beta1 = " << fmt(train.beta1) << "\n";
  out << "beta2 = " << fmt(train.beta2) << "\n";
  out << "adam_eps = " << fmt(train.adam_eps) << "\n";
  out << "\n[finetune]\n";
  out << "eta = " << fmt(finetune.eta) << "\n";
  out << "dropout_p = " << fmt(finetune.dropout_p) << "\n";
  out << "learning_rate = " << fmt(finetune.learning_rate) << "\n";
  out << "epochs = " << finetune.epochs << "\n";
  out << "batch_size = " << finetune.batch_size << "\n";
  out << "hidden1 = " << finetune.hidden1 << "\n";
  out << "hidden2 = " << finetune.hidden2 << "\n";
  out << "aux_sign_mode = " << (finetune.aux_sign == AuxSignMode::kReversal ? "reversal" : "literal") << "\n";
  out << "class_weight_mode = "
      << (finetune.class_weight_mode == AlphaMode::kUniform ? "uniform" : "inverse_class_frequency") << "\n";
  return out.str();
}

void RunConfig::write_resolved(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write resolved config: " + path);
  out << resolved_text();
}

std::string RunConfig::describe_keys() {
  return
      "config file sections and keys (defaults in parentheses):\n"
      "  [run]      seed (1), out_dir, manifest, magnification (ALL|40X|100X|200X|400X|NA),\n"
      "             fold (0), n_folds (5), train_ratio (0.6), val_ratio (0.2), test_ratio (0.2),\n"
      "             relax_threshold (0.5), skip_relax (false)\n"
      "  [stain]    sparsity_weight (0.1), max_iterations (200), tolerance (1e-7)\n"
      "  [augment]  crop_prob (0.5), crop_scale_min (0.6), crop_scale_max (1.0),\n"
      "             jitter_prob (0.5), jitter_min (0.8), jitter_max (1.2),\n"
      "             blur_prob (0.5), blur_sigma_min (0.1), blur_sigma_max (1.5),\n"
      "             geometric_prob (0.5), hed_prob (0.3), hed_strength (0.1)\n"
      "  [encoder]  input_size (32), channels (16,32,64), embed_dim (32)\n"
      "  [loss]     tau (0.01), lambda_neg (2), alpha_mode (inverse_class_frequency|uniform),\n"
      "             loss_combination (modified|comb1..comb7)\n"
      "  [train]    learning_rate (1e-5), epochs (200), batch_size (12), beta1, beta2, adam_eps\n"
      "  [finetune] eta (0.5), dropout_p (0.5), learning_rate (2e-5), epochs (20), batch_size (8),\n"
      "             hidden1 (64), hidden2 (16), aux_sign_mode (reversal|literal),\n"
      "             class_weight_mode (inverse_class_frequency|uniform)\n"
      "environment: CHL_SEED overrides [run] seed\n";
}

}  // namespace chl
