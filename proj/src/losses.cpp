#include "chl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "chl/error.hpp"

namespace chl {

namespace {

// Looser than the batch invariant so finite-difference probes of the
// gradient (which nudge single coordinates off the sphere) stay evaluable.
constexpr double kRowNormTol = 1e-3;

void check_rows_normalized(const Eigen::MatrixXd& z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    if (std::abs(z.row(i).norm() - 1.0) > kRowNormTol)
      throw DataError("embedding rows must be unit-norm");
  }
}

// Per-anchor similarity logits s_ik = z_i . z_k / tau for a sparse index set.
struct AnchorTerms {
  std::vector<int> index;
  std::vector<double> logit;
  std::vector<double> weight;  // multiplier inside the denominator sum
};

// log( sum_k weight_k * exp(logit_k) ) via the max-logit shift, plus the
// normalized denominator shares exp(logit_k - m) / Z for gradient reuse.
double log_sum_exp(const AnchorTerms& t, std::vector<double>& shares) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < t.logit.size(); ++k)
    if (t.weight[k] > 0.0) m = std::max(m, t.logit[k]);
  double sum = 0.0;
  shares.assign(t.logit.size(), 0.0);
  for (std::size_t k = 0; k < t.logit.size(); ++k) {
    if (t.weight[k] <= 0.0) continue;
    shares[k] = t.weight[k] * std::exp(t.logit[k] - m);
    sum += shares[k];
  }
  for (double& s : shares) s /= sum;
  return m + std::log(sum);
}

// Scatter one anchor's logit coefficients into the embedding gradient:
// d s_ik / d z_i = z_k / tau and d s_ik / d z_k = z_i / tau.
void accumulate(Eigen::MatrixXd& grad, const Eigen::MatrixXd& z, int i, const std::vector<int>& index,
                const std::vector<double>& coeff, double tau, double scale) {
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (coeff[k] == 0.0) continue;
    const double c = scale * coeff[k] / tau;
    grad.row(i) += c * z.row(index[k]);
    grad.row(index[k]) += c * z.row(i);
  }
}

}  // namespace

std::vector<int> EmbeddingBatch::partners() const {
  std::vector<int> partner(rows(), -1);
  for (Eigen::Index i = 0; i < rows(); ++i) {
    int found = -1;
    int count = 0;
    for (Eigen::Index j = 0; j < rows(); ++j) {
      if (j != i && source_index(j) == source_index(i)) {
        found = static_cast<int>(j);
        ++count;
      }
    }
    partner[i] = count == 1 ? found : -1;
  }
  return partner;
}

void EmbeddingBatch::validate() const {
  if (labels.size() != rows() || source_index.size() != rows())
    throw DataError("embedding batch field sizes disagree");
  if (!patient_ids.empty() && static_cast<Eigen::Index>(patient_ids.size()) != rows())
    throw DataError("embedding batch field sizes disagree");
  for (Eigen::Index i = 0; i < rows(); ++i)
    if (std::abs(z.row(i).norm() - 1.0) > 1e-6) throw DataError("embedding rows must be unit-norm");
  const std::vector<int> partner = partners();
  for (Eigen::Index i = 0; i < rows(); ++i)
    if (partner[i] >= 0 && labels(partner[i]) != labels(i))
      throw DataError("an image and its augmented view must share a label");
}

void PairSets::validate(Eigen::Index n) const {
  if (positives.size() != static_cast<std::size_t>(n) || negatives.size() != static_cast<std::size_t>(n))
    throw DataError("pair sets do not cover the batch");
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<char> in_p(n, 0);
    for (int p : positives[i]) {
      if (p < 0 || p >= n || p == i) throw DataError("invalid positive index in pair sets");
      if (in_p[p]) throw DataError("duplicate positive index in pair sets");
      in_p[p] = 1;
    }
    for (int q : negatives[i]) {
      if (q < 0 || q >= n || q == i) throw DataError("invalid negative index in pair sets");
      if (in_p[q]) throw DataError("pair sets overlap");
    }
  }
}

LossCombination LossCombination::parse(const std::string& name) {
  LossCombination c;
  c.modified = c.sup = c.elim = c.self = false;
  if (name == "modified") {
    c.modified = true;
  } else if (name == "comb1") {
    c.sup = true;
  } else if (name == "comb2") {
    c.elim = true;
  } else if (name == "comb3") {
    c.self = true;
  } else if (name == "comb4") {
    c.sup = c.elim = true;
  } else if (name == "comb5") {
    c.sup = c.self = true;
  } else if (name == "comb6") {
    c.elim = c.self = true;
  } else if (name == "comb7") {
    c.sup = c.elim = c.self = true;
  } else {
    throw ConfigError("unknown loss combination: " + name + " (expected modified or comb1..comb7)");
  }
  return c;
}

std::string LossCombination::str() const {
  if (modified) return "modified";
  std::string out;
  if (sup) out += "sup";
  if (elim) out += out.empty() ? "elim" : "+elim";
  if (self) out += out.empty() ? "self" : "+self";
  return out;
}

void LossCombination::validate() const {
  if (modified && (sup || elim || self))
    throw ConfigError("loss combination cannot mix modified with component terms");
  if (!modified && !sup && !elim && !self) throw ConfigError("loss combination is empty");
}

void LossConfig::validate() const {
  if (tau <= 0.0) throw ConfigError("tau must be positive");
  if (lambda_neg < 0.0) throw ConfigError("lambda_neg must be non-negative");
  combination.validate();
}

Eigen::VectorXd class_alpha(const Eigen::VectorXi& labels, AlphaMode mode) {
  if (labels.size() == 0) throw DataError("class_alpha needs at least one label");
  Eigen::VectorXd alpha = Eigen::VectorXd::Ones(labels.size());
  if (mode == AlphaMode::kUniform) return alpha;
  const double b = static_cast<double>(labels.size());
  Eigen::Index count1 = 0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) count1 += labels(i) == 1 ? 1 : 0;
  const Eigen::Index count0 = labels.size() - count1;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const Eigen::Index c = labels(i) == 1 ? count1 : count0;
    alpha(i) = b / (2.0 * static_cast<double>(c));
  }
  return alpha;
}

LossResult modified_supcon_loss(const EmbeddingBatch& batch, const PairSets& pairs, const LossConfig& cfg) {
  cfg.validate();
  check_rows_normalized(batch.z);
  pairs.validate(batch.rows());
  const Eigen::Index n = batch.rows();
  const Eigen::VectorXd alpha = class_alpha(batch.labels, cfg.alpha_mode);

  LossResult out;
  out.grad = Eigen::MatrixXd::Zero(n, batch.z.cols());
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!pairs.positives[i].empty())
      active.push_back(i);
    else
      ++out.skipped_anchors;
  }
  if (active.empty()) throw DataError("no positive pairs in batch");
  const double inv_m = 1.0 / static_cast<double>(active.size());

  std::vector<double> shares;
  for (Eigen::Index i : active) {
    const auto& pos = pairs.positives[i];
    const auto& neg = pairs.negatives[i];
    AnchorTerms t;
    t.index.reserve(pos.size() + neg.size());
    for (int p : pos) {
      t.index.push_back(p);
      t.weight.push_back(1.0);
    }
    for (int q : neg) {
      t.index.push_back(q);
      t.weight.push_back(cfg.lambda_neg);
    }
    t.logit.resize(t.index.size());
    for (std::size_t k = 0; k < t.index.size(); ++k)
      t.logit[k] = batch.z.row(i).dot(batch.z.row(t.index[k])) / cfg.tau;

    const double log_d = log_sum_exp(t, shares);
    const double a = alpha(i);
    const double inv_p = 1.0 / static_cast<double>(pos.size());

    double sum_pos_logits = 0.0;
    for (std::size_t k = 0; k < pos.size(); ++k) sum_pos_logits += t.logit[k];
    out.value += inv_m * a * (log_d - inv_p * sum_pos_logits);

    // d l_i / d s_ik = alpha * (share_k - [k positive]/|P|)
    std::vector<double> coeff(t.index.size());
    for (std::size_t k = 0; k < t.index.size(); ++k)
      coeff[k] = a * (shares[k] - (k < pos.size() ? inv_p : 0.0));
    accumulate(out.grad, batch.z, static_cast<int>(i), t.index, coeff, cfg.tau, inv_m);
  }
  return out;
}

LossResult self_loss(const EmbeddingBatch& batch, const LossConfig& cfg) {
  cfg.validate();
  check_rows_normalized(batch.z);
  const Eigen::Index n = batch.rows();
  const std::vector<int> partner = batch.partners();
  for (Eigen::Index i = 0; i < n; ++i)
    if (partner[i] < 0) throw DataError("anchor has no augmented partner");

  LossResult out;
  out.grad = Eigen::MatrixXd::Zero(n, batch.z.cols());
  const double inv_m = 1.0 / static_cast<double>(n);
  std::vector<double> shares;
  for (Eigen::Index i = 0; i < n; ++i) {
    AnchorTerms t;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k == i) continue;
      t.index.push_back(static_cast<int>(k));
      t.weight.push_back(1.0);
      t.logit.push_back(batch.z.row(i).dot(batch.z.row(k)) / cfg.tau);
    }
    const double log_d = log_sum_exp(t, shares);
    const int j = partner[i];
    double s_ij = 0.0;
    std::vector<double> coeff(t.index.size());
    for (std::size_t k = 0; k < t.index.size(); ++k) {
      coeff[k] = shares[k];
      if (t.index[k] == j) {
        s_ij = t.logit[k];
        coeff[k] -= 1.0;
      }
    }
    out.value += inv_m * (log_d - s_ij);
    accumulate(out.grad, batch.z, static_cast<int>(i), t.index, coeff, cfg.tau, inv_m);
  }
  return out;
}

LossResult sup_loss(const EmbeddingBatch& batch, const PairSets& pairs, const LossConfig& cfg) {
  cfg.validate();
  check_rows_normalized(batch.z);
  pairs.validate(batch.rows());
  const Eigen::Index n = batch.rows();

  LossResult out;
  out.grad = Eigen::MatrixXd::Zero(n, batch.z.cols());
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!pairs.positives[i].empty())
      active.push_back(i);
    else
      ++out.skipped_anchors;
  }
  if (active.empty()) throw DataError("no positive pairs in batch");
  const double inv_m = 1.0 / static_cast<double>(active.size());

  std::vector<double> shares;
  for (Eigen::Index i : active) {
    AnchorTerms t;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k == i) continue;
      t.index.push_back(static_cast<int>(k));
      t.weight.push_back(1.0);
      t.logit.push_back(batch.z.row(i).dot(batch.z.row(k)) / cfg.tau);
    }
    const double log_d = log_sum_exp(t, shares);
    const auto& pos = pairs.positives[i];
    const double inv_p = 1.0 / static_cast<double>(pos.size());
    std::vector<char> is_pos(n, 0);
    for (int p : pos) is_pos[p] = 1;

    double sum_pos_logits = 0.0;
    std::vector<double> coeff(t.index.size());
    for (std::size_t k = 0; k < t.index.size(); ++k) {
      coeff[k] = shares[k];
      if (is_pos[t.index[k]]) {
        sum_pos_logits += t.logit[k];
        coeff[k] -= inv_p;
      }
    }
    out.value += inv_m * (log_d - inv_p * sum_pos_logits);
    accumulate(out.grad, batch.z, static_cast<int>(i), t.index, coeff, cfg.tau, inv_m);
  }
  return out;
}

LossResult elim_loss(const EmbeddingBatch& batch, const PairSets& pairs, const LossConfig& cfg) {
  cfg.validate();
  check_rows_normalized(batch.z);
  pairs.validate(batch.rows());
  const Eigen::Index n = batch.rows();
  const std::vector<int> partner = batch.partners();
  for (Eigen::Index i = 0; i < n; ++i)
    if (partner[i] < 0) throw DataError("anchor has no augmented partner");

  LossResult out;
  out.grad = Eigen::MatrixXd::Zero(n, batch.z.cols());
  const double inv_m = 1.0 / static_cast<double>(n);
  std::vector<double> shares;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int j = partner[i];
    std::vector<char> is_pos(n, 0);
    for (int p : pairs.positives[i]) is_pos[p] = 1;

    // denominator: the numerator pair plus everything outside P(i)
    AnchorTerms t;
    t.index.push_back(j);
    t.weight.push_back(1.0);
    t.logit.push_back(batch.z.row(i).dot(batch.z.row(j)) / cfg.tau);
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k == i || k == j || is_pos[k]) continue;
      t.index.push_back(static_cast<int>(k));
      t.weight.push_back(1.0);
      t.logit.push_back(batch.z.row(i).dot(batch.z.row(k)) / cfg.tau);
    }
    const double log_d = log_sum_exp(t, shares);
    out.value += inv_m * (log_d - t.logit[0]);
    std::vector<double> coeff(t.index.size());
    for (std::size_t k = 0; k < t.index.size(); ++k) coeff[k] = shares[k];
    coeff[0] -= 1.0;
    accumulate(out.grad, batch.z, static_cast<int>(i), t.index, coeff, cfg.tau, inv_m);
  }
  return out;
}

LossResult combined_loss(const EmbeddingBatch& batch, const PairSets& pairs, const LossConfig& cfg) {
  cfg.validate();
  if (cfg.combination.modified) return modified_supcon_loss(batch, pairs, cfg);

  LossResult out;
  out.grad = Eigen::MatrixXd::Zero(batch.rows(), batch.z.cols());
  auto add = [&out](const LossResult& part) {
    out.value += part.value;
    out.grad += part.grad;
    out.skipped_anchors += part.skipped_anchors;
  };
  if (cfg.combination.sup) add(sup_loss(batch, pairs, cfg));
  if (cfg.combination.elim) add(elim_loss(batch, pairs, cfg));
  if (cfg.combination.self) add(self_loss(batch, cfg));
  return out;
}

}  // namespace chl
