#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "chl/losses.hpp"

namespace chl {

// Dataset-level cosine similarities between encoder embeddings; symmetric,
// unit diagonal, entries clamped to [-1, 1].
struct SimilarityMatrix {
  Eigen::MatrixXd values;

  Eigen::Index size() const { return values.rows(); }
  void validate() const;
};

struct RelaxReport {
  double threshold = 0.5;
  std::vector<std::vector<int>> removed_positives;  // per anchor
  std::vector<std::vector<int>> removed_negatives;

  std::size_t total_removed_positives() const;
  std::size_t total_removed_negatives() const;
};

// P(i) = every other row with the anchor's label, Q(i) = every row with a
// different label. Together they partition the non-anchor rows.
PairSets build_pair_sets(const Eigen::VectorXi& labels, const Eigen::VectorXi& source_index);

// S = Z * Z^T for unit-norm rows; throws when rows are not normalized.
SimilarityMatrix compute_similarity_matrix(const Eigen::MatrixXd& embeddings);

// Removal-only pruning: positives below the threshold and negatives above
// it are dropped (a pair exactly at the threshold survives on both sides).
std::pair<PairSets, RelaxReport> relax_pair_sets(const PairSets& pairs, const SimilarityMatrix& sim,
                                                 double threshold);

// Binary similarity cache: header {magic, version, m, checkpoint hash},
// then m*m float32 values row-major.
void write_similarity_cache(const std::string& path, const SimilarityMatrix& sim, std::uint64_t checkpoint_hash);
SimilarityMatrix read_similarity_cache(const std::string& path, std::uint64_t* checkpoint_hash = nullptr);

// Structured text listing, per image id, the removed positive and negative
// ids from a relax pass.
void write_pairs_file(const std::string& path, const RelaxReport& report);
RelaxReport read_pairs_file(const std::string& path);

// Applies a relax report to label-built dataset sets: removed ids are taken
// out of P and Q for their anchor.
PairSets apply_relax_report(const PairSets& pairs, const RelaxReport& report);

}  // namespace chl
