#include "chl/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "chl/error.hpp"

namespace chl {

namespace {
constexpr std::uint64_t kSimMagic = 0x43484c53494d3031ull;  // "CHLSIM01"
constexpr std::uint32_t kSimVersion = 1;
}  // namespace

void SimilarityMatrix::validate() const {
  if (values.rows() != values.cols()) throw DataError("similarity matrix must be square");
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    if (std::abs(values(i, i) - 1.0) > 1e-6) throw DataError("similarity diagonal must be 1");
    for (Eigen::Index j = i + 1; j < values.cols(); ++j) {
      if (std::abs(values(i, j) - values(j, i)) > 1e-6) throw DataError("similarity matrix must be symmetric");
      if (values(i, j) < -1.0 - 1e-9 || values(i, j) > 1.0 + 1e-9)
        throw DataError("similarity entries must lie in [-1, 1]");
    }
  }
}

std::size_t RelaxReport::total_removed_positives() const {
  std::size_t n = 0;
  for (const auto& v : removed_positives) n += v.size();
  return n;
}

std::size_t RelaxReport::total_removed_negatives() const {
  std::size_t n = 0;
  for (const auto& v : removed_negatives) n += v.size();
  return n;
}

PairSets build_pair_sets(const Eigen::VectorXi& labels, const Eigen::VectorXi& source_index) {
  const Eigen::Index n = labels.size();
  if (n == 0) throw DataError("cannot build pair sets for an empty batch");
  if (source_index.size() != 0 && source_index.size() != n)
    throw DataError("source index does not cover the batch");
  PairSets sets;
  sets.positives.resize(n);
  sets.negatives.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (labels(j) == labels(i))
        sets.positives[i].push_back(static_cast<int>(j));
      else
        sets.negatives[i].push_back(static_cast<int>(j));
    }
  }
  return sets;
}

SimilarityMatrix compute_similarity_matrix(const Eigen::MatrixXd& embeddings) {
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i)
    if (std::abs(embeddings.row(i).norm() - 1.0) > 1e-6)
      throw DataError("similarity requires unit-norm embedding rows");
  SimilarityMatrix sim;
  sim.values = embeddings * embeddings.transpose();
  sim.values = sim.values.cwiseMax(-1.0).cwiseMin(1.0);
  return sim;
}

std::pair<PairSets, RelaxReport> relax_pair_sets(const PairSets& pairs, const SimilarityMatrix& sim,
                                                 double threshold) {
  if (threshold <= -1.0 || threshold >= 1.0) throw ConfigError("relax threshold must be in (-1, 1)");
  const Eigen::Index n = sim.size();
  pairs.validate(n);

  PairSets relaxed;
  RelaxReport report;
  report.threshold = threshold;
  relaxed.positives.resize(pairs.size());
  relaxed.negatives.resize(pairs.size());
  report.removed_positives.resize(pairs.size());
  report.removed_negatives.resize(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (int p : pairs.positives[i]) {
      if (sim.values(static_cast<Eigen::Index>(i), p) >= threshold)
        relaxed.positives[i].push_back(p);
      else
        report.removed_positives[i].push_back(p);
    }
    for (int q : pairs.negatives[i]) {
      if (sim.values(static_cast<Eigen::Index>(i), q) <= threshold)
        relaxed.negatives[i].push_back(q);
      else
        report.removed_negatives[i].push_back(q);
    }
  }
  return {std::move(relaxed), std::move(report)};
}

void write_similarity_cache(const std::string& path, const SimilarityMatrix& sim, std::uint64_t checkpoint_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write similarity cache: " + path);
  const std::uint64_t m = static_cast<std::uint64_t>(sim.size());
  out.write(reinterpret_cast<const char*>(&kSimMagic), sizeof(kSimMagic));
  out.write(reinterpret_cast<const char*>(&kSimVersion), sizeof(kSimVersion));
  out.write(reinterpret_cast<const char*>(&m), sizeof(m));
  out.write(reinterpret_cast<const char*>(&checkpoint_hash), sizeof(checkpoint_hash));
  // row blocks keep peak memory flat for large m
  std::vector<float> row(sim.size());
  for (Eigen::Index i = 0; i < sim.size(); ++i) {
    for (Eigen::Index j = 0; j < sim.size(); ++j) row[j] = static_cast<float>(sim.values(i, j));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing similarity cache: " + path);
}

SimilarityMatrix read_similarity_cache(const std::string& path, std::uint64_t* checkpoint_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read similarity cache: " + path);
  std::uint64_t magic = 0, m = 0, hash = 0;
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&magic), sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&m), sizeof(m));
  in.read(reinterpret_cast<char*>(&hash), sizeof(hash));
  if (!in || magic != kSimMagic) throw DataError("not a similarity cache: " + path);
  if (version != kSimVersion) throw DataError("unsupported similarity cache version");
  SimilarityMatrix sim;
  sim.values.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  std::vector<float> row(m);
  for (std::uint64_t i = 0; i < m; ++i) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(m * sizeof(float)));
    if (!in) throw DataError("truncated similarity cache: " + path);
    for (std::uint64_t j = 0; j < m; ++j) sim.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
  }
  if (checkpoint_hash) *checkpoint_hash = hash;
  return sim;
}

void write_pairs_file(const std::string& path, const RelaxReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write pairs file: " + path);
  out << "chl-pairs 1\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", report.threshold);
  out << "threshold " << buf << "\n";
  out << "items " << report.removed_positives.size() << "\n";
  for (std::size_t i = 0; i < report.removed_positives.size(); ++i) {
    out << i << " removed_pos";
    for (int p : report.removed_positives[i]) out << ' ' << p;
    out << " removed_neg";
    for (int q : report.removed_negatives[i]) out << ' ' << q;
    out << "\n";
  }
  if (!out) throw DataError("failed writing pairs file: " + path);
}

RelaxReport read_pairs_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read pairs file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "chl-pairs 1") throw DataError("not a pairs file: " + path);
  RelaxReport report;
  std::size_t items = 0;
  {
    std::string key;
    if (!std::getline(in, line)) throw DataError("truncated pairs file: " + path);
    std::istringstream ss(line);
    ss >> key >> report.threshold;
    if (key != "threshold") throw DataError("malformed pairs file header");
    if (!std::getline(in, line)) throw DataError("truncated pairs file: " + path);
    std::istringstream ss2(line);
    ss2 >> key >> items;
    if (key != "items") throw DataError("malformed pairs file header");
  }
  report.removed_positives.resize(items);
  report.removed_negatives.resize(items);
  for (std::size_t i = 0; i < items; ++i) {
    if (!std::getline(in, line)) throw DataError("truncated pairs file: " + path);
    std::istringstream ss(line);
    std::size_t id = 0;
    std::string tok;
    ss >> id >> tok;
    if (id != i || tok != "removed_pos") throw DataError("malformed pairs file row");
    bool in_neg = false;
    while (ss >> tok) {
      if (tok == "removed_neg") {
        in_neg = true;
        continue;
      }
      const int v = std::stoi(tok);
      (in_neg ? report.removed_negatives[i] : report.removed_positives[i]).push_back(v);
    }
    if (!in_neg) throw DataError("malformed pairs file row");
  }
  return report;
}

PairSets apply_relax_report(const PairSets& pairs, const RelaxReport& report) {
  if (report.removed_positives.size() != pairs.size()) throw DataError("relax report does not match pair sets");
  PairSets out = pairs;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (int p : report.removed_positives[i]) {
      auto& v = out.positives[i];
      v.erase(std::remove(v.begin(), v.end(), p), v.end());
    }
    for (int q : report.removed_negatives[i]) {
      auto& v = out.negatives[i];
      v.erase(std::remove(v.begin(), v.end(), q), v.end());
    }
  }
  return out;
}

}  // namespace chl
