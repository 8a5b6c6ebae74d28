#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "chl/error.hpp"
#include "chl/pairs.hpp"
#include "test_util.hpp"

using namespace chl;

namespace {

Eigen::MatrixXd random_unit_rows(int rows, int cols, RngEngine& rng) {
  Eigen::MatrixXd z(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) z(i, j) = uniform_real(rng, -1.0, 1.0);
    z.row(i).normalize();
  }
  return z;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("pairs") {
  TEST_CASE("build_pair_sets partitions by label") {
    Eigen::VectorXi labels(4);
    labels << 0, 0, 1, 1;
    const PairSets sets = build_pair_sets(labels, Eigen::VectorXi());
    CHECK(sets.positives[0] == std::vector<int>{1});
    CHECK(sets.negatives[0] == std::vector<int>({2, 3}));
    CHECK(sets.positives[3] == std::vector<int>{2});

    Eigen::VectorXi same(6);
    same.setConstant(1);
    const PairSets all_pos = build_pair_sets(same, Eigen::VectorXi());
    for (int i = 0; i < 6; ++i) {
      CHECK(all_pos.negatives[i].empty());
      CHECK(all_pos.positives[i].size() == 5);
    }
  }

  TEST_CASE("pair sets cover every non-anchor row") {
    for (int rep = 0; rep < 1000; ++rep) {
      RngEngine rng = derive_rng(4000 + rep, {});
      const int n = uniform_int(rng, 2, 24);
      Eigen::VectorXi labels(n);
      for (int i = 0; i < n; ++i) labels(i) = uniform_int(rng, 0, 1);
      const PairSets sets = build_pair_sets(labels, Eigen::VectorXi());
      for (int i = 0; i < n; ++i)
        CHECK(sets.positives[i].size() + sets.negatives[i].size() == static_cast<std::size_t>(n - 1));
    }
  }

  TEST_CASE("similarity matrix basics") {
    RngEngine rng = derive_rng(5, {});
    Eigen::MatrixXd identical(4, 6);
    const Eigen::RowVectorXd row = random_unit_rows(1, 6, rng).row(0);
    for (int i = 0; i < 4; ++i) identical.row(i) = row;
    const SimilarityMatrix ones = compute_similarity_matrix(identical);
    CHECK((ones.values.array() - 1.0).abs().maxCoeff() < 1e-9);

    Eigen::MatrixXd orthogonal = Eigen::MatrixXd::Identity(5, 5);
    const SimilarityMatrix eye = compute_similarity_matrix(orthogonal);
    CHECK((eye.values - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-12);

    // elementwise dot-product oracle on a random 5x8 fixture
    const Eigen::MatrixXd z = random_unit_rows(5, 8, rng);
    const SimilarityMatrix sim = compute_similarity_matrix(z);
    sim.validate();
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        double dot = 0.0;
        for (int k = 0; k < 8; ++k) dot += z(i, k) * z(j, k);
        CHECK(sim.values(i, j) == doctest::Approx(dot).epsilon(1e-12));
      }

    Eigen::MatrixXd bad = z;
    bad.row(2) *= 1.5;
    CHECK_THROWS_AS(compute_similarity_matrix(bad), DataError);
  }

  TEST_CASE("relaxing removes exactly the contradicted pairs") {
    Eigen::VectorXi labels(4);
    labels << 0, 0, 1, 1;
    const PairSets sets = build_pair_sets(labels, Eigen::VectorXi());

    SimilarityMatrix sim;
    sim.values = Eigen::MatrixXd::Identity(4, 4);
    sim.values(0, 1) = sim.values(1, 0) = 0.3;   // positive below threshold: removed
    sim.values(0, 2) = sim.values(2, 0) = 0.7;   // negative above threshold: removed
    sim.values(0, 3) = sim.values(3, 0) = 0.5;   // boundary negative: survives
    sim.values(1, 2) = sim.values(2, 1) = -0.2;
    sim.values(1, 3) = sim.values(3, 1) = 0.1;
    sim.values(2, 3) = sim.values(3, 2) = 0.5;   // boundary positive: survives

    const auto [relaxed, report] = relax_pair_sets(sets, sim, 0.5);
    CHECK(relaxed.positives[0].empty());
    CHECK(report.removed_positives[0] == std::vector<int>{1});
    CHECK(relaxed.negatives[0] == std::vector<int>{3});
    CHECK(report.removed_negatives[0] == std::vector<int>{2});
    CHECK(relaxed.positives[2] == std::vector<int>{3});
    CHECK(report.removed_positives[2].empty());

    // symmetric similarity implies symmetric removal
    CHECK(report.removed_positives[1] == std::vector<int>{0});
    CHECK(report.removed_negatives[2] == std::vector<int>{0});

    // removal-only and idempotent at a fixed similarity matrix
    const auto [again, report2] = relax_pair_sets(relaxed, sim, 0.5);
    CHECK(again.positives == relaxed.positives);
    CHECK(again.negatives == relaxed.negatives);
    CHECK(report2.total_removed_positives() == 0);
    CHECK(report2.total_removed_negatives() == 0);
  }

  TEST_CASE("no removals when similarities agree with the labels") {
    Eigen::VectorXi labels(4);
    labels << 0, 0, 1, 1;
    const PairSets sets = build_pair_sets(labels, Eigen::VectorXi());
    SimilarityMatrix sim;
    sim.values.resize(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) sim.values(i, j) = labels(i) == labels(j) ? 1.0 : -1.0;
    const auto [relaxed, report] = relax_pair_sets(sets, sim, 0.5);
    CHECK(relaxed.positives == sets.positives);
    CHECK(relaxed.negatives == sets.negatives);
    CHECK(report.total_removed_positives() == 0);
  }

  TEST_CASE("relaxing agrees with a brute-force filter on random instances") {
    for (int rep = 0; rep < 200; ++rep) {
      RngEngine rng = derive_rng(7000 + rep, {});
      const int n = uniform_int(rng, 2, 16);
      Eigen::VectorXi labels(n);
      for (int i = 0; i < n; ++i) labels(i) = uniform_int(rng, 0, 1);
      const PairSets sets = build_pair_sets(labels, Eigen::VectorXi());
      const SimilarityMatrix sim = compute_similarity_matrix(random_unit_rows(n, 6, rng));
      const double threshold = uniform_real(rng, -0.8, 0.8);
      const auto [relaxed, report] = relax_pair_sets(sets, sim, threshold);
      for (int i = 0; i < n; ++i) {
        std::vector<int> keep_p, keep_q;
        for (int p : sets.positives[i])
          if (sim.values(i, p) >= threshold) keep_p.push_back(p);
        for (int q : sets.negatives[i])
          if (sim.values(i, q) <= threshold) keep_q.push_back(q);
        CHECK(relaxed.positives[i] == keep_p);
        CHECK(relaxed.negatives[i] == keep_q);
        CHECK(relaxed.positives[i].size() + report.removed_positives[i].size() == sets.positives[i].size());
        CHECK(relaxed.negatives[i].size() + report.removed_negatives[i].size() == sets.negatives[i].size());
      }
    }
  }

  TEST_CASE("similarity cache round trip") {
    RngEngine rng = derive_rng(8, {});
    const SimilarityMatrix sim = compute_similarity_matrix(random_unit_rows(7, 5, rng));
    const std::string path = temp_path("chl_test_sim.bin");
    write_similarity_cache(path, sim, 0xabcdef1234ull);
    std::uint64_t hash = 0;
    const SimilarityMatrix loaded = read_similarity_cache(path, &hash);
    CHECK(hash == 0xabcdef1234ull);
    CHECK(loaded.size() == 7);
    CHECK((loaded.values - sim.values).cwiseAbs().maxCoeff() < 1e-6);  // float32 storage
    std::remove(path.c_str());
    CHECK_THROWS_AS(read_similarity_cache(path), DataError);
  }

  TEST_CASE("pairs file round trip and application") {
    RelaxReport report;
    report.threshold = 0.5;
    report.removed_positives = {{2}, {}, {0}, {}};
    report.removed_negatives = {{}, {3}, {}, {1}};
    const std::string path = temp_path("chl_test_pairs.txt");
    write_pairs_file(path, report);
    const RelaxReport loaded = read_pairs_file(path);
    CHECK(loaded.threshold == doctest::Approx(0.5));
    CHECK(loaded.removed_positives == report.removed_positives);
    CHECK(loaded.removed_negatives == report.removed_negatives);
    std::remove(path.c_str());

    Eigen::VectorXi labels(4);
    labels << 0, 1, 0, 1;
    const PairSets sets = build_pair_sets(labels, Eigen::VectorXi());
    const PairSets applied = apply_relax_report(sets, report);
    CHECK(applied.positives[0].empty());              // {2} removed
    CHECK(applied.negatives[1] == std::vector<int>{0});  // {3} removed
    CHECK(applied.positives[2].empty());
  }

  TEST_CASE("threshold bounds are enforced") {
    Eigen::VectorXi labels(2);
    labels << 0, 1;
    const PairSets sets = build_pair_sets(labels, Eigen::VectorXi());
    SimilarityMatrix sim;
    sim.values = Eigen::MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS(relax_pair_sets(sets, sim, 1.0), ConfigError);
    CHECK_THROWS_AS(relax_pair_sets(sets, sim, -1.0), ConfigError);
  }
}
