#include <doctest.h>

#include <cmath>
#include <tuple>

#include "chl/error.hpp"
#include "chl/metrics.hpp"
#include "chl/rng.hpp"

using namespace chl;

namespace {

std::vector<EvaluationRecord> make_records(const std::vector<std::tuple<std::string, int, int>>& rows) {
  std::vector<EvaluationRecord> records;
  int id = 0;
  for (const auto& [patient, truth, pred] : rows) {
    EvaluationRecord r;
    r.item_id = "img" + std::to_string(id++);
    r.patient_id = patient;
    r.true_label = truth;
    r.predicted_label = pred;
    records.push_back(std::move(r));
  }
  return records;
}

// The frozen 20-record fixture scored by tests/oracles/metrics_fixture.py
// (exact rational arithmetic): patients A (6 benign, 5 correct),
// B (4 benign, 2 correct), C (7 malignant, all correct),
// D (3 malignant, 1 correct); confusion TP=8 TN=7 FP=3 FN=2.
std::vector<EvaluationRecord> fixture_records() {
  std::vector<std::tuple<std::string, int, int>> rows;
  for (int i = 0; i < 5; ++i) rows.emplace_back("A", 0, 0);
  rows.emplace_back("A", 0, 1);
  for (int i = 0; i < 2; ++i) rows.emplace_back("B", 0, 0);
  for (int i = 0; i < 2; ++i) rows.emplace_back("B", 0, 1);
  for (int i = 0; i < 7; ++i) rows.emplace_back("C", 1, 1);
  rows.emplace_back("D", 1, 1);
  for (int i = 0; i < 2; ++i) rows.emplace_back("D", 1, 0);
  return make_records(rows);
}

std::vector<EvaluationRecord> from_confusion(long tp, long fn, long fp, long tn) {
  std::vector<std::tuple<std::string, int, int>> rows;
  for (long i = 0; i < tp; ++i) rows.emplace_back("p" + std::to_string(i % 3), 1, 1);
  for (long i = 0; i < fn; ++i) rows.emplace_back("q" + std::to_string(i % 3), 1, 0);
  for (long i = 0; i < fp; ++i) rows.emplace_back("r" + std::to_string(i % 3), 0, 1);
  for (long i = 0; i < tn; ++i) rows.emplace_back("s" + std::to_string(i % 3), 0, 0);
  return make_records(rows);
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("image-level accuracy") {
    auto all_correct = make_records({{"a", 0, 0}, {"a", 1, 1}, {"b", 0, 0}});
    CHECK(image_level_accuracy(all_correct) == doctest::Approx(1.0));
    auto three_of_four = make_records({{"a", 0, 0}, {"a", 1, 1}, {"b", 0, 0}, {"b", 1, 0}});
    CHECK(image_level_accuracy(three_of_four) == doctest::Approx(0.75));
    CHECK_THROWS_AS(image_level_accuracy({}), DataError);
  }

  TEST_CASE("patient-level accuracy") {
    auto records = make_records({{"A", 1, 1}, {"A", 1, 1}, {"A", 1, 1}, {"A", 1, 0},
                                 {"B", 0, 0}, {"B", 0, 1}});
    CHECK(patient_level_accuracy(records) == doctest::Approx(0.625).epsilon(1e-12));

    auto single = make_records({{"only", 1, 1}, {"only", 0, 1}, {"only", 1, 0}});
    CHECK(patient_level_accuracy(single) == doctest::Approx(image_level_accuracy(single)).epsilon(1e-12));

    auto one_each = make_records({{"a", 1, 1}, {"b", 0, 1}, {"c", 1, 0}, {"d", 0, 0}});
    CHECK(patient_level_accuracy(one_each) == doctest::Approx(image_level_accuracy(one_each)).epsilon(1e-12));
  }

  TEST_CASE("frozen 20-record fixture") {
    const auto records = fixture_records();
    const FoldScores s = classification_scores(records);
    CHECK(s.accuracy == doctest::Approx(0.75).epsilon(1e-10));
    CHECK(s.image_level_accuracy == doctest::Approx(0.75).epsilon(1e-10));
    CHECK(s.patient_level_accuracy == doctest::Approx(0.66666666666666663).epsilon(1e-10));
    CHECK(s.precision == doctest::Approx(0.72727272727272729).epsilon(1e-10));
    CHECK(s.recall == doctest::Approx(0.80000000000000004).epsilon(1e-10));
    CHECK(s.weighted_f1 == doctest::Approx(0.74937343358395991).epsilon(1e-10));
    CHECK(s.balanced_accuracy == doctest::Approx(0.75).epsilon(1e-10));
    CHECK(s.kappa == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(s.dice == doctest::Approx(0.76190476190476186).epsilon(1e-10));
    CHECK(s.flags.empty());
  }

  TEST_CASE("hand-evaluated confusion matrix") {
    const FoldScores s = classification_scores(from_confusion(8, 2, 1, 9));
    CHECK(s.precision == doctest::Approx(8.0 / 9.0).epsilon(1e-12));
    CHECK(s.recall == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(s.dice == doctest::Approx(16.0 / 19.0).epsilon(1e-12));
    CHECK(s.balanced_accuracy == doctest::Approx(0.85).epsilon(1e-12));
    // kappa via p_o/p_e arithmetic: p_o = 0.85, p_e = (10*9 + 10*11)/400
    CHECK(s.kappa == doctest::Approx((0.85 - 0.5) / 0.5).epsilon(1e-12));
  }

  TEST_CASE("perfect and chance-level predictions") {
    const FoldScores perfect = classification_scores(from_confusion(5, 0, 0, 5));
    CHECK(perfect.precision == doctest::Approx(1.0));
    CHECK(perfect.recall == doctest::Approx(1.0));
    CHECK(perfect.weighted_f1 == doctest::Approx(1.0));
    CHECK(perfect.balanced_accuracy == doctest::Approx(1.0));
    CHECK(perfect.kappa == doctest::Approx(1.0));
    CHECK(perfect.dice == doctest::Approx(1.0));

    // all-malignant predictions on a balanced set
    const FoldScores chance = classification_scores(from_confusion(5, 0, 5, 0));
    CHECK(chance.balanced_accuracy == doctest::Approx(0.5));
    CHECK(chance.kappa == doctest::Approx(0.0));
  }

  TEST_CASE("kappa is 1 only for perfect two-class predictions") {
    CHECK(classification_scores(from_confusion(4, 0, 0, 6)).kappa == doctest::Approx(1.0));
    const FoldScores single_class = classification_scores(from_confusion(4, 0, 0, 0));
    CHECK(single_class.kappa == doctest::Approx(0.0));  // degenerate marginals, flagged
    CHECK(!single_class.flags.empty());
    CHECK(classification_scores(from_confusion(4, 1, 0, 5)).kappa < 1.0);
  }

  TEST_CASE("dice equals positive-class F1 on random confusion matrices") {
    for (int rep = 0; rep < 1000; ++rep) {
      RngEngine rng = derive_rng(9000 + rep, {});
      const long tp = uniform_int(rng, 0, 30);
      const long fn = uniform_int(rng, 0, 30);
      const long fp = uniform_int(rng, 0, 30);
      const long tn = uniform_int(rng, 0, 30);
      if (tp + fn + fp + tn == 0) continue;
      const FoldScores s = classification_scores(from_confusion(tp, fn, fp, tn));
      const double denom = static_cast<double>(2 * tp + fp + fn);
      const double f1_pos = denom == 0.0 ? 0.0 : 2.0 * tp / denom;
      CHECK(s.dice == doctest::Approx(f1_pos).epsilon(1e-12));
    }
  }

  TEST_CASE("balanced accuracy survives duplicating one class") {
    auto records = from_confusion(6, 2, 3, 9);
    const double before = classification_scores(records).balanced_accuracy;
    auto doubled = records;
    for (const auto& r : records)
      if (r.true_label == 1) doubled.push_back(r);
    CHECK(classification_scores(doubled).balanced_accuracy == doctest::Approx(before).epsilon(1e-12));
  }

  TEST_CASE("division-by-zero cells score 0 and are flagged") {
    // no predicted positives
    const FoldScores s = classification_scores(from_confusion(0, 4, 0, 6));
    CHECK(s.precision == 0.0);
    bool flagged = false;
    for (const auto& f : s.flags) flagged |= f == "precision";
    CHECK(flagged);
  }

  TEST_CASE("fold aggregation reports mean and sample stddev") {
    std::vector<EvaluationRecord> records;
    auto add_fold = [&records](int fold, long tp, long fn, long fp, long tn) {
      for (auto& r : from_confusion(tp, fn, fp, tn)) {
        r.fold = fold;
        records.push_back(r);
      }
    };
    add_fold(0, 5, 0, 0, 5);  // accuracy 1.0
    add_fold(1, 3, 2, 2, 3);  // accuracy 0.6
    const MetricsReport report = evaluate_folds(records);
    REQUIRE(report.per_fold.size() == 2);
    CHECK(report.mean.accuracy == doctest::Approx(0.8).epsilon(1e-12));
    // sample standard deviation over {1.0, 0.6}
    CHECK(report.stddev.accuracy == doctest::Approx(std::sqrt(0.08)).epsilon(1e-12));
  }

  TEST_CASE("records must be binary and non-empty") {
    auto bad = make_records({{"a", 2, 0}});
    CHECK_THROWS_AS(classification_scores(bad), DataError);
    auto no_patient = make_records({{"", 1, 1}});
    CHECK_THROWS_AS(patient_level_accuracy(no_patient), DataError);
  }
}
