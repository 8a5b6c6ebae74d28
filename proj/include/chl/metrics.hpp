#pragma once

#include <string>
#include <vector>

namespace chl {

// One evaluated image. Labels are 0 = benign, 1 = malignant; malignant is
// the positive class everywhere.
struct EvaluationRecord {
  std::string item_id;
  std::string patient_id;
  int true_label = 0;
  int predicted_label = 0;
  int fold = 0;
  std::string magnification = "NA";
};

// Scores for one record set. Undefined ratios (empty denominator cells) are
// reported as 0 with the affected score named in `flags`.
struct FoldScores {
  double precision = 0.0;
  double recall = 0.0;
  double weighted_f1 = 0.0;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double kappa = 0.0;
  double dice = 0.0;
  double image_level_accuracy = 0.0;
  double patient_level_accuracy = 0.0;
  std::vector<std::string> flags;
};

// Per-fold scores plus their mean and sample standard deviation.
struct MetricsReport {
  std::vector<int> fold_ids;
  std::vector<FoldScores> per_fold;
  FoldScores mean;
  FoldScores stddev;
};

double image_level_accuracy(const std::vector<EvaluationRecord>& records);

// Per-patient accuracies averaged with equal patient weight.
double patient_level_accuracy(const std::vector<EvaluationRecord>& records);

FoldScores classification_scores(const std::vector<EvaluationRecord>& records);

// Groups records by fold id and aggregates.
MetricsReport evaluate_folds(const std::vector<EvaluationRecord>& records);

// CSV rows in the column order precision, recall, weighted F1, accuracy,
// balanced accuracy, kappa, dice, then patient-level accuracy; one row per
// fold plus a mean and a stddev row.
void write_metrics_csv(const std::string& path, const MetricsReport& report);

}  // namespace chl
