#include "chl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "chl/error.hpp"

namespace chl {

namespace {

struct Confusion {
  long tp = 0, tn = 0, fp = 0, fn = 0;
  long total() const { return tp + tn + fp + fn; }
};

Confusion tally(const std::vector<EvaluationRecord>& records) {
  Confusion c;
  for (const auto& r : records) {
    if ((r.true_label != 0 && r.true_label != 1) || (r.predicted_label != 0 && r.predicted_label != 1))
      throw DataError("evaluation labels must be binary");
    if (r.true_label == 1)
      (r.predicted_label == 1 ? c.tp : c.fn)++;
    else
      (r.predicted_label == 0 ? c.tn : c.fp)++;
  }
  return c;
}

// 0-with-flag convention for empty denominators.
double ratio(long num, long den, const char* name, std::vector<std::string>& flags) {
  if (den == 0) {
    flags.push_back(name);
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double image_level_accuracy(const std::vector<EvaluationRecord>& records) {
  if (records.empty()) throw DataError("cannot score an empty record set");
  long correct = 0;
  for (const auto& r : records) correct += r.true_label == r.predicted_label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

double patient_level_accuracy(const std::vector<EvaluationRecord>& records) {
  if (records.empty()) throw DataError("cannot score an empty record set");
  std::map<std::string, std::pair<long, long>> per_patient;  // correct, total
  for (const auto& r : records) {
    if (r.patient_id.empty()) throw DataError("evaluation record is missing a patient id");
    auto& [correct, total] = per_patient[r.patient_id];
    correct += r.true_label == r.predicted_label ? 1 : 0;
    ++total;
  }
  double sum = 0.0;
  for (const auto& [id, counts] : per_patient)
    sum += static_cast<double>(counts.first) / static_cast<double>(counts.second);
  return sum / static_cast<double>(per_patient.size());
}

FoldScores classification_scores(const std::vector<EvaluationRecord>& records) {
  if (records.empty()) throw DataError("cannot score an empty record set");
  const Confusion c = tally(records);
  FoldScores s;
  const long n = c.total();

  s.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(n);
  s.image_level_accuracy = s.accuracy;
  s.patient_level_accuracy = patient_level_accuracy(records);

  s.precision = ratio(c.tp, c.tp + c.fp, "precision", s.flags);
  s.recall = ratio(c.tp, c.tp + c.fn, "recall", s.flags);
  const double recall_neg = ratio(c.tn, c.tn + c.fp, "recall_neg", s.flags);
  s.balanced_accuracy = 0.5 * (s.recall + recall_neg);

  // support-weighted mean of the per-class F1 scores
  const double f1_pos = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, "f1_pos", s.flags);
  const double f1_neg = ratio(2 * c.tn, 2 * c.tn + c.fn + c.fp, "f1_neg", s.flags);
  const long support_pos = c.tp + c.fn;
  const long support_neg = c.tn + c.fp;
  s.weighted_f1 = (static_cast<double>(support_pos) * f1_pos + static_cast<double>(support_neg) * f1_neg) /
                  static_cast<double>(n);

  s.dice = f1_pos;

  // chance-corrected agreement with marginal-product expectation
  const double dn = static_cast<double>(n);
  const double p_o = s.accuracy;
  const double p_e = (static_cast<double>(c.tp + c.fn) * static_cast<double>(c.tp + c.fp) +
                      static_cast<double>(c.tn + c.fp) * static_cast<double>(c.tn + c.fn)) /
                     (dn * dn);
  if (std::abs(1.0 - p_e) < 1e-15) {
    s.flags.push_back("kappa");
    s.kappa = 0.0;
  } else {
    s.kappa = (p_o - p_e) / (1.0 - p_e);
  }
  return s;
}

MetricsReport evaluate_folds(const std::vector<EvaluationRecord>& records) {
  if (records.empty()) throw DataError("cannot score an empty record set");
  std::map<int, std::vector<EvaluationRecord>> folds;
  for (const auto& r : records) folds[r.fold].push_back(r);

  MetricsReport report;
  for (const auto& [fold, rows] : folds) {
    report.fold_ids.push_back(fold);
    report.per_fold.push_back(classification_scores(rows));
  }

  auto aggregate = [&report](auto field) {
    const double k = static_cast<double>(report.per_fold.size());
    double mean = 0.0;
    for (const auto& f : report.per_fold) mean += f.*field;
    mean /= k;
    double var = 0.0;
    if (report.per_fold.size() > 1) {
      for (const auto& f : report.per_fold) var += (f.*field - mean) * (f.*field - mean);
      var /= (k - 1.0);  // sample standard deviation across folds
    }
    return std::make_pair(mean, std::sqrt(var));
  };
  for (auto field : {&FoldScores::precision, &FoldScores::recall, &FoldScores::weighted_f1, &FoldScores::accuracy,
                     &FoldScores::balanced_accuracy, &FoldScores::kappa, &FoldScores::dice,
                     &FoldScores::image_level_accuracy, &FoldScores::patient_level_accuracy}) {
    const auto [m, sd] = aggregate(field);
    report.mean.*field = m;
    report.stddev.*field = sd;
  }
  return report;
}

void write_metrics_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write metrics report: " + path);
  out << "fold,precision,recall,weight_f1,acc,balance_acc,kappa,dice,patient_acc\n";
  char buf[512];
  auto row = [&out, &buf](const std::string& tag, const FoldScores& s) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", tag.c_str(), s.precision,
                  s.recall, s.weighted_f1, s.accuracy, s.balanced_accuracy, s.kappa, s.dice,
                  s.patient_level_accuracy);
    out << buf;
  };
  for (std::size_t i = 0; i < report.per_fold.size(); ++i)
    row(std::to_string(report.fold_ids[i]), report.per_fold[i]);
  row("mean", report.mean);
  row("stddev", report.stddev);
  if (!out) throw DataError("failed writing metrics report: " + path);
}

}  // namespace chl
