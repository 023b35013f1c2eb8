#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tbnet {

/// Binary confusion counts. Positive class = Tuberculosis (label 1).
struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
};

ConfusionMatrix confusion(const std::vector<int>& predictions,
                          const std::vector<int>& truths);

/// Division-by-zero cases report value 0 together with the metric name
/// in undefined_flags so downstream consumers can tell them apart from a
/// genuine zero.
struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::uint64_t support = 0;
  std::vector<std::string> undefined_flags;
};

struct ScalarMetrics {
  double accuracy = 0;
  ClassMetrics normal;
  ClassMetrics tuberculosis;
};

ScalarMetrics scalar_metrics(const ConfusionMatrix& cm);

struct RocPoint {
  double threshold = 0;  // +-infinity at the endpoints
  double fpr = 0;
  double tpr = 0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) .. (1,1), both rates non-decreasing
  double auc = 0;                // trapezoidal integral
};

/// Sweeps every distinct score as a decision threshold (predict positive
/// when score >= threshold). Trapezoidal integration handles tie
/// plateaus, matching the Mann-Whitney pair statistic.
RocCurve roc_auc(const std::vector<double>& scores,
                 const std::vector<int>& truths);

struct EvalReport {
  double accuracy = 0;
  double auc = 0;
  ConfusionMatrix confusion;
  ClassMetrics normal;
  ClassMetrics tuberculosis;
};

EvalReport classification_report(const ConfusionMatrix& cm,
                                 const RocCurve& roc);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

void emit_report_json(const EvalReport& report, const std::string& path);
/// `threshold,fpr,tpr` rows; one per distinct threshold plus the two
/// endpoint rows.
void emit_roc_csv(const RocCurve& roc, const std::string& path);

/// Self-contained SVG renderings of the evaluation artifacts.
void emit_confusion_svg(const ConfusionMatrix& cm, const std::string& path);
void emit_roc_svg(const RocCurve& roc, const std::string& path);
void emit_heatmap_svg(const EvalReport& report, const std::string& path);

}  // namespace tbnet
