#include "tbnet/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "tbnet/errors.hpp"

namespace tbnet {

using json = nlohmann::json;

ConfusionMatrix confusion(const std::vector<int>& predictions,
                          const std::vector<int>& truths) {
  if (predictions.size() != truths.size()) {
    throw std::invalid_argument(
        "confusion: prediction/truth length mismatch: " +
        std::to_string(predictions.size()) + " vs " +
        std::to_string(truths.size()));
  }
  if (predictions.empty()) {
    throw std::invalid_argument("confusion: no samples");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const int p = predictions[i], t = truths[i];
    if ((p != 0 && p != 1) || (t != 0 && t != 1)) {
      throw std::invalid_argument("confusion: labels must be binary");
    }
    if (t == 1) {
      p == 1 ? ++cm.tp : ++cm.fn;
    } else {
      p == 1 ? ++cm.fp : ++cm.tn;
    }
  }
  return cm;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den, const char* flag,
             ClassMetrics& m) {
  if (den == 0) {
    m.undefined_flags.push_back(flag);
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

ClassMetrics class_metrics(std::uint64_t tp, std::uint64_t fp,
                           std::uint64_t fn) {
  ClassMetrics m;
  m.support = tp + fn;
  m.precision = ratio(tp, tp + fp, "precision", m);
  m.recall = ratio(tp, tp + fn, "recall", m);
  if (m.precision + m.recall == 0.0) {
    m.undefined_flags.push_back("f1");
    m.f1 = 0.0;
  } else {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

}  // namespace

ScalarMetrics scalar_metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) {
    throw std::invalid_argument("scalar_metrics: empty confusion matrix");
  }
  ScalarMetrics s;
  s.accuracy =
      static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  // Tuberculosis is the positive class; the Normal view swaps roles.
  s.tuberculosis = class_metrics(cm.tp, cm.fp, cm.fn);
  s.normal = class_metrics(cm.tn, cm.fn, cm.fp);
  return s;
}

RocCurve roc_auc(const std::vector<double>& scores,
                 const std::vector<int>& truths) {
  if (scores.size() != truths.size() || scores.empty()) {
    throw std::invalid_argument("roc_auc: score/truth length mismatch");
  }
  std::uint64_t pos = 0, neg = 0;
  for (int t : truths) {
    if (t != 0 && t != 1) {
      throw std::invalid_argument("roc_auc: labels must be binary");
    }
    t == 1 ? ++pos : ++neg;
  }
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument(
        "roc_auc: need at least one positive and one negative truth");
  }
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  RocCurve roc;
  const double inf = std::numeric_limits<double>::infinity();
  roc.points.push_back({inf, 0.0, 0.0});
  std::uint64_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double t = scores[order[i]];
    // consume the whole tie group at this threshold
    while (i < order.size() && scores[order[i]] == t) {
      truths[order[i]] == 1 ? ++tp : ++fp;
      ++i;
    }
    roc.points.push_back({t, static_cast<double>(fp) / neg,
                          static_cast<double>(tp) / pos});
  }
  roc.points.push_back({-inf, 1.0, 1.0});

  double auc = 0.0;
  for (std::size_t k = 1; k < roc.points.size(); ++k) {
    const auto& a = roc.points[k - 1];
    const auto& b = roc.points[k];
    auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  roc.auc = auc;
  return roc;
}

EvalReport classification_report(const ConfusionMatrix& cm,
                                 const RocCurve& roc) {
  const ScalarMetrics s = scalar_metrics(cm);
  EvalReport r;
  r.accuracy = s.accuracy;
  r.auc = roc.auc;
  r.confusion = cm;
  r.normal = s.normal;
  r.tuberculosis = s.tuberculosis;
  return r;
}

namespace {

json class_to_json(const ClassMetrics& m) {
  return json{{"precision", m.precision},
              {"recall", m.recall},
              {"f1", m.f1},
              {"support", m.support},
              {"undefined_flags", m.undefined_flags}};
}

ClassMetrics class_from_json(const json& j) {
  ClassMetrics m;
  m.precision = j.at("precision").get<double>();
  m.recall = j.at("recall").get<double>();
  m.f1 = j.at("f1").get<double>();
  m.support = j.at("support").get<std::uint64_t>();
  m.undefined_flags = j.at("undefined_flags").get<std::vector<std::string>>();
  return m;
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
  json j{{"accuracy", r.accuracy},
         {"auc", r.auc},
         {"confusion",
          {{"tp", r.confusion.tp},
           {"fp", r.confusion.fp},
           {"tn", r.confusion.tn},
           {"fn", r.confusion.fn}}},
         {"classes",
          {{"Normal", class_to_json(r.normal)},
           {"Tuberculosis", class_to_json(r.tuberculosis)}}}};
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  const json j = json::parse(text);
  EvalReport r;
  r.accuracy = j.at("accuracy").get<double>();
  r.auc = j.at("auc").get<double>();
  const json& c = j.at("confusion");
  r.confusion = {c.at("tp").get<std::uint64_t>(),
                 c.at("fp").get<std::uint64_t>(),
                 c.at("tn").get<std::uint64_t>(),
                 c.at("fn").get<std::uint64_t>()};
  r.normal = class_from_json(j.at("classes").at("Normal"));
  r.tuberculosis = class_from_json(j.at("classes").at("Tuberculosis"));
  return r;
}

namespace {

std::ofstream open_out(const std::string& path) {
  if (path.empty()) throw std::invalid_argument("emit: empty output path");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

std::string fmt_threshold(double t) {
  if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", t);
  return buf;
}

}  // namespace

void emit_report_json(const EvalReport& report, const std::string& path) {
  auto out = open_out(path);
  out << report_to_json(report);
  if (!out) throw DataError("write failure: " + path);
}

void emit_roc_csv(const RocCurve& roc, const std::string& path) {
  auto out = open_out(path);
  out << "threshold,fpr,tpr\n";
  char buf[96];
  for (const auto& p : roc.points) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g\n",
                  fmt_threshold(p.threshold).c_str(), p.fpr, p.tpr);
    out << buf;
  }
  if (!out) throw DataError("write failure: " + path);
}

}  // namespace tbnet
