#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "tbnet/errors.hpp"
#include "tbnet/metrics.hpp"

namespace tbnet {

namespace {

std::ofstream open_svg(const std::string& path) {
  if (path.empty()) throw std::invalid_argument("emit: empty output path");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

std::string fmt(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Fixed white-to-blue ramp over [0, 1].
std::string ramp_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(255.0 - 185.0 * v));
  const int g = static_cast<int>(std::lround(255.0 - 140.0 * v));
  const int b = 255;
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

void svg_header(std::ostream& out, int w, int h) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h
      << "\" font-family=\"sans-serif\">\n";
}

void cell(std::ostream& out, int x, int y, int size, double shade,
          const std::string& text) {
  out << "  <rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << size
      << "\" height=\"" << size << "\" fill=\"" << ramp_color(shade)
      << "\" stroke=\"#333\"/>\n";
  out << "  <text x=\"" << x + size / 2 << "\" y=\"" << y + size / 2 + 5
      << "\" text-anchor=\"middle\" font-size=\"16\">" << text << "</text>\n";
}

void label(std::ostream& out, int x, int y, const std::string& text,
           int size = 13, const char* anchor = "middle") {
  out << "  <text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor
      << "\" font-size=\"" << size << "\">" << text << "</text>\n";
}

}  // namespace

void emit_confusion_svg(const ConfusionMatrix& cm, const std::string& path) {
  auto out = open_svg(path);
  const double mx = static_cast<double>(
      std::max({cm.tp, cm.fp, cm.tn, cm.fn, std::uint64_t(1)}));
  svg_header(out, 360, 330);
  label(out, 180, 24, "Confusion matrix (positive = Tuberculosis)", 15);
  label(out, 200, 52, "Predicted Normal");
  label(out, 300, 52, "Predicted TB");
  label(out, 80, 130, "Actual Normal", 13, "end");
  label(out, 80, 230, "Actual TB", 13, "end");
  // rows: actual Normal, actual TB; columns: predicted Normal, predicted TB
  cell(out, 100, 70, 100, cm.tn / mx, std::to_string(cm.tn));
  cell(out, 200, 70, 100, cm.fp / mx, std::to_string(cm.fp));
  cell(out, 100, 170, 100, cm.fn / mx, std::to_string(cm.fn));
  cell(out, 200, 170, 100, cm.tp / mx, std::to_string(cm.tp));
  out << "</svg>\n";
  if (!out) throw DataError("write failure: " + path);
}

void emit_roc_svg(const RocCurve& roc, const std::string& path) {
  auto out = open_svg(path);
  const int size = 360, margin = 45, plot = size - 2 * margin;
  svg_header(out, size, size);
  label(out, size / 2, 24, "ROC curve", 15);
  out << "  <rect x=\"" << margin << "\" y=\"" << margin << "\" width=\""
      << plot << "\" height=\"" << plot
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
  // chance diagonal
  out << "  <line x1=\"" << margin << "\" y1=\"" << margin + plot
      << "\" x2=\"" << margin + plot << "\" y2=\"" << margin
      << "\" stroke=\"#bbb\" stroke-dasharray=\"4 4\"/>\n";
  std::ostringstream pts;
  for (const auto& p : roc.points) {
    const double x = margin + p.fpr * plot;
    const double y = margin + plot - p.tpr * plot;
    pts << fmt(x, 2) << "," << fmt(y, 2) << " ";
  }
  out << "  <polyline points=\"" << pts.str()
      << "\" fill=\"none\" stroke=\"#1f5fbf\" stroke-width=\"2\"/>\n";
  label(out, size / 2, size - 8, "False positive rate");
  out << "  <text x=\"14\" y=\"" << size / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 "
         "14 "
      << size / 2 << ")\">True positive rate</text>\n";
  label(out, margin + plot - 8, margin + plot - 12,
        "AUC = " + fmt(roc.auc), 14, "end");
  out << "</svg>\n";
  if (!out) throw DataError("write failure: " + path);
}

void emit_heatmap_svg(const EvalReport& report, const std::string& path) {
  auto out = open_svg(path);
  svg_header(out, 460, 300);
  label(out, 230, 24, "Classification report", 15);
  const char* cols[] = {"precision", "recall", "f1"};
  const double normal[] = {report.normal.precision, report.normal.recall,
                           report.normal.f1};
  const double tb[] = {report.tuberculosis.precision,
                       report.tuberculosis.recall, report.tuberculosis.f1};
  for (int c = 0; c < 3; ++c) {
    label(out, 160 + c * 90 + 40, 56, cols[c]);
  }
  label(out, 150, 105, "Normal", 13, "end");
  label(out, 150, 185, "Tuberculosis", 13, "end");
  for (int c = 0; c < 3; ++c) {
    cell(out, 160 + c * 90, 70, 80, normal[c], fmt(normal[c]));
    cell(out, 160 + c * 90, 150, 80, tb[c], fmt(tb[c]));
  }
  label(out, 150, 262, "accuracy", 13, "end");
  cell(out, 160, 235, 80, report.accuracy, fmt(report.accuracy));
  label(out, 250 + 40, 262, "support " + std::to_string(report.normal.support) +
                                " / " +
                                std::to_string(report.tuberculosis.support),
        12, "start");
  out << "</svg>\n";
  if (!out) throw DataError("write failure: " + path);
}

}  // namespace tbnet
