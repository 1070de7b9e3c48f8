#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stshare/metrics.hpp"

namespace stshare {

// Minimal SVG line plots for the ROC / precision-recall curves.

namespace svgdetail {

inline void polyline(std::ostringstream& os, const std::vector<std::pair<double, double>>& pts,
                     const char* color, int w, int h, int margin) {
  os << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
  for (const auto& [x, y] : pts)
    os << margin + x * (w - 2 * margin) << "," << h - margin - y * (h - 2 * margin) << " ";
  os << "'/>\n";
}

}  // namespace svgdetail

inline void save_curve_svg(const std::string& path, const std::vector<std::pair<double, double>>& pts,
                           const std::string& title, const std::string& xlabel,
                           const std::string& ylabel, bool diagonal) {
  const int w = 420, h = 420, margin = 45;
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<rect x='" << margin << "' y='" << margin << "' width='" << w - 2 * margin
     << "' height='" << h - 2 * margin << "' fill='none' stroke='#888'/>\n";
  if (diagonal)
    os << "<line x1='" << margin << "' y1='" << h - margin << "' x2='" << w - margin << "' y2='"
       << margin << "' stroke='#bbb' stroke-dasharray='4'/>\n";
  svgdetail::polyline(os, pts, "#1f6fb2", w, h, margin);
  os << "<text x='" << w / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
     << "</text>\n";
  os << "<text x='" << w / 2 << "' y='" << h - 8 << "' text-anchor='middle' font-size='12'>"
     << xlabel << "</text>\n";
  os << "<text x='14' y='" << h / 2 << "' text-anchor='middle' font-size='12' transform='rotate(-90 14 "
     << h / 2 << ")'>" << ylabel << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double f = i / 4.0;
    os << "<text x='" << margin + f * (w - 2 * margin) << "' y='" << h - margin + 14
       << "' text-anchor='middle' font-size='10'>" << f << "</text>\n";
    os << "<text x='" << margin - 6 << "' y='" << h - margin - f * (h - 2 * margin) + 3
       << "' text-anchor='end' font-size='10'>" << f << "</text>\n";
  }
  os << "</svg>\n";
  std::ofstream f(path);
  f << os.str();
}

inline void save_roc_svg(const std::string& path, const MetricReport& r, const std::string& tag) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : r.roc_micro) pts.emplace_back(p.fpr, p.tpr);
  save_curve_svg(path, pts, "ROC (micro) - " + tag, "false positive rate", "true positive rate",
                 true);
}

inline void save_pr_svg(const std::string& path, const MetricReport& r, const std::string& tag) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : r.pr_micro) pts.emplace_back(p.recall, p.precision);
  save_curve_svg(path, pts, "Precision-Recall (micro) - " + tag, "recall", "precision", false);
}

}  // namespace stshare
