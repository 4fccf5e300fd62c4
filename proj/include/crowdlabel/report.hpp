#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "io.hpp"

namespace crowdlabel {

struct CurveRow {
  std::string model;
  double train_size = 0.0;
  double train_score = 0.0;
  double cv_score = 0.0;
};

/// Reads `model,train_size,train_score,cv_score`.
inline std::vector<CurveRow> parse_learning_curve_csv(std::istream& in, const std::string& source_name = "<curve>") {
  std::string line;
  std::vector<CurveRow> rows;
  if (!std::getline(in, line) || line.rfind("model,train_size,train_score,cv_score", 0) != 0) {
    throw ParseError(source_name, 1, "expected header model,train_size,train_score,cv_score");
  }
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 4) throw ParseError(source_name, lineno, "expected 4 fields");
    try {
      rows.push_back({f[0], std::stod(f[1]), std::stod(f[2]), std::stod(f[3])});
    } catch (const std::exception&) {
      throw ParseError(source_name, lineno, "non-numeric field");
    }
  }
  return rows;
}

/// Train and cross-validation ROC AUC against training-set size.
inline std::string render_learning_curve_svg(const std::vector<CurveRow>& rows, const std::string& title) {
  constexpr double W = 640, H = 420, L = 70, R = 20, T = 40, B = 60;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  if (rows.empty()) {
    s << "<text x=\"" << W / 2 << "\" y=\"" << H / 2 << "\" text-anchor=\"middle\">no points</text>\n</svg>\n";
    return s.str();
  }
  double xmax = 0, ymin = 1, ymax = 0;
  for (const auto& r : rows) {
    xmax = std::max(xmax, r.train_size);
    ymin = std::min({ymin, r.train_score, r.cv_score});
    ymax = std::max({ymax, r.train_score, r.cv_score});
  }
  ymin = std::max(0.0, std::floor(ymin * 10.0 - 0.5) / 10.0);
  ymax = std::min(1.0, std::ceil(ymax * 10.0 + 0.5) / 10.0);
  if (ymax <= ymin) ymax = ymin + 0.1;
  if (xmax <= 0) xmax = 1;
  auto px = [&](double x) { return L + x / xmax * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = ymin + (ymax - ymin) * i / 5.0;
    s << "<line x1=\"" << L - 4 << "\" y1=\"" << fmt_real(py(y), 2) << "\" x2=\"" << W - R << "\" y2=\""
      << fmt_real(py(y), 2) << "\" stroke=\"#ddd\"/>\n";
    s << "<text x=\"" << L - 8 << "\" y=\"" << fmt_real(py(y) + 4, 2) << "\" text-anchor=\"end\">" << fmt_real(y, 2)
      << "</text>\n";
    const double x = xmax * i / 5.0;
    s << "<text x=\"" << fmt_real(px(x), 2) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">"
      << static_cast<long long>(x + 0.5) << "</text>\n";
  }
  s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">training examples</text>\n";
  s << "<text transform=\"translate(18," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">ROC AUC</text>\n";

  auto series = [&](auto get, const char* color, const char* name, int slot) {
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& r : rows) s << fmt_real(px(r.train_size), 2) << ',' << fmt_real(py(get(r)), 2) << ' ';
    s << "\"/>\n";
    for (const auto& r : rows) {
      s << "<circle cx=\"" << fmt_real(px(r.train_size), 2) << "\" cy=\"" << fmt_real(py(get(r)), 2)
        << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = T + 10 + 18 * slot;
    s << "<line x1=\"" << W - R - 150 << "\" y1=\"" << ly << "\" x2=\"" << W - R - 130 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << W - R - 124 << "\" y=\"" << ly + 4 << "\">" << name << "</text>\n";
  };
  series([](const CurveRow& r) { return r.train_score; }, "#d62728", "training score", 0);
  series([](const CurveRow& r) { return r.cv_score; }, "#1f77b4", "cross-validation score", 1);
  s << "</svg>\n";
  return s.str();
}

}  // namespace crowdlabel
