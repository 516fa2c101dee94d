#include "tsfm/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "tsfm/errors.hpp"

namespace tsfm::svg {

namespace {

constexpr double kW = 840, kH = 520;
constexpr double kLeft = 70, kRight = 30, kTop = 50, kBottom = 60;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct Range {
  double lo = 0, hi = 1;
  double scale(double v, double px0, double px1) const {
    const double t = hi == lo ? 0.5 : (v - lo) / (hi - lo);
    return px0 + t * (px1 - px0);
  }
};

Range span_of(const std::vector<Series>& series, bool x_axis) {
  Range r{1e300, -1e300};
  for (const auto& s : series)
    for (double v : (x_axis ? s.x : s.y)) {
      r.lo = std::min(r.lo, v);
      r.hi = std::max(r.hi, v);
    }
  if (r.lo > r.hi) r = {0, 1};
  if (r.lo == r.hi) {
    r.lo -= 0.5;
    r.hi += 0.5;
  }
  const double pad = 0.04 * (r.hi - r.lo);
  r.lo -= pad;
  r.hi += pad;
  return r;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

void open_chart(std::ofstream& os, const std::string& title, const std::string& x_label,
                const std::string& y_label, const Range& rx, const Range& ry) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
  os << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"28\" font-family=\"sans-serif\" font-size=\"17\" "
        "text-anchor=\"middle\">" << title << "</text>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12
     << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">" << x_label
     << "</text>\n";
  os << "<text x=\"18\" y=\"" << kH / 2
     << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" "
        "transform=\"rotate(-90 18 " << kH / 2 << ")\">" << y_label << "</text>\n";
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kW - kLeft - kRight
     << "\" height=\"" << kH - kTop - kBottom
     << "\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = kLeft + i * (kW - kLeft - kRight) / 5.0;
    const double fy = kH - kBottom - i * (kH - kTop - kBottom) / 5.0;
    const double vx = rx.lo + i * (rx.hi - rx.lo) / 5.0;
    const double vy = ry.lo + i * (ry.hi - ry.lo) / 5.0;
    os << "<line x1=\"" << num(fx) << "\" y1=\"" << kH - kBottom << "\" x2=\"" << num(fx)
       << "\" y2=\"" << kH - kBottom + 5 << "\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << num(fx) << "\" y=\"" << kH - kBottom + 20
       << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << num(vx)
       << "</text>\n";
    os << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << num(fy) << "\" x2=\"" << kLeft << "\" y2=\""
       << num(fy) << "\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << num(fy + 4)
       << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << num(vy)
       << "</text>\n";
  }
}

void legend(std::ofstream& os, const std::vector<Series>& series) {
  double y = kTop + 14;
  for (size_t i = 0; i < series.size() && i < 10; ++i) {
    const std::string color =
        series[i].color.empty() ? kPalette[i % 8] : series[i].color;
    os << "<rect x=\"" << kW - kRight - 150 << "\" y=\"" << y - 9
       << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
    os << "<text x=\"" << kW - kRight - 133 << "\" y=\"" << y + 1
       << "\" font-family=\"sans-serif\" font-size=\"12\">" << series[i].label << "</text>\n";
    y += 18;
  }
}

}  // namespace

void write_line_chart(const std::filesystem::path& file, const std::string& title,
                      const std::vector<Series>& series, const std::string& x_label,
                      const std::string& y_label) {
  std::ofstream os(file, std::ios::trunc);
  if (!os) raise(errc::missing_file, "cannot write " + file.string());
  const Range rx = span_of(series, true), ry = span_of(series, false);
  open_chart(os, title, x_label, y_label, rx, ry);
  for (size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const std::string color = s.color.empty() ? kPalette[i % 8] : s.color;
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (size_t p = 0; p < s.x.size(); ++p)
      os << num(rx.scale(s.x[p], kLeft, kW - kRight)) << ","
         << num(ry.scale(s.y[p], kH - kBottom, kTop)) << " ";
    os << "\"/>\n";
  }
  legend(os, series);
  os << "</svg>\n";
}

void write_scatter(const std::filesystem::path& file, const std::string& title,
                   const std::vector<Series>& series, const std::string& x_label,
                   const std::string& y_label) {
  std::ofstream os(file, std::ios::trunc);
  if (!os) raise(errc::missing_file, "cannot write " + file.string());
  const Range rx = span_of(series, true), ry = span_of(series, false);
  open_chart(os, title, x_label, y_label, rx, ry);
  for (size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const std::string color = s.color.empty() ? kPalette[i % 8] : s.color;
    for (size_t p = 0; p < s.x.size(); ++p)
      os << "<circle cx=\"" << num(rx.scale(s.x[p], kLeft, kW - kRight)) << "\" cy=\""
         << num(ry.scale(s.y[p], kH - kBottom, kTop)) << "\" r=\"3\" fill=\"" << color
         << "\" fill-opacity=\"0.7\"/>\n";
  }
  legend(os, series);
  os << "</svg>\n";
}

void write_heatmap(const std::filesystem::path& file, const std::string& title,
                   const Tensor& matrix, const std::string& x_label, const std::string& y_label) {
  if (matrix.rank() != 2) raise(errc::shape_mismatch, "heatmap expects a matrix");
  std::ofstream os(file, std::ios::trunc);
  if (!os) raise(errc::missing_file, "cannot write " + file.string());
  const int64_t rows = matrix.dim(0), cols = matrix.dim(1);
  double vmax = 0.0;
  for (int64_t i = 0; i < matrix.size(); ++i) vmax = std::max(vmax, std::abs(matrix[i]));
  if (vmax == 0.0) vmax = 1.0;
  const Range rx{0, static_cast<double>(cols)}, ry{0, static_cast<double>(rows)};
  open_chart(os, title, x_label, y_label, rx, ry);
  const double cw = (kW - kLeft - kRight) / static_cast<double>(cols);
  const double ch = (kH - kTop - kBottom) / static_cast<double>(rows);
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) {
      const double v = matrix.at(r, c) / vmax;  // [-1, 1]
      const int red = v > 0 ? 255 : static_cast<int>(255 * (1.0 + v));
      const int blue = v < 0 ? 255 : static_cast<int>(255 * (1.0 - v));
      const int green = static_cast<int>(255 * (1.0 - std::abs(v)));
      os << "<rect x=\"" << num(kLeft + cw * static_cast<double>(c)) << "\" y=\""
         << num(kH - kBottom - ch * static_cast<double>(r + 1)) << "\" width=\"" << num(cw + 0.5)
         << "\" height=\"" << num(ch + 0.5) << "\" fill=\"rgb(" << red << "," << green << ","
         << blue << ")\"/>\n";
    }
  }
  os << "</svg>\n";
}

}  // namespace tsfm::svg
