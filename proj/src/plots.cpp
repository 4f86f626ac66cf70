#include "dfq/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dfq/ioutil.hpp"

namespace dfq::bench {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace

int64_t CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<int64_t>(i);
  throw std::invalid_argument("csv: missing column '" + name + "'");
}

double CsvTable::number(size_t row, int64_t col) const {
  return std::stod(rows.at(row).at(static_cast<size_t>(col)));
}

CsvTable CsvTable::read(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open csv: " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("csv: empty file " + path);
  t.columns = split_csv_line(line);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    t.rows.push_back(split_csv_line(line));
  }
  return t;
}

void CsvTable::write(const std::string& path) const {
  std::string out;
  for (size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
  out += "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
    out += "\n";
  }
  write_text_atomic(path, out);
}

namespace {

struct Bounds {
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;

  void grow(double x, double y) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  static Bounds of_points(const std::vector<std::pair<double, double>>& pts) {
    Bounds b{pts[0].first, pts[0].first, pts[0].second, pts[0].second};
    for (const auto& [x, y] : pts) b.grow(x, y);
    double dx = std::max(b.xmax - b.xmin, 1e-9), dy = std::max(b.ymax - b.ymin, 1e-9);
    b.xmin -= 0.05 * dx;
    b.xmax += 0.05 * dx;
    b.ymin -= 0.05 * dy;
    b.ymax += 0.05 * dy;
    return b;
  }
};

constexpr int kSize = 640;

double sx(const Bounds& b, double x) { return (x - b.xmin) / (b.xmax - b.xmin) * kSize; }
double sy(const Bounds& b, double y) { return kSize - (y - b.ymin) / (b.ymax - b.ymin) * kSize; }

std::string class_color(int64_t label) {
  // 10-step hue wheel; enough for desk-scale class counts.
  static const char* palette[] = {"#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
                                  "#46f0f0", "#f032e6", "#bcf60c", "#008080", "#9a6324"};
  return palette[static_cast<size_t>(((label % 10) + 10) % 10)];
}

std::string svg_header() {
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
    << "\" viewBox=\"0 0 " << kSize << " " << kSize << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return o.str();
}

std::string circle(double cx, double cy, double r, const std::string& fill, double opacity) {
  std::ostringstream o;
  o << "<circle cx=\"" << fmt_double(cx) << "\" cy=\"" << fmt_double(cy) << "\" r=\""
    << fmt_double(r) << "\" fill=\"" << fill << "\" fill-opacity=\"" << fmt_double(opacity)
    << "\"/>\n";
  return o.str();
}

}  // namespace

void write_pca_scatter_svg(const CsvTable& points, const std::string& path) {
  if (points.rows.empty()) throw std::invalid_argument("pca plot: empty input");
  int64_t cx = points.column("x");
  int64_t cy = points.column("y");
  int64_t cl = points.column("label");
  int64_t cs = points.column("source");

  std::vector<std::pair<double, double>> pts;
  for (size_t r = 0; r < points.rows.size(); ++r)
    pts.emplace_back(points.number(r, cx), points.number(r, cy));
  Bounds b = Bounds::of_points(pts);

  std::string svg = svg_header();
  // Draw superposed points last so the boundary samples stay visible.
  for (int pass = 0; pass < 2; ++pass) {
    for (size_t r = 0; r < points.rows.size(); ++r) {
      const std::string& source = points.rows[r].at(static_cast<size_t>(cs));
      bool superposed = source == "superposed";
      if ((pass == 1) != superposed) continue;
      int64_t label = static_cast<int64_t>(points.number(r, cl));
      std::string fill = superposed ? "#000000" : class_color(label);
      double opacity = source == "real" ? 0.25 : 0.8;
      double radius = superposed ? 3.0 : 2.2;
      svg += circle(sx(b, pts[r].first), sy(b, pts[r].second), radius, fill, opacity);
    }
  }
  svg += "</svg>\n";
  write_text_atomic(path, svg);
}

void write_path_plot_svg(const CsvTable& path_points, const CsvTable* clouds,
                         const std::string& path) {
  if (path_points.rows.empty()) throw std::invalid_argument("path plot: empty input");
  int64_t cx = path_points.column("x");
  int64_t cy = path_points.column("y");
  int64_t ci = path_points.column("index");

  std::vector<std::pair<double, double>> pts;
  for (size_t r = 0; r < path_points.rows.size(); ++r)
    pts.emplace_back(path_points.number(r, cx), path_points.number(r, cy));

  std::vector<std::pair<double, double>> all = pts;
  if (clouds != nullptr && !clouds->rows.empty()) {
    int64_t kx = clouds->column("x");
    int64_t ky = clouds->column("y");
    for (size_t r = 0; r < clouds->rows.size(); ++r)
      all.emplace_back(clouds->number(r, kx), clouds->number(r, ky));
  }
  Bounds b = Bounds::of_points(all);

  std::string svg = svg_header();
  if (clouds != nullptr && !clouds->rows.empty()) {
    int64_t kx = clouds->column("x");
    int64_t ky = clouds->column("y");
    int64_t kl = clouds->column("label");
    for (size_t r = 0; r < clouds->rows.size(); ++r) {
      int64_t label = static_cast<int64_t>(clouds->number(r, kl));
      svg += circle(sx(b, clouds->number(r, kx)), sy(b, clouds->number(r, ky)), 2.2,
                    class_color(label), 0.35);
    }
  }

  int64_t max_index = 0;
  for (size_t r = 0; r < path_points.rows.size(); ++r)
    max_index = std::max(max_index, static_cast<int64_t>(path_points.number(r, ci)));
  int64_t decile = std::max<int64_t>(max_index / 10, 1);
  for (size_t r = 0; r < path_points.rows.size(); ++r) {
    int64_t idx = static_cast<int64_t>(path_points.number(r, ci));
    bool major = idx % decile == 0;  // every 10th percentile: larger dot
    svg += circle(sx(b, pts[r].first), sy(b, pts[r].second), major ? 5.0 : 1.8, "#000000",
                  major ? 0.95 : 0.75);
  }
  svg += "</svg>\n";
  write_text_atomic(path, svg);
}

}  // namespace dfq::bench
