#pragma once

#include <string>
#include <vector>

namespace dfq::bench {

/// Minimal CSV table: first line is the header. All writes are atomic.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int64_t column(const std::string& name) const;  // throws if missing
  double number(size_t row, int64_t col) const;

  static CsvTable read(const std::string& path);
  void write(const std::string& path) const;
};

/// Scatter plot of PCA points. Expects columns x, y, label, source where
/// source is one of real, regular, superposed; superposed points render
/// black, the others by class hue. Errors on empty input before any file
/// is touched.
void write_pca_scatter_svg(const CsvTable& points, const std::string& path);

/// Path plot: the interpolation path (columns x, y, index) over optional
/// cluster clouds (PCA columns). Every 10th-percentile path point renders
/// as a larger marker.
void write_path_plot_svg(const CsvTable& path_points, const CsvTable* clouds,
                         const std::string& path);

}  // namespace dfq::bench
