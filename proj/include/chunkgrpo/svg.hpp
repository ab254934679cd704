#pragma once

#include <optional>
#include <string>
#include <vector>

namespace chunkgrpo {

struct Series {
  Series() = default;
  Series(std::string label_, std::vector<double> x_, std::vector<double> y_, bool scatter_ = false)
      : label(std::move(label_)), x(std::move(x_)), y(std::move(y_)), scatter(scatter_) {}

  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool scatter = false;
  std::string color;  // empty picks from the palette
};

/// Line and scatter plots with linear axes.
class SvgChart {
 public:
  SvgChart(std::string title, std::string x_label, std::string y_label);

  void add(Series s);
  bool empty() const { return series_.empty(); }
  /// Equal units on both axes (for state-space scatter plots).
  void set_equal_aspect(bool on) { equal_aspect_ = on; }

  std::string render(int width = 640, int height = 420) const;

 private:
  std::string title_;
  std::string x_label_;
  std::string y_label_;
  std::vector<Series> series_;
  bool equal_aspect_ = false;
};

struct HeatmapCell {
  std::optional<double> value;  // empty cells are drawn grey
  std::string text;
};

/// cells[row][col]; values mapped onto a blue-white-red scale over [lo, hi].
std::string heatmap_svg(const std::string& title, const std::string& row_label, const std::string& col_label,
                        const std::vector<std::string>& rows, const std::vector<std::string>& cols,
                        const std::vector<std::vector<HeatmapCell>>& cells, double lo, double hi);

const std::vector<std::string>& palette();

}  // namespace chunkgrpo
