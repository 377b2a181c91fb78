#pragma once

#include <optional>
#include <string>
#include <vector>

namespace certibias::svg {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

struct Band {
  double lo = 0.0;
  double hi = 0.0;
};

struct Panel {
  std::string y_label;
  std::vector<Series> series;
  std::optional<Band> band;           // shaded x interval (e.g. a selected region)
  std::vector<std::string> x_labels;  // when set, x values are category indices
};

// Stacked line panels sharing an x axis label. Deterministic output: fixed
// layout, fixed palette, coordinates rounded to 1/100 px.
std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::vector<Panel>& panels);

std::string histogram_chart(const std::string& title, const std::string& x_label,
                            const std::vector<double>& values, int bins);

struct Bar {
  std::string name;
  double value = 0.0;
};

struct BarGroup {
  std::string label;
  std::vector<Bar> bars;
};

std::string bar_chart(const std::string& title, const std::string& y_label,
                      const std::vector<BarGroup>& groups);

}  // namespace certibias::svg
