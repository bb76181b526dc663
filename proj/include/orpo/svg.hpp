#pragma once

#include <string>
#include <vector>

#include "orpo/analysis.hpp"

namespace orpo::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
};

/// Polyline chart with axes, tick labels and a legend. Coordinates are
/// printed with fixed precision so output bytes are reproducible.
std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series);

struct HistogramSeries {
  std::string label;
  Histogram histogram;
  std::string color = "#1f77b4";
};

/// Overlay of normalized (density) histograms drawn as step outlines.
std::string histogram_overlay(const std::string& title, const std::string& x_label,
                              const std::vector<HistogramSeries>& series);

}  // namespace orpo::svg
