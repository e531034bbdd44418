#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "geoslomo/evaluation.hpp"

namespace geoslomo {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 720;
  int height = 480;
};

/// Renders a line chart to PNG. Non-finite y values are left out of the
/// line and the axis range.
void write_line_plot(const std::filesystem::path& path, const std::vector<PlotSeries>& series,
                     const PlotSpec& spec);

/// PSNR against the sweep axis, one line per sweep.
void write_sweep_plot(const std::filesystem::path& path, const std::vector<SweepResult>& sweeps,
                      const std::string& title);

/// Observed and reconstructed point series against time in minutes.
void write_series_plot(const std::filesystem::path& path, const std::vector<SeriesPoint>& observed,
                       const std::vector<std::pair<std::string, std::vector<SeriesPoint>>>& reconstructions,
                       const std::string& title);

}  // namespace geoslomo
