#include "geoslomo/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "geoslomo/errors.hpp"

namespace geoslomo {

namespace {

const cv::Scalar kPalette[] = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44},  {40, 39, 214},
                               {189, 103, 148}, {75, 86, 140}, {194, 119, 227}, {127, 127, 127}};

std::string tick_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!std::isfinite(lo)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

}  // namespace

void write_line_plot(const std::filesystem::path& path, const std::vector<PlotSeries>& series,
                     const PlotSpec& spec) {
  if (spec.width < 200 || spec.height < 150) throw ParameterError("plot", "canvas too small");
  Range xr, yr;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ContractError("write_line_plot: x and y lengths differ");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(s.y[i])) {
        xr.add(s.x[i]);
        yr.add(s.y[i]);
      }
    }
  }
  xr.finish();
  yr.finish();

  cv::Mat img(spec.height, spec.width, CV_8UC3, cv::Scalar(255, 255, 255));
  const int left = 70, right = 20, top = 40, bottom = 55;
  const int pw = spec.width - left - right, ph = spec.height - top - bottom;
  auto px = [&](double x) { return left + static_cast<int>(std::lround((x - xr.lo) / (xr.hi - xr.lo) * pw)); };
  auto py = [&](double y) { return top + ph - static_cast<int>(std::lround((y - yr.lo) / (yr.hi - yr.lo) * ph)); };

  const auto font = cv::FONT_HERSHEY_SIMPLEX;
  const cv::Scalar ink(40, 40, 40), grid(225, 225, 225);
  for (int i = 0; i <= 5; ++i) {
    const double xv = xr.lo + (xr.hi - xr.lo) * i / 5.0;
    const double yv = yr.lo + (yr.hi - yr.lo) * i / 5.0;
    cv::line(img, {px(xv), top}, {px(xv), top + ph}, grid, 1);
    cv::line(img, {left, py(yv)}, {left + pw, py(yv)}, grid, 1);
    cv::putText(img, tick_text(xv), {px(xv) - 15, top + ph + 18}, font, 0.4, ink, 1, cv::LINE_AA);
    cv::putText(img, tick_text(yv), {5, py(yv) + 4}, font, 0.4, ink, 1, cv::LINE_AA);
  }
  cv::rectangle(img, {left, top}, {left + pw, top + ph}, ink, 1);
  cv::putText(img, spec.title, {left, 25}, font, 0.55, ink, 1, cv::LINE_AA);
  cv::putText(img, spec.x_label, {left + pw / 2 - 40, spec.height - 12}, font, 0.45, ink, 1, cv::LINE_AA);
  cv::putText(img, spec.y_label, {5, top - 8}, font, 0.45, ink, 1, cv::LINE_AA);

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const cv::Scalar color = kPalette[k % std::size(kPalette)];
    std::vector<cv::Point> run;
    auto flush = [&] {
      if (run.size() > 1) cv::polylines(img, run, false, color, 2, cv::LINE_AA);
      run.clear();
    };
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) {
        flush();
        continue;
      }
      cv::Point p{px(s.x[i]), py(s.y[i])};
      cv::circle(img, p, 3, color, cv::FILLED, cv::LINE_AA);
      run.push_back(p);
    }
    flush();
    const int ly = top + 15 + 18 * static_cast<int>(k);
    cv::line(img, {left + pw - 150, ly - 4}, {left + pw - 130, ly - 4}, color, 2);
    cv::putText(img, s.label, {left + pw - 125, ly}, font, 0.45, ink, 1, cv::LINE_AA);
  }

  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), img);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write plot " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write plot " + path.string());
}

void write_sweep_plot(const std::filesystem::path& path, const std::vector<SweepResult>& sweeps,
                      const std::string& title) {
  std::vector<PlotSeries> series;
  std::string x_label = "t";
  for (const auto& s : sweeps) {
    PlotSeries line;
    line.label = s.points.empty() ? "?" : s.points.front().metrics.model;
    for (const auto& p : s.points) {
      line.x.push_back(p.axis_value);
      line.y.push_back(p.metrics.psnr);
    }
    if (s.axis == SweepAxis::gap) x_label = "gap (min)";
    series.push_back(std::move(line));
  }
  write_line_plot(path, series, {title, x_label, "PSNR (dB)"});
}

void write_series_plot(const std::filesystem::path& path, const std::vector<SeriesPoint>& observed,
                       const std::vector<std::pair<std::string, std::vector<SeriesPoint>>>& reconstructions,
                       const std::string& title) {
  if (observed.empty()) throw ContractError("write_series_plot: empty series");
  const double t0 = observed.front().timestamp;
  auto to_series = [t0](const std::string& label, const std::vector<SeriesPoint>& pts) {
    PlotSeries s;
    s.label = label;
    for (const auto& p : pts) {
      s.x.push_back((p.timestamp - t0) / 60.0);
      s.y.push_back(p.value);
    }
    return s;
  };
  std::vector<PlotSeries> series{to_series("observed", observed)};
  for (const auto& [label, pts] : reconstructions) series.push_back(to_series(label, pts));
  write_line_plot(path, series, {title, "time (min)", "value"});
}

}  // namespace geoslomo
