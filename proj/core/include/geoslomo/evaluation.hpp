#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geoslomo/grid.hpp"
#include "geoslomo/imagery.hpp"
#include "geoslomo/networks.hpp"

namespace geoslomo {

// ---------------------------------------------------------------------------
// Metrics, all in physical units.

double rmse(const Grid& pred, const Grid& truth);
/// 20 log10(range / rmse); +infinity when rmse == 0.
double psnr(const Grid& pred, const Grid& truth, double range);
/// Mean local SSIM over the valid 11x11 Gaussian windows (sigma 1.5).
double ssim(const Grid& pred, const Grid& truth, double range);

inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

// ---------------------------------------------------------------------------
// Interpolators under evaluation

/// Anything that predicts the frame at fraction t between two frames.
class Interpolator {
 public:
  virtual ~Interpolator() = default;
  virtual std::string name() const = 0;
  virtual bool accepts_band(int band_id) const = 0;
  virtual Grid predict(const Frame& f0, const Frame& f1, double t) = 0;
};

class LinearBaseline final : public Interpolator {
 public:
  std::string name() const override { return "linear"; }
  bool accepts_band(int) const override { return true; }
  Grid predict(const Frame& f0, const Frame& f1, double t) override;
};

class NetworkInterpolator final : public Interpolator {
 public:
  NetworkInterpolator(SlomoNet net, NormStats norm, std::string name = {});
  /// Builds the network from a checkpoint; named after the variant.
  explicit NetworkInterpolator(const Checkpoint& checkpoint, std::string name = {});

  std::string name() const override { return name_; }
  bool accepts_band(int band_id) const override;
  Grid predict(const Frame& f0, const Frame& f1, double t) override;

 private:
  SlomoNet net_;
  NormStats norm_;
  std::string name_;
};

/// Wraps a callable, mostly for tests.
class FunctionInterpolator final : public Interpolator {
 public:
  using Fn = std::function<Grid(const Frame&, const Frame&, double)>;
  FunctionInterpolator(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}
  std::string name() const override { return name_; }
  bool accepts_band(int) const override { return true; }
  Grid predict(const Frame& f0, const Frame& f1, double t) override { return fn_(f0, f1, t); }

 private:
  std::string name_;
  Fn fn_;
};

// ---------------------------------------------------------------------------
// Protocols

struct MetricsRecord {
  std::string model;
  int band = 0;
  double t = 0.5;
  double gap_minutes = 0.0;
  double psnr = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double ssim = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_samples = 0;  // 0 marks a skipped model/band combination
};

enum class SweepAxis { t, gap };

struct SweepPoint {
  double axis_value = 0.0;
  MetricsRecord metrics;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::t;
  std::vector<SweepPoint> points;
  std::size_t sample_count = 0;
  std::size_t skipped = 0;  // samples or gaps that could not be evaluated
};

struct EvalOptions {
  /// Frames between the two inputs of a sample.
  std::size_t gap_steps = 10;
  /// Distance between the first inputs of consecutive samples; 0 means gap_steps.
  std::size_t stride = 0;
  /// 0 means no limit.
  std::size_t max_samples = 0;
};

/// Every model (plus the linear baseline unless one named "linear" is already
/// present) on every band of the dataset, at fraction t.
std::vector<MetricsRecord> compare_models(std::span<Interpolator* const> models,
                                          std::span<const FrameSequence> dataset, double t = 0.5,
                                          const EvalOptions& options = {});

std::vector<double> default_sweep_times();  // 0.1 .. 0.9
std::vector<double> default_sweep_gaps();   // 5, 10, .., 45 minutes

/// Mean metrics per t. A t without a ground-truth frame (t * gap_steps not an
/// integer) skips the sample.
SweepResult time_sweep(Interpolator& model, std::span<const FrameSequence> dataset,
                       std::span<const double> ts, const EvalOptions& options = {});

/// Mean metrics at t per input gap in minutes. A gap is converted to frames
/// through the sequence cadence; the label is the frame nearest to t. Gaps
/// longer than the sequences are skipped with a warning. options.stride
/// defaults to the longest usable gap so every gap sees the same starts.
SweepResult gap_sweep(Interpolator& model, std::span<const FrameSequence> dataset,
                      std::span<const double> gaps_minutes, double t = 0.5, const EvalOptions& options = {});

struct SeriesReconstruction {
  std::vector<SeriesPoint> observed;
  std::vector<SeriesPoint> reconstructed;
  double rmse = 0.0;
};

/// Keeps every k-th frame, interpolates the k - 1 frames in between each kept
/// pair at t = i / k and reads both series at `pixel`. Only the span covered by
/// kept frames is reported.
SeriesReconstruction reconstruct_series(Interpolator& model, const FrameSequence& seq, std::size_t factor,
                                        PixelCoord pixel);

// ---------------------------------------------------------------------------
// Reports

inline constexpr const char* kMetricsCsvHeader = "model,band,t,gap_min,psnr_db,rmse,ssim,n_samples";

std::string metrics_csv(std::span<const MetricsRecord> records);
std::string sweep_csv(const SweepResult& sweep);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace geoslomo
