#include "geoslomo/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "geoslomo/errors.hpp"
#include "geoslomo/log.hpp"
#include "geoslomo/warpcore.hpp"

namespace geoslomo {

// ---------------------------------------------------------------------------
// Metrics

double rmse(const Grid& pred, const Grid& truth) {
  require_same_shape(pred, truth, "rmse");
  const auto a = pred.values();
  const auto b = truth.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(a.size()));
}

double psnr(const Grid& pred, const Grid& truth, double range) {
  if (!(range > 0.0)) throw ContractError("psnr: range must be positive");
  const double e = rmse(pred, truth);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(range / e);
}

namespace {

std::vector<double> gaussian_kernel() {
  std::vector<double> k(kSsimWindow);
  const int r = kSsimWindow / 2;
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double x = i - r;
    k[i] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable 'valid' filtering of an h x w image.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t h, std::size_t w,
                                 const std::vector<double>& k) {
  const std::size_t n = k.size();
  const std::size_t ow = w - n + 1, oh = h - n + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * img[r * w + c + i];
      rows[r * ow + c] = s;
    }
  }
  std::vector<double> out(oh * ow);
  for (std::size_t r = 0; r < oh; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * rows[(r + i) * ow + c];
      out[r * ow + c] = s;
    }
  }
  return out;
}

}  // namespace

double ssim(const Grid& pred, const Grid& truth, double range) {
  require_same_shape(pred, truth, "ssim");
  if (!(range > 0.0)) throw ContractError("ssim: range must be positive");
  const std::size_t h = pred.height(), w = pred.width();
  if (h < static_cast<std::size_t>(kSsimWindow) || w < static_cast<std::size_t>(kSsimWindow)) {
    throw ContractError("ssim: frames must be at least 11x11");
  }
  const auto k = gaussian_kernel();
  const std::size_t n = h * w;
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  const auto a = pred.values();
  const auto b = truth.values();
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = a[i];
    y[i] = b[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, k);
  const auto my = filter_valid(y, h, w, k);
  const auto sxx = filter_valid(xx, h, w, k);
  const auto syy = filter_valid(yy, h, w, k);
  const auto sxy = filter_valid(xy, h, w, k);
  const double c1 = (kSsimK1 * range) * (kSsimK1 * range);
  const double c2 = (kSsimK2 * range) * (kSsimK2 * range);
  double sum = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    sum += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
           ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return sum / static_cast<double>(mx.size());
}

// ---------------------------------------------------------------------------
// Interpolators

Grid LinearBaseline::predict(const Frame& f0, const Frame& f1, double t) {
  return linear_interpolate(f0.pixels, f1.pixels, BlendTime(t));
}

NetworkInterpolator::NetworkInterpolator(SlomoNet net, NormStats norm, std::string name)
    : net_(std::move(net)), norm_(std::move(norm)), name_(std::move(name)) {
  if (name_.empty()) name_ = variant_name(net_->spec().variant);
  net_->eval();
}

NetworkInterpolator::NetworkInterpolator(const Checkpoint& checkpoint, std::string name)
    : NetworkInterpolator(checkpoint.instantiate(), checkpoint.manifest().norm, std::move(name)) {}

bool NetworkInterpolator::accepts_band(int band_id) const {
  return net_->spec().accepts_band(band_id) && norm_.contains(band_id);
}

Grid NetworkInterpolator::predict(const Frame& f0, const Frame& f1, double t) {
  const int band = f0.band.band_id;
  if (!accepts_band(band)) {
    throw ContractError(name_ + ": model does not accept band " + std::to_string(band));
  }
  return interpolate(net_, norm_.at(band), f0.pixels, f1.pixels, BlendTime(t));
}

// ---------------------------------------------------------------------------
// Protocols

namespace {

struct Sample {
  const FrameSequence* seq;
  std::size_t first;
  std::size_t gap;
};

std::vector<Sample> enumerate_samples(const FrameSequence& seq, std::size_t gap, std::size_t stride) {
  std::vector<Sample> out;
  if (gap == 0 || stride == 0) return out;
  for (std::size_t s = 0; s + gap < seq.size(); s += stride) out.push_back({&seq, s, gap});
  return out;
}

// Label frame index offset for fraction t, if t lands on a frame.
std::optional<std::size_t> exact_label(double t, std::size_t gap) {
  const double pos = t * static_cast<double>(gap);
  const double r = std::round(pos);
  if (std::abs(pos - r) > 1e-6) return std::nullopt;
  return static_cast<std::size_t>(r);
}

struct Accumulator {
  double psnr = 0.0, rmse = 0.0, ssim = 0.0;
  std::size_t n = 0;

  void add(const Grid& pred, const Grid& truth, double range) {
    psnr += geoslomo::psnr(pred, truth, range);
    rmse += geoslomo::rmse(pred, truth);
    ssim += geoslomo::ssim(pred, truth, range);
    ++n;
  }
  void fill(MetricsRecord& r) const {
    r.n_samples = n;
    if (n == 0) return;
    r.psnr = psnr / static_cast<double>(n);
    r.rmse = rmse / static_cast<double>(n);
    r.ssim = ssim / static_cast<double>(n);
  }
};

double gap_minutes(const FrameSequence& seq, std::size_t gap) {
  return static_cast<double>(gap) * seq.cadence() / 60.0;
}

int common_band(std::span<const FrameSequence> dataset) {
  if (dataset.empty()) return 0;
  const int band = dataset.front().band().band_id;
  for (const auto& s : dataset) {
    if (s.band().band_id != band) return 0;
  }
  return band;
}

std::size_t resolve_stride(const EvalOptions& o) { return o.stride ? o.stride : o.gap_steps; }

}  // namespace

std::vector<MetricsRecord> compare_models(std::span<Interpolator* const> models,
                                          std::span<const FrameSequence> dataset, double t,
                                          const EvalOptions& options) {
  BlendTime{t};
  if (options.gap_steps < 1) throw ParameterError("gap_steps", "must be at least 1");
  std::vector<Interpolator*> all(models.begin(), models.end());
  LinearBaseline linear;
  const bool has_linear =
      std::any_of(all.begin(), all.end(), [](const Interpolator* m) { return m && m->name() == "linear"; });
  if (!has_linear) all.insert(all.begin(), &linear);

  std::set<int> bands;
  for (const auto& s : dataset) bands.insert(s.band().band_id);

  std::vector<MetricsRecord> table;
  for (int band : bands) {
    for (Interpolator* model : all) {
      if (!model) throw ContractError("compare_models: null model");
      MetricsRecord rec;
      rec.model = model->name();
      rec.band = band;
      rec.t = t;
      if (!model->accepts_band(band)) {
        log::warn("compare_models: ", rec.model, " does not apply to band ", band, "; skipped");
        table.push_back(rec);
        continue;
      }
      Accumulator acc;
      std::size_t skipped = 0;
      for (const auto& seq : dataset) {
        if (seq.band().band_id != band) continue;
        rec.gap_minutes = gap_minutes(seq, options.gap_steps);
        const double range = seq.band().dynamic_range.width();
        for (const auto& s : enumerate_samples(seq, options.gap_steps, resolve_stride(options))) {
          if (options.max_samples && acc.n >= options.max_samples) break;
          const auto label = exact_label(t, s.gap);
          if (!label) {
            ++skipped;
            continue;
          }
          const auto& f0 = seq[s.first];
          const auto& f1 = seq[s.first + s.gap];
          acc.add(model->predict(f0, f1, t), seq[s.first + *label].pixels, range);
        }
      }
      if (skipped) log::warn("compare_models: ", skipped, " samples without ground truth at t=", t);
      acc.fill(rec);
      table.push_back(rec);
    }
  }
  return table;
}

std::vector<double> default_sweep_times() {
  std::vector<double> ts;
  for (int i = 1; i <= 9; ++i) ts.push_back(i / 10.0);
  return ts;
}

std::vector<double> default_sweep_gaps() {
  std::vector<double> gaps;
  for (int g = 5; g <= 45; g += 5) gaps.push_back(g);
  return gaps;
}

namespace {

void require_increasing(std::span<const double> xs, const char* field) {
  if (xs.empty()) throw ParameterError(field, "must not be empty");
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (!(xs[i] > xs[i - 1])) throw ParameterError(field, "values must be strictly increasing");
  }
}

}  // namespace

SweepResult time_sweep(Interpolator& model, std::span<const FrameSequence> dataset, std::span<const double> ts,
                       const EvalOptions& options) {
  require_increasing(ts, "ts");
  for (double t : ts) BlendTime{t};
  if (options.gap_steps < 1) throw ParameterError("gap_steps", "must be at least 1");

  std::vector<Sample> samples;
  for (const auto& seq : dataset) {
    if (!model.accepts_band(seq.band().band_id)) {
      log::warn("time_sweep: ", model.name(), " does not apply to band ", seq.band().band_id, "; skipped");
      continue;
    }
    for (const auto& s : enumerate_samples(seq, options.gap_steps, resolve_stride(options))) {
      if (options.max_samples && samples.size() >= options.max_samples) break;
      samples.push_back(s);
    }
  }

  SweepResult out;
  out.axis = SweepAxis::t;
  out.sample_count = samples.size();
  for (double t : ts) {
    Accumulator acc;
    MetricsRecord rec;
    rec.model = model.name();
    rec.band = common_band(dataset);
    rec.t = t;
    for (const auto& s : samples) {
      const auto label = exact_label(t, s.gap);
      if (!label) {
        ++out.skipped;
        continue;
      }
      const auto& seq = *s.seq;
      rec.gap_minutes = gap_minutes(seq, s.gap);
      acc.add(model.predict(seq[s.first], seq[s.first + s.gap], t), seq[s.first + *label].pixels,
              seq.band().dynamic_range.width());
    }
    acc.fill(rec);
    if (acc.n == 0) {
      log::warn("time_sweep: no ground truth at t=", t, "; point dropped");
      continue;
    }
    out.points.push_back({t, rec});
  }
  return out;
}

SweepResult gap_sweep(Interpolator& model, std::span<const FrameSequence> dataset,
                      std::span<const double> gaps_minutes, double t, const EvalOptions& options) {
  require_increasing(gaps_minutes, "gaps");
  BlendTime{t};
  for (double g : gaps_minutes) {
    if (!(g > 0.0)) throw ParameterError("gaps", "must be positive");
  }

  // Gap in frames for each sequence, or 0 when unusable.
  auto steps_for = [](const FrameSequence& seq, double minutes) -> std::size_t {
    const double steps = minutes * 60.0 / seq.cadence();
    const double r = std::round(steps);
    if (r < 1.0 || std::abs(steps - r) > 1e-6 * std::max(1.0, steps)) return 0;
    if (static_cast<std::size_t>(r) >= seq.size()) return 0;
    return static_cast<std::size_t>(r);
  };

  std::vector<const FrameSequence*> usable;
  for (const auto& seq : dataset) {
    if (!model.accepts_band(seq.band().band_id)) {
      log::warn("gap_sweep: ", model.name(), " does not apply to band ", seq.band().band_id, "; skipped");
      continue;
    }
    if (seq.size() < 2 || !(seq.cadence() > 0.0)) continue;
    usable.push_back(&seq);
  }

  SweepResult out;
  out.axis = SweepAxis::gap;
  for (double g : gaps_minutes) {
    Accumulator acc;
    MetricsRecord rec;
    rec.model = model.name();
    rec.band = common_band(dataset);
    rec.t = t;
    rec.gap_minutes = g;
    for (const FrameSequence* seq : usable) {
      const std::size_t steps = steps_for(*seq, g);
      if (!steps) continue;
      std::size_t stride = options.stride;
      if (!stride) {
        for (double other : gaps_minutes) stride = std::max(stride, steps_for(*seq, other));
      }
      const auto label = static_cast<std::size_t>(std::lround(t * static_cast<double>(steps)));
      const double t_eff = static_cast<double>(label) / static_cast<double>(steps);
      for (const auto& s : enumerate_samples(*seq, steps, stride)) {
        if (options.max_samples && acc.n >= options.max_samples) break;
        acc.add(model.predict((*seq)[s.first], (*seq)[s.first + steps], t_eff), (*seq)[s.first + label].pixels,
                seq->band().dynamic_range.width());
      }
    }
    acc.fill(rec);
    if (acc.n == 0) {
      log::warn("gap_sweep: no sequence is long enough for a ", g, " min gap; skipped");
      ++out.skipped;
      continue;
    }
    out.sample_count = std::max(out.sample_count, acc.n);
    out.points.push_back({g, rec});
  }
  return out;
}

SeriesReconstruction reconstruct_series(Interpolator& model, const FrameSequence& seq, std::size_t factor,
                                        PixelCoord pixel) {
  if (factor < 2) throw ParameterError("factor", "must be at least 2");
  if (seq.size() <= factor) {
    throw ContractError("reconstruct_series: sequence of " + std::to_string(seq.size()) +
                        " frames is too short for factor " + std::to_string(factor));
  }
  if (pixel.row >= seq.height() || pixel.col >= seq.width()) {
    throw RangeError("reconstruct_series: pixel (" + std::to_string(pixel.row) + ", " + std::to_string(pixel.col) +
                     ") outside " + std::to_string(seq.height()) + "x" + std::to_string(seq.width()));
  }
  const std::size_t last = (seq.size() - 1) / factor * factor;
  SeriesReconstruction out;
  auto full = extract_point_series(seq, pixel);
  out.observed.assign(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(last + 1));
  for (std::size_t a = 0; a < last; a += factor) {
    const Frame& f0 = seq[a];
    const Frame& f1 = seq[a + factor];
    out.reconstructed.push_back({f0.timestamp, f0.pixels(pixel.row, pixel.col)});
    for (std::size_t i = 1; i < factor; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(factor);
      const Grid pred = model.predict(f0, f1, t);
      out.reconstructed.push_back({seq[a + i].timestamp, pred(pixel.row, pixel.col)});
    }
  }
  out.reconstructed.push_back({seq[last].timestamp, seq[last].pixels(pixel.row, pixel.col)});

  double sum = 0.0;
  for (std::size_t i = 0; i < out.observed.size(); ++i) {
    const double d = out.reconstructed[i].value - out.observed[i].value;
    sum += d * d;
  }
  out.rmse = std::sqrt(sum / static_cast<double>(out.observed.size()));
  return out;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

void append_row(std::ostringstream& os, const MetricsRecord& r) {
  os << r.model << ',' << r.band << ',' << num(r.t) << ',' << num(r.gap_minutes) << ',' << num(r.psnr) << ','
     << num(r.rmse) << ',' << num(r.ssim) << ',' << r.n_samples << '\n';
}

}  // namespace

std::string metrics_csv(std::span<const MetricsRecord> records) {
  std::ostringstream os;
  os << kMetricsCsvHeader << '\n';
  for (const auto& r : records) append_row(os, r);
  return os.str();
}

std::string sweep_csv(const SweepResult& sweep) {
  std::ostringstream os;
  os << kMetricsCsvHeader << '\n';
  for (const auto& p : sweep.points) append_row(os, p.metrics);
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace geoslomo
