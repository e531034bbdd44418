#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace geoslomo::cli {

struct Globals {
  std::uint64_t seed = 0;
  std::string out = ".";
  std::string log_level = "info";
  int threads = 0;  // 0 keeps torch's default
};

struct SynthOptions {
  std::size_t count = 1;
  std::string name = "seq";
  std::size_t frames = 15;
  std::size_t height = 64;
  std::size_t width = 64;
  double cadence = 60.0;
  double start_time = 0.0;
  int band = 13;
  std::string motion = "translation";  // translation | rotation | vortex | random
  double dx = 0.5;
  double dy = 0.0;
  double omega = 0.01;
  std::optional<double> cx;
  std::optional<double> cy;
  double radius = 8.0;
  std::size_t ramps = 0;
  double ramp_delta = -2.0;
  double ramp_radius = 6.0;
  double max_speed = 1.0;
  double max_rotation = 0.0;
  double vortex_probability = 0.0;
  std::size_t max_ramps = 0;
};

struct TrainOptions {
  std::string data;
  std::string variant = "ssm-t";
  std::optional<int> band;
  double width_scale = 1.0;
  std::int64_t steps = 0;
  std::size_t batch_size = 4;
  double lr = 1e-4;
  std::size_t crop_source = 264;
  std::size_t crop_train = 256;
  std::size_t sequence_length = 15;
  std::size_t gap = 10;
  std::size_t intermediates = 1;
  double lambda_r = 1.0;
  double lambda_w = 0.65;
  double lambda_s = 0.23;
  std::int64_t log_every = 50;
  std::size_t val_examples = 64;
  double val_fraction = 0.2;
  bool augment = true;
  std::string resume;
};

struct InterpolateOptions {
  std::string input;
  std::string checkpoint;
  std::string baseline;  // "" or "linear"
  std::vector<std::size_t> pair{0, 1};
  std::vector<double> t{0.5};
  std::size_t upsample = 0;
  std::string name = "interpolated";
};

struct EvaluateOptions {
  std::string data;
  std::vector<std::string> checkpoints;
  double t = 0.5;
  std::size_t gap_steps = 10;
  std::size_t stride = 0;
  std::size_t max_samples = 0;
  std::string name = "metrics.csv";
};

struct SweepOptions {
  std::string data;
  std::vector<std::string> checkpoints;
  std::string axis = "t";
  std::vector<double> ts{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<double> gaps{5, 10, 15, 20, 25, 30, 35, 40, 45};
  double t = 0.5;
  std::size_t gap_steps = 10;
  std::size_t stride = 0;
  std::size_t max_samples = 0;
  bool plot = false;
};

struct SeriesOptions {
  std::string input;
  std::string checkpoint;
  std::size_t factor = 10;
  std::size_t row = 0;
  std::size_t col = 0;
  bool plot = false;
};

struct InspectOptions {
  std::string path;
};

int cmd_synth(const Globals& g, const SynthOptions& o, std::ostream& out);
int cmd_train(const Globals& g, const TrainOptions& o, std::ostream& out);
int cmd_interpolate(const Globals& g, const InterpolateOptions& o, std::ostream& out);
int cmd_evaluate(const Globals& g, const EvaluateOptions& o, std::ostream& out);
int cmd_sweep(const Globals& g, const SweepOptions& o, std::ostream& out);
int cmd_series(const Globals& g, const SeriesOptions& o, std::ostream& out);
int cmd_inspect(const Globals& g, const InspectOptions& o, std::ostream& out);

}  // namespace geoslomo::cli
