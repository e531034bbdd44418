#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "geoslomo/errors.hpp"
#include "geoslomo/evaluation.hpp"
#include "geoslomo/log.hpp"
#include "geoslomo/plot.hpp"
#include "geoslomo/random.hpp"
#include "geoslomo/training.hpp"

namespace fs = std::filesystem;

namespace geoslomo::cli {

namespace {

using json = nlohmann::ordered_json;

fs::path out_dir(const Globals& g) {
  fs::path dir(g.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

bool is_frames_file(const fs::path& p) {
  const auto name = p.filename().string();
  return p.extension() == ".geof" && !(name.size() > 10 && name.ends_with(".flow.geof"));
}

std::vector<fs::path> dataset_files(const std::string& data) {
  if (data.empty()) throw ParameterError("data", "a dataset directory or .geof file is required");
  const fs::path root(data);
  if (!fs::exists(root)) throw IoError("dataset not found: " + root.string());
  std::vector<fs::path> files;
  if (fs::is_regular_file(root)) {
    files.push_back(root);
  } else {
    for (const auto& entry : fs::directory_iterator(root)) {
      if (entry.is_regular_file() && is_frames_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  }
  if (files.empty()) throw ValidationError("no frame sequences in " + root.string());
  return files;
}

std::vector<FrameSequence> load_dataset(const std::string& data) {
  std::vector<FrameSequence> seqs;
  for (const auto& f : dataset_files(data)) seqs.push_back(read_frames(f));
  log::info("loaded ", seqs.size(), " sequences from ", data);
  return seqs;
}

std::unique_ptr<NetworkInterpolator> load_model(const std::string& dir, const std::string& name = {}) {
  return std::make_unique<NetworkInterpolator>(Checkpoint::load(dir), name);
}

// One interpolator per checkpoint; duplicate names get a numeric suffix.
std::vector<std::unique_ptr<Interpolator>> load_models(const std::vector<std::string>& dirs) {
  std::vector<std::unique_ptr<Interpolator>> models;
  std::map<std::string, int> seen;
  for (const auto& dir : dirs) {
    const auto ckpt = Checkpoint::load(dir);
    std::string name = variant_name(ckpt.manifest().spec.variant);
    if (seen[name]++) name += "#" + std::to_string(seen[name]);
    models.push_back(std::make_unique<NetworkInterpolator>(ckpt, name));
  }
  return models;
}

void write_results_note(const fs::path& csv) {
  json note{{"file", csv.filename().string()},
            {"units", "physical (de-normalized) intensities"},
            {"psnr_peak", "width of the band dynamic range from the sequence metadata"},
            {"psnr_inf", "inf marks an exact match (rmse = 0)"}};
  write_text(fs::path(csv.string() + ".json"), note.dump(2) + "\n");
}

}  // namespace

// ---------------------------------------------------------------------------

int cmd_synth(const Globals& g, const SynthOptions& o, std::ostream& out) {
  if (o.count == 0) throw ParameterError("count", "must be at least 1");
  const BandInfo band = abi_band(o.band);
  const fs::path dir = out_dir(g);
  json files = json::array();
  for (std::size_t i = 0; i < o.count; ++i) {
    const std::uint64_t seed = g.seed + i;
    SyntheticScene scene;
    if (o.motion == "random") {
      SceneDistribution d;
      d.frames = o.frames;
      d.height = o.height;
      d.width = o.width;
      d.cadence_s = o.cadence;
      d.band = band;
      d.max_speed = o.max_speed;
      d.max_rotation = o.max_rotation;
      d.vortex_probability = o.vortex_probability;
      d.max_ramps = o.max_ramps;
      d.max_ramp_delta = std::abs(o.ramp_delta);
      scene = sample_scene(d, seed);
    } else {
      scene.seed = seed;
      scene.frames = o.frames;
      scene.height = o.height;
      scene.width = o.width;
      scene.cadence_s = o.cadence;
      scene.band = band;
      const double cx = o.cx.value_or((static_cast<double>(o.width) - 1.0) / 2.0);
      const double cy = o.cy.value_or((static_cast<double>(o.height) - 1.0) / 2.0);
      if (o.motion == "translation") {
        scene.motion.push_back(Translation{o.dx, o.dy});
      } else if (o.motion == "rotation") {
        scene.motion.push_back(SolidRotation{cx, cy, o.omega});
      } else if (o.motion == "vortex") {
        scene.motion.push_back(GaussianVortex{cx, cy, o.omega, o.radius});
      } else {
        throw ParameterError("motion", "unknown motion '" + o.motion + "'");
      }
      Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
      for (std::size_t r = 0; r < o.ramps; ++r) {
        RampEvent e;
        e.cx = rng.uniform(0.0, static_cast<double>(o.width) - 1.0);
        e.cy = rng.uniform(0.0, static_cast<double>(o.height) - 1.0);
        e.radius = o.ramp_radius;
        e.delta_per_frame = o.ramp_delta;
        scene.ramps.push_back(e);
      }
    }
    scene.start_time = o.start_time;
    scene.validate();
    const auto synthetic = generate_synthetic(scene);
    std::ostringstream stem;
    stem << o.name << '_' << std::setw(3) << std::setfill('0') << i << ".geof";
    const fs::path path = dir / stem.str();
    write_frames(synthetic.sequence, path);
    write_flows(synthetic.flows, flow_path(path));
    files.push_back({{"frames", path.string()},
                     {"metadata", metadata_path(path).string()},
                     {"flows", flow_path(path).string()},
                     {"seed", seed}});
  }
  out << json{{"command", "synth"}, {"files", files}}.dump(2) << '\n';
  return 0;
}

int cmd_train(const Globals& g, const TrainOptions& o, std::ostream& out) {
  TrainConfig cfg;
  cfg.crop_source = o.crop_source;
  cfg.crop_train = o.crop_train;
  cfg.sequence_length = o.sequence_length;
  cfg.input_gap_steps = o.gap;
  cfg.intermediate_count = o.intermediates;
  cfg.learning_rate = o.lr;
  cfg.batch_size = o.batch_size;
  cfg.steps = o.steps;
  cfg.val_fraction = o.val_fraction;
  cfg.augment = o.augment;
  cfg.seed = g.seed;
  cfg.log_every = o.log_every;
  cfg.val_examples = o.val_examples;
  cfg.weights = {o.lambda_r, o.lambda_w, o.lambda_s};
  cfg.validate();

  std::optional<Checkpoint> resumed;
  ModelSpec spec;
  if (!o.resume.empty()) {
    resumed = Checkpoint::load(o.resume);
    spec = resumed->manifest().spec;
  } else {
    if (!(o.width_scale > 0.0)) throw ParameterError("width-scale", "must be positive");
    const ChannelPlan plan = o.width_scale == 1.0 ? ChannelPlan{} : ChannelPlan::scaled(o.width_scale);
    spec = ModelSpec::make(parse_variant(o.variant), o.band, plan);
  }

  const fs::path dir = out_dir(g);
  auto all = load_dataset(o.data);
  std::vector<FrameSequence> dataset;
  for (auto& s : all) {
    if (spec.accepts_band(s.band().band_id)) {
      dataset.push_back(std::move(s));
    } else {
      log::info("skipping a band ", s.band().band_id, " sequence for a band ", *spec.band, " model");
    }
  }
  if (dataset.empty()) {
    throw ContractError("no sequence of band " + std::to_string(*spec.band) + " in " + o.data);
  }

  SlomoNet net = resumed ? resumed->instantiate() : SlomoNet(spec, g.seed);
  const std::int64_t start = resumed ? resumed->manifest().step : 0;
  std::optional<NormStats> norm;
  if (resumed) norm = resumed->manifest().norm;

  const fs::path log_path = dir / "train_log.ndjson";
  std::ofstream log_file(log_path, resumed ? std::ios::app : std::ios::trunc);
  if (!log_file) throw IoError("cannot open " + log_path.string());
  TrainHooks hooks;
  hooks.on_log = [&](const LogRecord& r) {
    log_file << to_ndjson(r) << '\n';
    log_file.flush();
    log::info("step ", r.step, " loss ", r.total, " val l_r ", r.val_l_r);
  };

  TrainResult result;
  try {
    result = train(net, dataset, cfg, start, norm, hooks);
  } catch (const TrainingDiverged& e) {
    e.last_good().save(dir / "last_good");
    log::warn("saved the last finite checkpoint to ", (dir / "last_good").string());
    throw;
  }
  result.best.save(dir / "checkpoint");
  result.last.save(dir / "last");
  double best_val = result.initial_val_l_r;
  for (const auto& r : result.log) best_val = std::min(best_val, r.val_l_r);
  json summary{{"command", "train"},
               {"checkpoint", (dir / "checkpoint").string()},
               {"last", (dir / "last").string()},
               {"log", log_path.string()},
               {"fingerprint", result.best.fingerprint()},
               {"first_step", start},
               {"last_step", result.last.manifest().step},
               {"best_step", result.best.manifest().step},
               {"parameters", param_count(spec)}};
  if (std::isfinite(best_val)) summary["best_val_l_r"] = best_val;
  out << summary.dump(2) << '\n';
  return 0;
}

int cmd_interpolate(const Globals& g, const InterpolateOptions& o, std::ostream& out) {
  if (o.input.empty()) throw ParameterError("input", "an input .geof file is required");
  std::unique_ptr<Interpolator> model;
  if (o.baseline == "linear") {
    model = std::make_unique<LinearBaseline>();
  } else if (!o.checkpoint.empty()) {
    model = load_model(o.checkpoint);
  } else {
    throw ParameterError("checkpoint", "required unless --baseline linear is given");
  }
  const FrameSequence seq = read_frames(o.input);
  const int band = seq.band().band_id;
  if (!model->accepts_band(band)) {
    throw ContractError("checkpoint " + o.checkpoint + " cannot interpolate band " + std::to_string(band));
  }

  std::vector<Frame> frames;
  if (o.upsample >= 1) {
    if (o.upsample < 2) throw ParameterError("upsample", "must be at least 2");
    if (seq.size() < 2) throw ContractError("upsampling needs at least two frames");
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
      frames.push_back(seq[i]);
      for (std::size_t j = 1; j < o.upsample; ++j) {
        const double t = static_cast<double>(j) / static_cast<double>(o.upsample);
        const double ts = seq[i].timestamp + t * (seq[i + 1].timestamp - seq[i].timestamp);
        frames.push_back({model->predict(seq[i], seq[i + 1], t), seq.band(), ts});
      }
    }
    frames.push_back(seq[seq.size() - 1]);
  } else {
    if (o.pair.size() != 2) throw ParameterError("pair", "expects two frame indices");
    const std::size_t a = o.pair[0], b = o.pair[1];
    if (a >= seq.size() || b >= seq.size() || a == b) {
      throw RangeError("pair (" + std::to_string(a) + ", " + std::to_string(b) + ") is not two distinct frames of " +
                       std::to_string(seq.size()));
    }
    if (o.t.empty()) throw ParameterError("t", "at least one value is required");
    for (std::size_t i = 0; i < o.t.size(); ++i) {
      BlendTime{o.t[i]};
      if (i > 0 && !(o.t[i] > o.t[i - 1])) throw ParameterError("t", "values must be strictly increasing");
      if (i > 1 && std::abs((o.t[i] - o.t[i - 1]) - (o.t[1] - o.t[0])) > 1e-9) {
        throw ParameterError("t", "values must be equally spaced to form a sequence");
      }
    }
    for (double t : o.t) {
      const double ts = seq[a].timestamp + t * (seq[b].timestamp - seq[a].timestamp);
      frames.push_back({model->predict(seq[a], seq[b], t), seq.band(), ts});
    }
  }
  const FrameSequence result(std::move(frames));
  const fs::path path = out_dir(g) / (o.name + ".geof");
  write_frames(result, path);
  out << json{{"command", "interpolate"},
              {"model", model->name()},
              {"output", path.string()},
              {"frames", result.size()},
              {"timestamps", result.timestamps()}}
             .dump(2)
      << '\n';
  return 0;
}

int cmd_evaluate(const Globals& g, const EvaluateOptions& o, std::ostream& out) {
  const auto dataset = load_dataset(o.data);
  auto owned = load_models(o.checkpoints);
  std::vector<Interpolator*> models;
  for (auto& m : owned) models.push_back(m.get());
  EvalOptions eo;
  eo.gap_steps = o.gap_steps;
  eo.stride = o.stride;
  eo.max_samples = o.max_samples;
  const auto table = compare_models(models, dataset, o.t, eo);
  if (std::none_of(table.begin(), table.end(), [](const MetricsRecord& r) { return r.n_samples > 0; })) {
    throw ValidationError("no sample could be evaluated (sequences shorter than gap-steps + 1?)");
  }
  const fs::path path = out_dir(g) / o.name;
  const std::string csv = metrics_csv(table);
  write_text(path, csv);
  write_results_note(path);
  out << csv;
  return 0;
}

int cmd_sweep(const Globals& g, const SweepOptions& o, std::ostream& out) {
  const auto dataset = load_dataset(o.data);
  auto owned = load_models(o.checkpoints);
  owned.insert(owned.begin(), std::make_unique<LinearBaseline>());
  EvalOptions eo;
  eo.gap_steps = o.gap_steps;
  eo.stride = o.stride;
  eo.max_samples = o.max_samples;

  std::vector<SweepResult> sweeps;
  std::vector<MetricsRecord> rows;
  for (auto& m : owned) {
    SweepResult s = o.axis == "t" ? time_sweep(*m, dataset, o.ts, eo) : gap_sweep(*m, dataset, o.gaps, o.t, eo);
    for (const auto& p : s.points) rows.push_back(p.metrics);
    sweeps.push_back(std::move(s));
  }
  if (rows.empty()) throw ValidationError("no sweep point could be evaluated");
  const fs::path dir = out_dir(g);
  const fs::path path = dir / ("sweep_" + o.axis + ".csv");
  const std::string csv = metrics_csv(rows);
  write_text(path, csv);
  write_results_note(path);
  if (o.plot) {
    const std::string title = o.axis == "t" ? "Interpolation error as a function of t" : "PSNR against the input gap";
    write_sweep_plot(dir / ("sweep_" + o.axis + ".png"), sweeps, title);
  }
  out << csv;
  return 0;
}

int cmd_series(const Globals& g, const SeriesOptions& o, std::ostream& out) {
  if (o.input.empty()) throw ParameterError("input", "an input .geof file is required");
  const FrameSequence seq = read_frames(o.input);
  const PixelCoord pixel{o.row, o.col};
  LinearBaseline linear;
  const auto lin = reconstruct_series(linear, seq, o.factor, pixel);
  std::optional<SeriesReconstruction> learned;
  std::string model_name;
  if (!o.checkpoint.empty()) {
    auto model = load_model(o.checkpoint);
    model_name = model->name();
    learned = reconstruct_series(*model, seq, o.factor, pixel);
  }

  std::ostringstream csv;
  csv << std::setprecision(10) << "timestamp,observed,linear" << (learned ? "," + model_name : "") << '\n';
  for (std::size_t i = 0; i < lin.observed.size(); ++i) {
    csv << lin.observed[i].timestamp << ',' << lin.observed[i].value << ',' << lin.reconstructed[i].value;
    if (learned) csv << ',' << learned->reconstructed[i].value;
    csv << '\n';
  }
  const fs::path dir = out_dir(g);
  write_text(dir / "series.csv", csv.str());
  if (o.plot) {
    std::vector<std::pair<std::string, std::vector<SeriesPoint>>> recon{{"linear", lin.reconstructed}};
    if (learned) recon.emplace_back(model_name, learned->reconstructed);
    write_series_plot(dir / "series.png", lin.observed, recon, "Point series reconstruction");
  }
  json summary{{"command", "series"}, {"csv", (dir / "series.csv").string()}, {"rmse_linear", lin.rmse}};
  if (learned) summary["rmse_" + model_name] = learned->rmse;
  out << summary.dump(2) << '\n';
  return 0;
}

int cmd_inspect(const Globals&, const InspectOptions& o, std::ostream& out) {
  if (o.path.empty()) throw ParameterError("path", "a .geof file or checkpoint directory is required");
  const fs::path p(o.path);
  if (!fs::exists(p)) throw IoError("not found: " + p.string());
  if (fs::is_directory(p)) {
    const fs::path manifest = p / Checkpoint::kManifestFile;
    std::ifstream in(manifest);
    if (!in) throw IoError("no " + std::string(Checkpoint::kManifestFile) + " in " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const auto [m, fingerprint] = manifest_from_json(ss.str());
    json j = json::parse(manifest_to_json(m, fingerprint));
    j["parameters"] = param_count(m.spec);
    out << j.dump(2) << '\n';
    return 0;
  }
  const GeofHeader h = read_geof_header(p);
  json j{{"file", p.string()},
         {"version", h.version},
         {"frames", h.frames},
         {"channels", h.channels},
         {"height", h.height},
         {"width", h.width},
         {"dtype", "float32"}};
  if (fs::exists(metadata_path(p))) {
    const SequenceMetadata meta = read_metadata(p);
    j["band_id"] = meta.band.band_id;
    j["band_name"] = meta.band.name;
    j["dynamic_range"] = {meta.band.dynamic_range.min, meta.band.dynamic_range.max};
    if (!meta.timestamps.empty()) {
      j["first_timestamp"] = meta.timestamps.front();
      j["last_timestamp"] = meta.timestamps.back();
    }
    if (meta.norm) j["norm"] = {{"mean", meta.norm->mean}, {"std", meta.norm->std}};
  }
  out << j.dump(2) << '\n';
  return 0;
}

}  // namespace geoslomo::cli
