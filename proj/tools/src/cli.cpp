#include "geoslomo_cli/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <c10/util/Exception.h>
#include <torch/torch.h>

#include "commands.hpp"
#include "geoslomo/errors.hpp"
#include "geoslomo/log.hpp"
#include "json_config.hpp"

namespace geoslomo::cli {

namespace {

const std::vector<std::string> kCommands{"synth", "train", "interpolate", "evaluate", "sweep", "series", "inspect"};

void add_synth(CLI::App& app, SynthOptions& o) {
  auto* c = app.add_subcommand("synth", "Generate synthetic advection sequences with ground-truth flows");
  c->add_option("--count", o.count, "Number of sequences (seeds seed, seed+1, ...)");
  c->add_option("--name", o.name, "File name prefix");
  c->add_option("--frames", o.frames);
  c->add_option("--height", o.height);
  c->add_option("--width", o.width);
  c->add_option("--cadence", o.cadence, "Seconds between frames");
  c->add_option("--start-time", o.start_time);
  c->add_option("--band", o.band, "ABI band id");
  c->add_option("--motion", o.motion)->check(CLI::IsMember({"translation", "rotation", "vortex", "random"}));
  c->add_option("--dx", o.dx, "Translation, pixels per frame");
  c->add_option("--dy", o.dy);
  c->add_option("--omega", o.omega, "Rotation, radians per frame");
  c->add_option("--cx", o.cx, "Rotation center column (default: frame center)");
  c->add_option("--cy", o.cy, "Rotation center row (default: frame center)");
  c->add_option("--radius", o.radius, "Vortex radius in pixels");
  c->add_option("--ramps", o.ramps, "Brightness ramp events at random positions");
  c->add_option("--ramp-delta", o.ramp_delta, "Ramp change per frame");
  c->add_option("--ramp-radius", o.ramp_radius);
  c->add_option("--max-speed", o.max_speed, "random motion: translation bound");
  c->add_option("--max-rotation", o.max_rotation, "random motion: rotation bound");
  c->add_option("--vortex-probability", o.vortex_probability);
  c->add_option("--max-ramps", o.max_ramps);
}

void add_train(CLI::App& app, TrainOptions& o) {
  auto* c = app.add_subcommand("train", "Train an interpolation model");
  c->add_option("--data", o.data, "Directory of .geof sequences");
  c->add_option("--variant", o.variant)->check(CLI::IsMember({"ssm-g", "ssm-t", "ssm-tms", "SSM-G", "SSM-T", "SSM-TMS"}));
  c->add_option("--band", o.band, "Band of a task-specific model");
  c->add_option("--width-scale", o.width_scale, "Multiplier on every hidden width");
  c->add_option("--steps", o.steps);
  c->add_option("--batch-size", o.batch_size);
  c->add_option("--lr", o.lr);
  c->add_option("--crop-source", o.crop_source);
  c->add_option("--crop-train", o.crop_train);
  c->add_option("--sequence-length", o.sequence_length);
  c->add_option("--gap", o.gap, "Frames between the two inputs");
  c->add_option("--intermediates", o.intermediates, "Labels per example");
  c->add_option("--lambda-r", o.lambda_r);
  c->add_option("--lambda-w", o.lambda_w);
  c->add_option("--lambda-s", o.lambda_s);
  c->add_option("--log-every", o.log_every);
  c->add_option("--val-examples", o.val_examples);
  c->add_option("--val-fraction", o.val_fraction);
  c->add_flag("--augment,!--no-augment", o.augment);
  c->add_option("--resume", o.resume, "Checkpoint directory to continue from");
}

void add_interpolate(CLI::App& app, InterpolateOptions& o) {
  auto* c = app.add_subcommand("interpolate", "Synthesize intermediate frames");
  c->add_option("--input", o.input, "Input .geof sequence");
  c->add_option("--checkpoint", o.checkpoint);
  c->add_option("--baseline", o.baseline)->check(CLI::IsMember({"", "linear"}));
  c->add_option("--pair", o.pair, "Indices of the two input frames")->expected(2);
  c->add_option("--t", o.t, "Fractions between the pair");
  c->add_option("--upsample", o.upsample, "Upsample the whole sequence k times instead");
  c->add_option("--name", o.name, "Output file stem");
}

void add_evaluate(CLI::App& app, EvaluateOptions& o) {
  auto* c = app.add_subcommand("evaluate", "Compare models against the linear baseline");
  c->add_option("--data", o.data);
  c->add_option("--checkpoint", o.checkpoints, "Checkpoint directories (repeatable)");
  c->add_option("--t", o.t);
  c->add_option("--gap-steps", o.gap_steps);
  c->add_option("--stride", o.stride);
  c->add_option("--max-samples", o.max_samples);
  c->add_option("--name", o.name, "CSV file name");
}

void add_sweep(CLI::App& app, SweepOptions& o) {
  auto* c = app.add_subcommand("sweep", "PSNR against t or against the input gap");
  c->add_option("--data", o.data);
  c->add_option("--checkpoint", o.checkpoints, "Checkpoint directories (repeatable)");
  c->add_option("--axis", o.axis)->check(CLI::IsMember({"t", "gap"}));
  c->add_option("--ts", o.ts);
  c->add_option("--gaps", o.gaps, "Gaps in minutes");
  c->add_option("--t", o.t, "Fraction used by the gap sweep");
  c->add_option("--gap-steps", o.gap_steps, "Input gap used by the t sweep");
  c->add_option("--stride", o.stride);
  c->add_option("--max-samples", o.max_samples);
  c->add_flag("--plot,!--no-plot", o.plot, "Also write a PNG");
}

void add_series(CLI::App& app, SeriesOptions& o) {
  auto* c = app.add_subcommand("series", "Reconstruct a point series from a downsampled sequence");
  c->add_option("--input", o.input);
  c->add_option("--checkpoint", o.checkpoint);
  c->add_option("--factor", o.factor);
  c->add_option("--row", o.row);
  c->add_option("--col", o.col);
  c->add_flag("--plot,!--no-plot", o.plot);
}

void add_inspect(CLI::App& app, InspectOptions& o) {
  auto* c = app.add_subcommand("inspect", "Print a GEOF header or a checkpoint manifest");
  c->add_option("path", o.path);
}

template <typename F>
int guarded(F&& body, std::ostream& err) {
  try {
    return body();
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const ParameterError& e) {
    err << "error: invalid " << e.what() << '\n';
    return kConfig;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const RangeError& e) {
    err << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const c10::Error& e) {
    err << "error: " << e.what_without_backtrace() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learned temporal interpolation of geostationary imagery", "geoslomo"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();

  Globals g;
  app.add_option("--seed", g.seed);
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--log-level", g.log_level)->check(CLI::IsMember({"debug", "info", "warn"}));
  app.add_option("--threads", g.threads, "Intra-op threads (0 = library default)");

  std::string active;
  for (const auto& a : args) {
    if (std::find(kCommands.begin(), kCommands.end(), a) != kCommands.end()) {
      active = a;
      break;
    }
  }
  app.config_formatter(std::make_shared<JsonConfig>(kCommands, active));
  app.set_config("--config", "", "JSON configuration file; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);

  SynthOptions synth;
  TrainOptions train;
  InterpolateOptions interp;
  EvaluateOptions eval;
  SweepOptions sweep;
  SeriesOptions series;
  InspectOptions inspect;
  add_synth(app, synth);
  add_train(app, train);
  add_interpolate(app, interp);
  add_evaluate(app, eval);
  add_sweep(app, sweep);
  add_series(app, series);
  add_inspect(app, inspect);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kConfig;
  }

  log::set_level(log::parse_level(g.log_level));
  if (g.threads > 0) torch::set_num_threads(g.threads);
  out << app.config_to_str(true, false) << '\n';

  const CLI::App* cmd = app.get_subcommands().front();
  const std::string& name = cmd->get_name();
  return guarded(
      [&]() -> int {
        if (name == "synth") return cmd_synth(g, synth, out);
        if (name == "train") return cmd_train(g, train, out);
        if (name == "interpolate") return cmd_interpolate(g, interp, out);
        if (name == "evaluate") return cmd_evaluate(g, eval, out);
        if (name == "sweep") return cmd_sweep(g, sweep, out);
        if (name == "series") return cmd_series(g, series, out);
        return cmd_inspect(g, inspect, out);
      },
      err);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace geoslomo::cli
