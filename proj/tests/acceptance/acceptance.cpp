// Acceptance checks. Each criterion prints exactly one PASS/FAIL line on
// stdout; the exit status is 0 only when every requested criterion passed.
//
//   acceptance --criterion 5 --workdir build/tests/acceptance_work
//
// Criterion 5 trains the model that 6, 7 and 10 load from the workdir.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <vector>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "geoslomo/evaluation.hpp"
#include "geoslomo/imagery.hpp"
#include "geoslomo/log.hpp"
#include "geoslomo/networks.hpp"
#include "geoslomo/training.hpp"
#include "geoslomo/warpcore.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace geoslomo;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Shared experiment setup

constexpr std::uint64_t kModelSeed = 7;
constexpr std::uint64_t kTrainSeed = 3;
constexpr double kWidthScale = 0.25;

SceneDistribution scene_distribution(std::size_t hw, std::size_t frames) {
  SceneDistribution d;
  d.frames = frames;
  d.height = hw;
  d.width = hw;
  d.max_speed = 0.8;
  d.max_rotation = 0.01;
  d.max_ramps = 2;
  d.max_ramp_delta = 1.5;
  return d;
}

std::vector<FrameSequence> make_sequences(const SceneDistribution& d, std::size_t n, std::uint64_t seed0) {
  std::vector<FrameSequence> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_synthetic(sample_scene(d, seed0 + i)).sequence);
  return out;
}

// 20 held-out 64x64 sequences; frames 0 and 10 are the inputs, 1..9 the truth.
std::vector<FrameSequence> test_set() { return make_sequences(scene_distribution(64, 11), 20, 900000); }

fs::path model_dir(const fs::path& workdir) { return workdir / "model"; }

Checkpoint load_model(const fs::path& workdir) {
  const auto dir = model_dir(workdir);
  if (!fs::exists(dir / Checkpoint::kManifestFile)) {
    throw IoError("no trained model at " + dir.string() + " (run criterion 5 first)");
  }
  return Checkpoint::load(dir);
}

// ---------------------------------------------------------------------------
// 1. Metric oracles

Outcome criterion_1(const fs::path&) {
  Rng rng(2024);
  const double range = 150.0;
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Grid truth = oracle::random_grid(64, 64, rng, 200.0, 300.0);
    Grid pred = truth;
    const double noise = 0.5 + 10.0 * rng.unit();
    for (auto& v : pred.values()) v += static_cast<float>(noise * (2.0 * rng.unit() - 1.0));
    const double pairs[3][2] = {{rmse(pred, truth), oracle::rmse(pred, truth)},
                                {psnr(pred, truth, range), oracle::psnr(pred, truth, range)},
                                {ssim(pred, truth, range), oracle::ssim(pred, truth, range)}};
    for (const auto& p : pairs) worst = std::max(worst, std::abs(p[0] - p[1]) / std::abs(p[1]));
  }
  return {worst <= 1e-6, "max relative deviation " + fmt(worst) + " over 20 pairs (tol 1e-6)"};
}

// ---------------------------------------------------------------------------
// 2. Gradient checks

Outcome criterion_2(const fs::path&) {
  torch::manual_seed(11);
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  double worst = 0.0;
  auto track = [&](const torch::Tensor& analytic, const torch::Tensor& numeric) {
    worst = std::max(worst, oracle::rel_error(analytic, numeric));
  };

  for (int trial = 0; trial < 4; ++trial) {
    const auto image = torch::randn({1, 1, 8, 8}, opts);
    const auto flow = (torch::rand({1, 2, 8, 8}, opts) - 0.5) * 3.0;
    const auto weight = torch::randn({1, 1, 8, 8}, opts);
    auto img = image.clone().requires_grad_(true);
    auto fl = flow.clone().requires_grad_(true);
    (backward_warp(img, fl) * weight).sum().backward();
    auto f_img = [&](const torch::Tensor& x) { return (backward_warp(x, flow) * weight).sum().item<double>(); };
    auto f_flow = [&](const torch::Tensor& x) { return (backward_warp(image, x) * weight).sum().item<double>(); };
    track(img.grad(), oracle::numeric_grad(f_img, image));
    track(fl.grad(), oracle::numeric_grad(f_flow, flow));
  }

  for (std::size_t labels : {1u, 2u}) {
    Batch b;
    b.i0 = torch::randn({2, 1, 8, 8}, opts);
    b.i1 = torch::randn({2, 1, 8, 8}, opts);
    for (std::size_t i = 0; i < labels; ++i) {
      b.labels.push_back(torch::randn({2, 1, 8, 8}, opts));
      b.times.push_back(time_tensor(std::vector<double>{0.2 + 0.3 * static_cast<double>(i), 0.6}, torch::kFloat64));
    }
    const auto raw_flow = torch::randn({2, 4, 8, 8}, opts);
    const auto raw_interp = torch::randn({2, 5, 8, 8}, opts);
    auto total = [&](const torch::Tensor& flow, const torch::Tensor& interp) {
      return pipeline_losses(b, flow, [interp](const torch::Tensor&) { return interp; }, LossWeights{}).total;
    };
    auto rf = raw_flow.clone().requires_grad_(true);
    auto ri = raw_interp.clone().requires_grad_(true);
    total(rf, ri).backward();
    track(rf.grad(), oracle::numeric_grad([&](const torch::Tensor& x) { return total(x, raw_interp).item<double>(); },
                                          raw_flow));
    track(ri.grad(), oracle::numeric_grad([&](const torch::Tensor& x) { return total(raw_flow, x).item<double>(); },
                                          raw_interp));
  }
  return {worst < 1e-4, "max relative gradient error " + fmt(worst) + " (tol 1e-4)"};
}

// ---------------------------------------------------------------------------
// 3. Closed loop

Outcome criterion_3(const fs::path&) {
  SceneDistribution d;
  d.max_speed = 1.5;
  d.max_rotation = 0.02;
  d.vortex_probability = 0.5;
  double worst = 0.0;
  std::size_t pairs = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const SyntheticScene scene = sample_scene(d, seed);
    const auto out = generate_synthetic(scene);
    const std::vector<FrameSequence> seqs{out.sequence};
    const auto stats = compute_norm_stats(seqs).at(scene.band.band_id);
    const auto margin = static_cast<std::size_t>(std::ceil(scene.max_displacement()));
    for (std::size_t k = 0; k + 1 < out.sequence.size(); ++k) {
      const Grid rebuilt = backward_warp(out.sequence[k + 1].pixels, out.flows[k]);
      const Grid& truth = out.sequence[k].pixels;
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t r = margin; r + margin < scene.height; ++r) {
        for (std::size_t c = margin; c + margin < scene.width; ++c) {
          const double e = (rebuilt(r, c) - truth(r, c)) / stats.std;
          sum += e * e;
          ++n;
        }
      }
      worst = std::max(worst, std::sqrt(sum / static_cast<double>(n)));
      ++pairs;
    }
  }
  return {worst < 1e-3, "worst interior rmse " + fmt(worst) + " normalized over " + std::to_string(pairs) +
                            " frame pairs (tol 1e-3)"};
}

// ---------------------------------------------------------------------------
// 4. Blend identities

Outcome criterion_4(const fs::path&) {
  Rng rng(4);
  double worst = 0.0;
  const VisibilityMap ones(Grid(32, 32, 1.0f));
  for (int i = 0; i < 10; ++i) {
    const Grid w0 = oracle::random_grid(32, 32, rng, -3.0, 3.0);
    const Grid w1 = oracle::random_grid(32, 32, rng, -3.0, 3.0);
    const double t = rng.unit();
    const Grid out = blend_visibility(w0, w1, ones, ones, BlendTime{t});
    for (std::size_t j = 0; j < out.size(); ++j) {
      const double expected = (1.0 - t) * w0.values()[j] + t * w1.values()[j];
      worst = std::max(worst, std::abs(out.values()[j] - expected));
    }
  }

  SlomoNet net(ModelSpec::make(Variant::task, 13, ChannelPlan::scaled(0.125)), 5);
  torch::NoGradGuard no_grad;
  torch::manual_seed(4);
  bool exact = true;
  for (int i = 0; i < 3; ++i) {
    const auto i0 = torch::randn({1, 1, 32, 32});
    const auto i1 = torch::randn({1, 1, 32, 32});
    const auto a = net->forward(i0, i1, time_tensor(0.0));
    const auto b = net->forward(i0, i1, time_tensor(1.0));
    exact = exact && torch::equal(a.prediction, a.warped0) && torch::equal(b.prediction, b.warped1);
  }
  return {worst <= 1e-6 && exact, "unit-visibility blend deviation " + fmt(worst) +
                                      " (tol 1e-6); endpoints exact: " + (exact ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 5. Learning beats linear

Outcome criterion_5(const fs::path& workdir) {
  const auto t_start = std::chrono::steady_clock::now();
  // 72x72 sources cropped to 64x64; 200 sequences of 24 frames give 2800
  // windows of 11 frames.
  const auto train_set = make_sequences(scene_distribution(72, 24), 200, 1000);
  const auto tests = test_set();

  SlomoNet net(ModelSpec::make(Variant::task, 13, ChannelPlan::scaled(kWidthScale)), kModelSeed);
  TrainConfig cfg;
  cfg.crop_source = 72;
  cfg.crop_train = 64;
  cfg.sequence_length = 11;
  cfg.input_gap_steps = 10;
  cfg.batch_size = 8;
  cfg.steps = 1500;
  cfg.learning_rate = 3e-4;
  cfg.log_every = 100;
  cfg.val_examples = 32;
  cfg.seed = kTrainSeed;
  const auto split = split_windows(train_set, cfg);

  fs::create_directories(workdir);
  std::ofstream log(workdir / "train_log.ndjson", std::ios::trunc);
  TrainHooks hooks;
  hooks.on_log = [&](const LogRecord& r) {
    log << to_ndjson(r) << '\n' << std::flush;
    std::cerr << "step " << r.step << " l_r " << r.l_r << " val_l_r " << r.val_l_r << '\n';
  };
  const auto result = train(net, train_set, cfg, 0, std::nullopt, hooks);
  result.best.save(model_dir(workdir));

  NetworkInterpolator learned(result.best);
  std::vector<Interpolator*> models{&learned};
  const auto records = compare_models(models, tests, 0.5);
  double lin = NAN, ssm = NAN;
  for (const auto& r : records) (r.model == "linear" ? lin : ssm) = r.rmse;
  const double reduction = 1.0 - ssm / lin;
  write_text(workdir / "criterion5.csv", metrics_csv(records));

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  const std::size_t examples = split.train.size();
  const bool pass = examples >= 2000 && std::isfinite(reduction) && reduction >= 0.20;
  return {pass, "SSM-T rmse " + fmt(ssm) + " vs linear " + fmt(lin) + " at t=0.5 (" + fmt(100.0 * reduction, 3) +
                    "% lower, need >= 20%); " + std::to_string(examples) + " training windows, " +
                    fmt(secs, 4) + " s"};
}

// ---------------------------------------------------------------------------
// 6. U-shaped time curve

Outcome criterion_6(const fs::path& workdir) {
  NetworkInterpolator learned(load_model(workdir));
  const auto tests = test_set();
  const auto ts = default_sweep_times();
  const auto sweep = time_sweep(learned, tests, ts);
  write_text(workdir / "sweep_t.csv", sweep_csv(sweep));
  std::size_t argmin = 0;
  std::string curve;
  for (std::size_t i = 0; i < sweep.points.size(); ++i) {
    if (sweep.points[i].metrics.psnr < sweep.points[argmin].metrics.psnr) argmin = i;
    curve += (i ? " " : "") + fmt(sweep.points[i].metrics.psnr);
  }
  const double t_min = sweep.points.empty() ? NAN : sweep.points[argmin].axis_value;
  const bool pass = sweep.points.size() == 9 && (std::abs(t_min - 0.4) < 1e-9 || std::abs(t_min - 0.5) < 1e-9 ||
                                                 std::abs(t_min - 0.6) < 1e-9);
  return {pass, "minimum PSNR at t=" + fmt(t_min) + " (need 0.4..0.6); PSNR dB over t=0.1..0.9: " + curve};
}

// ---------------------------------------------------------------------------
// 7. Gap degradation

Outcome criterion_7(const fs::path& workdir) {
  // Constant-velocity translation at 30 s cadence; 91 frames span a 45 min gap.
  std::vector<FrameSequence> data;
  Rng rng(77);
  for (std::uint64_t i = 0; i < 10; ++i) {
    SyntheticScene s;
    s.seed = 7000 + i;
    s.frames = 91;
    s.cadence_s = 30.0;
    const double speed = 0.05 + 0.1 * rng.unit();
    const double angle = 2.0 * M_PI * rng.unit();
    s.motion.push_back(Translation{speed * std::cos(angle), speed * std::sin(angle)});
    data.push_back(generate_synthetic(s).sequence);
  }
  NetworkInterpolator learned(load_model(workdir));
  LinearBaseline linear;
  const auto gaps = default_sweep_gaps();

  bool pass = true;
  std::string detail;
  for (Interpolator* m : {static_cast<Interpolator*>(&linear), static_cast<Interpolator*>(&learned)}) {
    const auto sweep = gap_sweep(*m, data, gaps, 0.5);
    write_text(workdir / ("sweep_gap_" + m->name() + ".csv"), sweep_csv(sweep));
    double worst_rise = -INFINITY;
    std::string curve;
    for (std::size_t i = 0; i < sweep.points.size(); ++i) {
      curve += (i ? " " : "") + fmt(sweep.points[i].metrics.psnr);
      if (i > 0) worst_rise = std::max(worst_rise, sweep.points[i].metrics.psnr - sweep.points[i - 1].metrics.psnr);
    }
    const bool ok = sweep.points.size() == gaps.size() && worst_rise <= 0.3;
    pass = pass && ok;
    detail += (detail.empty() ? "" : "; ") + m->name() + " PSNR dB over 5..45 min: " + curve + " (largest rise " +
              fmt(worst_rise, 3) + ", tol 0.3)";
  }
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// 8. Parameter ordering and shapes

Outcome criterion_8(const fs::path&) {
  const auto t_spec = ModelSpec::make(Variant::task, 13);
  const auto tms_spec = ModelSpec::make(Variant::task_multiscale, 13);
  const auto n_t = param_count(t_spec);
  const auto n_tms = param_count(tms_spec);

  bool shapes = true;
  torch::NoGradGuard no_grad;
  const auto i0 = torch::randn({1, 1, 256, 256});
  const auto i1 = torch::randn({1, 1, 256, 256});
  for (const auto& spec : {t_spec, tms_spec}) {
    SlomoNet net(spec, 1);
    const auto out = net->forward(i0, i1, time_tensor(0.5));
    const std::vector<int64_t> flow{1, 2, 256, 256}, image{1, 1, 256, 256};
    shapes = shapes && out.flows.f01.sizes().vec() == flow && out.flows.f10.sizes().vec() == flow &&
             out.refined.f_t0.sizes().vec() == flow && out.refined.f_t1.sizes().vec() == flow &&
             out.refined.v0.sizes().vec() == image && out.refined.v1.sizes().vec() == image &&
             out.prediction.sizes().vec() == image && torch::isfinite(out.prediction).all().item<bool>();
  }
  return {n_tms < n_t && shapes, "param_count SSM-TMS " + std::to_string(n_tms) + " < SSM-T " +
                                     std::to_string(n_t) + "; 256x256 output shapes " + (shapes ? "ok" : "wrong")};
}

// ---------------------------------------------------------------------------
// 9. Determinism and checkpoint fidelity

Outcome criterion_9(const fs::path& workdir) {
  const auto data = make_sequences(scene_distribution(32, 12), 8, 500);
  TrainConfig cfg;
  cfg.crop_source = 32;
  cfg.crop_train = 32;
  cfg.sequence_length = 11;
  cfg.batch_size = 2;
  cfg.steps = 12;
  cfg.log_every = 3;
  cfg.val_examples = 4;
  cfg.seed = 21;
  const auto spec = ModelSpec::make(Variant::task, 13, ChannelPlan::scaled(0.125));
  auto run = [&] {
    SlomoNet net(spec, 9);
    return train(net, data, cfg);
  };
  const auto a = run();
  const auto b = run();
  bool same_log = a.log.size() == b.log.size() && !a.log.empty();
  for (std::size_t i = 0; same_log && i < a.log.size(); ++i) {
    const auto& x = a.log[i];
    const auto& y = b.log[i];
    same_log = x.step == y.step && x.l_r == y.l_r && x.l_w == y.l_w && x.l_s == y.l_s && x.total == y.total &&
               x.val_l_r == y.val_l_r;
  }

  const auto dir = workdir / "determinism_checkpoint";
  a.last.save(dir);
  const auto loaded = Checkpoint::load(dir);
  NetworkInterpolator before(a.last);
  NetworkInterpolator after(loaded);
  bool bit_exact = true;
  for (const double t : {0.25, 0.5, 0.8}) {
    const auto& seq = data.front();
    bit_exact = bit_exact && before.predict(seq[0], seq[10], t) == after.predict(seq[0], seq[10], t);
  }
  return {same_log && bit_exact, "identical logs over " + std::to_string(a.log.size()) +
                                     " records: " + (same_log ? "yes" : "no") +
                                     "; save/load/interpolate bit-exact: " + (bit_exact ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 10. Series reconstruction

Outcome criterion_10(const fs::path& workdir) {
  // A drifting scene with a cooling convective core, sampled every frame for
  // truth and every tenth frame for the inputs.
  SyntheticScene s;
  s.seed = 4242;
  s.frames = 61;
  s.motion.push_back(Translation{0.5, 0.3});
  s.ramps.push_back(RampEvent{26.0, 28.0, 7.0, -1.5});
  const auto seq = generate_synthetic(s).sequence;
  const PixelCoord pixel{32, 32};

  NetworkInterpolator learned(load_model(workdir));
  LinearBaseline linear;
  const auto a = reconstruct_series(learned, seq, 10, pixel);
  const auto b = reconstruct_series(linear, seq, 10, pixel);

  std::ostringstream csv;
  csv << "timestamp,observed,learned,linear\n";
  for (std::size_t i = 0; i < a.observed.size(); ++i) {
    csv << a.observed[i].timestamp << ',' << a.observed[i].value << ',' << a.reconstructed[i].value << ','
        << b.reconstructed[i].value << '\n';
  }
  write_text(workdir / "series.csv", csv.str());
  return {a.rmse < b.rmse, "series rmse learned " + fmt(a.rmse) + " vs linear " + fmt(b.rmse) + " over " +
                               std::to_string(a.observed.size()) + " frames"};
}

Outcome run_criterion(int n, const fs::path& workdir) {
  switch (n) {
    case 1: return criterion_1(workdir);
    case 2: return criterion_2(workdir);
    case 3: return criterion_3(workdir);
    case 4: return criterion_4(workdir);
    case 5: return criterion_5(workdir);
    case 6: return criterion_6(workdir);
    case 7: return criterion_7(workdir);
    case 8: return criterion_8(workdir);
    case 9: return criterion_9(workdir);
    case 10: return criterion_10(workdir);
    default: return {false, "unknown criterion"};
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geoslomo acceptance checks"};
  std::vector<int> criteria;
  std::string workdir = "acceptance_work";
  app.add_option("--criterion", criteria, "Criteria to run (default: all)")->check(CLI::Range(1, 10));
  app.add_option("--workdir", workdir, "Directory for the trained model and reports");
  CLI11_PARSE(app, argc, argv);
  if (criteria.empty()) criteria = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

  log::set_level(log::Level::warn);
  torch::set_num_threads(1);

  bool all = true;
  for (const int n : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run_criterion(n, workdir);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << o.detail << " [" << fmt(secs, 3)
              << " s]" << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
