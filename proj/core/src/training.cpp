#include "geoslomo/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "geoslomo/errors.hpp"
#include "geoslomo/log.hpp"
#include "geoslomo/warpcore.hpp"

namespace geoslomo {

// ---------------------------------------------------------------------------
// Losses

namespace {

void check_shapes(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.sizes().equals(b.sizes())) throw ContractError(std::string(what) + ": shape mismatch");
}

torch::Tensor l1(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs().mean(); }

}  // namespace

torch::Tensor reconstruction_loss(std::span<const torch::Tensor> preds, std::span<const torch::Tensor> targets) {
  if (preds.empty()) throw ContractError("reconstruction_loss: no frames");
  if (preds.size() != targets.size()) throw ContractError("reconstruction_loss: list lengths differ");
  torch::Tensor sum;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    check_shapes(preds[i], targets[i], "reconstruction_loss");
    auto term = l1(preds[i], targets[i]);
    sum = sum.defined() ? sum + term : term;
  }
  return sum / static_cast<double>(preds.size());
}

torch::Tensor warping_loss(const torch::Tensor& i0, const torch::Tensor& i1,
                           std::span<const torch::Tensor> intermediates, const torch::Tensor& f01,
                           const torch::Tensor& f10, std::span<const IntermediateFlows> fhats) {
  check_shapes(i0, i1, "warping_loss");
  check_shapes(f01, f10, "warping_loss");
  if (intermediates.size() != fhats.size()) throw ContractError("warping_loss: one flow pair per intermediate frame");
  auto loss = l1(i0, backward_warp(i1, f01)) + l1(i1, backward_warp(i0, f10));
  if (intermediates.empty()) return loss;
  torch::Tensor to_start, to_end;
  for (std::size_t i = 0; i < intermediates.size(); ++i) {
    check_shapes(intermediates[i], i0, "warping_loss");
    auto a = l1(intermediates[i], backward_warp(i0, fhats[i].to_start));
    auto b = l1(intermediates[i], backward_warp(i1, fhats[i].to_end));
    to_start = to_start.defined() ? to_start + a : a;
    to_end = to_end.defined() ? to_end + b : b;
  }
  const auto n = static_cast<double>(intermediates.size());
  return loss + to_start / n + to_end / n;
}

torch::Tensor smoothness_loss(const torch::Tensor& f01, const torch::Tensor& f10) {
  check_shapes(f01, f10, "smoothness_loss");
  if (f01.dim() != 4 || f01.size(1) != 2) throw ContractError("smoothness_loss: flows must be (N, 2, H, W)");
  auto term = [](const torch::Tensor& f) {
    const int64_t H = f.size(2), W = f.size(3);
    auto dx = f.narrow(3, 1, W - 1) - f.narrow(3, 0, W - 1);
    auto dy = f.narrow(2, 1, H - 1) - f.narrow(2, 0, H - 1);
    return dx.abs().mean() + dy.abs().mean();
  };
  return term(f01) + term(f10);
}

LossBreakdown total_loss(double l_r, double l_w, double l_s, const LossWeights& weights) {
  weights.validate();
  if (!std::isfinite(l_r) || !std::isfinite(l_w) || !std::isfinite(l_s)) {
    throw DivergenceError(-1, "non-finite loss component (l_r=" + std::to_string(l_r) +
                                  ", l_w=" + std::to_string(l_w) + ", l_s=" + std::to_string(l_s) + ")");
  }
  return {l_r, l_w, l_s, weights.lambda_r * l_r + weights.lambda_w * l_w + weights.lambda_s * l_s};
}

LossBreakdown LossTerms::values() const {
  return {l_r.item<double>(), l_w.item<double>(), l_s.item<double>(), total.item<double>()};
}

LossTerms pipeline_losses(const Batch& batch, const torch::Tensor& raw_flow, const InterpHead& head,
                          const LossWeights& weights, std::vector<torch::Tensor>* predictions) {
  if (batch.labels.empty() || batch.labels.size() != batch.times.size()) {
    throw ContractError("pipeline_losses: need one time per label and at least one label");
  }
  const FlowPair flows = split_flow_output(raw_flow);
  std::vector<torch::Tensor> preds;
  std::vector<IntermediateFlows> fhats;
  for (std::size_t i = 0; i < batch.labels.size(); ++i) {
    auto p = complete_pipeline(batch.i0, batch.i1, flows, batch.times[i], head);
    preds.push_back(p.prediction);
    fhats.push_back(p.approx);
  }
  LossTerms terms;
  terms.l_r = reconstruction_loss(preds, batch.labels);
  terms.l_w = warping_loss(batch.i0, batch.i1, batch.labels, flows.f01, flows.f10, fhats);
  terms.l_s = smoothness_loss(flows.f01, flows.f10);
  terms.total = weights.lambda_r * terms.l_r + weights.lambda_w * terms.l_w + weights.lambda_s * terms.l_s;
  if (predictions) *predictions = std::move(preds);
  return terms;
}

LossTerms pipeline_losses(SlomoNet& net, const Batch& batch, const LossWeights& weights) {
  auto raw = net->flow_net->forward(torch::cat({batch.i0, batch.i1}, 1));
  return pipeline_losses(batch, raw, [&net](const torch::Tensor& x) { return net->interp_net->forward(x); },
                         weights);
}

// ---------------------------------------------------------------------------
// Augmentation and sampling

torch::Tensor Augmentation::apply_image(const torch::Tensor& image) const {
  auto x = flip ? torch::flip(image, {-1}) : image;
  const int k = ((rotations % 4) + 4) % 4;
  return k ? torch::rot90(x, k, {-2, -1}) : x;
}

torch::Tensor Augmentation::apply_flow(const torch::Tensor& flow) const {
  if (flow.dim() != 4 || flow.size(1) != 2) throw ContractError("Augmentation: flows must be (N, 2, H, W)");
  auto f = apply_image(flow);
  auto u = f.narrow(1, 0, 1);
  auto v = f.narrow(1, 1, 1);
  if (flip) u = -u;
  // A quarter turn maps pixel (x, y) to (y, W - 1 - x), so vectors go (u, v) -> (v, -u).
  const int k = ((rotations % 4) + 4) % 4;
  for (int i = 0; i < k; ++i) {
    auto nu = v;
    v = -u;
    u = nu;
  }
  return torch::cat({u, v}, 1);
}

Augmentation Augmentation::random(Rng& rng) {
  Augmentation a;
  a.flip = (rng.next() & 1u) != 0;
  a.rotations = static_cast<int>(rng.below(4));
  return a;
}

void TrainConfig::validate() const {
  if (crop_train > crop_source) throw ParameterError("crop_train", "must not exceed crop_source");
  if (crop_train == 0 || crop_train % 16 != 0) throw ParameterError("crop_train", "must be a positive multiple of 16");
  if (input_gap_steps < 2) throw ParameterError("input_gap_steps", "must be at least 2");
  if (sequence_length < input_gap_steps + 1) {
    throw ParameterError("sequence_length", "must be at least input_gap_steps + 1");
  }
  if (intermediate_count < 1 || intermediate_count > input_gap_steps - 1) {
    throw ParameterError("intermediate_count", "must be in 1..input_gap_steps-1");
  }
  if (!(learning_rate > 0.0)) throw ParameterError("learning_rate", "must be positive");
  if (batch_size < 1) throw ParameterError("batch_size", "must be at least 1");
  if (steps < 0) throw ParameterError("steps", "must be non-negative");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ParameterError("val_fraction", "must lie in (0, 1)");
  if (log_every < 1) throw ParameterError("log_every", "must be at least 1");
  if (val_examples < 1) throw ParameterError("val_examples", "must be at least 1");
  weights.validate();
}

TrainingExample sample_window_example(const FrameSequence& seq, std::size_t window_start, const ChannelStats& stats,
                                      const TrainConfig& cfg, Rng& rng, bool augment) {
  const std::size_t L = cfg.sequence_length;
  const std::size_t gap = cfg.input_gap_steps;
  if (L < gap + 1) throw ContractError("sample_training_example: window shorter than the input gap");
  if (window_start + L > seq.size()) {
    throw ContractError("sample_training_example: window [" + std::to_string(window_start) + ", " +
                        std::to_string(window_start + L) + ") exceeds sequence of " + std::to_string(seq.size()));
  }
  if (cfg.intermediate_count < 1 || cfg.intermediate_count > gap - 1) {
    throw ContractError("sample_training_example: cannot draw " + std::to_string(cfg.intermediate_count) +
                        " labels from a gap of " + std::to_string(gap));
  }
  const std::size_t H = seq.height(), W = seq.width();
  if (H < cfg.crop_train || W < cfg.crop_train) {
    throw ContractError("sample_training_example: frames smaller than crop_train");
  }

  const std::size_t first = window_start + static_cast<std::size_t>(rng.below(L - gap));
  std::vector<std::size_t> interior(gap - 1);
  std::iota(interior.begin(), interior.end(), std::size_t{1});
  for (std::size_t i = 0; i < cfg.intermediate_count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(interior.size() - i));
    std::swap(interior[i], interior[j]);
  }
  interior.resize(cfg.intermediate_count);

  const std::size_t src_h = std::min(cfg.crop_source, H), src_w = std::min(cfg.crop_source, W);
  const std::size_t src_r = rng.below(H - src_h + 1), src_c = rng.below(W - src_w + 1);
  const std::size_t r0 = src_r + rng.below(src_h - cfg.crop_train + 1);
  const std::size_t c0 = src_c + rng.below(src_w - cfg.crop_train + 1);
  const Augmentation aug = augment ? Augmentation::random(rng) : Augmentation{};

  const auto crop = static_cast<int64_t>(cfg.crop_train);
  auto prepare = [&](std::size_t index) {
    auto full = to_tensor(seq[index].pixels).squeeze(0);
    auto x = full.narrow(1, static_cast<int64_t>(r0), crop).narrow(2, static_cast<int64_t>(c0), crop);
    x = (x - stats.mean) / stats.std;
    return aug.apply_image(x).contiguous();
  };

  TrainingExample ex;
  ex.i0 = prepare(first);
  ex.i1 = prepare(first + gap);
  for (std::size_t step : interior) {
    ex.labels.push_back({static_cast<double>(step) / static_cast<double>(gap), prepare(first + step)});
  }
  return ex;
}

TrainingExample sample_training_example(const FrameSequence& seq, const ChannelStats& stats, const TrainConfig& cfg,
                                        Rng& rng) {
  if (seq.size() < cfg.sequence_length) {
    throw ContractError("sample_training_example: sequence of " + std::to_string(seq.size()) +
                        " frames is shorter than the window of " + std::to_string(cfg.sequence_length));
  }
  const auto start = static_cast<std::size_t>(rng.below(seq.size() - cfg.sequence_length + 1));
  return sample_window_example(seq, start, stats, cfg, rng, cfg.augment);
}

Batch collate(std::span<const TrainingExample> examples) {
  if (examples.empty()) throw ContractError("collate: empty batch");
  const std::size_t n = examples.front().labels.size();
  Batch b;
  std::vector<torch::Tensor> i0, i1;
  for (const auto& e : examples) {
    if (e.labels.size() != n) throw ContractError("collate: examples have different label counts");
    i0.push_back(e.i0);
    i1.push_back(e.i1);
  }
  b.i0 = torch::stack(i0);
  b.i1 = torch::stack(i1);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<torch::Tensor> frames;
    std::vector<double> ts;
    for (const auto& e : examples) {
      frames.push_back(e.labels[k].frame);
      ts.push_back(e.labels[k].t);
    }
    b.labels.push_back(torch::stack(frames));
    b.times.push_back(time_tensor(ts));
  }
  return b;
}

// ---------------------------------------------------------------------------
// Training loop

std::string to_ndjson(const LogRecord& r) {
  nlohmann::json j{{"step", r.step},   {"l_r", r.l_r},         {"l_w", r.l_w},
                   {"l_s", r.l_s},     {"total", r.total},     {"val_l_r", r.val_l_r},
                   {"wallclock_s", r.wallclock_s}};
  return j.dump();
}

LogRecord log_record_from_json(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    return {j.at("step").get<std::int64_t>(), j.at("l_r").get<double>(),   j.at("l_w").get<double>(),
            j.at("l_s").get<double>(),        j.at("total").get<double>(), j.at("val_l_r").get<double>(),
            j.at("wallclock_s").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("training log: ") + e.what());
  }
}

WindowSplit split_windows(std::span<const FrameSequence> dataset, const TrainConfig& cfg) {
  std::vector<WindowSplit::Window> all;
  for (std::size_t s = 0; s < dataset.size(); ++s) {
    if (dataset[s].size() < cfg.sequence_length) continue;
    for (std::size_t start = 0; start + cfg.sequence_length <= dataset[s].size(); ++start) all.push_back({s, start});
  }
  if (all.size() < 2) {
    throw ContractError("train: dataset yields " + std::to_string(all.size()) +
                        " windows; at least 2 are needed for a training/validation split");
  }
  Rng rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  for (std::size_t i = all.size() - 1; i > 0; --i) std::swap(all[i], all[rng.below(i + 1)]);
  auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(all.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, all.size() - 1);
  WindowSplit split;
  split.validation.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train.assign(all.begin() + static_cast<std::ptrdiff_t>(n_val), all.end());
  return split;
}

namespace {

NormStats stats_over_windows(std::span<const FrameSequence> dataset, std::span<const WindowSplit::Window> windows,
                             std::size_t length) {
  std::vector<std::vector<bool>> used(dataset.size());
  for (std::size_t s = 0; s < dataset.size(); ++s) used[s].assign(dataset[s].size(), false);
  for (const auto& w : windows) {
    for (std::size_t k = 0; k < length; ++k) used[w.sequence][w.start + k] = true;
  }
  std::vector<FrameSequence> subsets;
  for (std::size_t s = 0; s < dataset.size(); ++s) {
    std::vector<Frame> frames;
    for (std::size_t k = 0; k < dataset[s].size(); ++k) {
      if (used[s][k]) frames.push_back(dataset[s][k]);
    }
    // Only the pixel statistics matter here, so equal spacing is restored.
    for (std::size_t k = 0; k < frames.size(); ++k) frames[k].timestamp = static_cast<double>(k);
    if (!frames.empty()) subsets.emplace_back(std::move(frames), 1.0);
  }
  return compute_norm_stats(subsets);
}

}  // namespace

TrainResult train(SlomoNet& net, std::span<const FrameSequence> dataset, const TrainConfig& cfg,
                  std::int64_t start_step, const std::optional<NormStats>& norm, const TrainHooks& hooks) {
  cfg.validate();
  if (dataset.empty()) throw ContractError("train: empty dataset");
  const ModelSpec& spec = net->spec();
  for (const auto& seq : dataset) {
    if (!spec.accepts_band(seq.band().band_id)) {
      throw ContractError("train: " + variant_name(spec.variant) + " model for band " + std::to_string(*spec.band) +
                          " cannot train on band " + std::to_string(seq.band().band_id));
    }
  }

  const WindowSplit split = split_windows(dataset, cfg);
  const NormStats stats = norm ? *norm : stats_over_windows(dataset, split.train, cfg.sequence_length);
  for (const auto& seq : dataset) stats.at(seq.band().band_id);

  Manifest manifest{spec, stats, cfg.weights, net->seed(), start_step};
  TrainResult result;
  result.best = Checkpoint::capture(net, manifest);
  result.last = result.best;
  if (cfg.steps == 0) return result;

  // Fixed validation batches, drawn once without augmentation.
  std::vector<Batch> val_batches;
  {
    Rng vrng(cfg.seed ^ 0xda3e39cb94b95bdbULL);
    std::vector<TrainingExample> pending;
    for (std::size_t i = 0; i < cfg.val_examples; ++i) {
      const auto& w = split.validation[i % split.validation.size()];
      const auto& seq = dataset[w.sequence];
      pending.push_back(sample_window_example(seq, w.start, stats.at(seq.band().band_id), cfg, vrng, false));
      if (pending.size() == cfg.batch_size || i + 1 == cfg.val_examples) {
        val_batches.push_back(collate(pending));
        pending.clear();
      }
    }
  }
  auto validate = [&]() {
    torch::NoGradGuard no_grad;
    net->eval();
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& b : val_batches) {
      const auto bs = static_cast<std::size_t>(b.i0.size(0));
      sum += pipeline_losses(net, b, cfg.weights).l_r.item<double>() * static_cast<double>(bs);
      n += bs;
    }
    net->train();
    return sum / static_cast<double>(n);
  };

  torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(cfg.learning_rate)
                                                      .betas({cfg.beta1, cfg.beta2})
                                                      .eps(cfg.adam_eps));
  Rng rng(cfg.seed);
  const auto t_start = std::chrono::steady_clock::now();
  double best_val = validate();
  result.initial_val_l_r = best_val;
  Checkpoint last_good = result.best;
  LossBreakdown acc{};
  std::int64_t acc_n = 0;
  net->train();

  for (std::int64_t s = 1; s <= cfg.steps; ++s) {
    const std::int64_t step = start_step + s;
    std::vector<TrainingExample> examples;
    examples.reserve(cfg.batch_size);
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      const auto& w = split.train[rng.below(split.train.size())];
      const auto& seq = dataset[w.sequence];
      examples.push_back(sample_window_example(seq, w.start, stats.at(seq.band().band_id), cfg, rng, cfg.augment));
    }
    const Batch batch = collate(examples);
    LossTerms terms;
    try {
      terms = pipeline_losses(net, batch, cfg.weights);
    } catch (const ValidationError& e) {
      // Non-finite flows are rejected by the warp before any loss exists.
      throw TrainingDiverged(step, e.what(), last_good);
    }
    const LossBreakdown v = terms.values();
    if (!std::isfinite(v.total) || !std::isfinite(v.l_r) || !std::isfinite(v.l_w) || !std::isfinite(v.l_s)) {
      throw TrainingDiverged(step, "non-finite loss", last_good);
    }
    optimizer.zero_grad();
    terms.total.backward();
    optimizer.step();
    acc.l_r += v.l_r;
    acc.l_w += v.l_w;
    acc.l_s += v.l_s;
    acc.total += v.total;
    ++acc_n;

    if (s % cfg.log_every == 0 || s == cfg.steps) {
      LogRecord rec;
      rec.step = step;
      rec.l_r = acc.l_r / static_cast<double>(acc_n);
      rec.l_w = acc.l_w / static_cast<double>(acc_n);
      rec.l_s = acc.l_s / static_cast<double>(acc_n);
      rec.total = acc.total / static_cast<double>(acc_n);
      try {
        rec.val_l_r = validate();
      } catch (const ValidationError& e) {
        throw TrainingDiverged(step, e.what(), last_good);
      }
      rec.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
      acc = {};
      acc_n = 0;
      if (!std::isfinite(rec.val_l_r)) throw TrainingDiverged(step, "non-finite validation loss", last_good);
      manifest.step = step;
      last_good = Checkpoint::capture(net, manifest);
      if (rec.val_l_r < best_val) {
        best_val = rec.val_l_r;
        result.best = last_good;
      }
      result.log.push_back(rec);
      log::debug("step ", step, " l_r=", rec.l_r, " l_w=", rec.l_w, " l_s=", rec.l_s, " val_l_r=", rec.val_l_r);
      if (hooks.on_log) hooks.on_log(rec);
    }
  }
  manifest.step = start_step + cfg.steps;
  result.last = Checkpoint::capture(net, manifest);
  return result;
}

// ---------------------------------------------------------------------------
// Grid search

GridSearchResult grid_search_lambdas(std::span<const LambdaCell> grid, std::size_t budget, const ModelSpec& spec,
                                     std::span<const FrameSequence> dataset, const TrainConfig& base) {
  if (grid.empty()) throw ContractError("grid_search_lambdas: empty grid");
  if (budget == 0) throw ParameterError("budget", "must be at least 1");
  GridSearchResult out;
  double best = std::numeric_limits<double>::infinity();
  bool have_best = false;
  for (std::size_t i = 0; i < grid.size() && i < budget; ++i) {
    const LambdaCell cell = grid[i];
    TrainConfig cfg = base;
    cfg.weights = {1.0, cell.lambda_w, cell.lambda_s};
    double score = std::numeric_limits<double>::infinity();
    try {
      SlomoNet net(spec, base.seed);
      auto r = train(net, dataset, cfg);
      score = r.initial_val_l_r;
      for (const auto& rec : r.log) score = std::min(score, rec.val_l_r);
      if (!std::isfinite(score)) score = std::numeric_limits<double>::infinity();
    } catch (const DivergenceError& e) {
      log::warn("grid_search_lambdas: cell (", cell.lambda_s, ", ", cell.lambda_w, ") diverged: ", e.what());
    }
    out.table.push_back({cell, score});
    if (!have_best || score < best) {
      best = score;
      out.best = cell;
      have_best = true;
    }
  }
  return out;
}

}  // namespace geoslomo
