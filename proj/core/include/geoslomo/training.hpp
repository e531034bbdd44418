#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <torch/types.h>

#include "geoslomo/imagery.hpp"
#include "geoslomo/loss_weights.hpp"
#include "geoslomo/networks.hpp"
#include "geoslomo/random.hpp"

namespace geoslomo {

// ---------------------------------------------------------------------------
// Losses. Every L1 term is a per-pixel mean.

struct LossBreakdown {
  double l_r = 0.0;
  double l_w = 0.0;
  double l_s = 0.0;
  double total = 0.0;
};

/// (1/N) sum_i mean|pred_i - target_i|.
torch::Tensor reconstruction_loss(std::span<const torch::Tensor> preds, std::span<const torch::Tensor> targets);

/// mean|i0 - g(i1, F01)| + mean|i1 - g(i0, F10)|
///   + (1/N) sum_i mean|I_ti - g(i0, F_ti->0)| + (1/N) sum_i mean|I_ti - g(i1, F_ti->1)|
/// where the per-label flows are the approximated intermediate flows.
torch::Tensor warping_loss(const torch::Tensor& i0, const torch::Tensor& i1,
                           std::span<const torch::Tensor> intermediates, const torch::Tensor& f01,
                           const torch::Tensor& f10, std::span<const IntermediateFlows> fhats);

/// Sum over both flows of mean|dF/dx| + mean|dF/dy| (forward differences,
/// averaged over both vector components).
torch::Tensor smoothness_loss(const torch::Tensor& f01, const torch::Tensor& f10);

/// Weighted combination; DivergenceError if a component is not finite.
LossBreakdown total_loss(double l_r, double l_w, double l_s, const LossWeights& weights);

struct LossTerms {
  torch::Tensor l_r;
  torch::Tensor l_w;
  torch::Tensor l_s;
  torch::Tensor total;

  LossBreakdown values() const;
};

/// Batch of examples: i0, i1 are (B, 1, H, W); labels[i] is (B, 1, H, W) and
/// times[i] is (B, 1, 1, 1).
struct Batch {
  torch::Tensor i0;
  torch::Tensor i1;
  std::vector<torch::Tensor> labels;
  std::vector<torch::Tensor> times;
};

/// All three losses for one batch, given the raw flow-network output and the
/// interpolation head. Shared by the trainer and by gradient checks that
/// substitute fixed tensors for the networks.
LossTerms pipeline_losses(const Batch& batch, const torch::Tensor& raw_flow, const InterpHead& head,
                          const LossWeights& weights, std::vector<torch::Tensor>* predictions = nullptr);

LossTerms pipeline_losses(SlomoNet& net, const Batch& batch, const LossWeights& weights);

// ---------------------------------------------------------------------------
// Sampling and augmentation

/// Flip (mirror in x) followed by `rotations` quarter turns.
struct Augmentation {
  bool flip = false;
  int rotations = 0;

  /// Transforms the two trailing (H, W) dimensions.
  torch::Tensor apply_image(const torch::Tensor& image) const;
  /// Transforms a (N, 2, H, W) flow: the field is moved like an image and the
  /// displacement vectors are rotated/mirrored accordingly.
  torch::Tensor apply_flow(const torch::Tensor& flow) const;

  static Augmentation random(Rng& rng);
};

struct TrainConfig {
  std::size_t crop_source = 264;
  std::size_t crop_train = 256;
  std::size_t sequence_length = 15;
  std::size_t input_gap_steps = 10;
  std::size_t intermediate_count = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double learning_rate = 1e-4;
  std::size_t batch_size = 4;
  std::int64_t steps = 0;
  double val_fraction = 0.2;
  bool augment = true;
  std::uint64_t seed = 0;
  std::int64_t log_every = 50;       // K
  std::size_t val_examples = 64;     // fixed validation examples drawn once
  LossWeights weights;

  void validate() const;
};

struct Label {
  double t = 0.0;
  torch::Tensor frame;  // (1, H, W)
};

/// One training example: normalized (1, H, W) endpoints and labels.
struct TrainingExample {
  torch::Tensor i0;
  torch::Tensor i1;
  std::vector<Label> labels;
};

/// Draws a window of `sequence_length` frames from `seq`, then an input pair
/// `input_gap_steps` apart inside it, `intermediate_count` distinct labels
/// between them, a crop and (optionally) an augmentation shared by all frames.
/// `stats` normalizes the physical frames.
TrainingExample sample_training_example(const FrameSequence& seq, const ChannelStats& stats,
                                        const TrainConfig& cfg, Rng& rng);

/// Same as above with the window start fixed.
TrainingExample sample_window_example(const FrameSequence& seq, std::size_t window_start,
                                      const ChannelStats& stats, const TrainConfig& cfg, Rng& rng,
                                      bool augment);

Batch collate(std::span<const TrainingExample> examples);

// ---------------------------------------------------------------------------
// Optimization

struct LogRecord {
  std::int64_t step = 0;
  double l_r = 0.0;
  double l_w = 0.0;
  double l_s = 0.0;
  double total = 0.0;
  double val_l_r = 0.0;
  double wallclock_s = 0.0;
};

/// One NDJSON line (no trailing newline).
std::string to_ndjson(const LogRecord& record);
LogRecord log_record_from_json(const std::string& line);

struct TrainResult {
  Checkpoint best;  // lowest validation reconstruction loss
  Checkpoint last;
  std::vector<LogRecord> log;
  double initial_val_l_r = std::numeric_limits<double>::quiet_NaN();
};

/// Raised when a loss turns non-finite; carries the last finite checkpoint.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(std::int64_t step, const std::string& what, Checkpoint last_good)
      : DivergenceError(step, what), last_good_(std::move(last_good)) {}
  const Checkpoint& last_good() const noexcept { return last_good_; }

 private:
  Checkpoint last_good_;
};

struct TrainHooks {
  std::function<void(const LogRecord&)> on_log;
};

/// Trains `net` in place with Adam for cfg.steps steps starting at
/// `start_step`. Normalization statistics are computed from the frames of the
/// training windows unless `norm` is supplied (resumed runs).
TrainResult train(SlomoNet& net, std::span<const FrameSequence> dataset, const TrainConfig& cfg,
                  std::int64_t start_step = 0, const std::optional<NormStats>& norm = std::nullopt,
                  const TrainHooks& hooks = {});

/// Example windows of a dataset split into training and validation sets.
struct WindowSplit {
  struct Window {
    std::size_t sequence = 0;
    std::size_t start = 0;
  };
  std::vector<Window> train;
  std::vector<Window> validation;
};

WindowSplit split_windows(std::span<const FrameSequence> dataset, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Hyper-parameter grid

struct LambdaCell {
  double lambda_s = 0.0;
  double lambda_w = 0.0;
};

struct GridSearchRow {
  LambdaCell cell;
  double val_l_r = 0.0;  // +inf when the run diverged
};

struct GridSearchResult {
  LambdaCell best;
  std::vector<GridSearchRow> table;
};

/// Short training run per (lambda_s, lambda_w) with lambda_r = 1; evaluates at
/// most `budget` cells in grid order.
GridSearchResult grid_search_lambdas(std::span<const LambdaCell> grid, std::size_t budget, const ModelSpec& spec,
                                     std::span<const FrameSequence> dataset, const TrainConfig& base);

}  // namespace geoslomo
