#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/modulelist.h>
#include <torch/nn/modules/conv.h>
#include <torch/nn/pimpl.h>

#include "geoslomo/fields.hpp"
#include "geoslomo/imagery.hpp"
#include "geoslomo/loss_weights.hpp"
#include "geoslomo/warpcore.hpp"

namespace geoslomo {

enum class BlockKind { standard, multi_scale };

/// Layer plan of one U-Net. Four pooling stages followed by four upsampling
/// stages; up stage i concatenates the output of down stage 3 - i (the stem
/// output for the last one).
struct UNetSpec {
  int in_channels = 2;
  int out_channels = 4;
  int stem_channels = 64;
  int stem_kernel = 7;
  std::array<int, 4> down_channels{128, 256, 512, 512};
  std::array<int, 4> down_kernels{5, 5, 3, 3};
  std::array<int, 4> up_channels{256, 128, 64, 32};
  int up_kernel = 3;
  int head_kernel = 3;
  BlockKind block_kind = BlockKind::standard;

  void validate() const;
  /// Stable textual description used for fingerprints.
  std::string canonical() const;
  friend bool operator==(const UNetSpec&, const UNetSpec&) = default;
};

/// Hidden widths shared by the flow and interpolation networks.
struct ChannelPlan {
  int stem = 64;
  std::array<int, 4> down{128, 256, 512, 512};
  std::array<int, 4> up{256, 128, 64, 32};

  /// Every width multiplied by `factor` and rounded, never below 3.
  static ChannelPlan scaled(double factor);
  friend bool operator==(const ChannelPlan&, const ChannelPlan&) = default;
};

enum class Variant { global, task, task_multiscale };

/// "SSM-G", "SSM-T", "SSM-TMS".
std::string variant_name(Variant v);
/// Accepts the display names and the lower-case CLI spellings (ssm-g, ...).
Variant parse_variant(const std::string& name);

struct ModelSpec {
  Variant variant = Variant::task;
  /// nullopt means all bands (global model).
  std::optional<int> band;
  int channels = 1;
  UNetSpec flow_net;
  UNetSpec interp_net;

  static ModelSpec make(Variant variant, std::optional<int> band, const ChannelPlan& plan = {});

  void validate() const;
  /// FNV-1a hash of both network plans, as 16 hex digits.
  std::string fingerprint() const;
  /// True when the model may be applied to frames of `band_id`.
  bool accepts_band(int band_id) const { return !band || *band == band_id; }
};

// ---------------------------------------------------------------------------
// Modules

/// Convolution unit of a stage: a single same-padded convolution, or the
/// multi-scale block of parallel 3/5/7 convolutions whose outputs are
/// concatenated and channel-shuffled. Each branch of the multi-scale block
/// reads its own slice of the input channels.
class ConvUnitImpl : public torch::nn::Module {
 public:
  ConvUnitImpl(int in_channels, int out_channels, int kernel, BlockKind kind);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  BlockKind kind_;
  std::vector<std::pair<int64_t, int64_t>> input_slices_;  // (offset, length) per branch
  torch::nn::ModuleList branches_;
  torch::Tensor shuffle_;  // output channel permutation
};
TORCH_MODULE(ConvUnit);

class UNetImpl : public torch::nn::Module {
 public:
  explicit UNetImpl(const UNetSpec& spec);
  torch::Tensor forward(const torch::Tensor& x);

  const UNetSpec& spec() const noexcept { return spec_; }
  torch::nn::Conv2d head{nullptr};

 private:
  UNetSpec spec_;
  torch::nn::Conv2d stem_{nullptr};
  torch::nn::ModuleList down_;
  torch::nn::ModuleList up_;
};
TORCH_MODULE(UNet);

struct FlowPair {
  torch::Tensor f01;
  torch::Tensor f10;
};

struct InterpOutput {
  torch::Tensor f_t0;
  torch::Tensor f_t1;
  torch::Tensor v0;
  torch::Tensor v1;
};

/// Every intermediate of one interpolation; training consumes all of them.
struct PipelineOutput {
  FlowPair flows;
  IntermediateFlows approx;
  torch::Tensor g0;  // i0 warped by approx.to_start
  torch::Tensor g1;  // i1 warped by approx.to_end
  InterpOutput refined;
  torch::Tensor warped0;
  torch::Tensor warped1;
  torch::Tensor prediction;
};

/// Raw interpolation-network head: maps the stacked (N, 8C, H, W) input to
/// its (N, 5C, H, W) output.
using InterpHead = std::function<torch::Tensor(const torch::Tensor&)>;

/// Splits a raw (N, 4C, H, W) flow-network output into F_{0->1}, F_{1->0}.
FlowPair split_flow_output(const torch::Tensor& raw, int channels = 1);

/// Decodes a raw interpolation output: residual flows are added to the
/// approximations, v0 = clamp(sigmoid(logit)), v1 = 1 - v0.
InterpOutput decode_interp_output(const torch::Tensor& raw, const torch::Tensor& fhat_t0,
                                  const torch::Tensor& fhat_t1, int channels = 1);

/// Everything downstream of the flow network: intermediate-flow
/// approximation, the two warps, the interpolation head, the refined warps and
/// the visibility blend.
PipelineOutput complete_pipeline(const torch::Tensor& i0, const torch::Tensor& i1, const FlowPair& flows,
                                 const torch::Tensor& t, const InterpHead& head, int channels = 1);

/// Flow network plus interpolation network. Inputs are normalized
/// (N, 1, H, W) tensors with H and W divisible by 16.
class SlomoNetImpl : public torch::nn::Module {
 public:
  /// Weights are a deterministic function of `spec` and `seed`; torch's
  /// global generator state is restored afterwards.
  SlomoNetImpl(ModelSpec spec, std::uint64_t seed);

  FlowPair flow_forward(const torch::Tensor& i0, const torch::Tensor& i1);
  InterpOutput interp_forward(const torch::Tensor& i0, const torch::Tensor& i1, const torch::Tensor& fhat_t0,
                              const torch::Tensor& fhat_t1, const torch::Tensor& g0, const torch::Tensor& g1);
  PipelineOutput forward(const torch::Tensor& i0, const torch::Tensor& i1, const torch::Tensor& t);

  const ModelSpec& spec() const noexcept { return spec_; }
  std::uint64_t seed() const noexcept { return seed_; }

  UNet flow_net{nullptr};
  UNet interp_net{nullptr};

 private:
  ModelSpec spec_;
  std::uint64_t seed_;
};
TORCH_MODULE(SlomoNet);

inline constexpr float kVisibilityEpsilon = VisibilityMap::kEpsilon;

/// Number of learnable scalars.
std::int64_t param_count(const torch::nn::Module& module);
std::int64_t param_count(const ModelSpec& spec);

/// Physical-unit interpolation of one frame pair: normalizes with `stats`,
/// runs the full pipeline without gradients and de-normalizes the result.
/// Frames of any size are replicate-padded to a multiple of 16 internally.
Grid interpolate(SlomoNet& net, const ChannelStats& stats, const Grid& i0, const Grid& i1, BlendTime t);

// ---------------------------------------------------------------------------
// Checkpoints

struct Manifest {
  ModelSpec spec;
  NormStats norm;
  LossWeights weights;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
};

/// Frozen copy of a model's parameters plus its manifest.
class Checkpoint {
 public:
  static constexpr const char* kWeightsFile = "weights.pt";
  static constexpr const char* kManifestFile = "manifest.json";

  Checkpoint() = default;
  static Checkpoint capture(const SlomoNet& net, Manifest manifest);

  /// Builds a network from the manifest and loads the weights into it.
  SlomoNet instantiate() const;
  /// Copies the weights into `net`; ContractError on fingerprint mismatch.
  void restore_into(SlomoNet& net) const;

  void save(const std::filesystem::path& dir) const;
  static Checkpoint load(const std::filesystem::path& dir);

  const Manifest& manifest() const noexcept { return manifest_; }
  Manifest& manifest() noexcept { return manifest_; }
  const std::string& fingerprint() const noexcept { return fingerprint_; }
  const std::vector<std::pair<std::string, torch::Tensor>>& state() const noexcept { return state_; }

 private:
  Manifest manifest_;
  std::string fingerprint_;
  std::vector<std::pair<std::string, torch::Tensor>> state_;
};

std::string manifest_to_json(const Manifest& manifest, const std::string& fingerprint);
/// Returns the manifest and the recorded fingerprint.
std::pair<Manifest, std::string> manifest_from_json(const std::string& text);

}  // namespace geoslomo
