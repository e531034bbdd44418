#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "geoslomo/fields.hpp"
#include "geoslomo/grid.hpp"

namespace geoslomo {

// ---------------------------------------------------------------------------
// Band metadata

struct DynamicRange {
  double min = 0.0;
  double max = 1.0;
  double width() const noexcept { return max - min; }
  friend bool operator==(const DynamicRange&, const DynamicRange&) = default;
};

/// Spectral band description. dynamic_range is the physical interval used as
/// the PSNR peak (its width).
struct BandInfo {
  int band_id = 13;
  double central_wavelength_um = 10.3;
  double resolution_km = 2.0;
  std::string name = "\"Clean\" IR Longwave";
  DynamicRange dynamic_range{180.0, 330.0};

  void validate() const;
  friend bool operator==(const BandInfo&, const BandInfo&) = default;
};

/// The sixteen ABI bands of the GOES-R series. Reflective bands (1-6) use a
/// [0, 1] reflectance range and emissive bands (7-16) a brightness
/// temperature range in kelvin.
const std::array<BandInfo, 16>& abi_bands();

/// Looks up an ABI band by id (1-16); throws ParameterError otherwise.
const BandInfo& abi_band(int band_id);

// ---------------------------------------------------------------------------
// Frames

struct Frame {
  Grid pixels;
  BandInfo band;
  double timestamp = 0.0;  // seconds since epoch
};

/// Ordered, equally spaced frames sharing one band and one shape.
class FrameSequence {
 public:
  static constexpr std::size_t kMinSide = 8;
  static constexpr double kCadenceTolerance = 1e-3;  // seconds

  FrameSequence() = default;
  /// Validates all sequence invariants. `cadence` is only consulted for
  /// single-frame sequences; otherwise it is derived from the timestamps.
  explicit FrameSequence(std::vector<Frame> frames, double cadence = 0.0);

  std::size_t size() const noexcept { return frames_.size(); }
  bool empty() const noexcept { return frames_.empty(); }
  const Frame& operator[](std::size_t i) const { return frames_.at(i); }
  const std::vector<Frame>& frames() const noexcept { return frames_; }
  const BandInfo& band() const { return frames_.front().band; }
  std::size_t height() const { return frames_.front().pixels.height(); }
  std::size_t width() const { return frames_.front().pixels.width(); }
  double cadence() const noexcept { return cadence_; }
  std::vector<double> timestamps() const;

 private:
  std::vector<Frame> frames_;
  double cadence_ = 0.0;
};

// ---------------------------------------------------------------------------
// Normalization

struct ChannelStats {
  double mean = 0.0;
  double std = 1.0;

  double normalize(double x) const noexcept { return (x - mean) / std; }
  double denormalize(double z) const noexcept { return z * std + mean; }
  friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

/// Per-band standardization statistics keyed by band id.
class NormStats {
 public:
  void set(int band_id, ChannelStats stats);
  const ChannelStats& at(int band_id) const;
  bool contains(int band_id) const { return bands_.count(band_id) != 0; }
  const std::map<int, ChannelStats>& bands() const noexcept { return bands_; }
  bool empty() const noexcept { return bands_.empty(); }

  friend bool operator==(const NormStats&, const NormStats&) = default;

 private:
  std::map<int, ChannelStats> bands_;
};

/// Population mean/std per band over every pixel of every frame.
/// Throws DegenerateDataError when a band has zero variance.
NormStats compute_norm_stats(std::span<const FrameSequence> sequences);

Grid normalize(const Grid& grid, const ChannelStats& stats);
Grid denormalize(const Grid& grid, const ChannelStats& stats);

// ---------------------------------------------------------------------------
// GEOF container

/// Raw contents of a GEOF file: T*C*H*W float32 values in (t, c, row, col)
/// order.
struct GeofArray {
  std::uint32_t frames = 0;
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> values;
};

struct GeofHeader {
  std::uint16_t version = 1;
  std::uint32_t frames = 0;
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint8_t dtype = 1;
};

inline constexpr std::size_t kGeofHeaderSize = 32;

std::vector<std::uint8_t> encode_geof(const GeofArray& array);
GeofArray decode_geof(std::span<const std::uint8_t> bytes);
GeofHeader decode_geof_header(std::span<const std::uint8_t> bytes);

void write_geof(const GeofArray& array, const std::filesystem::path& path);
GeofArray read_geof(const std::filesystem::path& path);
GeofHeader read_geof_header(const std::filesystem::path& path);

/// Sidecar path: "dir/name.geof" -> "dir/name.meta.json".
std::filesystem::path metadata_path(const std::filesystem::path& geof_path);
/// Ground-truth flow path: "dir/name.geof" -> "dir/name.flow.geof".
std::filesystem::path flow_path(const std::filesystem::path& geof_path);

struct SequenceMetadata {
  BandInfo band;
  std::vector<double> timestamps;
  std::optional<ChannelStats> norm;
};

/// Writes the container plus its ".meta.json" sidecar.
void write_frames(const FrameSequence& seq, const std::filesystem::path& path,
                  const std::optional<ChannelStats>& norm = std::nullopt);
FrameSequence read_frames(const std::filesystem::path& path);
SequenceMetadata read_metadata(const std::filesystem::path& geof_path);

/// Flow lists are stored as a C=2 container (u then v per frame).
void write_flows(std::span<const FlowField> flows, const std::filesystem::path& path);
std::vector<FlowField> read_flows(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic advection scenes

struct Translation {
  double dx = 0.0;  // pixels per frame
  double dy = 0.0;
};

/// Rigid rotation about (cx, cy); omega in radians per frame.
struct SolidRotation {
  double cx = 0.0;
  double cy = 0.0;
  double omega = 0.0;
};

/// Rotation whose angle decays as exp(-r^2 / (2 radius^2)) away from the core.
struct GaussianVortex {
  double cx = 0.0;
  double cy = 0.0;
  double omega = 0.0;
  double radius = 8.0;
};

using MotionPrimitive = std::variant<Translation, SolidRotation, GaussianVortex>;

struct BlobTexture {
  std::size_t count = 24;  // blobs per visible area
  double min_sigma = 3.0;
  double max_sigma = 8.0;
  double min_amplitude = -40.0;
  double max_amplitude = 20.0;
  double background = 270.0;
};

/// Brightness change that rides with the flow: every frame adds
/// `delta_per_frame * exp(-r^2 / (2 radius^2))` around (cx, cy).
struct RampEvent {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 6.0;
  double delta_per_frame = -2.0;
};

struct SyntheticScene {
  std::uint64_t seed = 0;
  std::vector<MotionPrimitive> motion;
  BlobTexture texture;
  std::vector<RampEvent> ramps;
  std::size_t frames = 15;
  std::size_t height = 64;
  std::size_t width = 64;
  double cadence_s = 60.0;
  double start_time = 0.0;
  BandInfo band;

  /// Throws ParameterError naming the offending field.
  void validate() const;
  /// Largest per-frame displacement over the pixel centers.
  double max_displacement() const;
};

struct SyntheticSequence {
  FrameSequence sequence;
  /// flows[k] carries frame k onto frame k + 1: frame_k(p) = frame_{k+1}(p + flows[k](p)).
  std::vector<FlowField> flows;
};

/// Semi-Lagrangian advection of an analytic blob texture. The last frame
/// samples the texture directly; each earlier frame is the clamped bilinear
/// backward warp of its successor by flows[k], computed on a padded canvas, so
/// backward_warp(frame_{k+1}, flows[k]) reproduces frame k away from the border.
/// Ramp deltas accumulate along pathlines on top of the advected texture.
SyntheticSequence generate_synthetic(const SyntheticScene& scene);

/// Ranges from which randomized scenes are drawn.
struct SceneDistribution {
  std::size_t frames = 15;
  std::size_t height = 64;
  std::size_t width = 64;
  double cadence_s = 60.0;
  BandInfo band;
  BlobTexture texture;
  double max_speed = 1.0;          // translation, pixels per frame
  double max_rotation = 0.0;       // solid rotation, radians per frame
  double vortex_probability = 0.0;
  double max_vortex_omega = 0.05;
  std::size_t max_ramps = 0;
  double max_ramp_delta = 2.0;
  double ramp_radius_min = 4.0;
  double ramp_radius_max = 10.0;
};

SyntheticScene sample_scene(const SceneDistribution& dist, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Point series

struct SeriesPoint {
  double timestamp = 0.0;
  double value = 0.0;
  friend bool operator==(const SeriesPoint&, const SeriesPoint&) = default;
};

/// Nearest-pixel read-out of one location through the sequence, in the
/// sequence's physical units.
std::vector<SeriesPoint> extract_point_series(const FrameSequence& seq, PixelCoord pixel);

}  // namespace geoslomo
