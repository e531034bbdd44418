#include "geoslomo/imagery.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "geoslomo/errors.hpp"
#include "geoslomo/random.hpp"

namespace geoslomo {

bool Grid::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------------------
// Bands

void BandInfo::validate() const {
  if (band_id < 1 || band_id > 16) {
    throw ParameterError("band_id", "must be in 1..16, got " + std::to_string(band_id));
  }
  if (!(dynamic_range.min < dynamic_range.max)) {
    throw ParameterError("dynamic_range", "min must be strictly below max");
  }
}

const std::array<BandInfo, 16>& abi_bands() {
  // Wavelengths and resolutions follow the ABI band table. Dynamic ranges are
  // this library's PSNR peaks: reflectance for 1-6, brightness temperature (K)
  // for the emissive bands.
  static const std::array<BandInfo, 16> bands = {{
      {1, 0.47, 1.0, "Blue", {0.0, 1.0}},
      {2, 0.64, 0.5, "Red", {0.0, 1.0}},
      {3, 0.86, 1.0, "Veggie", {0.0, 1.0}},
      {4, 1.37, 1.0, "Cirrus", {0.0, 1.0}},
      {5, 1.6, 1.0, "Snow/Ice", {0.0, 1.0}},
      {6, 2.24, 2.0, "Cloud Particle Size", {0.0, 1.0}},
      {7, 3.9, 2.0, "Shortwave Window", {190.0, 400.0}},
      {8, 6.2, 2.0, "Upper-level Water Vapor", {180.0, 300.0}},
      {9, 6.9, 2.0, "Mid-level Water Vapor", {180.0, 300.0}},
      {10, 7.3, 2.0, "Low-Level Water Vapor", {180.0, 310.0}},
      {11, 8.4, 2.0, "Cloud-Top Phase", {180.0, 330.0}},
      {12, 9.6, 2.0, "Ozone", {180.0, 300.0}},
      {13, 10.3, 2.0, "\"Clean\" IR Longwave", {180.0, 330.0}},
      {14, 11.2, 2.0, "IR Longwave", {180.0, 330.0}},
      {15, 12.3, 2.0, "\"Dirty\" IR Longwave", {180.0, 330.0}},
      {16, 13.3, 2.0, "CO2 Longwave IR", {180.0, 300.0}},
  }};
  return bands;
}

const BandInfo& abi_band(int band_id) {
  if (band_id < 1 || band_id > 16) {
    throw ParameterError("band", "ABI band id must be in 1..16, got " + std::to_string(band_id));
  }
  return abi_bands()[static_cast<std::size_t>(band_id - 1)];
}

// ---------------------------------------------------------------------------
// FrameSequence

FrameSequence::FrameSequence(std::vector<Frame> frames, double cadence)
    : frames_(std::move(frames)), cadence_(cadence) {
  if (frames_.empty()) throw ValidationError("FrameSequence: no frames");
  const Frame& first = frames_.front();
  first.band.validate();
  if (first.pixels.height() < kMinSide || first.pixels.width() < kMinSide) {
    throw ValidationError("FrameSequence: frames must be at least 8x8, got " +
                          std::to_string(first.pixels.height()) + "x" +
                          std::to_string(first.pixels.width()));
  }
  for (std::size_t i = 0; i < frames_.size(); ++i) {
    const Frame& f = frames_[i];
    if (!f.pixels.same_shape(first.pixels)) {
      throw ValidationError("FrameSequence: frame " + std::to_string(i) + " has a different shape");
    }
    if (!(f.band == first.band)) {
      throw ValidationError("FrameSequence: frame " + std::to_string(i) + " has a different band");
    }
    if (!f.pixels.all_finite()) {
      throw ValidationError("FrameSequence: frame " + std::to_string(i) + " has non-finite pixels");
    }
    if (!std::isfinite(f.timestamp)) {
      throw ValidationError("FrameSequence: frame " + std::to_string(i) + " has a non-finite timestamp");
    }
  }
  if (frames_.size() >= 2) {
    cadence_ = frames_[1].timestamp - frames_[0].timestamp;
    if (!(cadence_ > 0.0)) throw ValidationError("FrameSequence: timestamps must be strictly increasing");
    for (std::size_t i = 1; i < frames_.size(); ++i) {
      const double step = frames_[i].timestamp - frames_[i - 1].timestamp;
      if (!(step > 0.0)) throw ValidationError("FrameSequence: timestamps must be strictly increasing");
      const double expected = frames_[0].timestamp + static_cast<double>(i) * cadence_;
      if (std::abs(frames_[i].timestamp - expected) > kCadenceTolerance) {
        throw ValidationError("FrameSequence: frame " + std::to_string(i) +
                              " breaks the equal spacing of timestamps");
      }
    }
  }
}

std::vector<double> FrameSequence::timestamps() const {
  std::vector<double> ts;
  ts.reserve(frames_.size());
  for (const auto& f : frames_) ts.push_back(f.timestamp);
  return ts;
}

// ---------------------------------------------------------------------------
// Normalization

void NormStats::set(int band_id, ChannelStats stats) {
  if (!(stats.std > 0.0) || !std::isfinite(stats.std) || !std::isfinite(stats.mean)) {
    throw DegenerateDataError("NormStats: std must be finite and positive for band " +
                              std::to_string(band_id));
  }
  bands_[band_id] = stats;
}

const ChannelStats& NormStats::at(int band_id) const {
  auto it = bands_.find(band_id);
  if (it == bands_.end()) {
    throw ContractError("NormStats: no statistics for band " + std::to_string(band_id));
  }
  return it->second;
}

NormStats compute_norm_stats(std::span<const FrameSequence> sequences) {
  struct Acc {
    double sum = 0.0;
    std::size_t n = 0;
  };
  std::map<int, Acc> means;
  for (const auto& seq : sequences) {
    for (const auto& f : seq.frames()) {
      auto& acc = means[f.band.band_id];
      for (float x : f.pixels.values()) acc.sum += x;
      acc.n += f.pixels.size();
    }
  }
  if (means.empty()) throw ContractError("compute_norm_stats: no frames");

  std::map<int, double> sq;
  for (const auto& seq : sequences) {
    for (const auto& f : seq.frames()) {
      const auto& acc = means[f.band.band_id];
      const double mean = acc.sum / static_cast<double>(acc.n);
      double& s = sq[f.band.band_id];
      for (float x : f.pixels.values()) {
        const double d = x - mean;
        s += d * d;
      }
    }
  }

  NormStats stats;
  for (const auto& [band, acc] : means) {
    const double mean = acc.sum / static_cast<double>(acc.n);
    const double sd = std::sqrt(sq[band] / static_cast<double>(acc.n));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      throw DegenerateDataError("compute_norm_stats: band " + std::to_string(band) +
                                " has zero variance");
    }
    stats.set(band, {mean, sd});
  }
  return stats;
}

Grid normalize(const Grid& grid, const ChannelStats& stats) {
  Grid out(grid.height(), grid.width());
  auto src = grid.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<float>(stats.normalize(src[i]));
  }
  return out;
}

Grid denormalize(const Grid& grid, const ChannelStats& stats) {
  Grid out(grid.height(), grid.width());
  auto src = grid.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<float>(stats.denormalize(src[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// GEOF container

namespace {

constexpr std::array<char, 4> kMagic = {'G', 'E', 'O', 'F'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kDtypeFloat32 = 1;

constexpr std::size_t kOffVersion = 4;
constexpr std::size_t kOffReserved = 6;
constexpr std::size_t kOffFrames = 8;
constexpr std::size_t kOffChannels = 12;
constexpr std::size_t kOffHeight = 16;
constexpr std::size_t kOffWidth = 20;
constexpr std::size_t kOffDtype = 24;
constexpr std::size_t kOffPadding = 25;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(u & 0xffu));
    u = static_cast<U>(u >> 8);
  }
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    u |= static_cast<std::make_unsigned_t<T>>(bytes[offset + i]) << (8 * i);
  }
  return static_cast<T>(u);
}

void require_bytes(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t n,
                   const char* what) {
  if (bytes.size() < offset + n) {
    throw FormatError(bytes.size(), std::string("truncated while reading ") + what);
  }
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spill(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

std::vector<std::uint8_t> encode_geof(const GeofArray& a) {
  const std::size_t n = std::size_t{a.frames} * a.channels * a.height * a.width;
  if (a.values.size() != n) throw ContractError("encode_geof: payload size does not match T*C*H*W");
  std::vector<std::uint8_t> out;
  out.reserve(kGeofHeaderSize + 4 * n);
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_le<std::uint16_t>(out, kVersion);
  put_le<std::uint16_t>(out, 0);
  put_le<std::uint32_t>(out, a.frames);
  put_le<std::uint32_t>(out, a.channels);
  put_le<std::uint32_t>(out, a.height);
  put_le<std::uint32_t>(out, a.width);
  out.push_back(kDtypeFloat32);
  out.insert(out.end(), 7, 0);
  for (float x : a.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(x));
  return out;
}

GeofHeader decode_geof_header(std::span<const std::uint8_t> bytes) {
  require_bytes(bytes, 0, kMagic.size(), "magic");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin(),
                  [](char c, std::uint8_t b) { return static_cast<std::uint8_t>(c) == b; })) {
    throw FormatError(0, "bad magic, expected \"GEOF\"");
  }
  require_bytes(bytes, 0, kGeofHeaderSize, "header");
  GeofHeader h;
  h.version = get_le<std::uint16_t>(bytes, kOffVersion);
  if (h.version != kVersion) {
    throw FormatError(kOffVersion, "unsupported version " + std::to_string(h.version));
  }
  if (get_le<std::uint16_t>(bytes, kOffReserved) != 0) {
    throw FormatError(kOffReserved, "reserved field must be zero");
  }
  h.frames = get_le<std::uint32_t>(bytes, kOffFrames);
  h.channels = get_le<std::uint32_t>(bytes, kOffChannels);
  h.height = get_le<std::uint32_t>(bytes, kOffHeight);
  h.width = get_le<std::uint32_t>(bytes, kOffWidth);
  h.dtype = bytes[kOffDtype];
  if (h.dtype != kDtypeFloat32) {
    throw FormatError(kOffDtype, "unsupported dtype " + std::to_string(h.dtype));
  }
  for (std::size_t i = kOffPadding; i < kGeofHeaderSize; ++i) {
    if (bytes[i] != 0) throw FormatError(i, "padding must be zero");
  }
  if (h.frames == 0) throw ValidationError("GEOF header: T must be at least 1");
  if (h.channels == 0) throw ValidationError("GEOF header: C must be at least 1");
  if (h.height < FrameSequence::kMinSide || h.width < FrameSequence::kMinSide) {
    throw ValidationError("GEOF header: H and W must be at least 8, got " +
                          std::to_string(h.height) + "x" + std::to_string(h.width));
  }
  return h;
}

GeofArray decode_geof(std::span<const std::uint8_t> bytes) {
  const GeofHeader h = decode_geof_header(bytes);
  const std::uint64_t n = std::uint64_t{h.frames} * h.channels * h.height * h.width;
  const std::uint64_t expected = kGeofHeaderSize + 4 * n;
  if (bytes.size() < expected) {
    throw FormatError(bytes.size(), "payload truncated, expected " + std::to_string(expected) +
                                        " bytes in total");
  }
  if (bytes.size() > expected) {
    throw FormatError(expected, "trailing bytes after payload");
  }
  GeofArray a{h.frames, h.channels, h.height, h.width, {}};
  a.values.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::size_t off = kGeofHeaderSize + 4 * i;
    const float x = std::bit_cast<float>(get_le<std::uint32_t>(bytes, off));
    if (!std::isfinite(x)) {
      throw ValidationError("GEOF payload: non-finite value at byte " + std::to_string(off));
    }
    a.values[i] = x;
  }
  return a;
}

void write_geof(const GeofArray& array, const std::filesystem::path& path) {
  spill(path, encode_geof(array));
}

GeofArray read_geof(const std::filesystem::path& path) { return decode_geof(slurp(path)); }

GeofHeader read_geof_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> head(kGeofHeaderSize);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  return decode_geof_header(head);
}

std::filesystem::path metadata_path(const std::filesystem::path& geof_path) {
  auto p = geof_path;
  return p.replace_extension(".meta.json");
}

std::filesystem::path flow_path(const std::filesystem::path& geof_path) {
  auto p = geof_path;
  return p.replace_extension(".flow.geof");
}

namespace {

nlohmann::json metadata_json(const FrameSequence& seq, const std::optional<ChannelStats>& norm) {
  const BandInfo& b = seq.band();
  nlohmann::json j;
  j["band_id"] = b.band_id;
  j["name"] = b.name;
  j["central_wavelength_um"] = b.central_wavelength_um;
  j["resolution_km"] = b.resolution_km;
  j["dynamic_range"] = {b.dynamic_range.min, b.dynamic_range.max};
  j["timestamps"] = seq.timestamps();
  if (norm) {
    j["norm"] = {{"mean", norm->mean}, {"std", norm->std}};
  } else {
    j["norm"] = nullptr;
  }
  return j;
}

}  // namespace

void write_frames(const FrameSequence& seq, const std::filesystem::path& path,
                  const std::optional<ChannelStats>& norm) {
  if (seq.empty()) throw ContractError("write_frames: empty sequence");
  GeofArray a;
  a.frames = static_cast<std::uint32_t>(seq.size());
  a.channels = 1;
  a.height = static_cast<std::uint32_t>(seq.height());
  a.width = static_cast<std::uint32_t>(seq.width());
  a.values.reserve(std::size_t{a.frames} * a.height * a.width);
  for (const auto& f : seq.frames()) {
    a.values.insert(a.values.end(), f.pixels.values().begin(), f.pixels.values().end());
  }
  write_geof(a, path);
  std::ofstream meta(metadata_path(path), std::ios::trunc);
  if (!meta) throw IoError("cannot write " + metadata_path(path).string());
  meta << metadata_json(seq, norm).dump(2) << '\n';
  if (!meta) throw IoError("short write to " + metadata_path(path).string());
}

SequenceMetadata read_metadata(const std::filesystem::path& geof_path) {
  const auto mp = metadata_path(geof_path);
  std::ifstream in(mp);
  if (!in) throw IoError("cannot open " + mp.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    SequenceMetadata m;
    m.band.band_id = j.at("band_id").get<int>();
    m.band.name = j.at("name").get<std::string>();
    m.band.central_wavelength_um = j.at("central_wavelength_um").get<double>();
    m.band.resolution_km = j.at("resolution_km").get<double>();
    const auto& dr = j.at("dynamic_range");
    if (!dr.is_array() || dr.size() != 2) throw ValidationError(mp.string() + ": dynamic_range must be [min, max]");
    m.band.dynamic_range = {dr[0].get<double>(), dr[1].get<double>()};
    m.timestamps = j.at("timestamps").get<std::vector<double>>();
    if (j.contains("norm") && !j["norm"].is_null()) {
      m.norm = ChannelStats{j["norm"].at("mean").get<double>(), j["norm"].at("std").get<double>()};
    }
    m.band.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(mp.string() + ": malformed metadata: " + e.what());
  }
}

FrameSequence read_frames(const std::filesystem::path& path) {
  const GeofArray a = read_geof(path);
  if (a.channels != 1) {
    throw ValidationError(path.string() + ": frame sequences are single-channel, file has C=" +
                          std::to_string(a.channels));
  }
  const SequenceMetadata meta = read_metadata(path);
  if (meta.timestamps.size() != a.frames) {
    throw ValidationError(path.string() + ": metadata lists " + std::to_string(meta.timestamps.size()) +
                          " timestamps for " + std::to_string(a.frames) + " frames");
  }
  const std::size_t plane = std::size_t{a.height} * a.width;
  std::vector<Frame> frames;
  frames.reserve(a.frames);
  for (std::size_t t = 0; t < a.frames; ++t) {
    std::vector<float> px(a.values.begin() + static_cast<std::ptrdiff_t>(t * plane),
                          a.values.begin() + static_cast<std::ptrdiff_t>((t + 1) * plane));
    frames.push_back({Grid(a.height, a.width, std::move(px)), meta.band, meta.timestamps[t]});
  }
  return FrameSequence(std::move(frames));
}

void write_flows(std::span<const FlowField> flows, const std::filesystem::path& path) {
  if (flows.empty()) throw ContractError("write_flows: no flows");
  GeofArray a;
  a.frames = static_cast<std::uint32_t>(flows.size());
  a.channels = 2;
  a.height = static_cast<std::uint32_t>(flows.front().height());
  a.width = static_cast<std::uint32_t>(flows.front().width());
  for (const auto& f : flows) {
    require_same_shape(f.u(), flows.front().u(), "write_flows");
    a.values.insert(a.values.end(), f.u().values().begin(), f.u().values().end());
    a.values.insert(a.values.end(), f.v().values().begin(), f.v().values().end());
  }
  write_geof(a, path);
}

std::vector<FlowField> read_flows(const std::filesystem::path& path) {
  const GeofArray a = read_geof(path);
  if (a.channels != 2) throw ValidationError(path.string() + ": flow files must have C=2");
  const std::size_t plane = std::size_t{a.height} * a.width;
  std::vector<FlowField> flows;
  for (std::size_t t = 0; t < a.frames; ++t) {
    auto at = [&](std::size_t c) {
      auto begin = a.values.begin() + static_cast<std::ptrdiff_t>((2 * t + c) * plane);
      return Grid(a.height, a.width, std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(plane)));
    };
    flows.emplace_back(at(0), at(1));
  }
  return flows;
}

// ---------------------------------------------------------------------------
// Synthetic scenes

namespace {

struct Point {
  double x;
  double y;
};

Point rotate_about(Point p, double cx, double cy, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double dx = p.x - cx;
  const double dy = p.y - cy;
  return {cx + c * dx - s * dy, cy + s * dx + c * dy};
}

// Applies one primitive's per-frame map (sign = +1) or its exact inverse (-1).
Point apply(const MotionPrimitive& m, Point p, double sign) {
  return std::visit(
      [&](const auto& prim) -> Point {
        using T = std::decay_t<decltype(prim)>;
        if constexpr (std::is_same_v<T, Translation>) {
          return {p.x + sign * prim.dx, p.y + sign * prim.dy};
        } else if constexpr (std::is_same_v<T, SolidRotation>) {
          return rotate_about(p, prim.cx, prim.cy, sign * prim.omega);
        } else {
          // Radius is preserved by the rotation, so the inverse is exact.
          const double r2 = (p.x - prim.cx) * (p.x - prim.cx) + (p.y - prim.cy) * (p.y - prim.cy);
          const double angle = prim.omega * std::exp(-r2 / (2.0 * prim.radius * prim.radius));
          return rotate_about(p, prim.cx, prim.cy, sign * angle);
        }
      },
      m);
}

Point forward_map(const std::vector<MotionPrimitive>& motion, Point p) {
  for (const auto& m : motion) p = apply(m, p, +1.0);
  return p;
}

Point inverse_map(const std::vector<MotionPrimitive>& motion, Point p) {
  for (auto it = motion.rbegin(); it != motion.rend(); ++it) p = apply(*it, p, -1.0);
  return p;
}

struct Blob {
  double x, y, sigma, amplitude;
};

}  // namespace

double SyntheticScene::max_displacement() const {
  double best = 0.0;
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const Point p{static_cast<double>(c), static_cast<double>(r)};
      const Point q = forward_map(motion, p);
      best = std::max(best, std::hypot(q.x - p.x, q.y - p.y));
    }
  }
  return best;
}

void SyntheticScene::validate() const {
  if (height < FrameSequence::kMinSide || width < FrameSequence::kMinSide) {
    throw ParameterError("height/width", "scenes must be at least 8x8");
  }
  if (frames < 1) throw ParameterError("frames", "must be at least 1");
  if (!(cadence_s > 0.0)) throw ParameterError("cadence_s", "must be positive");
  band.validate();
  if (texture.min_sigma <= 0.0 || texture.max_sigma < texture.min_sigma) {
    throw ParameterError("texture.sigma", "need 0 < min_sigma <= max_sigma");
  }
  if (texture.max_amplitude < texture.min_amplitude) {
    throw ParameterError("texture.amplitude", "need min_amplitude <= max_amplitude");
  }
  for (const auto& r : ramps) {
    if (!(r.radius > 0.0)) throw ParameterError("ramp_events.radius", "must be positive");
  }
  for (const auto& m : motion) {
    if (const auto* v = std::get_if<GaussianVortex>(&m); v && !(v->radius > 0.0)) {
      throw ParameterError("motion.vortex.radius", "must be positive");
    }
  }
  const double bound = static_cast<double>(std::min(height, width)) / 4.0;
  const double d = max_displacement();
  if (!(d <= bound)) {
    throw ParameterError("motion", "max displacement " + std::to_string(d) +
                                       " px/frame exceeds min(H, W)/4 = " + std::to_string(bound));
  }
}

SyntheticSequence generate_synthetic(const SyntheticScene& scene) {
  scene.validate();
  const std::size_t H = scene.height;
  const std::size_t W = scene.width;
  const BlobTexture& tex = scene.texture;
  Rng rng(scene.seed);

  // Blobs populate an enlarged box so that texture keeps flowing in.
  const double max_d = scene.max_displacement();
  const double travel = std::min(max_d * static_cast<double>(scene.frames),
                                 static_cast<double>(std::max(H, W)));
  const double margin = travel + 3.0 * tex.max_sigma;
  const double x0 = -margin;
  const double x1 = static_cast<double>(W - 1) + margin;
  const double y0 = -margin;
  const double y1 = static_cast<double>(H - 1) + margin;
  const double area_ratio = (x1 - x0) * (y1 - y0) / (static_cast<double>(W) * static_cast<double>(H));
  const auto n_blobs = static_cast<std::size_t>(std::llround(static_cast<double>(tex.count) * area_ratio));
  std::vector<Blob> blobs;
  blobs.reserve(n_blobs);
  for (std::size_t i = 0; i < n_blobs; ++i) {
    Blob b;
    b.x = rng.uniform(x0, x1);
    b.y = rng.uniform(y0, y1);
    b.sigma = rng.uniform(tex.min_sigma, tex.max_sigma);
    b.amplitude = rng.uniform(tex.min_amplitude, tex.max_amplitude);
    blobs.push_back(b);
  }

  auto texture_at = [&](Point p) {
    double v = tex.background;
    for (const auto& b : blobs) {
      const double dx = p.x - b.x;
      const double dy = p.y - b.y;
      const double r2 = dx * dx + dy * dy;
      const double s2 = b.sigma * b.sigma;
      if (r2 < 36.0 * s2) v += b.amplitude * std::exp(-r2 / (2.0 * s2));
    }
    return v;
  };
  auto ramp_rate_at = [&](Point p) {
    double v = 0.0;
    for (const auto& r : scene.ramps) {
      const double dx = p.x - r.cx;
      const double dy = p.y - r.cy;
      v += r.delta_per_frame * std::exp(-(dx * dx + dy * dy) / (2.0 * r.radius * r.radius));
    }
    return v;
  };

  // Texture is advected on a canvas padded by the total travel, so that the
  // clamped border never reaches the visible window. The last frame samples
  // the analytic texture; every earlier frame is the bilinear backward warp of
  // its successor: frame_k(p) = frame_{k+1}(forward(p)).
  const std::size_t K = scene.frames;
  const auto pad = static_cast<std::size_t>(std::ceil(std::min(max_d * static_cast<double>(K - 1),
                                                               static_cast<double>(std::max(H, W))))) + 2;
  const std::size_t CH = H + 2 * pad;
  const std::size_t CW = W + 2 * pad;
  const double off = static_cast<double>(pad);
  std::vector<double> cur(CH * CW);
  std::vector<double> sx(CH * CW);
  std::vector<double> sy(CH * CW);
  for (std::size_t r = 0; r < CH; ++r) {
    for (std::size_t c = 0; c < CW; ++c) {
      Point p{static_cast<double>(c) - off, static_cast<double>(r) - off};
      const Point q = forward_map(scene.motion, p);
      sx[r * CW + c] = q.x + off;
      sy[r * CW + c] = q.y + off;
      for (std::size_t j = 1; j < K; ++j) p = inverse_map(scene.motion, p);
      cur[r * CW + c] = texture_at(p);
    }
  }
  auto sample = [&](const std::vector<double>& img, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(CW - 1));
    y = std::clamp(y, 0.0, static_cast<double>(CH - 1));
    const auto x0 = static_cast<std::size_t>(x);
    const auto y0 = static_cast<std::size_t>(y);
    const std::size_t x1 = std::min(x0 + 1, CW - 1);
    const std::size_t y1 = std::min(y0 + 1, CH - 1);
    const double ax = x - static_cast<double>(x0);
    const double ay = y - static_cast<double>(y0);
    return (1 - ay) * ((1 - ax) * img[y0 * CW + x0] + ax * img[y0 * CW + x1]) +
           ay * ((1 - ax) * img[y1 * CW + x0] + ax * img[y1 * CW + x1]);
  };

  std::vector<Grid> planes(K, Grid(H, W));
  std::vector<double> next(CH * CW);
  for (std::size_t k = K; k-- > 0;) {
    if (k + 1 < K) {
      for (std::size_t i = 0; i < CH * CW; ++i) next[i] = sample(cur, sx[i], sy[i]);
      std::swap(cur, next);
    }
    for (std::size_t r = 0; r < H; ++r) {
      for (std::size_t c = 0; c < W; ++c) planes[k](r, c) = static_cast<float>(cur[(r + pad) * CW + c + pad]);
    }
  }

  if (!scene.ramps.empty()) {
    // Frame k has accumulated k ramp increments along the pathline.
    std::vector<Point> trace(K);
    for (std::size_t r = 0; r < H; ++r) {
      for (std::size_t c = 0; c < W; ++c) {
        trace[0] = {static_cast<double>(c), static_cast<double>(r)};
        for (std::size_t j = 1; j < K; ++j) trace[j] = inverse_map(scene.motion, trace[j - 1]);
        double acc = 0.0;
        for (std::size_t k = 1; k < K; ++k) {
          acc += ramp_rate_at(trace[k - 1]);
          planes[k](r, c) = static_cast<float>(planes[k](r, c) + acc);
        }
      }
    }
  }

  std::vector<Frame> frames;
  frames.reserve(scene.frames);
  for (std::size_t k = 0; k < scene.frames; ++k) {
    frames.push_back({std::move(planes[k]), scene.band,
                      scene.start_time + static_cast<double>(k) * scene.cadence_s});
  }

  Grid u(H, W);
  Grid v(H, W);
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      const Point p{static_cast<double>(c), static_cast<double>(r)};
      const Point q = forward_map(scene.motion, p);
      u(r, c) = static_cast<float>(q.x - p.x);
      v(r, c) = static_cast<float>(q.y - p.y);
    }
  }
  const FlowField flow(std::move(u), std::move(v));
  std::vector<FlowField> flows(scene.frames > 0 ? scene.frames - 1 : 0, flow);

  return {FrameSequence(std::move(frames), scene.cadence_s), std::move(flows)};
}

SyntheticScene sample_scene(const SceneDistribution& dist, std::uint64_t seed) {
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  SyntheticScene s;
  s.seed = rng.next();
  s.frames = dist.frames;
  s.height = dist.height;
  s.width = dist.width;
  s.cadence_s = dist.cadence_s;
  s.band = dist.band;
  s.texture = dist.texture;
  const double W = static_cast<double>(dist.width);
  const double H = static_cast<double>(dist.height);

  if (dist.max_speed > 0.0) {
    const double speed = rng.uniform(0.0, dist.max_speed);
    const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    s.motion.emplace_back(Translation{speed * std::cos(heading), speed * std::sin(heading)});
  }
  if (dist.max_rotation > 0.0) {
    s.motion.emplace_back(SolidRotation{rng.uniform(0.25 * W, 0.75 * W), rng.uniform(0.25 * H, 0.75 * H),
                                        rng.uniform(-dist.max_rotation, dist.max_rotation)});
  }
  if (dist.vortex_probability > 0.0 && rng.uniform(0.0, 1.0) < dist.vortex_probability) {
    s.motion.emplace_back(GaussianVortex{rng.uniform(0.2 * W, 0.8 * W), rng.uniform(0.2 * H, 0.8 * H),
                                         rng.uniform(-dist.max_vortex_omega, dist.max_vortex_omega),
                                         rng.uniform(0.1, 0.25) * std::min(W, H)});
  }
  if (dist.max_ramps > 0) {
    const auto n = static_cast<std::size_t>(rng.next() % (dist.max_ramps + 1));
    for (std::size_t i = 0; i < n; ++i) {
      s.ramps.push_back({rng.uniform(0.0, W - 1.0), rng.uniform(0.0, H - 1.0),
                         rng.uniform(dist.ramp_radius_min, dist.ramp_radius_max),
                         rng.uniform(-dist.max_ramp_delta, dist.max_ramp_delta)});
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Point series

std::vector<SeriesPoint> extract_point_series(const FrameSequence& seq, PixelCoord pixel) {
  if (seq.empty()) throw ContractError("extract_point_series: empty sequence");
  if (pixel.row >= seq.height() || pixel.col >= seq.width()) {
    throw RangeError("extract_point_series: pixel (" + std::to_string(pixel.row) + ", " +
                     std::to_string(pixel.col) + ") outside " + std::to_string(seq.height()) + "x" +
                     std::to_string(seq.width()) + " grid");
  }
  std::vector<SeriesPoint> out;
  out.reserve(seq.size());
  for (const auto& f : seq.frames()) out.push_back({f.timestamp, f.pixels(pixel.row, pixel.col)});
  return out;
}

}  // namespace geoslomo
