#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "geoslomo/imagery.hpp"
#include "geoslomo/warpcore.hpp"
#include "oracles.hpp"

using namespace geoslomo;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "geoslomo_test_imagery";
  fs::create_directories(dir);
  return dir / name;
}

FrameSequence ramp_sequence(std::size_t frames, std::size_t h, std::size_t w) {
  std::vector<Frame> out;
  for (std::size_t k = 0; k < frames; ++k) {
    Grid g(h, w);
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) g(r, c) = static_cast<float>(k + 1) + 0.01f * static_cast<float>(r * w + c);
    out.push_back({std::move(g), abi_band(13), 60.0 * static_cast<double>(k)});
  }
  return FrameSequence(std::move(out));
}

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spill(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

GeofArray small_array() {
  GeofArray a;
  a.frames = 2;
  a.channels = 1;
  a.height = 8;
  a.width = 8;
  a.values.resize(128);
  for (std::size_t i = 0; i < a.values.size(); ++i) a.values[i] = static_cast<float>(i) * 0.5f;
  return a;
}

SyntheticScene translation_scene(double dx, double dy) {
  SyntheticScene s;
  s.seed = 11;
  s.motion.push_back(Translation{dx, dy});
  s.frames = 5;
  return s;
}

}  // namespace

TEST(BandInfo, TableCoversSixteenBands) {
  ASSERT_EQ(abi_bands().size(), 16u);
  for (int b = 1; b <= 16; ++b) {
    EXPECT_EQ(abi_band(b).band_id, b);
    EXPECT_LT(abi_band(b).dynamic_range.min, abi_band(b).dynamic_range.max);
  }
  EXPECT_DOUBLE_EQ(abi_band(13).central_wavelength_um, 10.3);
  EXPECT_DOUBLE_EQ(abi_band(2).resolution_km, 0.5);
  EXPECT_THROW(abi_band(0), ParameterError);
  EXPECT_THROW(abi_band(17), ParameterError);
}

TEST(FrameSequence, RejectsSmallFrames) {
  std::vector<Frame> f{{Grid(7, 8, 1.0f), abi_band(13), 0.0}};
  EXPECT_THROW(FrameSequence(std::move(f)), ValidationError);
}

TEST(FrameSequence, RejectsUnevenTimestamps) {
  std::vector<Frame> f{{Grid(8, 8, 1.0f), abi_band(13), 0.0},
                       {Grid(8, 8, 1.0f), abi_band(13), 60.0},
                       {Grid(8, 8, 1.0f), abi_band(13), 121.0}};
  EXPECT_THROW(FrameSequence(std::move(f)), ValidationError);
}

TEST(FrameSequence, ToleratesSubMillisecondJitter) {
  std::vector<Frame> f{{Grid(8, 8, 1.0f), abi_band(13), 0.0},
                       {Grid(8, 8, 1.0f), abi_band(13), 60.0},
                       {Grid(8, 8, 1.0f), abi_band(13), 120.0005}};
  EXPECT_NO_THROW(FrameSequence(std::move(f)));
}

TEST(FrameSequence, RejectsNonFinitePixels) {
  Grid g(8, 8, 1.0f);
  g(3, 3) = NAN;
  std::vector<Frame> f{{g, abi_band(13), 0.0}};
  EXPECT_THROW(FrameSequence(std::move(f)), ValidationError);
}

TEST(FrameSequence, RejectsMixedBands) {
  std::vector<Frame> f{{Grid(8, 8, 1.0f), abi_band(13), 0.0}, {Grid(8, 8, 1.0f), abi_band(14), 60.0}};
  EXPECT_THROW(FrameSequence(std::move(f)), ValidationError);
}

TEST(Geof, RoundTripIsBitExact) {
  const auto seq = ramp_sequence(3, 16, 16);
  const auto path = scratch("roundtrip.geof");
  write_frames(seq, path);
  const auto back = read_frames(path);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(std::memcmp(back[k].pixels.values().data(), seq[k].pixels.values().data(), 16 * 16 * sizeof(float)), 0);
    EXPECT_EQ(back[k].timestamp, seq[k].timestamp);
  }
  EXPECT_EQ(back.band(), seq.band());
}

TEST(Geof, HeaderLayout) {
  const auto bytes = encode_geof(small_array());
  ASSERT_EQ(bytes.size(), kGeofHeaderSize + 128 * 4);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "GEOF");
  EXPECT_EQ(bytes[4], 1);  // version, little-endian
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[8], 2);   // T
  EXPECT_EQ(bytes[12], 1);  // C
  EXPECT_EQ(bytes[16], 8);  // H
  EXPECT_EQ(bytes[20], 8);  // W
  EXPECT_EQ(bytes[24], 1);  // dtype
  for (std::size_t i = 25; i < 32; ++i) EXPECT_EQ(bytes[i], 0);
  float second;
  std::memcpy(&second, bytes.data() + 32 + 4, 4);
  EXPECT_EQ(second, 0.5f);
}

TEST(Geof, BadMagicReportsOffsetZero) {
  auto bytes = encode_geof(small_array());
  std::memcpy(bytes.data(), "XXXX", 4);
  try {
    decode_geof(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(Geof, BadVersionReportsOffsetFour) {
  auto bytes = encode_geof(small_array());
  bytes[4] = 2;
  try {
    decode_geof(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
}

TEST(Geof, BadDtypeReportsOffset24) {
  auto bytes = encode_geof(small_array());
  bytes[24] = 2;
  try {
    decode_geof(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 24u);
  }
}

TEST(Geof, ZeroHeightIsValidationError) {
  auto bytes = encode_geof(small_array());
  std::memset(bytes.data() + 16, 0, 4);
  EXPECT_THROW(decode_geof(bytes), ValidationError);
}

TEST(Geof, TruncatedPayloadIsFormatError) {
  auto bytes = encode_geof(small_array());
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(decode_geof(bytes), FormatError);
}

TEST(Geof, NanPayloadIsValidationError) {
  auto a = small_array();
  a.values[17] = NAN;
  auto bytes = encode_geof(a);
  EXPECT_THROW(decode_geof(bytes), ValidationError);
}

TEST(Geof, CorruptFileOnDisk) {
  const auto seq = ramp_sequence(2, 8, 8);
  const auto path = scratch("corrupt.geof");
  write_frames(seq, path);
  auto bytes = slurp(path);
  bytes[0] = 'X';
  spill(path, bytes);
  EXPECT_THROW(read_frames(path), FormatError);
}

TEST(Geof, MissingFileIsIoError) { EXPECT_THROW(read_frames(scratch("absent.geof")), IoError); }

TEST(Geof, SidecarPaths) {
  EXPECT_EQ(metadata_path("d/a.geof"), fs::path("d/a.meta.json"));
  EXPECT_EQ(flow_path("d/a.geof"), fs::path("d/a.flow.geof"));
}

TEST(Geof, MetadataCarriesBandAndNorm) {
  const auto seq = ramp_sequence(2, 8, 8);
  const auto path = scratch("meta.geof");
  write_frames(seq, path, ChannelStats{270.0, 12.5});
  const auto meta = read_metadata(path);
  EXPECT_EQ(meta.band.band_id, 13);
  EXPECT_EQ(meta.timestamps, (std::vector<double>{0.0, 60.0}));
  ASSERT_TRUE(meta.norm.has_value());
  EXPECT_EQ(meta.norm->mean, 270.0);
  EXPECT_EQ(meta.norm->std, 12.5);
}

TEST(Geof, FlowsRoundTrip) {
  auto scene = translation_scene(0.75, -0.25);
  const auto s = generate_synthetic(scene);
  const auto path = scratch("flows.flow.geof");
  write_flows(s.flows, path);
  const auto back = read_flows(path);
  ASSERT_EQ(back.size(), s.flows.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i], s.flows[i]);
}

TEST(NormStats, PopulationConvention) {
  // {0, 0, 2, 2}: mean 1, population variance ((1 + 1 + 1 + 1) / 4) = 1.
  std::vector<double> px{0, 0, 2, 2};
  double mean = 0.0, var = 0.0;
  for (double v : px) mean += v / 4.0;
  for (double v : px) var += (v - mean) * (v - mean) / 4.0;

  Grid g(8, 8);
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 8; ++c) g(r, c) = static_cast<float>(px[(r * 8 + c) % 4]);
  const std::vector<FrameSequence> seqs{FrameSequence({{g, abi_band(13), 0.0}})};
  const auto stats = compute_norm_stats(seqs).at(13);
  EXPECT_DOUBLE_EQ(stats.mean, mean);
  EXPECT_DOUBLE_EQ(stats.std, std::sqrt(var));
  EXPECT_DOUBLE_EQ(stats.mean, 1.0);
  EXPECT_DOUBLE_EQ(stats.std, 1.0);
}

TEST(NormStats, ConstantInputIsDegenerate) {
  const std::vector<FrameSequence> seqs{FrameSequence({{Grid(8, 8, 5.0f), abi_band(13), 0.0}})};
  EXPECT_THROW(compute_norm_stats(seqs), DegenerateDataError);
}

TEST(NormStats, NormalizeMeanIsZeroAndInvolution) {
  const auto seq = ramp_sequence(4, 16, 16);
  const std::vector<FrameSequence> seqs{seq};
  const auto stats = compute_norm_stats(seqs).at(13);
  const float m = static_cast<float>(stats.mean);
  EXPECT_EQ(normalize(Grid(8, 8, m), ChannelStats{m, stats.std})(0, 0), 0.0f);
  const Grid back = denormalize(normalize(seq[2].pixels, stats), stats);
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_NEAR(back.values()[i], seq[2].pixels.values()[i], 1e-6 * std::abs(seq[2].pixels.values()[i]));
  }
}

TEST(NormStats, MissingBandIsContractError) {
  NormStats n;
  n.set(13, {1.0, 2.0});
  EXPECT_THROW(n.at(7), ContractError);
}

TEST(Synthetic, NoMotionNoRampsIsStatic) {
  SyntheticScene s;
  s.seed = 5;
  s.frames = 4;
  const auto out = generate_synthetic(s);
  ASSERT_EQ(out.sequence.size(), 4u);
  ASSERT_EQ(out.flows.size(), 3u);
  for (std::size_t k = 1; k < 4; ++k) EXPECT_EQ(out.sequence[k].pixels, out.sequence[0].pixels);
  for (const auto& f : out.flows) EXPECT_EQ(f, FlowField::zeros(64, 64));
}

TEST(Synthetic, UnitTranslationShiftsByOnePixel) {
  const auto out = generate_synthetic(translation_scene(1.0, 0.0));
  const auto& seq = out.sequence;
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < seq.size(); ++k) {
    for (std::size_t r = 2; r < 62; ++r)
      for (std::size_t c = 2; c < 62; ++c)
        worst = std::max(worst, std::abs(static_cast<double>(seq[k + 1].pixels(r, c)) - seq[k].pixels(r, c - 1)));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  SceneDistribution d;
  d.max_rotation = 0.02;
  d.max_ramps = 2;
  const auto a = generate_synthetic(sample_scene(d, 99));
  const auto b = generate_synthetic(sample_scene(d, 99));
  for (std::size_t k = 0; k < a.sequence.size(); ++k) EXPECT_EQ(a.sequence[k].pixels, b.sequence[k].pixels);
  const auto c = generate_synthetic(sample_scene(d, 100));
  EXPECT_NE(a.sequence[0].pixels, c.sequence[0].pixels);
}

TEST(Synthetic, DisplacementBoundIsParameterError) {
  auto s = translation_scene(17.0, 0.0);
  EXPECT_THROW(s.validate(), ParameterError);
  EXPECT_THROW(generate_synthetic(s), ParameterError);
  EXPECT_NO_THROW(translation_scene(16.0, 0.0).validate());
}

TEST(Synthetic, RotationFlowMatchesRigidMotion) {
  SyntheticScene s;
  s.seed = 2;
  s.frames = 3;
  s.motion.push_back(SolidRotation{31.5, 31.5, 0.05});
  const auto out = generate_synthetic(s);
  const FlowField& f = out.flows[0];
  // Point (col 41.5, row 31.5) is 10 px right of the center.
  const std::size_t r = 31, c = 41;
  const double x = c - 31.5, y = r - 31.5;
  EXPECT_NEAR(f.u()(r, c), x * std::cos(0.05) - y * std::sin(0.05) - x, 1e-5);
  EXPECT_NEAR(f.v()(r, c), x * std::sin(0.05) + y * std::cos(0.05) - y, 1e-5);
}

TEST(Synthetic, WarpingNextFrameReconstructsPrevious) {
  SceneDistribution d;
  d.max_speed = 1.5;
  d.max_rotation = 0.02;
  d.vortex_probability = 0.5;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto out = generate_synthetic(sample_scene(d, seed));
    const std::vector<FrameSequence> seqs{out.sequence};
    const auto stats = compute_norm_stats(seqs).at(13);
    for (std::size_t k = 0; k + 1 < out.sequence.size(); k += 4) {
      const auto rebuilt = oracle::warp(out.sequence[k + 1].pixels, out.flows[k]);
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t r = 4; r < 60; ++r)
        for (std::size_t c = 4; c < 60; ++c) {
          const double e = (rebuilt[r * 64 + c] - out.sequence[k].pixels(r, c)) / stats.std;
          sum += e * e;
          ++n;
        }
      EXPECT_LT(std::sqrt(sum / static_cast<double>(n)), 1e-3) << "seed " << seed << " frame " << k;
    }
  }
}

TEST(Synthetic, RampAddsBrightnessChange) {
  SyntheticScene s;
  s.seed = 4;
  s.frames = 3;
  s.ramps.push_back(RampEvent{20.0, 30.0, 5.0, -3.0});
  const auto out = generate_synthetic(s);
  const double d1 = out.sequence[1].pixels(30, 20) - out.sequence[0].pixels(30, 20);
  const double d2 = out.sequence[2].pixels(30, 20) - out.sequence[1].pixels(30, 20);
  EXPECT_NEAR(d1, -3.0, 1e-4);
  EXPECT_NEAR(d2, -3.0, 1e-4);
  EXPECT_NEAR(out.sequence[1].pixels(2, 60), out.sequence[0].pixels(2, 60), 1e-4);
}

TEST(PointSeries, ReadsNearestPixel) {
  std::vector<Frame> f;
  for (int k = 0; k < 3; ++k) f.push_back({Grid(8, 8, static_cast<float>(k + 1)), abi_band(13), 10.0 * k});
  const FrameSequence seq(std::move(f));
  const auto s = extract_point_series(seq, {3, 4});
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0], (SeriesPoint{0.0, 1.0}));
  EXPECT_EQ(s[1], (SeriesPoint{10.0, 2.0}));
  EXPECT_EQ(s[2], (SeriesPoint{20.0, 3.0}));
}

TEST(PointSeries, OnePastTheEndIsRangeError) {
  const auto seq = ramp_sequence(2, 8, 8);
  EXPECT_THROW(extract_point_series(seq, {8, 8}), RangeError);
  EXPECT_THROW(extract_point_series(seq, {0, 8}), RangeError);
  EXPECT_NO_THROW(extract_point_series(seq, {7, 7}));
}
