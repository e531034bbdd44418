#include <cmath>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "geoslomo/warpcore.hpp"
#include "oracles.hpp"

using namespace geoslomo;

namespace {

Grid x_ramp(std::size_t h, std::size_t w) {
  Grid g(h, w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) g(r, c) = static_cast<float>(c);
  return g;
}

FlowField random_flow(std::size_t h, std::size_t w, Rng& rng, double mag) {
  return FlowField(oracle::random_grid(h, w, rng, -mag, mag), oracle::random_grid(h, w, rng, -mag, mag));
}

}  // namespace

TEST(BackwardWarp, ZeroFlowIsIdentity) {
  Rng rng(1);
  const Grid img = oracle::random_grid(16, 12, rng, -3, 3);
  EXPECT_EQ(backward_warp(img, FlowField::zeros(16, 12)), img);
}

TEST(BackwardWarp, UnitShiftOfRamp) {
  const Grid out = backward_warp(x_ramp(10, 10), FlowField::uniform(10, 10, 1.0f, 0.0f));
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t c = 0; c + 1 < 10; ++c) EXPECT_EQ(out(r, c), static_cast<float>(c + 1));
  // Last column samples past the border and clamps.
  EXPECT_EQ(out(4, 9), 9.0f);
}

TEST(BackwardWarp, HalfShiftMatchesBilinearOracle) {
  const Grid img = x_ramp(10, 10);
  const FlowField f = FlowField::uniform(10, 10, 0.5f, 0.0f);
  const Grid out = backward_warp(img, f);
  const auto ref = oracle::warp(img, f);
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t c = 0; c + 1 < 10; ++c) {
      EXPECT_NEAR(out(r, c), ref[r * 10 + c], 1e-6);
      EXPECT_NEAR(out(r, c), c + 0.5, 1e-6);
    }
}

TEST(BackwardWarp, RandomFlowMatchesOracle) {
  Rng rng(2);
  const Grid img = oracle::random_grid(20, 24, rng, 200, 300);
  const FlowField f = random_flow(20, 24, rng, 4.0);
  const Grid out = backward_warp(img, f);
  const auto ref = oracle::warp(img, f);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out.values()[i], ref[i], 1e-6 * 300);
}

TEST(BackwardWarp, ConstantImageIsAbsorbed) {
  Rng rng(3);
  const Grid out = backward_warp(Grid(12, 12, 7.25f), random_flow(12, 12, rng, 30.0));
  for (float v : out.values()) EXPECT_EQ(v, 7.25f);
}

TEST(BackwardWarp, LinearInImage) {
  Rng rng(4);
  const Grid x = oracle::random_grid(16, 16, rng, -1, 1);
  const Grid y = oracle::random_grid(16, 16, rng, -1, 1);
  const FlowField f = random_flow(16, 16, rng, 3.0);
  Grid combo(16, 16);
  for (std::size_t i = 0; i < combo.size(); ++i) combo.values()[i] = 2.0f * x.values()[i] - 0.5f * y.values()[i];
  const Grid lhs = backward_warp(combo, f);
  const Grid wx = backward_warp(x, f);
  const Grid wy = backward_warp(y, f);
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    EXPECT_NEAR(lhs.values()[i], 2.0 * wx.values()[i] - 0.5 * wy.values()[i], 1e-6);
  }
}

TEST(BackwardWarp, ShapeMismatchIsContractError) {
  EXPECT_THROW(backward_warp(Grid(8, 8), FlowField::zeros(8, 9)), ContractError);
  EXPECT_THROW(backward_warp(torch::zeros({1, 1, 8, 8}), torch::zeros({1, 2, 8, 9})), ContractError);
  EXPECT_THROW(backward_warp(torch::zeros({1, 1, 8, 8}), torch::zeros({1, 3, 8, 8})), ContractError);
}

TEST(BackwardWarp, NonFiniteFlowIsValidationError) {
  auto flow = torch::zeros({1, 2, 8, 8});
  flow[0][1][3][3] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(backward_warp(torch::ones({1, 1, 8, 8}), flow), ValidationError);
  Grid u(8, 8);
  u(0, 0) = NAN;
  EXPECT_THROW(FlowField(u, Grid(8, 8)), ValidationError);
}

TEST(BackwardWarp, GradientsMatchFiniteDifferences) {
  torch::manual_seed(0);
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  for (int trial = 0; trial < 4; ++trial) {
    const auto image = torch::randn({1, 1, 8, 8}, opts);
    const auto flow = (torch::rand({1, 2, 8, 8}, opts) - 0.5) * 3.0;
    const auto weight = torch::randn({1, 1, 8, 8}, opts);

    auto img = image.clone().requires_grad_(true);
    auto fl = flow.clone().requires_grad_(true);
    (backward_warp(img, fl) * weight).sum().backward();

    auto f_img = [&](const torch::Tensor& x) { return (backward_warp(x, flow) * weight).sum().item<double>(); };
    auto f_flow = [&](const torch::Tensor& x) { return (backward_warp(image, x) * weight).sum().item<double>(); };
    EXPECT_LT(oracle::rel_error(img.grad(), oracle::numeric_grad(f_img, image)), 1e-4);
    EXPECT_LT(oracle::rel_error(fl.grad(), oracle::numeric_grad(f_flow, flow)), 1e-4);
  }
}

TEST(BackwardWarp, FlowGradientVanishesWhereClamped) {
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto image = torch::randn({1, 1, 8, 8}, opts);
  auto flow = torch::full({1, 2, 8, 8}, 20.0, opts).requires_grad_(true);
  backward_warp(image, flow).sum().backward();
  EXPECT_EQ(flow.grad().abs().max().item<double>(), 0.0);
}

TEST(BackwardWarp, BatchedMatchesPerSample) {
  torch::manual_seed(1);
  const auto image = torch::randn({3, 1, 16, 16});
  const auto flow = torch::randn({3, 2, 16, 16}) * 2;
  const auto batched = backward_warp(image, flow);
  for (int64_t n = 0; n < 3; ++n) {
    EXPECT_TRUE(torch::equal(batched[n], backward_warp(image.narrow(0, n, 1), flow.narrow(0, n, 1))[0]));
  }
}

TEST(IntermediateFlows, Endpoints) {
  Rng rng(5);
  const FlowField f01 = random_flow(8, 8, rng, 2.0);
  const FlowField f10 = random_flow(8, 8, rng, 2.0);
  auto [a0, a1] = approx_intermediate_flows(f01, f10, BlendTime{0.0});
  EXPECT_EQ(a0, FlowField::zeros(8, 8));
  EXPECT_EQ(a1, f01);
  auto [b0, b1] = approx_intermediate_flows(f01, f10, BlendTime{1.0});
  EXPECT_EQ(b0, f10);
  EXPECT_EQ(b1, FlowField::zeros(8, 8));
}

TEST(IntermediateFlows, OpposedConstantFlowsAtHalf) {
  // f01 = c, f10 = -c, t = 1/2: -(1/4) c + (1/4)(-c) = -c/2 and (1/4) c - (1/4)(-c) = c/2.
  const double cu = 1.5, cv = -0.75, t = 0.5;
  const double t0u = -(1 - t) * t * cu + t * t * (-cu);
  const double t1u = (1 - t) * (1 - t) * cu - t * (1 - t) * (-cu);
  const double t0v = -(1 - t) * t * cv + t * t * (-cv);
  auto [f0, f1] = approx_intermediate_flows(FlowField::uniform(8, 8, 1.5f, -0.75f),
                                            FlowField::uniform(8, 8, -1.5f, 0.75f), BlendTime{t});
  EXPECT_DOUBLE_EQ(t0u, -0.75);
  EXPECT_DOUBLE_EQ(t1u, 0.75);
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_FLOAT_EQ(f0.u().values()[i], static_cast<float>(t0u));
    EXPECT_FLOAT_EQ(f0.v().values()[i], static_cast<float>(t0v));
    EXPECT_FLOAT_EQ(f1.u().values()[i], static_cast<float>(t1u));
  }
}

TEST(IntermediateFlows, ShapeMismatchIsContractError) {
  EXPECT_THROW(approx_intermediate_flows(FlowField::zeros(8, 8), FlowField::zeros(8, 16), BlendTime{0.5}),
               ContractError);
}

TEST(Blend, NearUnitVisibilityGivesMean) {
  Rng rng(6);
  const Grid w0 = oracle::random_grid(8, 8, rng, 0, 1);
  const Grid w1 = oracle::random_grid(8, 8, rng, 0, 1);
  const VisibilityMap ones(Grid(8, 8, 1.0f));
  const Grid out = blend_visibility(w0, w1, ones, ones, BlendTime{0.5});
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_NEAR(out.values()[i], 0.5 * (w0.values()[i] + w1.values()[i]), 1e-6);
  }
}

TEST(Blend, TimeWeightedMeanWithUnitVisibility) {
  Rng rng(7);
  const Grid w0 = oracle::random_grid(8, 8, rng, -2, 2);
  const Grid w1 = oracle::random_grid(8, 8, rng, -2, 2);
  const VisibilityMap ones(Grid(8, 8, 1.0f));
  for (double t : {0.1, 0.3, 0.7}) {
    const Grid out = blend_visibility(w0, w1, ones, ones, BlendTime{t});
    for (std::size_t i = 0; i < out.size(); ++i) {
      EXPECT_NEAR(out.values()[i], (1 - t) * w0.values()[i] + t * w1.values()[i], 1e-6);
    }
  }
}

TEST(Blend, EndpointsAreExact) {
  Rng rng(8);
  const Grid w0 = oracle::random_grid(8, 8, rng, 100, 300);
  const Grid w1 = oracle::random_grid(8, 8, rng, 100, 300);
  const VisibilityMap v0(oracle::random_grid(8, 8, rng, 0, 1));
  const VisibilityMap v1(oracle::random_grid(8, 8, rng, 0, 1));
  EXPECT_EQ(blend_visibility(w0, w1, v0, v1, BlendTime{0.0}), w0);
  EXPECT_EQ(blend_visibility(w0, w1, v0, v1, BlendTime{1.0}), w1);
}

TEST(Blend, OccludedSourceIsIgnored) {
  const double eps = VisibilityMap::kEpsilon;
  const double a = 3.0, b = 5.0, t = 0.5;
  const double expected = ((1 - t) * eps * a + t * (1 - eps) * b) / ((1 - t) * eps + t * (1 - eps));
  const Grid out = blend_visibility(Grid(8, 8, 3.0f), Grid(8, 8, 5.0f), VisibilityMap(Grid(8, 8, 0.0f)),
                                    VisibilityMap(Grid(8, 8, 1.0f)), BlendTime{t});
  EXPECT_NEAR(out(2, 2), expected, 1e-5 * b);
  EXPECT_NEAR(out(2, 2), b, 1e-5 * b);
}

TEST(Blend, ShapeMismatchIsContractError) {
  const VisibilityMap v(Grid(8, 8, 0.5f));
  EXPECT_THROW(blend_visibility(Grid(8, 8), Grid(8, 9), v, v, BlendTime{0.5}), ContractError);
}

TEST(Visibility, ClampedIntoOpenInterval) {
  Grid g(8, 8, 0.0f);
  g(0, 1) = 1.0f;
  g(0, 2) = 0.5f;
  const VisibilityMap v(g);
  EXPECT_EQ(v.weights()(0, 0), VisibilityMap::kEpsilon);
  EXPECT_EQ(v.weights()(0, 1), 1.0f - VisibilityMap::kEpsilon);
  EXPECT_EQ(v.weights()(0, 2), 0.5f);
}

TEST(BlendTimeTest, RejectsOutsideUnitInterval) {
  EXPECT_THROW(BlendTime{-0.01}, ParameterError);
  EXPECT_THROW(BlendTime{1.01}, ParameterError);
  EXPECT_THROW(BlendTime{NAN}, ParameterError);
  EXPECT_NO_THROW(BlendTime{0.0});
  EXPECT_NO_THROW(BlendTime{1.0});
}

TEST(Linear, Examples) {
  const Grid half = linear_interpolate(Grid(8, 8, 0.0f), Grid(8, 8, 1.0f), BlendTime{0.5});
  for (float v : half.values()) EXPECT_EQ(v, 0.5f);
  const Grid q = linear_interpolate(Grid(8, 8, 2.0f), Grid(8, 8, 6.0f), BlendTime{0.25});
  for (float v : q.values()) EXPECT_EQ(v, 3.0f);
  Rng rng(9);
  const Grid a = oracle::random_grid(8, 8, rng, 200, 300);
  const Grid b = oracle::random_grid(8, 8, rng, 200, 300);
  EXPECT_EQ(linear_interpolate(a, b, BlendTime{0.0}), a);
  EXPECT_EQ(linear_interpolate(a, b, BlendTime{1.0}), b);
  EXPECT_THROW(linear_interpolate(a, Grid(8, 9), BlendTime{0.5}), ContractError);
}

TEST(Conversions, RoundTrip) {
  Rng rng(10);
  const Grid g = oracle::random_grid(8, 12, rng, -5, 5);
  EXPECT_EQ(grid_from_tensor(to_tensor(g)), g);
  const FlowField f = random_flow(8, 12, rng, 3.0);
  EXPECT_EQ(flow_from_tensor(to_tensor(f)), f);
  EXPECT_EQ(to_tensor(f).sizes(), (std::vector<int64_t>{1, 2, 8, 12}));
  EXPECT_TRUE(torch::equal(to_tensor(f)[0][0], to_tensor(f.u())[0][0]));
}

TEST(Conversions, TimeTensorShape) {
  const std::vector<double> ts{0.25, 0.5};
  const auto t = time_tensor(ts);
  EXPECT_EQ(t.sizes(), (std::vector<int64_t>{2, 1, 1, 1}));
  EXPECT_EQ(t[1].item<float>(), 0.5f);
}
