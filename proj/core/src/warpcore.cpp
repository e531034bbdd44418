#include "geoslomo/warpcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <torch/autograd.h>
#include <torch/torch.h>

#include "geoslomo/errors.hpp"

namespace geoslomo {

VisibilityMap::VisibilityMap(Grid weights) : w_(std::move(weights)) {
  for (float& x : w_.values()) {
    if (!std::isfinite(x)) throw ValidationError("VisibilityMap: non-finite weight");
    x = std::clamp(x, kEpsilon, 1.0f - kEpsilon);
  }
}

namespace {

std::string shape_of(const torch::Tensor& t) {
  std::string s = "(";
  for (int64_t i = 0; i < t.dim(); ++i) s += (i ? ", " : "") + std::to_string(t.size(i));
  return s + ")";
}

void check_warp_args(const torch::Tensor& image, const torch::Tensor& flow) {
  if (image.dim() != 4 || flow.dim() != 4 || flow.size(1) != 2 || image.size(0) != flow.size(0) ||
      image.size(2) != flow.size(2) || image.size(3) != flow.size(3)) {
    throw ContractError("backward_warp: expected image (N,C,H,W) and flow (N,2,H,W), got " +
                        shape_of(image) + " and " + shape_of(flow));
  }
  if (image.scalar_type() != flow.scalar_type()) {
    throw ContractError("backward_warp: image and flow dtypes differ");
  }
  if (!image.is_floating_point()) throw ContractError("backward_warp: floating point tensors required");
}

// Bilinear stencil of one clamped sample position.
template <typename scalar_t>
struct Stencil {
  int64_t x0, x1, y0, y1;
  scalar_t ax, ay;
  bool clamped_x, clamped_y;
};

template <typename scalar_t>
Stencil<scalar_t> stencil(scalar_t sx, scalar_t sy, int64_t H, int64_t W) {
  Stencil<scalar_t> s{};
  const auto xmax = static_cast<scalar_t>(W - 1);
  const auto ymax = static_cast<scalar_t>(H - 1);
  s.clamped_x = sx < 0 || sx > xmax;
  s.clamped_y = sy < 0 || sy > ymax;
  sx = std::clamp(sx, scalar_t(0), xmax);
  sy = std::clamp(sy, scalar_t(0), ymax);
  s.x0 = std::min<int64_t>(static_cast<int64_t>(std::floor(sx)), W - 1);
  s.y0 = std::min<int64_t>(static_cast<int64_t>(std::floor(sy)), H - 1);
  s.x1 = std::min<int64_t>(s.x0 + 1, W - 1);
  s.y1 = std::min<int64_t>(s.y0 + 1, H - 1);
  s.ax = sx - static_cast<scalar_t>(s.x0);
  s.ay = sy - static_cast<scalar_t>(s.y0);
  return s;
}

template <typename scalar_t>
void warp_forward_kernel(const torch::Tensor& image, const torch::Tensor& flow, torch::Tensor& out) {
  const int64_t N = image.size(0), C = image.size(1), H = image.size(2), W = image.size(3);
  const scalar_t* img = image.data_ptr<scalar_t>();
  const scalar_t* fl = flow.data_ptr<scalar_t>();
  scalar_t* o = out.data_ptr<scalar_t>();
  const int64_t plane = H * W;
  for (int64_t n = 0; n < N; ++n) {
    const scalar_t* u = fl + (n * 2) * plane;
    const scalar_t* v = u + plane;
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        const int64_t p = y * W + x;
        if (!std::isfinite(u[p]) || !std::isfinite(v[p])) {
          throw ValidationError("backward_warp: non-finite flow at (" + std::to_string(y) + ", " +
                                std::to_string(x) + ")");
        }
        const auto s = stencil<scalar_t>(static_cast<scalar_t>(x) + u[p], static_cast<scalar_t>(y) + v[p], H, W);
        const scalar_t w00 = (1 - s.ax) * (1 - s.ay), w01 = s.ax * (1 - s.ay);
        const scalar_t w10 = (1 - s.ax) * s.ay, w11 = s.ax * s.ay;
        for (int64_t c = 0; c < C; ++c) {
          const scalar_t* I = img + (n * C + c) * plane;
          o[(n * C + c) * plane + p] = w00 * I[s.y0 * W + s.x0] + w01 * I[s.y0 * W + s.x1] +
                                      w10 * I[s.y1 * W + s.x0] + w11 * I[s.y1 * W + s.x1];
        }
      }
    }
  }
}

template <typename scalar_t>
void warp_backward_kernel(const torch::Tensor& image, const torch::Tensor& flow, const torch::Tensor& grad_out,
                          torch::Tensor& grad_image, torch::Tensor& grad_flow) {
  const int64_t N = image.size(0), C = image.size(1), H = image.size(2), W = image.size(3);
  const scalar_t* img = image.data_ptr<scalar_t>();
  const scalar_t* fl = flow.data_ptr<scalar_t>();
  const scalar_t* go = grad_out.data_ptr<scalar_t>();
  scalar_t* gi = grad_image.data_ptr<scalar_t>();
  scalar_t* gf = grad_flow.data_ptr<scalar_t>();
  const int64_t plane = H * W;
  for (int64_t n = 0; n < N; ++n) {
    const scalar_t* u = fl + (n * 2) * plane;
    const scalar_t* v = u + plane;
    scalar_t* gu = gf + (n * 2) * plane;
    scalar_t* gv = gu + plane;
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        const int64_t p = y * W + x;
        const auto s = stencil<scalar_t>(static_cast<scalar_t>(x) + u[p], static_cast<scalar_t>(y) + v[p], H, W);
        const scalar_t w00 = (1 - s.ax) * (1 - s.ay), w01 = s.ax * (1 - s.ay);
        const scalar_t w10 = (1 - s.ax) * s.ay, w11 = s.ax * s.ay;
        scalar_t dsx = 0, dsy = 0;
        for (int64_t c = 0; c < C; ++c) {
          const int64_t base = (n * C + c) * plane;
          const scalar_t g = go[base + p];
          if (g == 0) continue;
          const scalar_t* I = img + base;
          const scalar_t i00 = I[s.y0 * W + s.x0], i01 = I[s.y0 * W + s.x1];
          const scalar_t i10 = I[s.y1 * W + s.x0], i11 = I[s.y1 * W + s.x1];
          scalar_t* G = gi + base;
          G[s.y0 * W + s.x0] += g * w00;
          G[s.y0 * W + s.x1] += g * w01;
          G[s.y1 * W + s.x0] += g * w10;
          G[s.y1 * W + s.x1] += g * w11;
          dsx += g * ((1 - s.ay) * (i01 - i00) + s.ay * (i11 - i10));
          dsy += g * ((1 - s.ax) * (i10 - i00) + s.ax * (i11 - i01));
        }
        gu[p] = s.clamped_x ? scalar_t(0) : dsx;
        gv[p] = s.clamped_y ? scalar_t(0) : dsy;
      }
    }
  }
}

class BackwardWarpFunction : public torch::autograd::Function<BackwardWarpFunction> {
 public:
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& image,
                               const torch::Tensor& flow) {
    auto img = image.contiguous();
    auto fl = flow.contiguous();
    auto out = torch::empty_like(img);
    AT_DISPATCH_FLOATING_TYPES(img.scalar_type(), "backward_warp_forward",
                               [&] { warp_forward_kernel<scalar_t>(img, fl, out); });
    ctx->save_for_backward({img, fl});
    return out;
  }

  static torch::autograd::variable_list backward(torch::autograd::AutogradContext* ctx,
                                                 torch::autograd::variable_list grad_outputs) {
    const auto saved = ctx->get_saved_variables();
    const auto& img = saved[0];
    const auto& fl = saved[1];
    auto go = grad_outputs[0].contiguous();
    auto grad_image = torch::zeros_like(img);
    auto grad_flow = torch::zeros_like(fl);
    AT_DISPATCH_FLOATING_TYPES(img.scalar_type(), "backward_warp_backward",
                               [&] { warp_backward_kernel<scalar_t>(img, fl, go, grad_image, grad_flow); });
    return {grad_image, grad_flow};
  }
};

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.sizes().equals(b.sizes())) {
    throw ContractError(std::string(what) + ": shape mismatch " + shape_of(a) + " vs " + shape_of(b));
  }
}

void check_time(const torch::Tensor& t, const torch::Tensor& like, const char* what) {
  const bool scalar = t.numel() == 1;
  const bool per_sample = t.dim() == 4 && t.size(0) == like.size(0) && t.size(1) == 1 && t.size(2) == 1 &&
                          t.size(3) == 1;
  if (!scalar && !per_sample) {
    throw ContractError(std::string(what) + ": time must be a scalar or (N,1,1,1), got " + shape_of(t));
  }
}

}  // namespace

torch::Tensor backward_warp(const torch::Tensor& image, const torch::Tensor& flow) {
  check_warp_args(image, flow);
  return BackwardWarpFunction::apply(image, flow);
}

IntermediateFlows approx_intermediate_flows(const torch::Tensor& f01, const torch::Tensor& f10,
                                            const torch::Tensor& t) {
  check_same_shape(f01, f10, "approx_intermediate_flows");
  check_time(t, f01, "approx_intermediate_flows");
  const auto s = 1 - t;
  return {-s * t * f01 + t * t * f10, s * s * f01 - t * s * f10};
}

torch::Tensor blend_visibility(const torch::Tensor& warped0, const torch::Tensor& warped1,
                               const torch::Tensor& v0, const torch::Tensor& v1, const torch::Tensor& t) {
  check_same_shape(warped0, warped1, "blend_visibility");
  check_same_shape(v0, v1, "blend_visibility");
  if (v0.dim() != warped0.dim() || v0.size(0) != warped0.size(0) || v0.size(-1) != warped0.size(-1) ||
      v0.size(-2) != warped0.size(-2)) {
    throw ContractError("blend_visibility: visibility shape " + shape_of(v0) + " incompatible with " +
                        shape_of(warped0));
  }
  check_time(t, warped0, "blend_visibility");
  const auto a = (1 - t) * v0;
  const auto b = t * v1;
  const auto z = (a + b).clamp_min(1e-8);
  return (a / z) * warped0 + (b / z) * warped1;
}

torch::Tensor linear_interpolate(const torch::Tensor& i0, const torch::Tensor& i1, const torch::Tensor& t) {
  check_same_shape(i0, i1, "linear_interpolate");
  check_time(t, i0, "linear_interpolate");
  return (1 - t) * i0 + t * i1;
}

torch::Tensor time_tensor(std::span<const double> ts, torch::ScalarType dtype) {
  auto out = torch::empty({static_cast<int64_t>(ts.size()), 1, 1, 1}, torch::kFloat64);
  auto* p = out.data_ptr<double>();
  for (std::size_t i = 0; i < ts.size(); ++i) p[i] = BlendTime(ts[i]).value();
  return out.to(dtype);
}

torch::Tensor time_tensor(double t, torch::ScalarType dtype) {
  return torch::full({1, 1, 1, 1}, BlendTime(t).value(), torch::TensorOptions().dtype(dtype));
}

// ---------------------------------------------------------------------------
// Grid wrappers

torch::Tensor to_tensor(const Grid& grid) {
  return torch::from_blob(const_cast<float*>(grid.values().data()),
                          {1, 1, static_cast<int64_t>(grid.height()), static_cast<int64_t>(grid.width())},
                          torch::kFloat32)
      .clone();
}

torch::Tensor to_tensor(const FlowField& flow) {
  return torch::cat({to_tensor(flow.u()), to_tensor(flow.v())}, 1);
}

Grid grid_from_tensor(const torch::Tensor& t) {
  if (t.dim() < 2) throw ContractError("grid_from_tensor: need at least 2 dimensions");
  const int64_t H = t.size(-2), W = t.size(-1);
  if (t.numel() != H * W) throw ContractError("grid_from_tensor: tensor " + shape_of(t) + " is not a single plane");
  auto c = t.detach().to(torch::kFloat32).contiguous();
  const float* p = c.data_ptr<float>();
  return Grid(static_cast<std::size_t>(H), static_cast<std::size_t>(W), std::vector<float>(p, p + H * W));
}

FlowField flow_from_tensor(const torch::Tensor& t) {
  auto s = t.dim() == 4 ? t.squeeze(0) : t;
  if (s.dim() != 3 || s.size(0) != 2) throw ContractError("flow_from_tensor: expected (1,2,H,W), got " + shape_of(t));
  return FlowField(grid_from_tensor(s[0]), grid_from_tensor(s[1]));
}

VisibilityMap visibility_from_tensor(const torch::Tensor& t) { return VisibilityMap(grid_from_tensor(t)); }

Grid backward_warp(const Grid& image, const FlowField& flow) {
  require_same_shape(image, flow.u(), "backward_warp");
  torch::NoGradGuard no_grad;
  return grid_from_tensor(backward_warp(to_tensor(image), to_tensor(flow)));
}

std::pair<FlowField, FlowField> approx_intermediate_flows(const FlowField& f01, const FlowField& f10, BlendTime t) {
  require_same_shape(f01.u(), f10.u(), "approx_intermediate_flows");
  torch::NoGradGuard no_grad;
  auto r = approx_intermediate_flows(to_tensor(f01).to(torch::kFloat64), to_tensor(f10).to(torch::kFloat64),
                                     time_tensor(t.value(), torch::kFloat64));
  return {flow_from_tensor(r.to_start), flow_from_tensor(r.to_end)};
}

Grid blend_visibility(const Grid& warped0, const Grid& warped1, const VisibilityMap& v0, const VisibilityMap& v1,
                      BlendTime t) {
  require_same_shape(warped0, warped1, "blend_visibility");
  require_same_shape(warped0, v0.weights(), "blend_visibility");
  require_same_shape(warped0, v1.weights(), "blend_visibility");
  torch::NoGradGuard no_grad;
  return grid_from_tensor(blend_visibility(to_tensor(warped0), to_tensor(warped1), to_tensor(v0.weights()),
                                           to_tensor(v1.weights()), time_tensor(t.value())));
}

Grid linear_interpolate(const Grid& i0, const Grid& i1, BlendTime t) {
  require_same_shape(i0, i1, "linear_interpolate");
  Grid out(i0.height(), i0.width());
  const double s = 1.0 - t.value();
  auto a = i0.values();
  auto b = i1.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = static_cast<float>(s * static_cast<double>(a[i]) + t.value() * static_cast<double>(b[i]));
  }
  return out;
}

}  // namespace geoslomo
