#pragma once

#include <span>
#include <utility>

#include <torch/types.h>

#include "geoslomo/fields.hpp"
#include "geoslomo/grid.hpp"

namespace geoslomo {

// Tensor conventions used throughout the library:
//   images      (N, C, H, W)
//   flows       (N, 2, H, W), channel 0 = x (column) displacement, 1 = y (row)
//   visibility  (N, 1, H, W)
//   times       scalar tensor or (N, 1, 1, 1)
// All operations are differentiable through autograd and accept float32 or
// float64 inputs.

/// Backward bilinear warp: out(p) = image(p + flow(p)). Sample positions
/// outside the grid are clamped to the border, so the gradient with respect to
/// flow vanishes wherever the clamp is active.
torch::Tensor backward_warp(const torch::Tensor& image, const torch::Tensor& flow);

struct IntermediateFlows {
  torch::Tensor to_start;  // F_{t->0}
  torch::Tensor to_end;    // F_{t->1}
};

/// Time-weighted combination of the two endpoint flows:
///   F_{t->0} = -(1 - t) t F_{0->1} + t^2 F_{1->0}
///   F_{t->1} = (1 - t)^2 F_{0->1} - t (1 - t) F_{1->0}
IntermediateFlows approx_intermediate_flows(const torch::Tensor& f01, const torch::Tensor& f10,
                                            const torch::Tensor& t);

/// Visibility-weighted blend of the two warped inputs,
///   ((1 - t) v0 w0 + t v1 w1) / ((1 - t) v0 + t v1),
/// evaluated as alpha w0 + beta w1 so that t = 0 and t = 1 reproduce the
/// corresponding warped input bit-exactly.
torch::Tensor blend_visibility(const torch::Tensor& warped0, const torch::Tensor& warped1,
                               const torch::Tensor& v0, const torch::Tensor& v1,
                               const torch::Tensor& t);

/// (1 - t) i0 + t i1.
torch::Tensor linear_interpolate(const torch::Tensor& i0, const torch::Tensor& i1,
                                 const torch::Tensor& t);

/// Builds an (N, 1, 1, 1) time tensor.
torch::Tensor time_tensor(std::span<const double> ts, torch::ScalarType dtype = torch::kFloat32);
torch::Tensor time_tensor(double t, torch::ScalarType dtype = torch::kFloat32);

// ---------------------------------------------------------------------------
// Grid-level convenience wrappers

Grid backward_warp(const Grid& image, const FlowField& flow);
std::pair<FlowField, FlowField> approx_intermediate_flows(const FlowField& f01, const FlowField& f10,
                                                          BlendTime t);
Grid blend_visibility(const Grid& warped0, const Grid& warped1, const VisibilityMap& v0,
                      const VisibilityMap& v1, BlendTime t);
Grid linear_interpolate(const Grid& i0, const Grid& i1, BlendTime t);

// ---------------------------------------------------------------------------
// Conversions

torch::Tensor to_tensor(const Grid& grid);                // (1, 1, H, W) float32
torch::Tensor to_tensor(const FlowField& flow);           // (1, 2, H, W) float32
Grid grid_from_tensor(const torch::Tensor& t);            // accepts (H, W) or any (1, .., 1, H, W)
FlowField flow_from_tensor(const torch::Tensor& t);       // (1, 2, H, W) or (2, H, W)
VisibilityMap visibility_from_tensor(const torch::Tensor& t);

}  // namespace geoslomo
