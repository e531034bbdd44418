#pragma once

#include "geoslomo/errors.hpp"

namespace geoslomo {

/// Weights of the reconstruction, warping and smoothness terms.
struct LossWeights {
  double lambda_r = 1.0;
  double lambda_w = 0.65;
  double lambda_s = 0.23;

  void validate() const {
    if (!(lambda_r >= 0.0) || !(lambda_w >= 0.0) || !(lambda_s >= 0.0)) {
      throw ParameterError("lambda", "loss weights must be non-negative");
    }
  }
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

}  // namespace geoslomo
