#pragma once

#include <limits>
#include <string>
#include <vector>

#include "carpet/nn.hpp"
#include "carpet/progress.hpp"

namespace carpet {

template <typename Scalar>
struct LossEvaluation {
  double loss = 0.0;
  Tensor3<Scalar> gradient;  // empty when not requested
  std::string breakdown;     // component values, used in NonFiniteLoss reports
};

template <typename Scalar>
struct TransferResult {
  Image<Scalar> image;
  std::vector<double> loss_trace;  // loss of iterate k, k = 0..iterations
  std::vector<double> best_trace;  // running minimum of loss_trace
  int best_iteration = 0;
};

/// Shared loop of the image-optimization methods: Adam on the pixels with a
/// clamp to [0,1] after every step. Iterate k is evaluated for k = 0..iterations
/// and the best-scoring iterate is returned, so the returned loss never
/// exceeds the loss of the initial image.
///
/// `objective(pixels, k, need_gradient)` returns a LossEvaluation.
template <typename Scalar, typename Objective>
TransferResult<Scalar> optimize_pixels(const Image<Scalar>& init, int iterations, double step_size,
                                       Objective&& objective, std::string_view stage,
                                       const IterationObserver* observer) {
  if (iterations < 0) throw Error(ErrorCode::InvalidConfig, "iterations must be non-negative");
  if (!(step_size > 0)) throw Error(ErrorCode::InvalidConfig, "step size must be positive");
  Tensor3<Scalar> x = init.tensor();
  Tensor3<Scalar> best = x;
  TransferResult<Scalar> result;
  double best_loss = std::numeric_limits<double>::infinity();
  nn::Adam<Scalar> adam(step_size);
  for (int k = 0; k <= iterations; ++k) {
    const bool last = k == iterations;
    LossEvaluation<Scalar> eval = objective(x, k, !last);
    if (!std::isfinite(eval.loss) || (!last && !eval.gradient.data.allFinite())) {
      throw Error(ErrorCode::NonFiniteLoss, std::string(stage) + " iteration " + std::to_string(k) + ": " +
                                                eval.breakdown);
    }
    result.loss_trace.push_back(eval.loss);
    if (eval.loss < best_loss) {
      best_loss = eval.loss;
      best = x;
      result.best_iteration = k;
    }
    result.best_trace.push_back(best_loss);
    notify(observer, {stage, k, iterations + 1, eval.loss,
                      [&x] { return Image<float>::clamped(x.template cast<float>()); }});
    if (last) break;
    adam.step({{x.data.data(), eval.gradient.data.data(), x.data.size()}});
    x.data = x.data.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
  }
  result.image = Image<Scalar>::clamped(std::move(best));
  return result;
}

}  // namespace carpet
