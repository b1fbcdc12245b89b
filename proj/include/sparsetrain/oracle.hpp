#pragma once

#include <functional>
#include <span>
#include <vector>

namespace sparsetrain {

// Central finite difference of a scalar function, one coordinate at a time.
// All arithmetic in double.
double finite_diff_grad(const std::function<double(double)>& f, double point,
                        double step);

std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> point, double step);

// The five branches of the one-dimensional loss-gradient case analysis for
// L(v) = 0.5 * (h_alpha(v) - v_star)^2 with the proxy gradient of h_alpha.
// AtOptimum (h(v) == v_star) is checked first; the remaining four partition
// the (v, v_star) plane by the signs of v and v_star.
enum class CaseBranch {
  AtOptimum = 1,
  ActivePositiveTarget = 2,
  ActiveNonpositiveTarget = 3,
  MaskedPositiveTarget = 4,
  MaskedNonpositiveTarget = 5,
};

struct ConvergenceCase {
  double v = 0.0;
  double v_star = 0.0;
  double alpha = 0.0;
  CaseBranch branch = CaseBranch::AtOptimum;
  double gradient = 0.0;
};

ConvergenceCase simulate_case(double v, double v_star, double alpha);

// Gradient descent on L(v) with the proxy gradient; alpha may vary per step.
struct DescentTrajectory {
  std::vector<double> values;            // v_0 .. v_steps
  std::vector<int> sign_transitions;     // step indices where masked/active flips
  int first_active_step = -1;            // first step index with v > 0, -1 if never
};

DescentTrajectory simulate_descent(double v0, double v_star,
                                   const std::function<double(int)>& alpha_at_step,
                                   double lr, int steps);

}  // namespace sparsetrain
