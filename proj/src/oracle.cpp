#include "sparsetrain/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace sparsetrain {

namespace {

double check_finite(double value) {
  if (!std::isfinite(value)) {
    throw std::domain_error("finite_diff_grad: function evaluated to a non-finite value");
  }
  return value;
}

double relu(double x) { return x > 0.0 ? x : 0.0; }

}  // namespace

double finite_diff_grad(const std::function<double(double)>& f, double point,
                        double step) {
  if (!(step > 0.0)) {
    throw std::invalid_argument("finite_diff_grad: step must be > 0");
  }
  const double hi = check_finite(f(point + step));
  const double lo = check_finite(f(point - step));
  return (hi - lo) / (2.0 * step);
}

std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> point, double step) {
  if (!(step > 0.0)) {
    throw std::invalid_argument("finite_diff_grad: step must be > 0");
  }
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double hi = check_finite(f(x));
    x[i] = saved - step;
    const double lo = check_finite(f(x));
    x[i] = saved;
    grad[i] = (hi - lo) / (2.0 * step);
  }
  return grad;
}

ConvergenceCase simulate_case(double v, double v_star, double alpha) {
  ConvergenceCase out;
  out.v = v;
  out.v_star = v_star;
  out.alpha = alpha;

  const double h = relu(v);
  if (h == v_star) {
    out.branch = CaseBranch::AtOptimum;
    out.gradient = 0.0;
    return out;
  }
  if (v > 0.0) {
    out.branch = v_star > 0.0 ? CaseBranch::ActivePositiveTarget
                              : CaseBranch::ActiveNonpositiveTarget;
    out.gradient = v - v_star;
  } else {
    out.branch = v_star > 0.0 ? CaseBranch::MaskedPositiveTarget
                              : CaseBranch::MaskedNonpositiveTarget;
    out.gradient = alpha * (-v_star);
  }
  return out;
}

DescentTrajectory simulate_descent(double v0, double v_star,
                                   const std::function<double(int)>& alpha_at_step,
                                   double lr, int steps) {
  if (!(lr > 0.0)) {
    throw std::invalid_argument("simulate_descent: lr must be > 0");
  }
  DescentTrajectory traj;
  traj.values.reserve(static_cast<std::size_t>(steps) + 1);
  traj.values.push_back(v0);
  double v = v0;
  bool was_active = v > 0.0;
  if (was_active) traj.first_active_step = 0;
  for (int step = 1; step <= steps; ++step) {
    const double alpha = alpha_at_step(step - 1);
    v -= lr * simulate_case(v, v_star, alpha).gradient;
    traj.values.push_back(v);
    const bool active = v > 0.0;
    if (active != was_active) {
      traj.sign_transitions.push_back(step);
      was_active = active;
    }
    if (active && traj.first_active_step < 0) {
      traj.first_active_step = step;
    }
  }
  return traj;
}

}  // namespace sparsetrain
