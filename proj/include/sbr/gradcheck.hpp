#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sbr/tensor.hpp"

// Central finite-difference verification of backward gradients. The checker
// is independent of any op's backward rule: it only re-runs forward passes.
namespace sbr {

struct GradcheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;

  bool ok(double tol) const { return max_rel_err < tol; }
};

// Relative error with a unit floor, so near-zero gradients are compared
// absolutely (finite differences cannot resolve below the floor anyway).
inline double grad_rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// make_loss must rebuild the scalar loss from the current values of `params`
// on the given tape. h is the central-difference step.
inline GradcheckReport gradcheck(
    const std::function<Tensor<double>(Tape<double>&)>& make_loss,
    const std::vector<std::pair<std::string, Tensor<double>>>& params,
    double h = 1e-5) {
  for (auto& [name, p] : params) p.zero_grad();

  Tape<double> tape;
  Tensor<double> loss = make_loss(tape);
  tape.backward(loss);

  std::vector<Mat<double>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, p] : params) analytic.push_back(p.grad());

  Tape<double> eval_tape;
  eval_tape.set_recording(false);
  auto eval_loss = [&] { return make_loss(eval_tape).value()(0, 0); };

  GradcheckReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<double> p = params[pi].second;
    double* data = p.value_mut().data();
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = eval_loss();
      data[i] = saved - h;
      const double down = eval_loss();
      data[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double err = grad_rel_err(analytic[pi].data()[i], fd);
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst_param = params[pi].first;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace sbr
