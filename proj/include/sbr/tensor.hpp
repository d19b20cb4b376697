#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sbr/errors.hpp"

namespace sbr {

// Dense row-major matrix, the storage type behind every tensor. Rank-1
// quantities are 1 x n rows, scalars are 1 x 1.
template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
class Tape;

// Shared handle to a value and its gradient accumulator. Values are immutable
// after creation except through value_mut() (parameter updates); gradients
// accumulate during backward passes.
template <class S>
class Tensor {
 public:
  struct Data {
    Mat<S> value;
    Mat<S> grad;  // empty until first accumulation
    bool requires_grad = false;

    void accumulate(const Mat<S>& g) {
      if (grad.size() == 0) grad = Mat<S>::Zero(value.rows(), value.cols());
      grad += g;
    }
  };

  Tensor() = default;

  explicit Tensor(Mat<S> value, bool requires_grad = false)
      : d_(std::make_shared<Data>()) {
    d_->value = std::move(value);
    d_->requires_grad = requires_grad;
  }

  static Tensor zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad = false) {
    return Tensor(Mat<S>::Zero(rows, cols), requires_grad);
  }

  static Tensor scalar(S v, bool requires_grad = false) {
    Mat<S> m(1, 1);
    m(0, 0) = v;
    return Tensor(std::move(m), requires_grad);
  }

  bool defined() const { return d_ != nullptr; }
  Eigen::Index rows() const { return d_->value.rows(); }
  Eigen::Index cols() const { return d_->value.cols(); }
  Eigen::Index size() const { return d_->value.size(); }

  const Mat<S>& value() const { return d_->value; }
  Mat<S>& value_mut() { return d_->value; }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool rg) { d_->requires_grad = rg; }

  // Gradient view; a zero matrix of matching shape when nothing accumulated.
  Mat<S> grad() const {
    if (d_->grad.size() == 0) return Mat<S>::Zero(rows(), cols());
    return d_->grad;
  }
  bool has_grad() const { return d_->grad.size() != 0; }
  void zero_grad() { d_->grad.resize(0, 0); }

  std::shared_ptr<Data> data() const { return d_; }

 private:
  std::shared_ptr<Data> d_;
};

// Ordered record of executed operations. Ops append their backward closures
// in execution order, which is a topological order of the computation; one
// reverse traversal visits each node exactly once.
template <class S>
class Tape {
 public:
  bool recording() const { return enabled_; }
  void set_recording(bool on) { enabled_ = on; }

  bool check_finite() const { return check_finite_; }
  void set_check_finite(bool on) { check_finite_ = on; }

  void record(std::function<void()> backward_fn) {
    records_.push_back(std::move(backward_fn));
  }

  size_t size() const { return records_.size(); }

  // Reverse-topological gradient accumulation from a scalar loss. Gradients
  // of parameters the loss does not reach remain zero.
  void backward(const Tensor<S>& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) {
      throw ContractError("backward: loss must be a scalar, got " +
                          std::to_string(loss.rows()) + "x" + std::to_string(loss.cols()));
    }
    loss.data()->accumulate(Mat<S>::Ones(1, 1));
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
  }

  void clear() { records_.clear(); }

 private:
  std::vector<std::function<void()>> records_;
  bool enabled_ = true;
  bool check_finite_ = true;
};

namespace detail {

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <class S>
void check_finite(const Tape<S>& tape, const Mat<S>& m, const char* op) {
  if (tape.check_finite() && !m.allFinite()) {
    throw NumericError(std::string(op) + ": non-finite value produced");
  }
}

}  // namespace detail

}  // namespace sbr
