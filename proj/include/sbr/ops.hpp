#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "sbr/rng.hpp"
#include "sbr/tensor.hpp"

// Reverse-mode differentiable operations. Every op validates shapes, computes
// the forward value with Eigen, and records its backward closure on the tape
// when recording is enabled and some input requires a gradient.
namespace sbr {

namespace detail {

// Broadcast compatibility: extents equal, or the smaller extent is 1.
inline bool bcast_ok(Eigen::Index a, Eigen::Index b) { return a == b || a == 1 || b == 1; }

template <class S>
Mat<S> expand_to(const Mat<S>& m, Eigen::Index r, Eigen::Index c) {
  if (m.rows() == r && m.cols() == c) return m;
  return m.replicate(r / m.rows(), c / m.cols());
}

// Sum-reduce a full-shape gradient back onto a broadcast operand's shape.
template <class S>
Mat<S> reduce_to(const Mat<S>& g, Eigen::Index r, Eigen::Index c) {
  if (g.rows() == r && g.cols() == c) return g;
  Mat<S> out = g;
  if (r == 1 && out.rows() > 1) out = out.colwise().sum().eval();
  if (c == 1 && out.cols() > 1) out = out.rowwise().sum().eval();
  return out;
}

template <class S>
bool any_rg(const Tensor<S>& a) {
  return a.requires_grad();
}

template <class S, class... Rest>
bool any_rg(const Tensor<S>& a, const Rest&... rest) {
  return a.requires_grad() || any_rg(rest...);
}

}  // namespace detail

template <class S>
Tensor<S> matmul(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner extents differ, lhs " +
                     detail::shape_str(a.rows(), a.cols()) + " vs rhs " +
                     detail::shape_str(b.rows(), b.cols()));
  }
  Tensor<S> out(Mat<S>(a.value() * b.value()),
                tape.recording() && detail::any_rg(a, b));
  detail::check_finite(tape, out.value(), "matmul");
  if (out.requires_grad()) {
    tape.record([ad = a.data(), bd = b.data(), od = out.data()] {
      if (od->grad.size() == 0) return;
      if (ad->requires_grad) ad->accumulate(od->grad * bd->value.transpose());
      if (bd->requires_grad) bd->accumulate(ad->value.transpose() * od->grad);
    });
  }
  return out;
}

template <class S>
Tensor<S> transpose(Tape<S>& tape, const Tensor<S>& a) {
  Tensor<S> out(Mat<S>(a.value().transpose()), tape.recording() && a.requires_grad());
  if (out.requires_grad()) {
    tape.record([ad = a.data(), od = out.data()] {
      if (od->grad.size() == 0) return;
      ad->accumulate(od->grad.transpose());
    });
  }
  return out;
}

namespace detail {

// Shared elementwise-with-broadcast skeleton for add/mul.
template <class S, class FwdFn, class BwdA, class BwdB>
Tensor<S> broadcast_binary(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b,
                           const char* name, FwdFn fwd, BwdA bwd_a, BwdB bwd_b) {
  if (!bcast_ok(a.rows(), b.rows()) || !bcast_ok(a.cols(), b.cols())) {
    throw ShapeError(std::string(name) + ": incompatible shapes " +
                     shape_str(a.rows(), a.cols()) + " and " +
                     shape_str(b.rows(), b.cols()));
  }
  const Eigen::Index r = std::max(a.rows(), b.rows());
  const Eigen::Index c = std::max(a.cols(), b.cols());
  Mat<S> av = expand_to(a.value(), r, c);
  Mat<S> bv = expand_to(b.value(), r, c);
  Tensor<S> out(fwd(av, bv), tape.recording() && any_rg(a, b));
  check_finite(tape, out.value(), name);
  if (out.requires_grad()) {
    tape.record([ad = a.data(), bd = b.data(), od = out.data(), r, c, bwd_a, bwd_b] {
      if (od->grad.size() == 0) return;
      if (ad->requires_grad) {
        ad->accumulate(reduce_to<S>(bwd_a(od->grad, ad->value, bd->value, r, c),
                                    ad->value.rows(), ad->value.cols()));
      }
      if (bd->requires_grad) {
        bd->accumulate(reduce_to<S>(bwd_b(od->grad, ad->value, bd->value, r, c),
                                    bd->value.rows(), bd->value.cols()));
      }
    });
  }
  return out;
}

}  // namespace detail

template <class S>
Tensor<S> add(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  return detail::broadcast_binary(
      tape, a, b, "add",
      [](const Mat<S>& av, const Mat<S>& bv) { return Mat<S>(av + bv); },
      [](const Mat<S>& g, const Mat<S>&, const Mat<S>&, Eigen::Index, Eigen::Index) { return g; },
      [](const Mat<S>& g, const Mat<S>&, const Mat<S>&, Eigen::Index, Eigen::Index) { return g; });
}

template <class S>
Tensor<S> mul(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  return detail::broadcast_binary(
      tape, a, b, "mul",
      [](const Mat<S>& av, const Mat<S>& bv) { return Mat<S>(av.cwiseProduct(bv)); },
      [](const Mat<S>& g, const Mat<S>&, const Mat<S>& bv, Eigen::Index r, Eigen::Index c) {
        return Mat<S>(g.cwiseProduct(detail::expand_to(bv, r, c)));
      },
      [](const Mat<S>& g, const Mat<S>& av, const Mat<S>&, Eigen::Index r, Eigen::Index c) {
        return Mat<S>(g.cwiseProduct(detail::expand_to(av, r, c)));
      });
}

template <class S>
Tensor<S> scale(Tape<S>& tape, const Tensor<S>& a, S factor) {
  Tensor<S> out(Mat<S>(a.value() * factor), tape.recording() && a.requires_grad());
  detail::check_finite(tape, out.value(), "scale");
  if (out.requires_grad()) {
    tape.record([ad = a.data(), od = out.data(), factor] {
      if (od->grad.size() == 0) return;
      ad->accumulate(od->grad * factor);
    });
  }
  return out;
}

template <class S>
Tensor<S> add_scalar(Tape<S>& tape, const Tensor<S>& a, S c) {
  Tensor<S> out(Mat<S>(a.value().array() + c), tape.recording() && a.requires_grad());
  detail::check_finite(tape, out.value(), "add_scalar");
  if (out.requires_grad()) {
    tape.record([ad = a.data(), od = out.data()] {
      if (od->grad.size() == 0) return;
      ad->accumulate(od->grad);
    });
  }
  return out;
}

template <class S>
Tensor<S> sigmoid(Tape<S>& tape, const Tensor<S>& a) {
  Mat<S> y = (S(1) / (S(1) + (-a.value().array()).exp())).matrix();
  Tensor<S> out(std::move(y), tape.recording() && a.requires_grad());
  detail::check_finite(tape, out.value(), "sigmoid");
  if (out.requires_grad()) {
    tape.record([ad = a.data(), od = out.data()] {
      if (od->grad.size() == 0) return;
      ad->accumulate(
          (od->grad.array() * od->value.array() * (S(1) - od->value.array())).matrix());
    });
  }
  return out;
}

template <class S>
Tensor<S> tanh_act(Tape<S>& tape, const Tensor<S>& a) {
  Tensor<S> out(Mat<S>(a.value().array().tanh()), tape.recording() && a.requires_grad());
  detail::check_finite(tape, out.value(), "tanh");
  if (out.requires_grad()) {
    tape.record([ad = a.data(), od = out.data()] {
      if (od->grad.size() == 0) return;
      ad->accumulate((od->grad.array() * (S(1) - od->value.array().square())).matrix());
    });
  }
  return out;
}

template <class S>
Tensor<S> relu(Tape<S>& tape, const Tensor<S>& a) {
  Tensor<S> out(Mat<S>(a.value().cwiseMax(S(0))), tape.recording() && a.requires_grad());
  if (out.requires_grad()) {
    tape.record([ad = a.data(), od = out.data()] {
      if (od->grad.size() == 0) return;
      ad->accumulate(
          (od->grad.array() * (ad->value.array() > S(0)).template cast<S>()).matrix());
    });
  }
  return out;
}

// Concatenation along the last axis; leading extents must match.
template <class S>
Tensor<S> concat_cols(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_cols: row extents differ, " +
                     detail::shape_str(a.rows(), a.cols()) + " and " +
                     detail::shape_str(b.rows(), b.cols()));
  }
  Mat<S> y(a.rows(), a.cols() + b.cols());
  y.leftCols(a.cols()) = a.value();
  y.rightCols(b.cols()) = b.value();
  Tensor<S> out(std::move(y), tape.recording() && detail::any_rg(a, b));
  if (out.requires_grad()) {
    tape.record([ad = a.data(), bd = b.data(), od = out.data()] {
      if (od->grad.size() == 0) return;
      if (ad->requires_grad) ad->accumulate(od->grad.leftCols(ad->value.cols()));
      if (bd->requires_grad) bd->accumulate(od->grad.rightCols(bd->value.cols()));
    });
  }
  return out;
}

// Vertical stacking of same-width rows (batch assembly).
template <class S>
Tensor<S> concat_rows(Tape<S>& tape, const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: empty part list");
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts.front().cols()) {
      throw ShapeError("concat_rows: column extents differ");
    }
    total += p.rows();
  }
  Mat<S> y(total, parts.front().cols());
  Eigen::Index at = 0;
  bool rg = false;
  for (const auto& p : parts) {
    y.middleRows(at, p.rows()) = p.value();
    at += p.rows();
    rg = rg || p.requires_grad();
  }
  Tensor<S> out(std::move(y), tape.recording() && rg);
  if (out.requires_grad()) {
    std::vector<std::shared_ptr<typename Tensor<S>::Data>> datas;
    datas.reserve(parts.size());
    for (const auto& p : parts) datas.push_back(p.data());
    tape.record([datas, od = out.data()] {
      if (od->grad.size() == 0) return;
      Eigen::Index at = 0;
      for (const auto& d : datas) {
        if (d->requires_grad) d->accumulate(od->grad.middleRows(at, d->value.rows()));
        at += d->value.rows();
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> slice_rows(Tape<S>& tape, const Tensor<S>& a, Eigen::Index start,
                     Eigen::Index count) {
  if (start < 0 || count < 1 || start + count > a.rows()) {
    throw IndexError("slice_rows: range [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " +
                     std::to_string(a.rows()) + " rows");
  }
  Tensor<S> out(Mat<S>(a.value().middleRows(start, count)),
                tape.recording() && a.requires_grad());
  if (out.requires_grad()) {
    tape.record([ad = a.data(), od = out.data(), start, count] {
      if (od->grad.size() == 0) return;
      Mat<S> g = Mat<S>::Zero(ad->value.rows(), ad->value.cols());
      g.middleRows(start, count) = od->grad;
      ad->accumulate(g);
    });
  }
  return out;
}

template <class S>
Tensor<S> slice_cols(Tape<S>& tape, const Tensor<S>& a, Eigen::Index start,
                     Eigen::Index count) {
  if (start < 0 || count < 1 || start + count > a.cols()) {
    throw IndexError("slice_cols: range [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " +
                     std::to_string(a.cols()) + " cols");
  }
  Tensor<S> out(Mat<S>(a.value().middleCols(start, count)),
                tape.recording() && a.requires_grad());
  if (out.requires_grad()) {
    tape.record([ad = a.data(), od = out.data(), start, count] {
      if (od->grad.size() == 0) return;
      Mat<S> g = Mat<S>::Zero(ad->value.rows(), ad->value.cols());
      g.middleCols(start, count) = od->grad;
      ad->accumulate(g);
    });
  }
  return out;
}

// Replicate a single row m times; gradient is the column-wise sum.
template <class S>
Tensor<S> repeat_rows(Tape<S>& tape, const Tensor<S>& a, Eigen::Index m) {
  if (a.rows() != 1) throw ShapeError("repeat_rows: input must be a single row");
  Tensor<S> out(Mat<S>(a.value().replicate(m, 1)), tape.recording() && a.requires_grad());
  if (out.requires_grad()) {
    tape.record([ad = a.data(), od = out.data()] {
      if (od->grad.size() == 0) return;
      ad->accumulate(od->grad.colwise().sum());
    });
  }
  return out;
}

// Row-wise softmax with max subtraction. NaN input is a numeric error.
template <class S>
Tensor<S> softmax_rows(Tape<S>& tape, const Tensor<S>& a) {
  if (!a.value().allFinite()) throw NumericError("softmax: non-finite input");
  Mat<S> y(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    auto row = a.value().row(i).array();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (row - row.maxCoeff()).exp();
    y.row(i) = (e / e.sum()).matrix();
  }
  Tensor<S> out(std::move(y), tape.recording() && a.requires_grad());
  if (out.requires_grad()) {
    tape.record([ad = a.data(), od = out.data()] {
      if (od->grad.size() == 0) return;
      const Mat<S>& y = od->value;
      const Mat<S>& g = od->grad;
      Mat<S> gy = g.cwiseProduct(y);
      Mat<S> dx(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        S s = gy.row(i).sum();
        dx.row(i) = (y.row(i).array() * (g.row(i).array() - s)).matrix();
      }
      ad->accumulate(dx);
    });
  }
  return out;
}

// y = gamma .* (x - mu) / sqrt(var + eps) + beta, per row, population variance.
template <class S>
Tensor<S> layer_norm(Tape<S>& tape, const Tensor<S>& x, const Tensor<S>& gamma,
                     const Tensor<S>& beta, S eps) {
  if (eps <= S(0)) throw ConfigError("layer_norm: eps must be positive");
  if (gamma.rows() != 1 || gamma.cols() != x.cols() || beta.rows() != 1 ||
      beta.cols() != x.cols()) {
    throw ShapeError("layer_norm: gamma/beta must be 1x" + std::to_string(x.cols()));
  }
  const Eigen::Index n = x.cols();
  Mat<S> xhat(x.rows(), n);
  Mat<S> inv_std(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    auto row = x.value().row(i).array();
    S mu = row.mean();
    S var = (row - mu).square().mean();
    S is = S(1) / std::sqrt(var + eps);
    inv_std(i, 0) = is;
    xhat.row(i) = ((row - mu) * is).matrix();
  }
  Mat<S> y = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  y.array().rowwise() += beta.value().row(0).array();
  Tensor<S> out(std::move(y), tape.recording() && detail::any_rg(x, gamma, beta));
  detail::check_finite(tape, out.value(), "layer_norm");
  if (out.requires_grad()) {
    tape.record([xd = x.data(), gd = gamma.data(), bd = beta.data(), od = out.data(),
                 xhat = std::move(xhat), inv_std = std::move(inv_std), n] {
      if (od->grad.size() == 0) return;
      const Mat<S>& g = od->grad;
      if (bd->requires_grad) bd->accumulate(g.colwise().sum());
      if (gd->requires_grad) gd->accumulate(g.cwiseProduct(xhat).colwise().sum());
      if (xd->requires_grad) {
        Mat<S> dxhat = (g.array().rowwise() * gd->value.row(0).array()).matrix();
        Mat<S> dx(g.rows(), n);
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
          auto dh = dxhat.row(i).array();
          auto xh = xhat.row(i).array();
          S m1 = dh.mean();
          S m2 = (dh * xh).mean();
          dx.row(i) = (inv_std(i, 0) * (dh - m1 - xh * m2)).matrix();
        }
        xd->accumulate(dx);
      }
    });
  }
  return out;
}

// Inverted dropout: zero with probability p and scale survivors by 1/(1-p)
// at training time; identity at inference.
template <class S>
Tensor<S> dropout(Tape<S>& tape, const Tensor<S>& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) {
    throw ConfigError("dropout: p must be in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  Mat<S> mask(x.rows(), x.cols());
  const S keep_scale = S(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      mask(i, j) = rng.uniform01() < p ? S(0) : keep_scale;
    }
  }
  Tensor<S> out(Mat<S>(x.value().cwiseProduct(mask)), tape.recording() && x.requires_grad());
  if (out.requires_grad()) {
    tape.record([xd = x.data(), od = out.data(), mask = std::move(mask)] {
      if (od->grad.size() == 0) return;
      xd->accumulate(od->grad.cwiseProduct(mask));
    });
  }
  return out;
}

// Row gather; backward scatter-adds, so repeated ids accumulate.
template <class S>
Tensor<S> embedding_rows(Tape<S>& tape, const Tensor<S>& table,
                         const std::vector<int32_t>& ids) {
  Mat<S> y(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || ids[t] >= table.rows()) {
      throw IndexError("embedding_lookup: id " + std::to_string(ids[t]) +
                       " outside table of " + std::to_string(table.rows()) + " rows");
    }
    y.row(static_cast<Eigen::Index>(t)) = table.value().row(ids[t]);
  }
  Tensor<S> out(std::move(y), tape.recording() && table.requires_grad());
  if (out.requires_grad()) {
    tape.record([td = table.data(), od = out.data(), ids] {
      if (od->grad.size() == 0) return;
      if (td->grad.size() == 0) td->grad = Mat<S>::Zero(td->value.rows(), td->value.cols());
      for (size_t t = 0; t < ids.size(); ++t) {
        td->grad.row(ids[t]) += od->grad.row(static_cast<Eigen::Index>(t));
      }
    });
  }
  return out;
}

// Gather with right-padding: rows [0, ids.size()) come from src, the rest are
// zero. Gradient flows only through the gathered rows.
template <class S>
Tensor<S> gather_rows_padded(Tape<S>& tape, const Tensor<S>& src,
                             const std::vector<int32_t>& ids, Eigen::Index total_rows) {
  if (total_rows < static_cast<Eigen::Index>(ids.size())) {
    throw ShapeError("gather_rows_padded: total_rows smaller than id list");
  }
  Mat<S> y = Mat<S>::Zero(total_rows, src.cols());
  for (size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || ids[t] >= src.rows()) {
      throw IndexError("gather_rows_padded: alias " + std::to_string(ids[t]) +
                       " outside " + std::to_string(src.rows()) + " rows");
    }
    y.row(static_cast<Eigen::Index>(t)) = src.value().row(ids[t]);
  }
  Tensor<S> out(std::move(y), tape.recording() && src.requires_grad());
  if (out.requires_grad()) {
    tape.record([sd = src.data(), od = out.data(), ids] {
      if (od->grad.size() == 0) return;
      if (sd->grad.size() == 0) sd->grad = Mat<S>::Zero(sd->value.rows(), sd->value.cols());
      for (size_t t = 0; t < ids.size(); ++t) {
        sd->grad.row(ids[t]) += od->grad.row(static_cast<Eigen::Index>(t));
      }
    });
  }
  return out;
}

// Per-row inner product of two equally shaped matrices -> [m x 1].
template <class S>
Tensor<S> rowwise_dot(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("rowwise_dot: shapes differ, " +
                     detail::shape_str(a.rows(), a.cols()) + " and " +
                     detail::shape_str(b.rows(), b.cols()));
  }
  Tensor<S> out(Mat<S>(a.value().cwiseProduct(b.value()).rowwise().sum()),
                tape.recording() && detail::any_rg(a, b));
  detail::check_finite(tape, out.value(), "rowwise_dot");
  if (out.requires_grad()) {
    tape.record([ad = a.data(), bd = b.data(), od = out.data()] {
      if (od->grad.size() == 0) return;
      if (ad->requires_grad) {
        ad->accumulate((bd->value.array().colwise() * od->grad.col(0).array()).matrix());
      }
      if (bd->requires_grad) {
        bd->accumulate((ad->value.array().colwise() * od->grad.col(0).array()).matrix());
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> sum_all(Tape<S>& tape, const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::scalar(a.value().sum(), tape.recording() && a.requires_grad());
  detail::check_finite(tape, out.value(), "sum_all");
  if (out.requires_grad()) {
    tape.record([ad = a.data(), od = out.data()] {
      if (od->grad.size() == 0) return;
      ad->accumulate(Mat<S>::Constant(ad->value.rows(), ad->value.cols(), od->grad(0, 0)));
    });
  }
  return out;
}

}  // namespace sbr
