#pragma once

#include <cstdint>
#include <vector>

#include "sbr/data.hpp"
#include "sbr/graph.hpp"
#include "sbr/rng.hpp"

namespace sbr {

// Padded mini-batch: prefixes right-padded with index 0 to the batch maximum
// length, one session graph per row, mask true exactly where padding sits.
template <class S>
struct Batch {
  Eigen::Matrix<int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> prefixes;
  std::vector<int32_t> lengths;
  std::vector<SessionGraph<S>> graphs;
  std::vector<int32_t> labels;
  Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> mask;

  Eigen::Index size() const { return prefixes.rows(); }
  Eigen::Index max_len() const { return prefixes.cols(); }
};

template <class S>
Batch<S> make_batch(const std::vector<data::LabeledExample>& examples, size_t begin, size_t end,
                    bool weighted_edges = false) {
  if (begin >= end) throw ContractError("make_batch: empty range");
  const auto b = static_cast<Eigen::Index>(end - begin);
  Eigen::Index max_len = 0;
  for (size_t i = begin; i < end; ++i) {
    max_len = std::max(max_len, static_cast<Eigen::Index>(examples[i].prefix.size()));
  }
  Batch<S> batch;
  batch.prefixes.setZero(b, max_len);
  batch.mask.setOnes(b, max_len);
  batch.lengths.resize(b);
  batch.labels.resize(b);
  batch.graphs.reserve(b);
  for (Eigen::Index row = 0; row < b; ++row) {
    const data::LabeledExample& ex = examples[begin + row];
    const auto len = static_cast<Eigen::Index>(ex.prefix.size());
    batch.lengths[row] = static_cast<int32_t>(len);
    batch.labels[row] = ex.label;
    for (Eigen::Index t = 0; t < len; ++t) {
      batch.prefixes(row, t) = ex.prefix[t];
      batch.mask(row, t) = 0;
    }
    batch.graphs.push_back(build_graph<S>(ex.prefix, weighted_edges));
  }
  return batch;
}

// Training batches are shuffled with the given rng; evaluation keeps the
// original example order. The final partial batch is kept.
template <class S>
std::vector<Batch<S>> make_batches(std::vector<data::LabeledExample> examples, int batch_size,
                                   bool shuffle, Rng& rng, bool weighted_edges = false) {
  if (batch_size < 1) throw ConfigError("make_batches: batch_size must be >= 1");
  if (shuffle) rng.shuffle(examples);
  std::vector<Batch<S>> out;
  for (size_t at = 0; at < examples.size(); at += static_cast<size_t>(batch_size)) {
    size_t end = std::min(examples.size(), at + static_cast<size_t>(batch_size));
    out.push_back(make_batch<S>(examples, at, end, weighted_edges));
  }
  return out;
}

}  // namespace sbr
