#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "sbr/errors.hpp"
#include "sbr/tensor.hpp"

namespace sbr {

// Directed session graph: unique items as nodes (first-occurrence order),
// consecutive-click transitions as edges, with degree-normalized incoming and
// outgoing adjacency and an alias map back to sequence positions.
template <class S>
struct SessionGraph {
  std::vector<int32_t> nodes;
  Mat<S> a_in;
  Mat<S> a_out;
  std::vector<int32_t> alias;

  Eigen::Index node_count() const { return static_cast<Eigen::Index>(nodes.size()); }
};

// Repeated transitions contribute a single edge unless weighted_edges is set,
// in which case transition counts weight the adjacency before normalization.
// Self-loops from immediate repeats are kept.
template <class S>
SessionGraph<S> build_graph(const std::vector<int32_t>& prefix, bool weighted_edges = false) {
  if (prefix.empty()) throw ContractError("build_graph: empty prefix");

  SessionGraph<S> g;
  std::unordered_map<int32_t, int32_t> node_of;
  g.alias.reserve(prefix.size());
  for (int32_t item : prefix) {
    if (item <= 0) {
      throw ContractError("build_graph: prefix contains padding index " + std::to_string(item));
    }
    auto [it, inserted] = node_of.try_emplace(item, static_cast<int32_t>(g.nodes.size()));
    if (inserted) g.nodes.push_back(item);
    g.alias.push_back(it->second);
  }

  const Eigen::Index n = g.node_count();
  Mat<S> counts = Mat<S>::Zero(n, n);
  for (size_t t = 0; t + 1 < prefix.size(); ++t) {
    counts(g.alias[t], g.alias[t + 1]) += S(1);
  }
  if (!weighted_edges) counts = (counts.array() > S(0)).template cast<S>().matrix();

  g.a_out = Mat<S>::Zero(n, n);
  g.a_in = Mat<S>::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    S out_deg = counts.row(i).sum();
    if (out_deg > S(0)) g.a_out.row(i) = counts.row(i) / out_deg;
    S in_deg = counts.col(i).sum();
    if (in_deg > S(0)) g.a_in.row(i) = counts.col(i).transpose() / in_deg;
  }
  return g;
}

}  // namespace sbr
