#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sbr/batch.hpp"
#include "sbr/graph.hpp"
#include "sbr/ops.hpp"
#include "sbr/rng.hpp"

// TAGNN++: gated GNN over the session graph, sequence re-assembly with
// sinusoidal positional encoding, Transformer encoder blocks, local/global
// readout, and target-attentive candidate scoring.
namespace sbr {

constexpr double kLayerNormEps = 1e-5;
constexpr double kMaskBias = -1e9;

struct ModelConfig {
  int32_t n_items = 0;  // vocabulary size M (excluding padding)
  int d = 100;
  int heads = 2;
  double dropout_p = 0.1;
  int ggnn_steps = 1;
  int ffn_hidden = 0;  // 0 = 4 * d
  int blocks = 1;
  bool use_gnn = true;
  bool use_transformer = true;
  bool use_pe = true;
  // Global attention weights are unnormalized by default, matching the cited
  // readout construction; this switches on a softmax over valid positions.
  bool normalize_global_attention = false;

  int ffn_width() const { return ffn_hidden > 0 ? ffn_hidden : 4 * d; }

  void validate() const {
    if (n_items < 1) throw ConfigError("model: n_items must be positive");
    if (d < 1 || heads < 1 || blocks < 1) throw ConfigError("model: dims must be positive");
    if (d % heads != 0) {
      throw ConfigError("model: embedding dim " + std::to_string(d) +
                        " not divisible by heads " + std::to_string(heads));
    }
    if (ggnn_steps < 1) throw ConfigError("model: ggnn_steps must be >= 1");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("model: dropout must be in [0,1)");
  }
};

// Named parameter registry. Creation order is fixed and defines both the rng
// draw sequence at init and the deterministic optimizer update order.
template <class S>
struct ModelParams {
  ModelConfig config;
  std::vector<std::pair<std::string, Tensor<S>>> registry;

  Tensor<S> embedding;  // (M+1) x d, row 0 frozen at zero

  struct Ggnn {
    Tensor<S> h_in, b_in, h_out, b_out;
    Tensor<S> w_z, u_z, b_z;
    Tensor<S> w_r, u_r, b_r;
    Tensor<S> w_o, u_o, b_o;
  } ggnn;

  struct Block {
    Tensor<S> wq, wk, wv, wo;
    Tensor<S> ln1_gamma, ln1_beta;
    Tensor<S> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    Tensor<S> ln2_gamma, ln2_beta;
  };
  std::vector<Block> blocks;

  struct Readout {
    Tensor<S> w1, w2;  // d x d, applied as x * W
    Tensor<S> q;       // d x 1
    Tensor<S> c;       // 1 x d
    Tensor<S> wt;      // d x d target-attention bilinear form
    Tensor<S> w3;      // 3d x d fusion, applied as fused * W3
  } readout;

  ModelParams() = default;

  ModelParams(const ModelConfig& cfg, Rng& rng) : config(cfg) {
    cfg.validate();
    const int d = cfg.d;
    const S bound = S(1.0 / std::sqrt(static_cast<double>(d)));
    auto uniform = [&](Eigen::Index r, Eigen::Index c) {
      Mat<S> m(r, c);
      for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = S(rng.uniform(-bound, bound));
      }
      return m;
    };
    auto weight = [&](const std::string& name, Eigen::Index r, Eigen::Index c) {
      Tensor<S> t(uniform(r, c), true);
      registry.emplace_back(name, t);
      return t;
    };
    auto zeros = [&](const std::string& name, Eigen::Index r, Eigen::Index c) {
      Tensor<S> t(Mat<S>::Zero(r, c), true);
      registry.emplace_back(name, t);
      return t;
    };
    auto ones = [&](const std::string& name, Eigen::Index r, Eigen::Index c) {
      Tensor<S> t(Mat<S>::Ones(r, c), true);
      registry.emplace_back(name, t);
      return t;
    };

    Mat<S> emb = uniform(cfg.n_items + 1, d);
    emb.row(0).setZero();
    embedding = Tensor<S>(std::move(emb), true);
    registry.emplace_back("embedding", embedding);

    ggnn.h_in = weight("ggnn.h_in", d, d);
    ggnn.b_in = zeros("ggnn.b_in", 1, d);
    ggnn.h_out = weight("ggnn.h_out", d, d);
    ggnn.b_out = zeros("ggnn.b_out", 1, d);
    ggnn.w_z = weight("ggnn.w_z", 2 * d, d);
    ggnn.u_z = weight("ggnn.u_z", d, d);
    ggnn.b_z = zeros("ggnn.b_z", 1, d);
    ggnn.w_r = weight("ggnn.w_r", 2 * d, d);
    ggnn.u_r = weight("ggnn.u_r", d, d);
    ggnn.b_r = zeros("ggnn.b_r", 1, d);
    ggnn.w_o = weight("ggnn.w_o", 2 * d, d);
    ggnn.u_o = weight("ggnn.u_o", d, d);
    ggnn.b_o = zeros("ggnn.b_o", 1, d);

    blocks.resize(cfg.blocks);
    for (int b = 0; b < cfg.blocks; ++b) {
      std::string p = "block" + std::to_string(b) + ".";
      Block& blk = blocks[b];
      blk.wq = weight(p + "wq", d, d);
      blk.wk = weight(p + "wk", d, d);
      blk.wv = weight(p + "wv", d, d);
      blk.wo = weight(p + "wo", d, d);
      blk.ln1_gamma = ones(p + "ln1_gamma", 1, d);
      blk.ln1_beta = zeros(p + "ln1_beta", 1, d);
      blk.ffn_w1 = weight(p + "ffn_w1", d, cfg.ffn_width());
      blk.ffn_b1 = zeros(p + "ffn_b1", 1, cfg.ffn_width());
      blk.ffn_w2 = weight(p + "ffn_w2", cfg.ffn_width(), d);
      blk.ffn_b2 = zeros(p + "ffn_b2", 1, d);
      blk.ln2_gamma = ones(p + "ln2_gamma", 1, d);
      blk.ln2_beta = zeros(p + "ln2_beta", 1, d);
    }

    readout.w1 = weight("readout.w1", d, d);
    readout.w2 = weight("readout.w2", d, d);
    readout.q = weight("readout.q", d, 1);
    readout.c = zeros("readout.c", 1, d);
    readout.wt = weight("readout.wt", d, d);
    readout.w3 = weight("readout.w3", 3 * d, d);
  }

  void zero_grads() {
    for (auto& [name, p] : registry) p.zero_grad();
  }

  Tensor<S> find(const std::string& name) const {
    for (const auto& [n, p] : registry) {
      if (n == name) return p;
    }
    throw IndexError("model: no parameter named " + name);
  }
};

// Sinusoidal positional encoding: PE[pos,2i] = sin(pos/10000^{2i/d}),
// PE[pos,2i+1] = cos(pos/10000^{2i/d}). d must be even.
template <class S>
Mat<S> positional_encoding(Eigen::Index length, Eigen::Index d) {
  if (d % 2 != 0) {
    throw ConfigError("positional_encoding: dimension must be even, got " + std::to_string(d));
  }
  Mat<S> pe(length, d);
  for (Eigen::Index pos = 0; pos < length; ++pos) {
    for (Eigen::Index i = 0; i < d / 2; ++i) {
      double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      double angle = static_cast<double>(pos) * freq;
      pe(pos, 2 * i) = S(std::sin(angle));
      pe(pos, 2 * i + 1) = S(std::cos(angle));
    }
  }
  return pe;
}

// Padding mask for one padded row: additive key bias and a 0/1 validity
// column. At least one position must be valid.
template <class S>
struct SeqMask {
  Eigen::Index length = 0;
  Eigen::Index padded_len = 0;
  Tensor<S> key_bias;   // 1 x L, 0 at valid keys, -1e9 at padding
  Tensor<S> valid_col;  // L x 1, 1 at valid positions
};

template <class S>
SeqMask<S> make_seq_mask(Eigen::Index valid_len, Eigen::Index padded_len) {
  if (valid_len < 1) throw ContractError("mask: row has no unmasked positions");
  if (valid_len > padded_len) throw ContractError("mask: valid length exceeds padded length");
  SeqMask<S> m;
  m.length = valid_len;
  m.padded_len = padded_len;
  Mat<S> bias = Mat<S>::Zero(1, padded_len);
  Mat<S> valid = Mat<S>::Zero(padded_len, 1);
  for (Eigen::Index t = 0; t < padded_len; ++t) {
    if (t < valid_len) {
      valid(t, 0) = S(1);
    } else {
      bias(0, t) = S(kMaskBias);
    }
  }
  m.key_bias = Tensor<S>(std::move(bias), false);
  m.valid_col = Tensor<S>(std::move(valid), false);
  return m;
}

// One gated propagation step, iterated `steps` times:
//   m  = [A_in (X H_in) + b_in, A_out (X H_out) + b_out]
//   z  = sigmoid(m W_z + X U_z + b_z)
//   r  = sigmoid(m W_r + X U_r + b_r)
//   xc = tanh(m W_o + (r .* X) U_o + b_o)
//   X' = (1 - z) .* X + z .* xc
template <class S>
Tensor<S> ggnn_propagate(Tape<S>& tape, Tensor<S> x, const Tensor<S>& a_in,
                         const Tensor<S>& a_out, const typename ModelParams<S>::Ggnn& p,
                         int steps) {
  if (steps < 1) throw ConfigError("ggnn: steps must be >= 1");
  if (a_in.rows() != x.rows() || a_in.cols() != x.rows() || a_out.rows() != x.rows() ||
      a_out.cols() != x.rows()) {
    throw ShapeError("ggnn: adjacency must be n x n with n = node count");
  }
  for (int s = 0; s < steps; ++s) {
    Tensor<S> m_in = add(tape, matmul(tape, a_in, matmul(tape, x, p.h_in)), p.b_in);
    Tensor<S> m_out = add(tape, matmul(tape, a_out, matmul(tape, x, p.h_out)), p.b_out);
    Tensor<S> m = concat_cols(tape, m_in, m_out);
    Tensor<S> z =
        sigmoid(tape, add(tape, add(tape, matmul(tape, m, p.w_z), matmul(tape, x, p.u_z)), p.b_z));
    Tensor<S> r =
        sigmoid(tape, add(tape, add(tape, matmul(tape, m, p.w_r), matmul(tape, x, p.u_r)), p.b_r));
    Tensor<S> candidate = tanh_act(
        tape,
        add(tape, add(tape, matmul(tape, m, p.w_o), matmul(tape, mul(tape, r, x), p.u_o)), p.b_o));
    Tensor<S> keep = add_scalar(tape, scale(tape, z, S(-1)), S(1));  // 1 - z
    x = add(tape, mul(tape, keep, x), mul(tape, z, candidate));
  }
  return x;
}

// Scaled dot-product attention over `heads` column slices; padded key columns
// get the additive mask bias, padded query rows are zeroed after attention.
template <class S>
Tensor<S> multi_head_attention(Tape<S>& tape, const Tensor<S>& h, const SeqMask<S>& mask,
                               const typename ModelParams<S>::Block& p, int heads) {
  const Eigen::Index d = h.cols();
  if (d % heads != 0) throw ConfigError("attention: d not divisible by heads");
  const Eigen::Index dk = d / heads;
  const S inv_sqrt_dk = S(1.0 / std::sqrt(static_cast<double>(dk)));

  Tensor<S> qm = matmul(tape, h, p.wq);
  Tensor<S> km = matmul(tape, h, p.wk);
  Tensor<S> vm = matmul(tape, h, p.wv);

  Tensor<S> merged;
  for (int k = 0; k < heads; ++k) {
    Tensor<S> qk = slice_cols(tape, qm, k * dk, dk);
    Tensor<S> kk = slice_cols(tape, km, k * dk, dk);
    Tensor<S> vk = slice_cols(tape, vm, k * dk, dk);
    Tensor<S> scores = scale(tape, matmul(tape, qk, transpose(tape, kk)), inv_sqrt_dk);
    scores = add(tape, scores, mask.key_bias);  // row-broadcast over queries
    Tensor<S> attn = softmax_rows(tape, scores);
    Tensor<S> head = matmul(tape, attn, vk);
    merged = k == 0 ? head : concat_cols(tape, merged, head);
  }
  Tensor<S> out = matmul(tape, merged, p.wo);
  return mul(tape, out, mask.valid_col);
}

// Post-norm residual block: u = LN(h + Drop(MHA(h))), out = LN(u + Drop(FFL(u))).
template <class S>
Tensor<S> transformer_block(Tape<S>& tape, const Tensor<S>& h, const SeqMask<S>& mask,
                            const typename ModelParams<S>::Block& p, int heads, double dropout_p,
                            bool training, Rng& rng) {
  Tensor<S> attn = multi_head_attention(tape, h, mask, p, heads);
  attn = dropout(tape, attn, dropout_p, training, rng);
  Tensor<S> u =
      layer_norm(tape, add(tape, h, attn), p.ln1_gamma, p.ln1_beta, S(kLayerNormEps));
  Tensor<S> ff = relu(tape, add(tape, matmul(tape, u, p.ffn_w1), p.ffn_b1));
  ff = add(tape, matmul(tape, ff, p.ffn_w2), p.ffn_b2);
  ff = dropout(tape, ff, dropout_p, training, rng);
  return layer_norm(tape, add(tape, u, ff), p.ln2_gamma, p.ln2_beta, S(kLayerNormEps));
}

// Map node states back to sequence order via the alias table, zero-filling
// padded positions, then add the positional encoding when enabled.
template <class S>
Tensor<S> assemble_sequence(Tape<S>& tape, const Tensor<S>& node_states,
                            const std::vector<int32_t>& alias, Eigen::Index padded_len,
                            bool use_pe) {
  Tensor<S> h = gather_rows_padded(tape, node_states, alias, padded_len);
  if (use_pe) {
    Tensor<S> pe(positional_encoding<S>(padded_len, node_states.cols()), false);
    h = add(tape, h, pe);
  }
  return h;
}

// Local embedding is the last valid position; global embedding pools all
// valid positions with (by default unnormalized) additive attention:
//   alpha_t = q^T sigmoid(s_local W1 + h_t W2 + c),  s_global = sum_t alpha_t h_t.
template <class S>
std::pair<Tensor<S>, Tensor<S>> readout(Tape<S>& tape, const Tensor<S>& h, const SeqMask<S>& mask,
                                        const typename ModelParams<S>::Readout& p,
                                        bool normalize_attention) {
  Tensor<S> s_local = slice_rows(tape, h, mask.length - 1, 1);
  Tensor<S> act = sigmoid(
      tape, add(tape, add(tape, matmul(tape, h, p.w2), matmul(tape, s_local, p.w1)), p.c));
  Tensor<S> alpha = matmul(tape, act, p.q);  // L x 1
  if (normalize_attention) {
    Tensor<S> row = add(tape, transpose(tape, alpha), mask.key_bias);
    alpha = transpose(tape, softmax_rows(tape, row));
  }
  alpha = mul(tape, alpha, mask.valid_col);
  Tensor<S> s_global = matmul(tape, transpose(tape, alpha), h);
  return {s_local, s_global};
}

// Candidate-conditioned pooling and scoring over all M items:
//   beta(v) = softmax_t(e_v^T Wt h_t),  s_target(v) = sum_t beta_t(v) h_t,
//   logit(v) = e_v . ([s_local, s_global, s_target(v)] W3).
template <class S>
Tensor<S> target_attentive_scores(Tape<S>& tape, const Tensor<S>& h, const SeqMask<S>& mask,
                                  const Tensor<S>& s_local, const Tensor<S>& s_global,
                                  const Tensor<S>& item_table,
                                  const typename ModelParams<S>::Readout& p) {
  const Eigen::Index m = item_table.rows();
  Tensor<S> scores =
      matmul(tape, matmul(tape, item_table, p.wt), transpose(tape, h));  // M x L
  scores = add(tape, scores, mask.key_bias);
  Tensor<S> beta = softmax_rows(tape, scores);
  Tensor<S> s_target = matmul(tape, beta, h);  // M x d
  Tensor<S> fused = concat_cols(
      tape, concat_cols(tape, repeat_rows(tape, s_local, m), repeat_rows(tape, s_global, m)),
      s_target);
  Tensor<S> projected = matmul(tape, fused, p.w3);  // M x d
  return transpose(tape, rowwise_dot(tape, item_table, projected));  // 1 x M
}

// Full forward pass for one padded batch; ablation toggles skip stages.
// Returns logits [B x M], with item v scored at column v-1.
template <class S>
Tensor<S> forward(Tape<S>& tape, const Batch<S>& batch, const ModelParams<S>& params,
                  bool training, Rng& rng) {
  const ModelConfig& cfg = params.config;
  Tensor<S> item_table = slice_rows(tape, params.embedding, 1, cfg.n_items);
  std::vector<Tensor<S>> rows;
  rows.reserve(batch.size());
  for (Eigen::Index b = 0; b < batch.size(); ++b) {
    const SessionGraph<S>& g = batch.graphs[b];
    Tensor<S> x = embedding_rows(tape, params.embedding, g.nodes);
    if (cfg.use_gnn) {
      Tensor<S> a_in(g.a_in, false);
      Tensor<S> a_out(g.a_out, false);
      x = ggnn_propagate(tape, x, a_in, a_out, params.ggnn, cfg.ggnn_steps);
    }
    SeqMask<S> mask = make_seq_mask<S>(batch.lengths[b], batch.max_len());
    Tensor<S> h = assemble_sequence(tape, x, g.alias, batch.max_len(), cfg.use_pe);
    if (cfg.use_transformer) {
      for (const auto& blk : params.blocks) {
        h = transformer_block(tape, h, mask, blk, cfg.heads, cfg.dropout_p, training, rng);
      }
    }
    auto [s_local, s_global] = readout(tape, h, mask, params.readout, cfg.normalize_global_attention);
    rows.push_back(
        target_attentive_scores(tape, h, mask, s_local, s_global, item_table, params.readout));
  }
  return concat_rows(tape, rows);
}

}  // namespace sbr
