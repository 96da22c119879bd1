// SPDX-License-Identifier: Apache-2.0
// Naive loop implementations used as independent references. They share no
// code with the library beyond the Tensor container.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "attmerge/tensor.hpp"

namespace oracle {

using attmerge::Tensor;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double swish(double x) { return x * sigmoid(x); }
inline double softplus(double x) { return std::log1p(std::exp(x)); }

inline double stack_at(const Tensor &x, std::size_t t, std::size_t h, std::size_t l) {
  return x[(t * x.dim(1) + h) * x.dim(2) + l];
}

// x_sq[l] = swish(Σ_h w[h] · mean_t X[t,h,l])
inline std::vector<double> squeeze(const Tensor &x, const Tensor &w_sq) {
  const std::size_t T = x.dim(0), H = x.dim(1), L = x.dim(2);
  std::vector<double> out(L);
  for (std::size_t l = 0; l < L; ++l) {
    double s = 0.0;
    for (std::size_t h = 0; h < H; ++h) {
      double mean = 0.0;
      for (std::size_t t = 0; t < T; ++t) mean += stack_at(x, t, h, l);
      s += w_sq[h] * (mean / static_cast<double>(T));
    }
    out[l] = swish(s);
  }
  return out;
}

inline std::vector<double> excite(const std::vector<double> &x_sq, const Tensor &w1, const Tensor &w2) {
  const std::size_t L = x_sq.size(), s = w1.dim(1);
  std::vector<double> hidden(s), out(L);
  for (std::size_t j = 0; j < s; ++j) {
    double a = 0.0;
    for (std::size_t l = 0; l < L; ++l) a += x_sq[l] * w1[l * s + j];
    hidden[j] = swish(a);
  }
  for (std::size_t l = 0; l < L; ++l) {
    double a = 0.0;
    for (std::size_t j = 0; j < s; ++j) a += hidden[j] * w2[j * L + l];
    out[l] = sigmoid(a);
  }
  return out;
}

inline Tensor reweight(const Tensor &x, const std::vector<double> &w) {
  Tensor out(x.shape());
  for (std::size_t t = 0; t < x.dim(0); ++t)
    for (std::size_t h = 0; h < x.dim(1); ++h)
      for (std::size_t l = 0; l < x.dim(2); ++l)
        out[(t * x.dim(1) + h) * x.dim(2) + l] = stack_at(x, t, h, l) * w[l];
  return out;
}

// Frame t flattened with (h, l) at position h + H·l, then three bias-free maps.
inline Tensor merge_projection(const Tensor &x, const Tensor &w1, const Tensor &w2, const Tensor &w3) {
  const std::size_t T = x.dim(0), H = x.dim(1), L = x.dim(2);
  const std::size_t i_dim = w1.dim(1);
  Tensor out({T, H});
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> flat(H * L);
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t l = 0; l < L; ++l) flat[h + H * l] = stack_at(x, t, h, l);
    std::vector<double> a(i_dim, 0.0), b(i_dim, 0.0);
    for (std::size_t j = 0; j < i_dim; ++j)
      for (std::size_t k = 0; k < H * L; ++k) a[j] += flat[k] * w1[k * i_dim + j];
    for (std::size_t j = 0; j < i_dim; ++j)
      for (std::size_t k = 0; k < i_dim; ++k) b[j] += a[k] * w2[k * i_dim + j];
    for (std::size_t h = 0; h < H; ++h) {
      double v = 0.0;
      for (std::size_t k = 0; k < i_dim; ++k) v += b[k] * w3[k * H + h];
      out[t * H + h] = v;
    }
  }
  return out;
}

inline Tensor linm_merge(const Tensor &x, const Tensor &theta) {
  const std::size_t T = x.dim(0), H = x.dim(1), L = x.dim(2);
  Tensor out({T, H});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t h = 0; h < H; ++h) {
      double v = 0.0;
      for (std::size_t l = 0; l < L; ++l) v += softplus(theta[l]) * stack_at(x, t, h, l);
      out[t * H + h] = v;
    }
  return out;
}

// Single-layer LSTM, gate blocks [i | f | g | o], zero initial state.
inline std::vector<double> lstm_logits(const Tensor &x, const Tensor &w_x, const Tensor &w_h, const Tensor &b,
                                       const Tensor &w_out, const Tensor &b_out, bool mean_readout) {
  const std::size_t T = x.dim(0), H = x.dim(1), r = w_h.dim(0);
  std::vector<double> h(r, 0.0), c(r, 0.0), acc(r, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> z(4 * r);
    for (std::size_t j = 0; j < 4 * r; ++j) {
      double v = b[j];
      for (std::size_t k = 0; k < H; ++k) v += x[t * H + k] * w_x[k * 4 * r + j];
      for (std::size_t k = 0; k < r; ++k) v += h[k] * w_h[k * 4 * r + j];
      z[j] = v;
    }
    for (std::size_t j = 0; j < r; ++j) {
      const double ig = sigmoid(z[j]);
      const double fg = sigmoid(z[r + j]);
      const double gg = std::tanh(z[2 * r + j]);
      const double og = sigmoid(z[3 * r + j]);
      c[j] = fg * c[j] + ig * gg;
      h[j] = og * std::tanh(c[j]);
      acc[j] += h[j];
    }
  }
  std::vector<double> logits(2);
  for (std::size_t o = 0; o < 2; ++o) {
    double v = b_out[o];
    for (std::size_t j = 0; j < r; ++j) {
      const double s = mean_readout ? acc[j] / static_cast<double>(T) : h[j];
      v += s * w_out[j * 2 + o];
    }
    logits[o] = v;
  }
  return logits;
}

inline std::vector<double> pooling_logits(const Tensor &x, const Tensor &w_f, const Tensor &b_f,
                                          const Tensor &w_a, const Tensor &b_a, const Tensor &w_out,
                                          const Tensor &b_out) {
  const std::size_t T = x.dim(0), H = x.dim(1), p = w_f.dim(1);
  std::vector<double> z(T * p), e(T);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < p; ++j) {
      double v = b_f[j];
      for (std::size_t k = 0; k < H; ++k) v += x[t * H + k] * w_f[k * p + j];
      z[t * p + j] = swish(v);
    }
  double max_e = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < T; ++t) {
    double v = b_a[0];
    for (std::size_t j = 0; j < p; ++j) v += z[t * p + j] * w_a[j];
    e[t] = v;
    max_e = std::max(max_e, v);
  }
  double norm = 0.0;
  for (std::size_t t = 0; t < T; ++t) norm += std::exp(e[t] - max_e);
  std::vector<double> stats(2 * p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    double mu = 0.0;
    for (std::size_t t = 0; t < T; ++t) mu += std::exp(e[t] - max_e) / norm * z[t * p + j];
    double var = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const double d = z[t * p + j] - mu;
      var += std::exp(e[t] - max_e) / norm * d * d;
    }
    stats[j] = mu;
    stats[p + j] = var > 0.0 ? std::sqrt(var) : 0.0;
  }
  std::vector<double> logits(2);
  for (std::size_t o = 0; o < 2; ++o) {
    double v = b_out[o];
    for (std::size_t k = 0; k < 2 * p; ++k) v += stats[k] * w_out[k * 2 + o];
    logits[o] = v;
  }
  return logits;
}

// One pre-norm block on a T×H sequence: h = x + MHA(LN1(x)), y = h + FFN(LN2(h)).
struct BlockWeights {
  const Tensor *ln1_gain, *ln1_bias, *w_q, *b_q, *w_k, *b_k, *w_v, *b_v, *w_o, *b_o;
  const Tensor *ln2_gain, *ln2_bias, *w_ff1, *b_ff1, *w_ff2, *b_ff2;
};

inline std::vector<double> layer_norm_rows(const std::vector<double> &x, std::size_t T, std::size_t H,
                                           const Tensor &gain, const Tensor &bias) {
  std::vector<double> out(T * H);
  for (std::size_t t = 0; t < T; ++t) {
    double mean = 0.0, var = 0.0;
    for (std::size_t h = 0; h < H; ++h) mean += x[t * H + h];
    mean /= static_cast<double>(H);
    for (std::size_t h = 0; h < H; ++h) var += (x[t * H + h] - mean) * (x[t * H + h] - mean);
    var /= static_cast<double>(H);
    for (std::size_t h = 0; h < H; ++h)
      out[t * H + h] = (x[t * H + h] - mean) / std::sqrt(var + 1e-5) * gain[h] + bias[h];
  }
  return out;
}

inline std::vector<double> affine_rows(const std::vector<double> &x, std::size_t T, std::size_t in,
                                       const Tensor &w, const Tensor &b) {
  const std::size_t out_dim = w.dim(1);
  std::vector<double> out(T * out_dim);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < out_dim; ++j) {
      double v = b[j];
      for (std::size_t k = 0; k < in; ++k) v += x[t * in + k] * w[k * out_dim + j];
      out[t * out_dim + j] = v;
    }
  return out;
}

inline Tensor encoder_block(const Tensor &x, const BlockWeights &p, std::size_t heads) {
  const std::size_t T = x.dim(0), H = x.dim(1), d = H / heads, F = p.w_ff1->dim(1);
  std::vector<double> in(x.data().begin(), x.data().end());
  const auto n1 = layer_norm_rows(in, T, H, *p.ln1_gain, *p.ln1_bias);
  const auto q = affine_rows(n1, T, H, *p.w_q, *p.b_q);
  const auto k = affine_rows(n1, T, H, *p.w_k, *p.b_k);
  const auto v = affine_rows(n1, T, H, *p.w_v, *p.b_v);
  std::vector<double> att(T * H, 0.0);
  for (std::size_t hd = 0; hd < heads; ++hd)
    for (std::size_t i = 0; i < T; ++i) {
      std::vector<double> s(T);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < T; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += q[i * H + hd * d + c] * k[j * H + hd * d + c];
        s[j] = dot / std::sqrt(static_cast<double>(d));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < T; ++j) z += std::exp(s[j] - mx);
      for (std::size_t j = 0; j < T; ++j)
        for (std::size_t c = 0; c < d; ++c)
          att[i * H + hd * d + c] += std::exp(s[j] - mx) / z * v[j * H + hd * d + c];
    }
  const auto proj = affine_rows(att, T, H, *p.w_o, *p.b_o);
  std::vector<double> h1(T * H);
  for (std::size_t i = 0; i < T * H; ++i) h1[i] = in[i] + proj[i];
  const auto n2 = layer_norm_rows(h1, T, H, *p.ln2_gain, *p.ln2_bias);
  auto f1 = affine_rows(n2, T, H, *p.w_ff1, *p.b_ff1);
  for (auto &u : f1) u = 0.5 * u * (1.0 + std::erf(u / std::sqrt(2.0)));
  const auto f2 = affine_rows(f1, T, F, *p.w_ff2, *p.b_ff2);
  Tensor out({T, H});
  for (std::size_t i = 0; i < T * H; ++i) out[i] = h1[i] + f2[i];
  return out;
}

struct Trial {
  double score;
  bool bonafide;
};

// Counts acceptances for every candidate threshold directly; candidates are
// the distinct scores in ascending order followed by +inf. The crossing rule
// is the first candidate where FAR - FRR <= 0, interpolated with its
// predecessor unless the difference is exactly zero.
inline double brute_force_eer(const std::vector<Trial> &trials) {
  std::vector<double> thresholds;
  for (const auto &t : trials) thresholds.push_back(t.score);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());
  std::size_t n_bona = 0, n_spoof = 0;
  for (const auto &t : trials) (t.bonafide ? n_bona : n_spoof)++;

  std::vector<double> far, frr;
  for (double th : thresholds) {
    std::size_t accepted_spoof = 0, rejected_bona = 0;
    for (const auto &t : trials) {
      if (!t.bonafide && t.score >= th) ++accepted_spoof;
      if (t.bonafide && t.score < th) ++rejected_bona;
    }
    far.push_back(static_cast<double>(accepted_spoof) / static_cast<double>(n_spoof));
    frr.push_back(static_cast<double>(rejected_bona) / static_cast<double>(n_bona));
  }
  for (std::size_t k = 0; k < far.size(); ++k) {
    const double diff = far[k] - frr[k];
    if (diff > 0.0) continue;
    if (diff == 0.0 || k == 0) return far[k];
    const double prev_diff = far[k - 1] - frr[k - 1];
    const double alpha = prev_diff / (prev_diff - diff);
    return far[k - 1] + alpha * (far[k] - far[k - 1]);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

} // namespace oracle
