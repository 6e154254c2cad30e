#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "vtr/retrieval.hpp"

// Brute-force reference shared by the unit and acceptance suites. Plain
// double loops over the documented strategy definitions; no code shared
// with rank().
namespace bench_oracle {

using vtr::bench::RetrievalIndex;
using vtr::bench::Strategy;

// Independent reference: straight double loops over the documented strategy
// definitions, sharing no code with rank().
std::vector<double> oracle_sims(const RetrievalIndex& idx) {
  const std::int64_t nv = idx.nv, nt = idx.nt, nf = idx.nf, nw = idx.nw, d = idx.d;
  std::vector<double> sims(static_cast<std::size_t>(nt * nv), 0.0);
  auto dot = [d](const double* a, const double* b) {
    double s = 0.0;
    for (std::int64_t j = 0; j < d; ++j) s += a[j] * b[j];
    return s;
  };
  auto softmax = [](std::vector<double> v) {
    double mx = v[0];
    for (double x : v) mx = std::max(mx, x);
    double sum = 0.0;
    for (double& x : v) {
      x = std::exp(x - mx);
      sum += x;
    }
    for (double& x : v) x /= sum;
    return v;
  };

  for (std::int64_t t = 0; t < nt; ++t) {
    const double* y = idx.texts.data() + t * d;
    for (std::int64_t v = 0; v < nv; ++v) {
      double sim = 0.0;
      switch (idx.strategy) {
        case Strategy::mean_pool: {
          sim = dot(y, idx.pooled.data() + v * d);
          break;
        }
        case Strategy::attention_pool: {
          std::vector<double> logits;
          for (std::int64_t f = 0; f < nf; ++f)
            logits.push_back(dot(y, idx.frames.data() + (v * nf + f) * d));
          std::vector<double> w = softmax(logits);
          std::vector<double> pooled(static_cast<std::size_t>(d), 0.0);
          for (std::int64_t f = 0; f < nf; ++f)
            for (std::int64_t j = 0; j < d; ++j)
              pooled[static_cast<std::size_t>(j)] +=
                  w[static_cast<std::size_t>(f)] * idx.frames[static_cast<std::size_t>((v * nf + f) * d + j)];
          double nrm = 0.0;
          for (double x : pooled) nrm += x * x;
          sim = dot(y, pooled.data()) / std::sqrt(nrm);
          break;
        }
        case Strategy::topk_pool: {
          std::vector<double> s;
          for (std::int64_t f = 0; f < nf; ++f)
            s.push_back(dot(y, idx.frames.data() + (v * nf + f) * d));
          std::sort(s.begin(), s.end(), std::greater<double>());
          double acc = 0.0;
          for (int i = 0; i < idx.topk_kprime; ++i) acc += s[static_cast<std::size_t>(i)];
          sim = acc / idx.topk_kprime;
          break;
        }
        case Strategy::xpool_style: {
          std::vector<double> q(static_cast<std::size_t>(d), 0.0);
          for (std::int64_t j = 0; j < d; ++j)
            for (std::int64_t i = 0; i < d; ++i)
              q[static_cast<std::size_t>(j)] += y[i] * idx.xp_wq[static_cast<std::size_t>(i * d + j)];
          std::vector<double> logits;
          for (std::int64_t f = 0; f < nf; ++f) {
            const double* frame = idx.frames.data() + (v * nf + f) * d;
            std::vector<double> key(static_cast<std::size_t>(d), 0.0);
            for (std::int64_t j = 0; j < d; ++j)
              for (std::int64_t i = 0; i < d; ++i)
                key[static_cast<std::size_t>(j)] += frame[i] * idx.xp_wk[static_cast<std::size_t>(i * d + j)];
            double l = 0.0;
            for (std::int64_t j = 0; j < d; ++j) l += q[static_cast<std::size_t>(j)] * key[static_cast<std::size_t>(j)];
            logits.push_back(l / std::sqrt(static_cast<double>(d)));
          }
          std::vector<double> w = softmax(logits);
          std::vector<double> pooled(static_cast<std::size_t>(d), 0.0);
          for (std::int64_t f = 0; f < nf; ++f) {
            const double* frame = idx.frames.data() + (v * nf + f) * d;
            for (std::int64_t j = 0; j < d; ++j) {
              double val = 0.0;
              for (std::int64_t i = 0; i < d; ++i)
                val += frame[i] * idx.xp_wvo[static_cast<std::size_t>(i * d + j)];
              pooled[static_cast<std::size_t>(j)] += w[static_cast<std::size_t>(f)] * val;
            }
          }
          double nrm = 0.0;
          for (double x : pooled) nrm += x * x;
          sim = dot(y, pooled.data()) / std::sqrt(nrm);
          break;
        }
        case Strategy::xclip_style: {
          const double* toks = idx.text_tokens.data() + t * nw * d;
          std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
          for (std::int64_t f = 0; f < nf; ++f)
            for (std::int64_t j = 0; j < d; ++j)
              mean[static_cast<std::size_t>(j)] += idx.frames[static_cast<std::size_t>((v * nf + f) * d + j)] / static_cast<double>(nf);
          double mn = 0.0;
          for (double x : mean) mn += x * x;
          for (double& x : mean) x /= std::sqrt(mn);

          const double s_vs = dot(y, mean.data());

          std::vector<double> fs;
          for (std::int64_t f = 0; f < nf; ++f)
            fs.push_back(dot(y, idx.frames.data() + (v * nf + f) * d));
          std::vector<double> wf = softmax(fs);
          double s_fs = 0.0;
          for (std::int64_t f = 0; f < nf; ++f) s_fs += wf[static_cast<std::size_t>(f)] * fs[static_cast<std::size_t>(f)];

          std::vector<double> wv;
          for (std::int64_t w2 = 0; w2 < nw; ++w2) wv.push_back(dot(toks + w2 * d, mean.data()));
          std::vector<double> ww = softmax(wv);
          double s_vw = 0.0;
          for (std::int64_t w2 = 0; w2 < nw; ++w2) s_vw += ww[static_cast<std::size_t>(w2)] * wv[static_cast<std::size_t>(w2)];

          std::vector<double> tile(static_cast<std::size_t>(nf * nw));
          for (std::int64_t f = 0; f < nf; ++f)
            for (std::int64_t w2 = 0; w2 < nw; ++w2)
              tile[static_cast<std::size_t>(f * nw + w2)] =
                  dot(toks + w2 * d, idx.frames.data() + (v * nf + f) * d);
          double row_term = 0.0;
          for (std::int64_t f = 0; f < nf; ++f) {
            std::vector<double> row(tile.begin() + f * nw, tile.begin() + (f + 1) * nw);
            std::vector<double> wr = softmax(row);
            for (std::int64_t w2 = 0; w2 < nw; ++w2)
              row_term += wr[static_cast<std::size_t>(w2)] * row[static_cast<std::size_t>(w2)] / static_cast<double>(nf);
          }
          double col_term = 0.0;
          for (std::int64_t w2 = 0; w2 < nw; ++w2) {
            std::vector<double> col;
            for (std::int64_t f = 0; f < nf; ++f) col.push_back(tile[static_cast<std::size_t>(f * nw + w2)]);
            std::vector<double> wc = softmax(col);
            for (std::int64_t f = 0; f < nf; ++f)
              col_term += wc[static_cast<std::size_t>(f)] * col[static_cast<std::size_t>(f)] / static_cast<double>(nw);
          }
          sim = (s_vs + s_fs + s_vw + 0.5 * (row_term + col_term)) / 4.0;
          break;
        }
      }
      sims[static_cast<std::size_t>(t * nv + v)] = sim;
    }
  }
  return sims;
}

}  // namespace bench_oracle
