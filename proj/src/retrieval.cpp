#include "vtr/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "vtr/gemm.hpp"

namespace vtr::bench {

using core::gemm::dot;
using i64 = std::int64_t;

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::mean_pool: return "mean_pool";
    case Strategy::attention_pool: return "attention_pool";
    case Strategy::topk_pool: return "topk_pool";
    case Strategy::xpool_style: return "xpool_style";
    case Strategy::xclip_style: return "xclip_style";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name) {
  for (Strategy s : {Strategy::mean_pool, Strategy::attention_pool,
                     Strategy::topk_pool, Strategy::xpool_style,
                     Strategy::xclip_style}) {
    if (name == strategy_name(s)) return s;
  }
  throw ConfigError("unknown strategy: " + name);
}

bool is_text_agnostic(Strategy s) { return s == Strategy::mean_pool; }

std::size_t RetrievalIndex::index_bytes() const {
  return sizeof(double) * (pooled.size() + frames.size() + texts.size() +
                           text_tokens.size() + xp_wq.size() + xp_wk.size() +
                           xp_wvo.size());
}

namespace {

void normalize_rows(std::vector<double>& data, i64 rows, i64 d) {
  for (i64 r = 0; r < rows; ++r) {
    double* row = data.data() + r * d;
    double s = 0.0;
    for (i64 j = 0; j < d; ++j) s += row[j] * row[j];
    const double nrm = std::sqrt(s);
    VTR_CHECK_NUMERIC(nrm > 0.0, "zero-norm row in index construction");
    for (i64 j = 0; j < d; ++j) row[j] /= nrm;
  }
}

constexpr i64 kMaxStackDim = 256;

void softmax_inplace(double* row, i64 n) {
  double mx = row[0];
  for (i64 i = 1; i < n; ++i) mx = std::max(mx, row[i]);
  double sum = 0.0;
  for (i64 i = 0; i < n; ++i) {
    row[i] = std::exp(row[i] - mx);
    sum += row[i];
  }
  const double inv = 1.0 / sum;
  for (i64 i = 0; i < n; ++i) row[i] *= inv;
}

// out[q][j] = dot(a_row_q, b_row_j); q-tiled so b streams once per tile.
void dot_block(const double* a, i64 na, const double* b, i64 nb, i64 d, double* out) {
  constexpr i64 kTile = 8;
  for (i64 q0 = 0; q0 < na; q0 += kTile) {
    const i64 qe = std::min(na, q0 + kTile);
    for (i64 j = 0; j < nb; ++j) {
      const double* br = b + j * d;
      for (i64 q = q0; q < qe; ++q) out[q * nb + j] = dot(a + q * d, br, d);
    }
  }
}

void validate(const RetrievalIndex& idx) {
  VTR_CHECK(idx.nv > 0 && idx.nt > 0 && idx.d > 0, "empty index");
  VTR_CHECK(static_cast<i64>(idx.texts.size()) == idx.nt * idx.d, "bad text block");
  switch (idx.strategy) {
    case Strategy::mean_pool:
      VTR_CHECK(static_cast<i64>(idx.pooled.size()) == idx.nv * idx.d,
                "mean_pool index needs pooled vectors");
      VTR_CHECK(idx.frames.empty(), "mean_pool index must not retain frames");
      break;
    case Strategy::attention_pool:
    case Strategy::topk_pool:
      VTR_CHECK(static_cast<i64>(idx.frames.size()) == idx.nv * idx.nf * idx.d,
                "per-frame index block missing");
      VTR_CHECK(idx.pooled.empty(), "cross-modal index must not carry pooled vectors");
      break;
    case Strategy::xpool_style:
      VTR_CHECK(static_cast<i64>(idx.frames.size()) == idx.nv * idx.nf * idx.d,
                "per-frame index block missing");
      VTR_CHECK(static_cast<i64>(idx.xp_wq.size()) == idx.d * idx.d &&
                    static_cast<i64>(idx.xp_wk.size()) == idx.d * idx.d &&
                    static_cast<i64>(idx.xp_wvo.size()) == idx.d * idx.d,
                "xpool projections missing");
      VTR_CHECK(idx.pooled.empty(), "cross-modal index must not carry pooled vectors");
      break;
    case Strategy::xclip_style:
      VTR_CHECK(static_cast<i64>(idx.frames.size()) == idx.nv * idx.nf * idx.d,
                "per-frame index block missing");
      VTR_CHECK(idx.nw > 0 && static_cast<i64>(idx.text_tokens.size()) ==
                                  idx.nt * idx.nw * idx.d,
                "token-level text block missing");
      VTR_CHECK(idx.pooled.empty(), "cross-modal index must not carry pooled vectors");
      break;
  }
  if (idx.strategy == Strategy::topk_pool)
    VTR_CHECK(idx.topk_kprime >= 1 && idx.topk_kprime <= idx.nf,
              "topk_kprime outside [1,Nf]");
}

// Shared, text-independent work done once per rank call. It runs inside
// the ranking scope on purpose: recomputing projections per query set is
// part of the online cost for strategies that need them.
struct Precomp {
  std::vector<double> xp_q;       // [nt*d]
  std::vector<double> xp_keys;    // [nv*nf*d]
  std::vector<double> xp_vals;    // [nv*nf*d]
  std::vector<double> video_mean; // [nv*d], unit rows
};

Precomp precompute(const RetrievalIndex& idx) {
  Precomp pre;
  const i64 d = idx.d;
  if (idx.strategy == Strategy::xpool_style) {
    pre.xp_q.assign(static_cast<std::size_t>(idx.nt * d), 0.0);
    core::gemm::nn(idx.texts.data(), idx.xp_wq.data(), pre.xp_q.data(), idx.nt, d, d);
    pre.xp_keys.assign(static_cast<std::size_t>(idx.nv * idx.nf * d), 0.0);
    core::gemm::nn(idx.frames.data(), idx.xp_wk.data(), pre.xp_keys.data(),
                   idx.nv * idx.nf, d, d);
    pre.xp_vals.assign(static_cast<std::size_t>(idx.nv * idx.nf * d), 0.0);
    core::gemm::nn(idx.frames.data(), idx.xp_wvo.data(), pre.xp_vals.data(),
                   idx.nv * idx.nf, d, d);
  }
  if (idx.strategy == Strategy::xclip_style) {
    pre.video_mean.assign(static_cast<std::size_t>(idx.nv * d), 0.0);
    for (i64 v = 0; v < idx.nv; ++v) {
      double* out = pre.video_mean.data() + v * d;
      for (i64 f = 0; f < idx.nf; ++f) {
        const double* row = idx.frames.data() + (v * idx.nf + f) * d;
        for (i64 j = 0; j < d; ++j) out[j] += row[j];
      }
      for (i64 j = 0; j < d; ++j) out[j] /= static_cast<double>(idx.nf);
    }
    normalize_rows(pre.video_mean, idx.nv, d);
  }
  return pre;
}

void rank_block(const RetrievalIndex& idx, const Precomp& pre, i64 q0, i64 bs,
                double* sims) {
  const i64 nv = idx.nv, nf = idx.nf, nw = idx.nw, d = idx.d;
  const double* yblock = idx.texts.data() + q0 * d;
  double* out = sims + q0 * nv;

  switch (idx.strategy) {
    case Strategy::mean_pool: {
      dot_block(yblock, bs, idx.pooled.data(), nv, d, out);
      return;
    }
    case Strategy::attention_pool: {
      VTR_CHECK(d <= kMaxStackDim, "attention_pool supports D <= ", kMaxStackDim);
      std::vector<double> logits(static_cast<std::size_t>(bs * nv * nf));
      dot_block(yblock, bs, idx.frames.data(), nv * nf, d, logits.data());
      double pooled[kMaxStackDim];
      for (i64 q = 0; q < bs; ++q) {
        for (i64 v = 0; v < nv; ++v) {
          double* w = logits.data() + (q * nv + v) * nf;
          softmax_inplace(w, nf);
          std::fill(pooled, pooled + d, 0.0);
          for (i64 f = 0; f < nf; ++f) {
            const double* frame = idx.frames.data() + (v * nf + f) * d;
            for (i64 j = 0; j < d; ++j) pooled[j] += w[f] * frame[j];
          }
          const double nrm = std::sqrt(dot(pooled, pooled, d));
          out[q * nv + v] = dot(yblock + q * d, pooled, d) / nrm;
        }
      }
      return;
    }
    case Strategy::topk_pool: {
      std::vector<double> logits(static_cast<std::size_t>(bs * nv * nf));
      dot_block(yblock, bs, idx.frames.data(), nv * nf, d, logits.data());
      const i64 kp = idx.topk_kprime;
      for (i64 q = 0; q < bs; ++q) {
        for (i64 v = 0; v < nv; ++v) {
          double* row = logits.data() + (q * nv + v) * nf;
          if (kp < nf) std::nth_element(row, row + (nf - kp), row + nf);
          double acc = 0.0;
          for (i64 f = nf - kp; f < nf; ++f) acc += row[f];
          out[q * nv + v] = acc / static_cast<double>(kp);
        }
      }
      return;
    }
    case Strategy::xpool_style: {
      std::vector<double> logits(static_cast<std::size_t>(bs * nv * nf));
      dot_block(pre.xp_q.data() + q0 * d, bs, pre.xp_keys.data(), nv * nf, d,
                logits.data());
      const double scl = 1.0 / std::sqrt(static_cast<double>(d));
      for (double& v : logits) v *= scl;
      // per-pair pooled video embeddings, materialized for the whole block
      std::vector<double> pooled(static_cast<std::size_t>(bs * nv * d), 0.0);
      for (i64 q = 0; q < bs; ++q) {
        for (i64 v = 0; v < nv; ++v) {
          double* w = logits.data() + (q * nv + v) * nf;
          softmax_inplace(w, nf);
          double* prow = pooled.data() + (q * nv + v) * d;
          for (i64 f = 0; f < nf; ++f) {
            const double* val = pre.xp_vals.data() + (v * nf + f) * d;
            for (i64 j = 0; j < d; ++j) prow[j] += w[f] * val[j];
          }
        }
      }
      for (i64 q = 0; q < bs; ++q) {
        for (i64 v = 0; v < nv; ++v) {
          const double* prow = pooled.data() + (q * nv + v) * d;
          const double nrm = std::sqrt(dot(prow, prow, d));
          out[q * nv + v] = dot(yblock + q * d, prow, d) / nrm;
        }
      }
      return;
    }
    case Strategy::xclip_style: {
      // token-level similarity tensor for the block, plus coarse buffers
      std::vector<double> fine(static_cast<std::size_t>(bs * nv * nf * nw));
      const double* tokens = idx.text_tokens.data() + q0 * nw * d;
      for (i64 v = 0; v < nv; ++v) {
        for (i64 f = 0; f < nf; ++f) {
          const double* frame = idx.frames.data() + (v * nf + f) * d;
          for (i64 q = 0; q < bs; ++q) {
            double* cell = fine.data() + ((q * nv + v) * nf + f) * nw;
            const double* tq = tokens + q * nw * d;
            for (i64 t = 0; t < nw; ++t) cell[t] = dot(tq + t * d, frame, d);
          }
        }
      }
      std::vector<double> frame_sent(static_cast<std::size_t>(bs * nv * nf));
      dot_block(yblock, bs, idx.frames.data(), nv * nf, d, frame_sent.data());
      std::vector<double> word_vid(static_cast<std::size_t>(bs * nv * nw));
      for (i64 v = 0; v < nv; ++v) {
        const double* mean = pre.video_mean.data() + v * d;
        for (i64 q = 0; q < bs; ++q) {
          double* cell = word_vid.data() + (q * nv + v) * nw;
          const double* tq = tokens + q * nw * d;
          for (i64 t = 0; t < nw; ++t) cell[t] = dot(tq + t * d, mean, d);
        }
      }
      std::vector<double> vid_sent(static_cast<std::size_t>(bs * nv));
      dot_block(yblock, bs, pre.video_mean.data(), nv, d, vid_sent.data());

      std::vector<double> scratch(static_cast<std::size_t>(std::max(nf, nw)));
      for (i64 q = 0; q < bs; ++q) {
        for (i64 v = 0; v < nv; ++v) {
          const double s_vs = vid_sent[static_cast<std::size_t>(q * nv + v)];

          const double* fs = frame_sent.data() + (q * nv + v) * nf;
          std::copy(fs, fs + nf, scratch.data());
          softmax_inplace(scratch.data(), nf);
          double s_fs = 0.0;
          for (i64 f = 0; f < nf; ++f) s_fs += scratch[static_cast<std::size_t>(f)] * fs[f];

          const double* wv = word_vid.data() + (q * nv + v) * nw;
          std::copy(wv, wv + nw, scratch.data());
          softmax_inplace(scratch.data(), nw);
          double s_vw = 0.0;
          for (i64 t = 0; t < nw; ++t) s_vw += scratch[static_cast<std::size_t>(t)] * wv[t];

          const double* tile = fine.data() + (q * nv + v) * nf * nw;
          double row_term = 0.0;
          for (i64 f = 0; f < nf; ++f) {
            const double* r = tile + f * nw;
            std::copy(r, r + nw, scratch.data());
            softmax_inplace(scratch.data(), nw);
            for (i64 t = 0; t < nw; ++t) row_term += scratch[static_cast<std::size_t>(t)] * r[t] / static_cast<double>(nf);
          }
          double col_term = 0.0;
          for (i64 t = 0; t < nw; ++t) {
            for (i64 f = 0; f < nf; ++f) scratch[static_cast<std::size_t>(f)] = tile[f * nw + t];
            softmax_inplace(scratch.data(), nf);
            for (i64 f = 0; f < nf; ++f)
              col_term += scratch[static_cast<std::size_t>(f)] * tile[f * nw + t] / static_cast<double>(nw);
          }
          const double s_ff = 0.5 * (row_term + col_term);
          out[q * nv + v] = (s_vs + s_fs + s_vw + s_ff) / 4.0;
        }
      }
      return;
    }
  }
}

}  // namespace

std::vector<int> order_candidates(const double* sims, i64 nv) {
  std::vector<int> ids(static_cast<std::size_t>(nv));
  for (i64 i = 0; i < nv; ++i) ids[static_cast<std::size_t>(i)] = static_cast<int>(i);
  std::sort(ids.begin(), ids.end(), [sims](int a, int b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return a < b;
  });
  return ids;
}

RankResult rank(const RetrievalIndex& idx, const RankParams& params) {
  validate(idx);
  VTR_CHECK(params.block >= 1, "block size must be positive");
  RankResult res;
  res.sims.assign(static_cast<std::size_t>(idx.nt * idx.nv), 0.0);
  const Precomp pre = precompute(idx);

  const i64 nblocks = (idx.nt + params.block - 1) / params.block;
  auto run_range = [&](i64 b0, i64 b1) {
    for (i64 b = b0; b < b1; ++b) {
      const i64 q0 = b * params.block;
      const i64 bs = std::min(params.block, idx.nt - q0);
      rank_block(idx, pre, q0, bs, res.sims.data());
    }
  };
  if (params.threads <= 1) {
    run_range(0, nblocks);
  } else {
    const i64 workers = std::min<i64>(params.threads, nblocks);
    std::vector<std::thread> pool;
    for (i64 w = 0; w < workers; ++w) {
      const i64 b0 = w * nblocks / workers;
      const i64 b1 = (w + 1) * nblocks / workers;
      pool.emplace_back(run_range, b0, b1);
    }
    for (auto& t : pool) t.join();
  }

  if (params.with_ranking) {
    res.ranking.resize(static_cast<std::size_t>(idx.nt));
    for (i64 q = 0; q < idx.nt; ++q)
      res.ranking[static_cast<std::size_t>(q)] =
          order_candidates(res.sims.data() + q * idx.nv, idx.nv);
  }
  return res;
}

RetrievalIndex build_index(const model::Model& m,
                           const std::vector<const model::VideoClip*>& videos,
                           const std::vector<model::TokenSequence>& texts,
                           Strategy strategy, i64 nw) {
  RetrievalIndex idx;
  idx.strategy = strategy;
  idx.nv = static_cast<i64>(videos.size());
  idx.nt = static_cast<i64>(texts.size());
  idx.d = m.cfg.dim;
  idx.nw = nw;
  idx.topk_kprime = m.cfg.topk_kprime;
  VTR_CHECK(idx.nv > 0 && idx.nt > 0, "empty index inputs");
  VTR_CHECK(strategy != Strategy::xclip_style || nw > 0,
            "xclip_style needs token-level vectors; pass nw > 0");

  for (i64 v = 0; v < idx.nv; ++v) {
    core::Tensor prompts = model::eval_frame_prompts(m, *videos[static_cast<std::size_t>(v)]);
    const i64 rows = prompts.extent(0);
    if (v == 0) idx.nf = rows;
    VTR_CHECK(rows == idx.nf, "inconsistent frame counts across videos");
    std::vector<double> unit = prompts.vec();
    normalize_rows(unit, rows, idx.d);
    if (is_text_agnostic(strategy)) {
      std::vector<double> mean(static_cast<std::size_t>(idx.d), 0.0);
      for (i64 f = 0; f < rows; ++f)
        for (i64 j = 0; j < idx.d; ++j)
          mean[static_cast<std::size_t>(j)] += unit[static_cast<std::size_t>(f * idx.d + j)] / static_cast<double>(rows);
      normalize_rows(mean, 1, idx.d);
      idx.pooled.insert(idx.pooled.end(), mean.begin(), mean.end());
      // per-frame tensors are discarded for the text-agnostic strategy
    } else {
      idx.frames.insert(idx.frames.end(), unit.begin(), unit.end());
    }
  }
  for (const auto& seq : texts) {
    core::Tensor y = model::encode_text(seq, m.text);
    idx.texts.insert(idx.texts.end(), y.vec().begin(), y.vec().end());
    if (strategy == Strategy::xclip_style) {
      core::Tensor toks = model::encode_text_tokens(seq, m.text, nw);
      idx.text_tokens.insert(idx.text_tokens.end(), toks.vec().begin(), toks.vec().end());
    }
  }
  if (strategy == Strategy::xpool_style) {
    idx.xp_wq = m.xpool.wq.vec();
    idx.xp_wk = m.xpool.wk.vec();
    idx.xp_wvo.assign(static_cast<std::size_t>(idx.d * idx.d), 0.0);
    core::gemm::nn(m.xpool.wv.data(), m.xpool.wo.data(), idx.xp_wvo.data(),
                   idx.d, idx.d, idx.d);
  }
  return idx;
}

RetrievalIndex synthetic_index(Strategy strategy, i64 nv, i64 nt, i64 nf, i64 nw,
                               i64 d, std::uint64_t seed, int topk_kprime) {
  VTR_CHECK(nv > 0 && nt > 0 && nf > 0 && d > 0, "sizes must be positive");
  RetrievalIndex idx;
  idx.strategy = strategy;
  idx.nv = nv;
  idx.nt = nt;
  idx.nf = nf;
  idx.nw = strategy == Strategy::xclip_style ? nw : 0;
  idx.d = d;
  idx.topk_kprime = topk_kprime;

  Rng rng(seed);
  Rng vrng = rng.child("videos");
  if (is_text_agnostic(strategy)) {
    idx.pooled.reserve(static_cast<std::size_t>(nv * d));
    std::vector<double> frame(static_cast<std::size_t>(d));
    std::vector<double> mean(static_cast<std::size_t>(d));
    for (i64 v = 0; v < nv; ++v) {
      std::fill(mean.begin(), mean.end(), 0.0);
      for (i64 f = 0; f < nf; ++f) {
        for (auto& x : frame) x = vrng.normal();
        normalize_rows(frame, 1, d);
        for (i64 j = 0; j < d; ++j) mean[static_cast<std::size_t>(j)] += frame[static_cast<std::size_t>(j)] / static_cast<double>(nf);
      }
      normalize_rows(mean, 1, d);
      idx.pooled.insert(idx.pooled.end(), mean.begin(), mean.end());
    }
  } else {
    idx.frames.resize(static_cast<std::size_t>(nv * nf * d));
    for (auto& x : idx.frames) x = vrng.normal();
    normalize_rows(idx.frames, nv * nf, d);
  }
  Rng trng = rng.child("texts");
  idx.texts.resize(static_cast<std::size_t>(nt * d));
  for (auto& x : idx.texts) x = trng.normal();
  normalize_rows(idx.texts, nt, d);
  if (strategy == Strategy::xclip_style) {
    idx.text_tokens.resize(static_cast<std::size_t>(nt * nw * d));
    for (auto& x : idx.text_tokens) x = trng.normal();
    normalize_rows(idx.text_tokens, nt * nw, d);
  }
  if (strategy == Strategy::xpool_style) {
    Rng prng = rng.child("proj");
    const double scl = 1.0 / std::sqrt(static_cast<double>(d));
    auto fill = [&prng, scl, d](std::vector<double>& m) {
      m.resize(static_cast<std::size_t>(d * d));
      for (auto& x : m) x = prng.normal(0.0, scl);
    };
    fill(idx.xp_wq);
    fill(idx.xp_wk);
    fill(idx.xp_wvo);
  }
  return idx;
}

double recall_at_k(const std::vector<std::vector<int>>& ranking,
                   const std::vector<int>& ground_truth, int k) {
  VTR_CHECK(ranking.size() == ground_truth.size() && !ranking.empty(),
            "ranking/ground truth size mismatch");
  std::int64_t hits = 0;
  for (std::size_t q = 0; q < ranking.size(); ++q) {
    const auto& row = ranking[q];
    const int limit = std::min<int>(k, static_cast<int>(row.size()));
    for (int i = 0; i < limit; ++i) {
      if (row[static_cast<std::size_t>(i)] == ground_truth[q]) {
        ++hits;
        break;
      }
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(ranking.size());
}

double mean_rank(const std::vector<std::vector<int>>& ranking,
                 const std::vector<int>& ground_truth) {
  VTR_CHECK(ranking.size() == ground_truth.size() && !ranking.empty(),
            "ranking/ground truth size mismatch");
  double acc = 0.0;
  for (std::size_t q = 0; q < ranking.size(); ++q) {
    const auto& row = ranking[q];
    auto it = std::find(row.begin(), row.end(), ground_truth[q]);
    VTR_CHECK(it != row.end(), "ground truth missing from ranking");
    acc += static_cast<double>(it - row.begin()) + 1.0;
  }
  return acc / static_cast<double>(ranking.size());
}

double meta_sum(double r1_t2v, double r5_t2v, double r10_t2v, double r1_v2t,
                double r5_v2t, double r10_v2t) {
  for (double v : {r1_t2v, r5_t2v, r10_t2v, r1_v2t, r5_v2t, r10_v2t})
    VTR_CHECK(v >= 0.0 && v <= 100.0, "recall value outside [0,100]: ", v);
  return r1_t2v + r5_t2v + r10_t2v + r1_v2t + r5_v2t + r10_v2t;
}

}  // namespace vtr::bench
