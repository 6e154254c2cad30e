#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vtr/model.hpp"

namespace vtr::bench {

// Temporal fusion strategies for the online ranking stage. mean_pool is
// text-agnostic (video vectors precomputed offline); the rest condition
// pooling on the query and pay per-(text,video) work.
enum class Strategy {
  mean_pool,
  attention_pool,
  topk_pool,
  xpool_style,
  xclip_style,
};

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);
bool is_text_agnostic(Strategy s);

// Precomputed per-video and per-text artifacts. Only what the strategy's
// online stage reads is stored: pooled vectors for mean_pool, per-frame
// matrices otherwise, plus token-level text vectors for xclip_style.
// All stored rows are unit-normalized.
struct RetrievalIndex {
  Strategy strategy = Strategy::mean_pool;
  std::int64_t nv = 0, nt = 0, nf = 0, nw = 0, d = 0;
  int topk_kprime = 3;

  std::vector<double> pooled;       // [nv*d]
  std::vector<double> frames;       // [nv*nf*d]
  std::vector<double> texts;        // [nt*d]
  std::vector<double> text_tokens;  // [nt*nw*d]
  std::vector<double> xp_wq;        // [d*d] query projection
  std::vector<double> xp_wk;        // [d*d] key projection
  std::vector<double> xp_wvo;       // [d*d] value and output projections folded

  std::size_t index_bytes() const;
};

struct RankParams {
  std::int64_t block = 64;  // query block size
  bool with_ranking = true;
  int threads = 1;  // parallel mode over query blocks (reported separately)
};

struct RankResult {
  std::vector<double> sims;               // [nt*nv], row-major by query
  std::vector<std::vector<int>> ranking;  // per query: candidate ids, best first
};

RankResult rank(const RetrievalIndex& index, const RankParams& params = {});

// Offline stage backed by the model. nw > 0 is required for xclip_style.
RetrievalIndex build_index(const model::Model& m,
                           const std::vector<const model::VideoClip*>& videos,
                           const std::vector<model::TokenSequence>& texts,
                           Strategy strategy, std::int64_t nw = 0);

// Random-content index for cost profiling; ranking cost is data-independent.
RetrievalIndex synthetic_index(Strategy strategy, std::int64_t nv, std::int64_t nt,
                               std::int64_t nf, std::int64_t nw, std::int64_t d,
                               std::uint64_t seed, int topk_kprime = 3);

// Deterministic ranking order: descending similarity, ties by ascending id.
std::vector<int> order_candidates(const double* sims, std::int64_t nv);

// --- metrics ---
double recall_at_k(const std::vector<std::vector<int>>& ranking,
                   const std::vector<int>& ground_truth, int k);
double mean_rank(const std::vector<std::vector<int>>& ranking,
                 const std::vector<int>& ground_truth);
double meta_sum(double r1_t2v, double r5_t2v, double r10_t2v, double r1_v2t,
                double r5_v2t, double r10_v2t);

}  // namespace vtr::bench
