#pragma once

#include <string>
#include <vector>

#include "vtr/retrieval.hpp"

namespace vtr::bench {

// Closed-form score-stage cost in units of D-dimensional similarity terms:
//   mean_pool                     Nv*Nt
//   attention/topk/xpool          Nv*Nt*Nf
//   xclip                         Nv*Nt*Nf*Nw
std::int64_t analytic_score_ops(Strategy s, std::int64_t nv, std::int64_t nt,
                                std::int64_t nf, std::int64_t nw);

struct CostParams {
  Strategy strategy = Strategy::mean_pool;
  std::int64_t nv = 16384, nt = 512, nf = 12, nw = 10, d = 64;
  int trials = 3;
  std::int64_t block = 64;
  int threads = 1;  // >1 is the separately-reported parallel mode
  std::uint64_t seed = 7;
  int topk_kprime = 3;
};

struct CostReport {
  std::string strategy;
  std::int64_t nv = 0, nt = 0, nf = 0, nw = 0, d = 0;
  std::int64_t analytic_ops = 0;
  double time_ms = 0.0;        // median over trials
  std::int64_t peak_bytes = 0; // peak transient allocation inside the rank scope
  std::int64_t index_bytes = 0;  // offline storage, reported separately
  bool parallel = false;

  bool same_values(const CostReport& o) const;
};

// Builds a synthetic index (offline, unmeasured), then times rank() and
// measures its peak transient allocation with the instrumented allocator.
CostReport cost_profile(const CostParams& p);

// CSV rows sorted by (strategy, Nv, Nt); JSON array round-trips exactly;
// tab-separated plot series grouped per strategy.
void write_reports_csv(const std::string& path, std::vector<CostReport> reports);
void write_reports_json(const std::string& path, const std::vector<CostReport>& reports);
std::vector<CostReport> read_reports_json(const std::string& path);
void write_plot_data(const std::string& path, std::vector<CostReport> reports);

}  // namespace vtr::bench
