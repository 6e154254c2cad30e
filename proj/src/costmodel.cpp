#include "vtr/costmodel.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include <json.hpp>

#include "vtr/alloc_probe.hpp"

namespace vtr::bench {

using nlohmann::json;

std::int64_t analytic_score_ops(Strategy s, std::int64_t nv, std::int64_t nt,
                                std::int64_t nf, std::int64_t nw) {
  switch (s) {
    case Strategy::mean_pool: return nv * nt;
    case Strategy::attention_pool:
    case Strategy::topk_pool:
    case Strategy::xpool_style: return nv * nt * nf;
    case Strategy::xclip_style: return nv * nt * nf * nw;
  }
  return 0;
}

bool CostReport::same_values(const CostReport& o) const {
  return strategy == o.strategy && nv == o.nv && nt == o.nt && nf == o.nf &&
         nw == o.nw && d == o.d && analytic_ops == o.analytic_ops &&
         time_ms == o.time_ms && peak_bytes == o.peak_bytes &&
         index_bytes == o.index_bytes && parallel == o.parallel;
}

CostReport cost_profile(const CostParams& p) {
  VTR_CHECK(p.trials >= 1, "need at least one trial");
  // offline stage: excluded from both the timer and the allocation probe
  RetrievalIndex idx = synthetic_index(p.strategy, p.nv, p.nt, p.nf, p.nw, p.d,
                                       p.seed, p.topk_kprime);
  RankParams rp;
  rp.block = p.block;
  rp.with_ranking = true;
  rp.threads = p.threads;

  std::vector<double> times;
  std::int64_t peak = 0;
  for (int t = 0; t < p.trials; ++t) {
    alloc_probe::Scope probe;
    const auto t0 = std::chrono::steady_clock::now();
    RankResult res = rank(idx, rp);
    const auto t1 = std::chrono::steady_clock::now();
    const auto stats = probe.finish();
    peak = std::max(peak, stats.peak_bytes);
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    VTR_CHECK(!res.sims.empty(), "rank produced no similarities");
  }
  std::sort(times.begin(), times.end());
  CostReport report;
  report.strategy = strategy_name(p.strategy);
  report.nv = p.nv;
  report.nt = p.nt;
  report.nf = p.nf;
  report.nw = p.strategy == Strategy::xclip_style ? p.nw : 0;
  report.d = p.d;
  report.analytic_ops = analytic_score_ops(p.strategy, p.nv, p.nt, p.nf, p.nw);
  report.time_ms = times[times.size() / 2];
  report.peak_bytes = peak;
  report.index_bytes = static_cast<std::int64_t>(idx.index_bytes());
  report.parallel = p.threads > 1;
  return report;
}

namespace {

int strategy_order(const std::string& name) {
  return static_cast<int>(strategy_from_name(name));
}

void sort_reports(std::vector<CostReport>& reports) {
  std::sort(reports.begin(), reports.end(),
            [](const CostReport& a, const CostReport& b) {
              const int sa = strategy_order(a.strategy), sb = strategy_order(b.strategy);
              if (sa != sb) return sa < sb;
              if (a.nv != b.nv) return a.nv < b.nv;
              if (a.nt != b.nt) return a.nt < b.nt;
              if (a.nf != b.nf) return a.nf < b.nf;
              return a.nw < b.nw;
            });
}

json report_to_json(const CostReport& r) {
  return json{{"strategy", r.strategy}, {"nv", r.nv},
              {"nt", r.nt},             {"nf", r.nf},
              {"nw", r.nw},             {"d", r.d},
              {"analytic_ops", r.analytic_ops},
              {"time_ms", r.time_ms},   {"peak_bytes", r.peak_bytes},
              {"index_bytes", r.index_bytes},
              {"parallel", r.parallel}};
}

}  // namespace

void write_reports_csv(const std::string& path, std::vector<CostReport> reports) {
  VTR_CHECK(!reports.empty(), "no reports to write");
  sort_reports(reports);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write report csv: " + path);
  os << "strategy,Nv,Nt,Nf,Nw,analytic_ops,time_ms,peak_bytes,index_bytes,parallel\n";
  for (const auto& r : reports) {
    os << r.strategy << "," << r.nv << "," << r.nt << "," << r.nf << "," << r.nw
       << "," << r.analytic_ops << "," << r.time_ms << "," << r.peak_bytes << ","
       << r.index_bytes << "," << (r.parallel ? 1 : 0) << "\n";
  }
}

void write_reports_json(const std::string& path, const std::vector<CostReport>& reports) {
  VTR_CHECK(!reports.empty(), "no reports to write");
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(report_to_json(r));
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write report json: " + path);
  os << arr.dump(2) << "\n";
}

std::vector<CostReport> read_reports_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read report json: " + path);
  json arr = json::parse(is);
  std::vector<CostReport> reports;
  for (const auto& j : arr) {
    CostReport r;
    r.strategy = j.at("strategy").get<std::string>();
    r.nv = j.at("nv").get<std::int64_t>();
    r.nt = j.at("nt").get<std::int64_t>();
    r.nf = j.at("nf").get<std::int64_t>();
    r.nw = j.at("nw").get<std::int64_t>();
    r.d = j.at("d").get<std::int64_t>();
    r.analytic_ops = j.at("analytic_ops").get<std::int64_t>();
    r.time_ms = j.at("time_ms").get<double>();
    r.peak_bytes = j.at("peak_bytes").get<std::int64_t>();
    r.index_bytes = j.at("index_bytes").get<std::int64_t>();
    r.parallel = j.at("parallel").get<bool>();
    reports.push_back(std::move(r));
  }
  return reports;
}

void write_plot_data(const std::string& path, std::vector<CostReport> reports) {
  VTR_CHECK(!reports.empty(), "no reports to write");
  sort_reports(reports);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write plot data: " + path);
  // one series per strategy; log-scale friendly positive columns
  os << "strategy\tNv\tNt\tNf\tNw\tanalytic_ops\ttime_ms\tpeak_bytes\n";
  for (const auto& r : reports) {
    os << r.strategy << "\t" << r.nv << "\t" << r.nt << "\t" << r.nf << "\t"
       << r.nw << "\t" << r.analytic_ops << "\t" << r.time_ms << "\t"
       << r.peak_bytes << "\n";
  }
}

}  // namespace vtr::bench
