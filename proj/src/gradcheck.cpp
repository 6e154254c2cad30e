#include "vtr/gradcheck.hpp"

#include <chrono>
#include <cmath>

namespace vtr::train {

using namespace vtr::core;

GradcheckReport gradcheck_model(model::Model& m, const std::vector<BatchItem>& items,
                                const TrainConfig& cfg,
                                const model::TokenWeightTable& table,
                                int probes_per_group, double fd_step,
                                std::uint64_t probe_seed) {
  VTR_CHECK(probes_per_group >= 1, "need at least one probe per group");
  const auto t0 = std::chrono::steady_clock::now();

  auto named = m.named_parameters();
  for (auto& nt : named) nt.tensor.zero_grad();
  batch_backward(m, items, cfg, table);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(named.size());
  for (auto& nt : named) analytic.push_back(nt.tensor.grad());

  GradcheckReport report;
  Rng rng(probe_seed);
  for (std::size_t g = 0; g < named.size(); ++g) {
    Tensor& param = named[g].tensor;
    const int size = static_cast<int>(param.size());
    const int probes = std::min(probes_per_group, size);
    Rng grng = rng.child(named[g].name);
    std::vector<int> picks = grng.sample_without_replacement(size, probes);

    GroupCheck check;
    check.name = named[g].name;
    check.probes = probes;
    for (int idx : picks) {
      double* entry = param.data() + idx;
      const double orig = *entry;
      *entry = orig + fd_step;
      const double up = batch_forward(m, items, cfg, table).total;
      *entry = orig - fd_step;
      const double down = batch_forward(m, items, cfg, table).total;
      *entry = orig;
      const double fd = (up - down) / (2.0 * fd_step);
      const double a = analytic[g][static_cast<std::size_t>(idx)];
      const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-4});
      check.max_rel_err = std::max(check.max_rel_err, rel);
      ++report.entries_checked;
    }
    report.max_rel_err = std::max(report.max_rel_err, check.max_rel_err);
    report.groups.push_back(std::move(check));
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace vtr::train
