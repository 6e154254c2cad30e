#pragma once

#include "vtr/train.hpp"

namespace vtr::train {

struct GroupCheck {
  std::string name;
  double max_rel_err = 0.0;
  int probes = 0;
};

struct GradcheckReport {
  std::vector<GroupCheck> groups;
  double max_rel_err = 0.0;
  double seconds = 0.0;
  std::int64_t entries_checked = 0;
};

// Compares tape gradients of the full batch objective against central
// finite differences, probing a seeded sample of entries in every
// parameter group. Relative error uses max(|a|,|f|,1e-4) as denominator
// so near-zero gradients do not divide noise by noise.
GradcheckReport gradcheck_model(model::Model& m, const std::vector<BatchItem>& items,
                                const TrainConfig& cfg,
                                const model::TokenWeightTable& table,
                                int probes_per_group, double fd_step = 1e-4,
                                std::uint64_t probe_seed = 1234);

}  // namespace vtr::train
