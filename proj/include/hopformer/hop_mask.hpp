// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <ostream>
#include <vector>

#include "hopformer/graph.hpp"

namespace hopformer {

/// n-hop reachability mask over an augmented graph. Entry (i, j) is stored
/// iff the incidence distance between tokens i and j is at most hop_budget.
/// The diagonal is always present.
struct HopMask {
  std::size_t hop_budget = 0;
  CsrPattern pattern;

  std::size_t dim() const { return pattern.dim; }
  std::size_t nnz() const { return pattern.nnz(); }
};

using HopMaskPtr = std::shared_ptr<const HopMask>;

/// Depth-truncated BFS from every token; never forms dense matrix powers.
/// Hop budgets count incidence hops (one original-graph hop = 2).
HopMask build_mask(const AugmentedGraph& ag, std::size_t hop_budget);

/// One mask per head, in order. Heads with equal budgets share one mask.
std::vector<HopMaskPtr> build_head_masks(const AugmentedGraph& ag,
                                         const std::vector<std::size_t>& hops);

/// Per-graph cache of masks keyed by hop budget.
class MaskCache {
 public:
  explicit MaskCache(const AugmentedGraph& ag) : graph_(&ag) {}

  HopMaskPtr get(std::size_t hop_budget);
  std::vector<HopMaskPtr> heads(const std::vector<std::size_t>& hops);
  std::size_t size() const { return cache_.size(); }

 private:
  const AugmentedGraph* graph_;
  std::map<std::size_t, HopMaskPtr> cache_;
};

struct MaskStats {
  std::size_t nnz = 0;
  double density = 0.0;
  std::size_t max_row_degree = 0;
  double mean_row_degree = 0.0;
};

MaskStats mask_stats(const HopMask& m);

/// Text dump: "T nnz n_hop" header, then one "row col" line per entry in
/// row-major order.
void write_mask_dump(std::ostream& os, const HopMask& m);

/// Incidence hops from `source` to every token; unreachable = SIZE_MAX.
std::vector<std::size_t> incidence_distances(const AugmentedGraph& ag, std::size_t source);

/// Hop search menu for each head.
inline constexpr std::size_t kHopMenu[] = {1, 3, 6, 12, 24, 48};

}  // namespace hopformer
