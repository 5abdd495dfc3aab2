// SPDX-License-Identifier: Apache-2.0
#include "hopformer/hop_mask.hpp"

#include <algorithm>
#include <limits>

#include "hopformer/error.hpp"

namespace hopformer {

std::vector<std::size_t> incidence_distances(const AugmentedGraph& ag, std::size_t source) {
  const CsrPattern& adj = ag.adjacency;
  std::vector<std::size_t> dist(adj.dim, std::numeric_limits<std::size_t>::max());
  std::vector<std::size_t> frontier{source};
  dist[source] = 0;
  for (std::size_t depth = 1; !frontier.empty(); ++depth) {
    std::vector<std::size_t> next;
    for (std::size_t u : frontier) {
      for (std::size_t p = adj.row_begin(u); p < adj.row_end(u); ++p) {
        const std::size_t w = adj.col_idx[p];
        if (dist[w] == std::numeric_limits<std::size_t>::max()) {
          dist[w] = depth;
          next.push_back(w);
        }
      }
    }
    frontier = std::move(next);
  }
  return dist;
}

HopMask build_mask(const AugmentedGraph& ag, std::size_t hop_budget) {
  const CsrPattern& adj = ag.adjacency;
  const std::size_t n = adj.dim;

  HopMask mask;
  mask.hop_budget = hop_budget;
  mask.pattern.dim = n;
  mask.pattern.row_ptr.assign(n + 1, 0);

  // stamp[w] == source + 1 marks w as visited in the current search.
  std::vector<std::size_t> stamp(n, 0);
  std::vector<std::size_t> reached;
  std::vector<std::size_t> frontier;
  std::vector<std::size_t> next;
  for (std::size_t source = 0; source < n; ++source) {
    reached.assign(1, source);
    frontier.assign(1, source);
    stamp[source] = source + 1;
    for (std::size_t depth = 0; depth < hop_budget && !frontier.empty(); ++depth) {
      next.clear();
      for (std::size_t u : frontier) {
        for (std::size_t p = adj.row_begin(u); p < adj.row_end(u); ++p) {
          const std::size_t w = adj.col_idx[p];
          if (stamp[w] != source + 1) {
            stamp[w] = source + 1;
            next.push_back(w);
          }
        }
      }
      reached.insert(reached.end(), next.begin(), next.end());
      frontier.swap(next);
    }
    std::sort(reached.begin(), reached.end());
    mask.pattern.col_idx.insert(mask.pattern.col_idx.end(), reached.begin(), reached.end());
    mask.pattern.row_ptr[source + 1] = mask.pattern.col_idx.size();
  }
  return mask;
}

std::vector<HopMaskPtr> build_head_masks(const AugmentedGraph& ag,
                                         const std::vector<std::size_t>& hops) {
  if (hops.empty()) throw InputError("build_head_masks: need at least one head");
  MaskCache cache(ag);
  return cache.heads(hops);
}

HopMaskPtr MaskCache::get(std::size_t hop_budget) {
  auto it = cache_.find(hop_budget);
  if (it == cache_.end()) {
    it = cache_.emplace(hop_budget, std::make_shared<const HopMask>(build_mask(*graph_, hop_budget))).first;
  }
  return it->second;
}

std::vector<HopMaskPtr> MaskCache::heads(const std::vector<std::size_t>& hops) {
  std::vector<HopMaskPtr> out;
  out.reserve(hops.size());
  for (std::size_t h : hops) out.push_back(get(h));
  return out;
}

MaskStats mask_stats(const HopMask& m) {
  MaskStats s;
  const std::size_t n = m.dim();
  s.nnz = m.nnz();
  if (n == 0) return s;
  s.density = static_cast<double>(s.nnz) / (static_cast<double>(n) * static_cast<double>(n));
  for (std::size_t r = 0; r < n; ++r) s.max_row_degree = std::max(s.max_row_degree, m.pattern.row_degree(r));
  s.mean_row_degree = static_cast<double>(s.nnz) / static_cast<double>(n);
  return s;
}

void write_mask_dump(std::ostream& os, const HopMask& m) {
  os << m.dim() << ' ' << m.nnz() << ' ' << m.hop_budget << '\n';
  for (std::size_t r = 0; r < m.dim(); ++r) {
    for (std::size_t p = m.pattern.row_begin(r); p < m.pattern.row_end(r); ++p) {
      os << r << ' ' << m.pattern.col_idx[p] << '\n';
    }
  }
}

}  // namespace hopformer
