#include "textcaus/mincostflow.hpp"

#include <limits>
#include <queue>
#include <stdexcept>

namespace textcaus {

namespace {
constexpr std::int64_t kUnreached = std::numeric_limits<std::int64_t>::max();
}

MinCostFlow::MinCostFlow(int n_nodes) : n_(n_nodes), out_(n_nodes), potential_(n_nodes, 0) {
  if (n_nodes <= 0) throw std::invalid_argument("MinCostFlow: n_nodes must be positive");
}

int MinCostFlow::add_edge(int from, int to, int cap, std::int64_t cost) {
  if (from < 0 || from >= n_ || to < 0 || to >= n_)
    throw std::out_of_range("MinCostFlow: node index out of range");
  if (cap < 0) throw std::invalid_argument("MinCostFlow: negative capacity");
  if (cost < 0) throw std::invalid_argument("MinCostFlow: negative cost");
  int id = static_cast<int>(edge_cap_.size());
  out_[from].push_back(static_cast<int>(arcs_.size()));
  arcs_.push_back({to, cap, cost});
  out_[to].push_back(static_cast<int>(arcs_.size()));
  arcs_.push_back({from, 0, -cost});
  edge_cap_.push_back(cap);
  return id;
}

std::pair<std::int64_t, std::int64_t> MinCostFlow::solve(int source, int sink) {
  if (source < 0 || source >= n_ || sink < 0 || sink >= n_ || source == sink)
    throw std::invalid_argument("MinCostFlow: bad source/sink");

  std::int64_t total_flow = 0;
  std::int64_t total_cost = 0;
  std::vector<std::int64_t> dist(n_);
  std::vector<int> prev_arc(n_);

  for (;;) {
    dist.assign(n_, kUnreached);
    prev_arc.assign(n_, -1);
    dist[source] = 0;
    using Item = std::pair<std::int64_t, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    heap.push({0, source});
    while (!heap.empty()) {
      auto [d, u] = heap.top();
      heap.pop();
      if (d > dist[u]) continue;
      for (int a : out_[u]) {
        const Arc& arc = arcs_[a];
        if (arc.cap <= 0) continue;
        std::int64_t nd = d + arc.cost + potential_[u] - potential_[arc.to];
        if (nd < dist[arc.to]) {
          dist[arc.to] = nd;
          prev_arc[arc.to] = a;
          heap.push({nd, arc.to});
        }
      }
    }
    if (dist[sink] == kUnreached) break;
    for (int v = 0; v < n_; ++v)
      if (dist[v] != kUnreached) potential_[v] += dist[v];

    int push = std::numeric_limits<int>::max();
    for (int v = sink; v != source;) {
      const Arc& arc = arcs_[prev_arc[v]];
      push = std::min(push, arc.cap);
      v = arcs_[prev_arc[v] ^ 1].to;
    }
    for (int v = sink; v != source;) {
      Arc& arc = arcs_[prev_arc[v]];
      arc.cap -= push;
      arcs_[prev_arc[v] ^ 1].cap += push;
      total_cost += static_cast<std::int64_t>(push) * arc.cost;
      v = arcs_[prev_arc[v] ^ 1].to;
    }
    total_flow += push;
  }
  return {total_flow, total_cost};
}

int MinCostFlow::flow_on(int edge_id) const {
  if (edge_id < 0 || edge_id >= static_cast<int>(edge_cap_.size()))
    throw std::out_of_range("MinCostFlow: bad edge id");
  return edge_cap_[edge_id] - arcs_[2 * edge_id].cap;
}

}  // namespace textcaus
