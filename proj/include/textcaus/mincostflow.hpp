#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace textcaus {

// Min-cost max-flow via successive shortest paths with Johnson potentials.
// Costs must be nonnegative; capacities and costs are integers. Deterministic:
// arc order is insertion order and Dijkstra ties break on node index.
class MinCostFlow {
 public:
  explicit MinCostFlow(int n_nodes);

  // Returns an edge id usable with flow_on().
  int add_edge(int from, int to, int cap, std::int64_t cost);

  // Augments until the sink is unreachable; returns {total_flow, total_cost}.
  std::pair<std::int64_t, std::int64_t> solve(int source, int sink);

  int flow_on(int edge_id) const;

 private:
  struct Arc {
    int to;
    int cap;
    std::int64_t cost;
  };
  int n_;
  std::vector<Arc> arcs_;                // paired: arc 2k and its reverse 2k+1
  std::vector<std::vector<int>> out_;    // per node arc ids
  std::vector<std::int64_t> potential_;
  std::vector<int> edge_cap_;            // original capacity per edge id
};

}  // namespace textcaus
