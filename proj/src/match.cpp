#include "textcaus/match.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <tuple>

#include "textcaus/common.hpp"
#include "textcaus/mincostflow.hpp"

namespace textcaus::match {

namespace {

void check_arms(const std::vector<int>& z) {
  int n_treated = 0;
  for (int v : z) {
    if (v != 0 && v != 1) throw data_error("treatment indicator must be 0 or 1");
    n_treated += v;
  }
  if (n_treated == 0) throw data_error("no treated units");
  if (n_treated == static_cast<int>(z.size())) throw data_error("no control units");
}

}  // namespace

PropensityModel fit_propensity(const Eigen::MatrixXd& x, const std::vector<int>& z,
                               const PropensityConfig& cfg) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (static_cast<Eigen::Index>(z.size()) != n)
    throw data_error("fit_propensity: x rows and z length differ");
  if (n == 0) throw data_error("fit_propensity: empty dataset");
  if (!x.allFinite()) throw data_error("fit_propensity: x contains missing or non-finite values");
  check_arms(z);

  PropensityModel model;
  model.covariate_means = x.colwise().mean();
  model.covariate_sds.resize(p);
  Eigen::MatrixXd design(n, p + 1);
  design.col(0).setOnes();
  for (Eigen::Index j = 0; j < p; ++j) {
    const double mu = model.covariate_means(j);
    double sd = n > 1 ? std::sqrt((x.col(j).array() - mu).square().sum() / double(n - 1)) : 0.0;
    model.covariate_sds(j) = sd;
    if (sd > 0)
      design.col(j + 1) = (x.col(j).array() - mu) / sd;
    else
      design.col(j + 1).setZero();
  }

  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = z[i];

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
  Eigen::VectorXd eta(n), mu(n), w(n);
  int iter = 0;
  for (; iter < cfg.max_iter; ++iter) {
    eta = design * beta;
    mu = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
    w = (mu.array() * (1.0 - mu.array())).cwiseMax(1e-10).matrix();
    Eigen::VectorXd zwork = eta + ((y - mu).array() / w.array()).matrix();
    Eigen::MatrixXd xtw = design.transpose() * w.asDiagonal();
    Eigen::MatrixXd hess = xtw * design;
    hess.diagonal().array() += cfg.ridge;
    Eigen::VectorXd beta_new = hess.ldlt().solve(xtw * zwork);
    if (!beta_new.allFinite() || beta_new.norm() > cfg.separation_norm)
      throw infeasible_error(
          "fit_propensity: coefficients diverging (perfect separation?); "
          "increase the ridge penalty in the propensity config");
    const double step = (beta_new - beta).cwiseAbs().maxCoeff();
    beta = beta_new;
    if (step < cfg.tol) break;
  }
  model.n_iterations = iter + 1;
  model.coefficients = beta;
  model.linear_predictors = design * beta;
  model.scores = (1.0 / (1.0 + (-model.linear_predictors.array()).exp())).matrix();
  model.scores = model.scores.cwiseMax(1e-12).cwiseMin(1.0 - 1e-12);
  return model;
}

CaliperGraph caliper_graph(const PropensityModel& model, const std::vector<int>& z,
                           double width_sds, CaliperScale scale) {
  const Eigen::Index n = model.scores.size();
  if (static_cast<Eigen::Index>(z.size()) != n)
    throw data_error("caliper_graph: scores and z length differ");
  if (width_sds <= 0) throw config_error("caliper_graph: width_sds must be positive");
  check_arms(z);

  Eigen::VectorXd s = scale == CaliperScale::probability
                          ? model.scores
                          : model.linear_predictors;
  const double mean = s.mean();
  const double sd = n > 1 ? std::sqrt((s.array() - mean).square().sum() / double(n - 1)) : 0.0;
  const double threshold = width_sds * sd;

  CaliperGraph g;
  g.n_units = static_cast<int>(n);
  g.threshold = threshold;
  std::vector<int> treated_all, controls_all;
  for (Eigen::Index i = 0; i < n; ++i) (z[i] ? treated_all : controls_all).push_back(int(i));

  // Controls sorted by score for range lookup; index pairs keep ids recoverable.
  std::vector<std::pair<double, int>> by_score;
  by_score.reserve(controls_all.size());
  for (int c : controls_all) by_score.push_back({s(c), c});
  std::sort(by_score.begin(), by_score.end());

  std::vector<char> control_used(n, 0);
  g.adj_ptr.push_back(0);
  std::vector<std::vector<int>> edges;  // per retained treated, control unit ids
  for (int t : treated_all) {
    const double lo = s(t) - threshold;
    const double hi = s(t) + threshold;
    auto first = std::lower_bound(by_score.begin(), by_score.end(),
                                  std::pair<double, int>{lo, std::numeric_limits<int>::min()});
    std::vector<int> row;
    for (auto it = first; it != by_score.end() && it->first <= hi; ++it)
      row.push_back(it->second);
    if (row.empty()) {
      g.dropped_treated.push_back(t);
      continue;
    }
    std::sort(row.begin(), row.end());
    for (int c : row) control_used[c] = 1;
    g.treated.push_back(t);
    edges.push_back(std::move(row));
  }
  if (g.treated.empty()) throw infeasible_error("caliper_graph: caliper too tight, all treated dropped");

  for (int c : controls_all) (control_used[c] ? g.controls : g.dropped_control).push_back(c);

  std::vector<int> control_pos(n, -1);
  for (std::size_t j = 0; j < g.controls.size(); ++j) control_pos[g.controls[j]] = int(j);
  for (const auto& row : edges) {
    for (int c : row) g.adj.push_back(control_pos[c]);
    g.adj_ptr.push_back(g.adj.size());
  }
  return g;
}

namespace {

constexpr double kCostScale = 1e8;

MatchedSample assemble_sample(const CaliperGraph& graph,
                              const std::vector<std::array<int, 2>>& kept_edges,
                              const std::vector<double>& kept_distances) {
  MatchedSample out;
  out.n_units = graph.n_units;
  out.dropped_treated = graph.dropped_treated;
  out.dropped_control = graph.dropped_control;
  out.set_index.assign(graph.n_units, -1);

  // Union-find over unit ids restricted to matched edges.
  std::vector<int> parent(graph.n_units);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (const auto& e : kept_edges) {
    int ra = find(e[0]), rb = find(e[1]);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }

  std::vector<int> root_to_set(graph.n_units, -1);
  std::vector<char> is_treated(graph.n_units, 0);
  for (int t : graph.treated) is_treated[t] = 1;
  std::vector<int> members;
  for (int t : graph.treated) members.push_back(t);
  for (int c : graph.controls) members.push_back(c);
  std::sort(members.begin(), members.end());

  for (int u : members) {
    int r = find(u);
    if (root_to_set[r] < 0) {
      root_to_set[r] = static_cast<int>(out.sets.size());
      out.sets.push_back({});
    }
    MatchedSet& set = out.sets[root_to_set[r]];
    (is_treated[u] ? set.treated : set.controls).push_back(u);
    out.set_index[u] = root_to_set[r];
  }
  for (std::size_t k = 0; k < kept_edges.size(); ++k) {
    int set = root_to_set[find(kept_edges[k][0])];
    out.sets[set].pairs.push_back({kept_edges[k][0], kept_edges[k][1], kept_distances[k]});
    out.total_distance += kept_distances[k];
  }
  for (auto& set : out.sets)
    std::sort(set.pairs.begin(), set.pairs.end(), [](const MatchedPair& a, const MatchedPair& b) {
      return std::tie(a.treated, a.control) < std::tie(b.treated, b.control);
    });

  out.weights = full_match_weights(out);
  validate_matched_sample(out);
  return out;
}

}  // namespace

MatchedSample optimal_full_match(const CaliperGraph& graph,
                                 const std::vector<double>& distances,
                                 const FullMatchConfig& cfg) {
  const int nt = static_cast<int>(graph.treated.size());
  const int nc = static_cast<int>(graph.controls.size());
  if (nt == 0) throw infeasible_error("optimal_full_match: no retained treated units");
  if (nc == 0) throw infeasible_error("optimal_full_match: no retained control units");
  if (distances.size() != graph.n_edges())
    throw data_error("optimal_full_match: distances length must equal edge count");
  for (double d : distances)
    if (!std::isfinite(d) || d < 0)
      throw data_error("optimal_full_match: distances must be finite and nonnegative");
  for (int i = 0; i < nt; ++i)
    if (graph.adj_ptr[i] == graph.adj_ptr[i + 1])
      throw infeasible_error("optimal_full_match: treated unit " +
                             std::to_string(graph.treated[i]) + " has no admissible control");

  // Circulation with lower bounds, reduced to plain min-cost max-flow.
  // Base arcs: S->t_i [1, U_i] cost 0; t_i->c_j [0,1] cost d; c_j->K [1, V_j]
  // cost 0; K->S [0, inf] cost 0. Lower bounds become excesses served by a
  // super source/sink pair.
  const int node_s = 0;
  const int node_k = 1;
  auto tnode = [&](int i) { return 2 + i; };
  auto cnode = [&](int j) { return 2 + nt + j; };
  const int super_s = 2 + nt + nc;
  const int super_t = 3 + nt + nc;
  MinCostFlow mcf(4 + nt + nc);

  std::vector<int> deg(nt);
  for (int i = 0; i < nt; ++i) deg[i] = int(graph.adj_ptr[i + 1] - graph.adj_ptr[i]);
  std::vector<int> cdeg(nc, 0);
  for (int pos : graph.adj) ++cdeg[pos];

  for (int i = 0; i < nt; ++i) {
    int upper = cfg.max_controls_per_treated > 0
                    ? std::min(cfg.max_controls_per_treated, deg[i])
                    : deg[i];
    mcf.add_edge(node_s, tnode(i), upper - 1, 0);
    mcf.add_edge(super_s, tnode(i), 1, 0);
  }
  for (int j = 0; j < nc; ++j) {
    int upper = cfg.max_treated_per_control > 0
                    ? std::min(cfg.max_treated_per_control, cdeg[j])
                    : cdeg[j];
    if (upper < 1) upper = 1;
    mcf.add_edge(cnode(j), node_k, upper - 1, 0);
    mcf.add_edge(cnode(j), super_t, 1, 0);
  }
  std::vector<int> match_edge_id(graph.n_edges());
  for (int i = 0; i < nt; ++i) {
    for (std::size_t e = graph.adj_ptr[i]; e < graph.adj_ptr[i + 1]; ++e) {
      auto cost = static_cast<std::int64_t>(std::llround(distances[e] * kCostScale));
      match_edge_id[e] = mcf.add_edge(tnode(i), cnode(graph.adj[e]), 1, cost);
    }
  }
  mcf.add_edge(node_k, node_s, nt + nc, 0);
  mcf.add_edge(super_s, node_k, nc, 0);
  mcf.add_edge(node_s, super_t, nt, 0);

  auto [flow, cost] = mcf.solve(super_s, super_t);
  (void)cost;
  if (flow < nt + nc) {
    std::ostringstream msg;
    msg << "optimal_full_match: infeasible under ratio limits; unmatched treated ids:";
    bool any = false;
    for (int i = 0; i < nt; ++i) {
      // Edge ids: treated i owns edges 2i (S->t) and 2i+1 (super_s->t).
      if (mcf.flow_on(2 * i + 1) < 1) {
        msg << ' ' << graph.treated[i];
        any = true;
      }
    }
    if (!any) msg << " (control-side deficit)";
    throw infeasible_error(msg.str());
  }

  std::vector<std::array<int, 2>> kept;  // (treated unit, control unit)
  std::vector<double> kept_dist;
  std::vector<int> tdeg(nt, 0), cdeg_used(nc, 0);
  struct Cand {
    double dist;
    int ti, cj;
  };
  std::vector<Cand> cands;
  for (int i = 0; i < nt; ++i)
    for (std::size_t e = graph.adj_ptr[i]; e < graph.adj_ptr[i + 1]; ++e)
      if (mcf.flow_on(match_edge_id[e]) > 0) {
        cands.push_back({distances[e], i, graph.adj[e]});
        ++tdeg[i];
        ++cdeg_used[graph.adj[e]];
      }
  // Drop removable edges (both endpoints still matched elsewhere), costliest
  // first, so every component collapses to a star. Ties break on unit ids.
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (cands[a].dist != cands[b].dist) return cands[a].dist > cands[b].dist;
    return std::tie(cands[a].ti, cands[a].cj) > std::tie(cands[b].ti, cands[b].cj);
  });
  std::vector<char> removed(cands.size(), 0);
  for (std::size_t k : order) {
    if (tdeg[cands[k].ti] >= 2 && cdeg_used[cands[k].cj] >= 2) {
      removed[k] = 1;
      --tdeg[cands[k].ti];
      --cdeg_used[cands[k].cj];
    }
  }
  for (std::size_t k = 0; k < cands.size(); ++k) {
    if (removed[k]) continue;
    kept.push_back({graph.treated[cands[k].ti], graph.controls[cands[k].cj]});
    kept_dist.push_back(cands[k].dist);
  }
  return assemble_sample(graph, kept, kept_dist);
}

MatchedSample text_match_within_calipers(const corpus::DocTermMatrix& dtm,
                                         const CaliperGraph& graph,
                                         const FullMatchConfig& cfg) {
  if (dtm.n_docs != graph.n_units)
    throw data_error("text_match_within_calipers: dtm rows must align with units");
  std::vector<double> dist(graph.n_edges());
  for (std::size_t i = 0; i < graph.treated.size(); ++i)
    for (std::size_t e = graph.adj_ptr[i]; e < graph.adj_ptr[i + 1]; ++e)
      dist[e] = corpus::cosine_distance(dtm, graph.treated[i], graph.controls[graph.adj[e]]);
  return optimal_full_match(graph, dist, cfg);
}

Eigen::VectorXd full_match_weights(const MatchedSample& sample, Estimand) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(sample.n_units);
  for (const auto& set : sample.sets) {
    const double cw = double(set.treated.size()) / double(set.controls.size());
    for (int t : set.treated) w(t) = 1.0;
    for (int c : set.controls) w(c) = cw;
  }
  return w;
}

double effective_sample_size(const Eigen::VectorXd& weights) {
  double sum = 0, sumsq = 0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (!(weights(i) >= 0)) throw data_error("effective_sample_size: weights must be >= 0");
    sum += weights(i);
    sumsq += weights(i) * weights(i);
  }
  if (sumsq == 0) throw data_error("effective_sample_size: all weights zero");
  return sum * sum / sumsq;
}

void validate_matched_sample(const MatchedSample& sample) {
  std::vector<char> seen(sample.n_units, 0);
  for (const auto& set : sample.sets) {
    if (set.treated.empty() || set.controls.empty())
      throw data_error("matched set missing a treated or control unit");
    if (set.treated.size() > 1 && set.controls.size() > 1)
      throw data_error("matched set has multiple treated and multiple controls");
    for (int u : set.treated) {
      if (u < 0 || u >= sample.n_units || seen[u]) throw data_error("matched sets overlap");
      seen[u] = 1;
    }
    for (int u : set.controls) {
      if (u < 0 || u >= sample.n_units || seen[u]) throw data_error("matched sets overlap");
      seen[u] = 1;
    }
  }
  for (int u : sample.dropped_treated) {
    if (u < 0 || u >= sample.n_units || seen[u]) throw data_error("dropped unit also matched");
    seen[u] = 1;
  }
  for (int u : sample.dropped_control) {
    if (u < 0 || u >= sample.n_units || seen[u]) throw data_error("dropped unit also matched");
    seen[u] = 1;
  }
}

namespace {

double weighted_smd(const Eigen::VectorXd& col, const std::vector<int>& z,
                    const Eigen::VectorXd& w, double pooled_sd) {
  if (pooled_sd <= 0) return kNaN;
  double st = 0, swt = 0, sc = 0, swc = 0;
  for (Eigen::Index i = 0; i < col.size(); ++i) {
    if (z[i]) {
      st += w(i) * col(i);
      swt += w(i);
    } else {
      sc += w(i) * col(i);
      swc += w(i);
    }
  }
  if (swt <= 0 || swc <= 0) return kNaN;
  return (st / swt - sc / swc) / pooled_sd;
}

double arm_variance(const Eigen::VectorXd& col, const std::vector<int>& z, int arm) {
  double sum = 0;
  int n = 0;
  for (Eigen::Index i = 0; i < col.size(); ++i)
    if (z[i] == arm) {
      sum += col(i);
      ++n;
    }
  if (n < 2) return 0;
  const double mu = sum / n;
  double ss = 0;
  for (Eigen::Index i = 0; i < col.size(); ++i)
    if (z[i] == arm) ss += (col(i) - mu) * (col(i) - mu);
  return ss / (n - 1);
}

}  // namespace

BalanceReport balance_table(const Eigen::MatrixXd& x_structured,
                            const std::vector<std::string>& structured_names,
                            const Eigen::MatrixXd& x_text,
                            const std::vector<std::string>& text_names,
                            const std::vector<int>& z, const Eigen::VectorXd& weights,
                            double flag_threshold) {
  const Eigen::Index n = static_cast<Eigen::Index>(z.size());
  if (x_structured.rows() != n || (x_text.size() > 0 && x_text.rows() != n) ||
      weights.size() != n)
    throw data_error("balance_table: row counts must align with z");
  if (static_cast<Eigen::Index>(structured_names.size()) != x_structured.cols() ||
      static_cast<Eigen::Index>(text_names.size()) != x_text.cols())
    throw data_error("balance_table: name count must match columns");
  check_arms(z);

  BalanceReport report;
  report.flag_threshold = flag_threshold;
  Eigen::VectorXd unit = Eigen::VectorXd::Ones(n);
  auto add_block = [&](const Eigen::MatrixXd& x, const std::vector<std::string>& names,
                       const char* kind) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const Eigen::VectorXd col = x.col(j);
      if (!col.allFinite()) throw data_error("balance_table: covariates must be complete");
      const double pooled =
          std::sqrt(0.5 * (arm_variance(col, z, 1) + arm_variance(col, z, 0)));
      BalanceRow row;
      row.name = names[j];
      row.kind = kind;
      row.smd_before = weighted_smd(col, z, unit, pooled);
      row.smd_after = weighted_smd(col, z, weights, pooled);
      row.flagged_before = std::isfinite(row.smd_before) &&
                           std::abs(row.smd_before) > flag_threshold;
      row.flagged_after = std::isfinite(row.smd_after) &&
                          std::abs(row.smd_after) > flag_threshold;
      report.rows.push_back(std::move(row));
    }
  };
  add_block(x_structured, structured_names, "structured");
  add_block(x_text, text_names, "text");
  return report;
}

}  // namespace textcaus::match
