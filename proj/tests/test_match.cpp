#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "support/testutil.hpp"
#include "textcaus/common.hpp"
#include "textcaus/match.hpp"

using namespace textcaus;
using namespace textcaus::match;

namespace {

std::vector<double> grid_distances(testutil::Rng& rng, std::size_t n) {
  // Multiples of 1e-4 make the scaled integer costs exact, so optimal
  // totals can be compared to enumeration at tight tolerance.
  std::vector<double> d(n);
  for (auto& v : d) v = 1e-4 * testutil::rint(rng, 0, 20000);
  return d;
}

}  // namespace

TEST_CASE("optimal_full_match equals exhaustive enumeration on small instances") {
  testutil::Rng rng(123);
  int checked = 0;
  while (checked < testutil::kPropertyCases) {
    const int nt = testutil::rint(rng, 1, 4);
    const int nc = testutil::rint(rng, 1, 4);
    CaliperGraph graph = testutil::random_graph(rng, nt, nc, 0.8);
    std::vector<double> dist = grid_distances(rng, graph.n_edges());
    const double oracle = testutil::brute_force_full_match(graph, dist);

    if (std::isinf(oracle)) {
      CHECK_THROWS_AS(optimal_full_match(graph, dist), Error);
    } else {
      MatchedSample sample = optimal_full_match(graph, dist);
      validate_matched_sample(sample);
      CHECK(sample.total_distance == doctest::Approx(oracle).epsilon(1e-9));
      CHECK(sample.dropped_treated.empty());
      CHECK(sample.dropped_control.empty());
    }
    ++checked;
  }
}

TEST_CASE("optimal_full_match respects ratio bounds against enumeration") {
  testutil::Rng rng(456);
  for (int rep = 0; rep < testutil::kPropertyCases; ++rep) {
    const int nt = testutil::rint(rng, 1, 3);
    const int nc = testutil::rint(rng, 1, 4);
    CaliperGraph graph = testutil::complete_graph(nt, nc);
    std::vector<double> dist = grid_distances(rng, graph.n_edges());
    FullMatchConfig cfg;
    cfg.max_controls_per_treated = testutil::rint(rng, 0, 3);
    cfg.max_treated_per_control = testutil::rint(rng, 0, 3);
    const double oracle = testutil::brute_force_full_match(graph, dist, cfg);

    if (std::isinf(oracle)) {
      CHECK_THROWS_AS(optimal_full_match(graph, dist, cfg), Error);
      continue;
    }
    MatchedSample sample = optimal_full_match(graph, dist, cfg);
    validate_matched_sample(sample);
    CHECK(sample.total_distance == doctest::Approx(oracle).epsilon(1e-9));
    for (const auto& set : sample.sets) {
      if (cfg.max_controls_per_treated > 0 && set.treated.size() == 1)
        CHECK(static_cast<int>(set.controls.size()) <=
              std::max(1, cfg.max_controls_per_treated));
      if (cfg.max_treated_per_control > 0 && set.controls.size() == 1)
        CHECK(static_cast<int>(set.treated.size()) <=
              std::max(1, cfg.max_treated_per_control));
    }
  }
}

TEST_CASE("matched samples partition retained units into valid stars") {
  testutil::Rng rng(789);
  for (int rep = 0; rep < testutil::kPropertyCases; ++rep) {
    const int nt = testutil::rint(rng, 1, 7);
    const int nc = testutil::rint(rng, 1, 7);
    CaliperGraph graph = testutil::random_graph(rng, nt, nc, 0.7);
    std::vector<double> dist(graph.n_edges());
    for (auto& d : dist) d = testutil::runif(rng, 0, 1);
    MatchedSample sample;
    try {
      sample = optimal_full_match(graph, dist);
    } catch (const Error&) {
      continue;  // infeasible instance
    }
    validate_matched_sample(sample);

    // Every unit of the graph is matched; weights reproduce the ATT rule.
    std::set<int> seen;
    double weight_sum_controls = 0;
    for (const auto& set : sample.sets) {
      CHECK((set.treated.size() == 1 || set.controls.size() == 1));
      const double w = double(set.treated.size()) / double(set.controls.size());
      for (int u : set.treated) {
        seen.insert(u);
        CHECK(sample.weights(u) == doctest::Approx(1.0));
      }
      for (int u : set.controls) {
        seen.insert(u);
        CHECK(sample.weights(u) == doctest::Approx(w));
        weight_sum_controls += sample.weights(u);
      }
    }
    CHECK(static_cast<int>(seen.size()) == nt + nc);
    // ATT weights: control mass equals treated count.
    CHECK(weight_sum_controls == doctest::Approx(double(nt)).epsilon(1e-9));
  }
}

TEST_CASE("effective_sample_size oracle and bounds") {
  Eigen::VectorXd w(3);
  w << 1, 0.5, 0.5;
  CHECK(effective_sample_size(w) == doctest::Approx(8.0 / 3.0).epsilon(1e-12));

  testutil::Rng rng(31);
  for (int rep = 0; rep < testutil::kPropertyCases; ++rep) {
    const int n = testutil::rint(rng, 1, 40);
    Eigen::VectorXd weights(n);
    int positive = 0;
    for (int i = 0; i < n; ++i) {
      weights(i) = testutil::runif(rng, 0, 1) < 0.3 ? 0.0 : testutil::runif(rng, 0.01, 5);
      if (weights(i) > 0) ++positive;
    }
    if (positive == 0) weights(0) = 1, positive = 1;
    const double ess = effective_sample_size(weights);
    CHECK(ess > 0);
    CHECK(ess <= positive + 1e-9);
    Eigen::VectorXd doubled = 2 * weights;
    CHECK(effective_sample_size(doubled) == doctest::Approx(ess).epsilon(1e-12));
  }
}

TEST_CASE("fit_propensity recovers separation direction and calibrated scores") {
  testutil::Rng rng(77);
  const int n = 400;
  Eigen::MatrixXd x(n, 2);
  std::vector<int> z(n);
  std::normal_distribution<double> normal(0, 1);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = normal(rng);
    x(i, 1) = normal(rng);
    const double p = 1.0 / (1.0 + std::exp(-(0.3 + 1.2 * x(i, 0))));
    z[i] = testutil::runif(rng, 0, 1) < p ? 1 : 0;
  }
  PropensityModel model = fit_propensity(x, z);
  CHECK(model.coefficients(1) > 0.5);                 // strong positive effect recovered
  CHECK(std::abs(model.coefficients(2)) < 0.5);       // null covariate stays small
  for (int i = 0; i < n; ++i) {
    CHECK(model.scores(i) > 0);
    CHECK(model.scores(i) < 1);
  }
  // Score averages should track treatment prevalence.
  double mean_score = model.scores.mean();
  double prevalence = 0;
  for (int v : z) prevalence += v;
  prevalence /= n;
  CHECK(mean_score == doctest::Approx(prevalence).epsilon(0.05));
}

TEST_CASE("fit_propensity reports separation as infeasible") {
  // Separation with a hair's-width margin: the ridge optimum's norm explodes
  // (roughly inverse to the margin), which is what the divergence check
  // catches. A wide margin instead converges to a finite, modest solution.
  const int n = 40;
  Eigen::MatrixXd x(n, 1);
  std::vector<int> z(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = i < 20 ? 0.01 * i : 0.2 + 1e-4 + 0.01 * (i - 20);
    z[i] = i < 20 ? 0 : 1;
  }
  CHECK_THROWS_AS(fit_propensity(x, z), Error);
  try {
    fit_propensity(x, z);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::infeasible);
  }
}

TEST_CASE("caliper_graph admits exactly the score pairs within the threshold") {
  testutil::Rng rng(555);
  for (int rep = 0; rep < testutil::kPropertyCases; ++rep) {
    const int n = testutil::rint(rng, 10, 60);
    Eigen::MatrixXd x(n, 2);
    std::normal_distribution<double> normal(0, 1);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = normal(rng);
      x(i, 1) = normal(rng);
    }
    std::vector<int> z = testutil::random_treatment(rng, n);
    PropensityModel model;
    try {
      model = fit_propensity(x, z);
    } catch (const Error&) {
      continue;
    }
    const double width = testutil::runif(rng, 0.05, 0.5);
    CaliperGraph graph;
    try {
      graph = caliper_graph(model, z, width);
    } catch (const Error&) {
      continue;  // caliper too tight for every treated unit
    }

    // Oracle: threshold = width * sd of all scores; edge iff |diff| <= thr.
    const double mean = model.scores.mean();
    double ss = 0;
    for (int i = 0; i < n; ++i) ss += (model.scores(i) - mean) * (model.scores(i) - mean);
    const double thr = width * std::sqrt(ss / double(n - 1));
    CHECK(graph.threshold == doctest::Approx(thr).epsilon(1e-12));

    std::set<std::pair<int, int>> edges;
    for (std::size_t t = 0; t < graph.treated.size(); ++t)
      for (std::size_t e = graph.adj_ptr[t]; e < graph.adj_ptr[t + 1]; ++e)
        edges.insert({graph.treated[t], graph.controls[graph.adj[e]]});
    std::set<int> retained_controls(graph.controls.begin(), graph.controls.end());
    std::set<int> dropped_treated(graph.dropped_treated.begin(), graph.dropped_treated.end());
    for (int i = 0; i < n; ++i) {
      if (!z[i]) continue;
      int admissible = 0;
      for (int j = 0; j < n; ++j) {
        if (z[j]) continue;
        const bool within = std::abs(model.scores(i) - model.scores(j)) <= thr;
        if (within) ++admissible;
        if (!dropped_treated.count(i))
          CHECK(edges.count({i, j}) == (within ? 1u : 0u));
      }
      CHECK(dropped_treated.count(i) == (admissible == 0 ? 1u : 0u));
    }
    // Controls with no admissible treated are dropped silently.
    for (int j = 0; j < n; ++j)
      if (!z[j]) {
        bool any = false;
        for (int i = 0; i < n && !any; ++i)
          if (z[i] && !dropped_treated.count(i))
            any = std::abs(model.scores(i) - model.scores(j)) <= thr;
        CHECK(retained_controls.count(j) == (any ? 1u : 0u));
      }
  }
}

TEST_CASE("caliper width 0.1 on a hand instance: threshold is 0.1 sd of scores") {
  // Scores are constructed via a near-degenerate model fit; instead check
  // the documented semantics directly through caliper_graph's threshold.
  testutil::Rng rng(808);
  Eigen::MatrixXd x(40, 1);
  std::vector<int> z(40);
  std::normal_distribution<double> normal(0, 1);
  for (int i = 0; i < 40; ++i) {
    x(i, 0) = normal(rng);
    z[i] = i % 2;
  }
  PropensityModel model = fit_propensity(x, z);
  CaliperGraph graph = caliper_graph(model, z, 0.1);
  const double mean = model.scores.mean();
  double ss = 0;
  for (int i = 0; i < 40; ++i) ss += (model.scores(i) - mean) * (model.scores(i) - mean);
  CHECK(graph.threshold == doctest::Approx(0.1 * std::sqrt(ss / 39.0)).epsilon(1e-12));
}

TEST_CASE("text matching optimizes cosine distances within the same calipers") {
  testutil::Rng rng(717);
  for (int rep = 0; rep < 50; ++rep) {
    const int nt = testutil::rint(rng, 1, 4);
    const int nc = testutil::rint(rng, 1, 4);
    CaliperGraph graph = testutil::complete_graph(nt, nc);
    corpus::DocTermMatrix dtm = testutil::random_dtm(rng, nt + nc, 6, 0.5);

    std::vector<double> dist(graph.n_edges());
    for (std::size_t t = 0; t < graph.treated.size(); ++t)
      for (std::size_t e = graph.adj_ptr[t]; e < graph.adj_ptr[t + 1]; ++e)
        dist[e] = corpus::cosine_distance(dtm, graph.treated[t],
                                          graph.controls[graph.adj[e]]);
    MatchedSample via_text = text_match_within_calipers(dtm, graph);
    const double oracle = testutil::brute_force_full_match(graph, dist);
    CHECK(via_text.total_distance == doctest::Approx(oracle).epsilon(1e-6));
  }
}

TEST_CASE("balance_table SMD oracle on a hand-computed example") {
  // Treated values {2, 4}, controls {1, 3}: means 3 and 2, variances 2 and
  // 2, pooled sd sqrt(2), SMD 1/sqrt(2).
  Eigen::MatrixXd xs(4, 1);
  xs << 2, 4, 1, 3;
  std::vector<int> z = {1, 1, 0, 0};
  Eigen::VectorXd w = Eigen::VectorXd::Ones(4);
  Eigen::MatrixXd xt(4, 0);
  BalanceReport report = balance_table(xs, {"a"}, xt, {}, z, w);
  REQUIRE(report.rows.size() == 1);
  CHECK(report.rows[0].smd_before == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(report.rows[0].smd_after == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(report.rows[0].flagged_before);
}

TEST_CASE("balance_table weighting moves the after column, not the before column") {
  testutil::Rng rng(99);
  for (int rep = 0; rep < testutil::kPropertyCases; ++rep) {
    const int n = testutil::rint(rng, 8, 40);
    Eigen::MatrixXd xs(n, 2);
    std::normal_distribution<double> normal(0, 1);
    for (int i = 0; i < n; ++i) {
      xs(i, 0) = normal(rng);
      xs(i, 1) = normal(rng);
    }
    std::vector<int> z = testutil::random_treatment(rng, n);
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) w(i) = testutil::runif(rng, 0.1, 3);
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    Eigen::MatrixXd xt(n, 0);
    BalanceReport weighted = balance_table(xs, {"a", "b"}, xt, {}, z, w);
    BalanceReport unweighted = balance_table(xs, {"a", "b"}, xt, {}, z, ones);
    for (std::size_t r = 0; r < weighted.rows.size(); ++r) {
      CHECK(weighted.rows[r].smd_before ==
            doctest::Approx(unweighted.rows[r].smd_before).epsilon(1e-12));
      // Unit weights reproduce the unweighted SMD in the after column.
      CHECK(unweighted.rows[r].smd_after ==
            doctest::Approx(unweighted.rows[r].smd_before).epsilon(1e-12));
    }
  }
}

TEST_CASE("constant columns yield NaN SMDs rather than blowing up") {
  Eigen::MatrixXd xs = Eigen::MatrixXd::Ones(6, 1);
  std::vector<int> z = {1, 1, 1, 0, 0, 0};
  Eigen::VectorXd w = Eigen::VectorXd::Ones(6);
  Eigen::MatrixXd xt(6, 0);
  BalanceReport report = balance_table(xs, {"const"}, xt, {}, z, w);
  CHECK(std::isnan(report.rows[0].smd_before));
  CHECK(std::isnan(report.rows[0].smd_after));
  CHECK_FALSE(report.rows[0].flagged_before);
}
