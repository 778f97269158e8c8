#include <catch2/catch_amalgamated.hpp>

#include "badge/metrics.hpp"
#include "badge/rng.hpp"
#include "test_support.hpp"

using namespace badge;

TEST_CASE("graph extraction", "[metrics]") {
  Rng rng(3);
  auto m = badge::testing::random_model(3, 5, rng);
  SECTION("ties at the threshold stay absent") {
    for (auto& e : m.edges) e.s_marginal.setConstant(0.5);
    CHECK(extract_graphs(m, 0.5).total_edges() == 0);
  }
  SECTION("threshold zero keeps everything positive") {
    for (auto& e : m.edges) e.s_marginal.setConstant(0.01);
    CHECK(extract_graphs(m, 0.0).total_edges() == 3L * 5);
  }
  SECTION("raising the threshold never adds edges") {
    const auto g1 = extract_graphs(m, 0.3);
    const auto g2 = extract_graphs(m, 0.6);
    for (int t = 0; t < 5; ++t)
      for (int j = 0; j < 3; ++j)
        for (int k = j + 1; k < 3; ++k)
          if (g2.at(t, j, k)) CHECK(g1.at(t, j, k));
  }
}

TEST_CASE("structure metrics", "[metrics]") {
  SECTION("perfect recovery") {
    GraphTrajectory g(4, 3);
    g.set(0, 0, 1, true);
    g.set(2, 1, 3, true);
    const auto r = structure_metrics(g, g);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.f1 == 1.0);
    CHECK(r.per_time_edge_counts == std::vector<int>{1, 0, 1});
  }
  SECTION("empty estimate against a nonempty truth") {
    GraphTrajectory est(3, 2), truth(3, 2);
    truth.set(0, 0, 2, true);
    const auto r = structure_metrics(est, truth);
    CHECK(r.recall == 0.0);
    CHECK(r.f1 == 0.0);
    CHECK(r.precision == 0.0);
  }
  SECTION("both empty counts as perfect") {
    GraphTrajectory est(3, 2), truth(3, 2);
    const auto r = structure_metrics(est, truth);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
  }
  SECTION("eight true positives, two false positives, truth of ten") {
    GraphTrajectory est(6, 1), truth(6, 1);
    int placed = 0;
    for (int j = 0; j < 6 && placed < 10; ++j)
      for (int k = j + 1; k < 6 && placed < 10; ++k) truth.set(0, j, k, true), ++placed;
    int copied = 0;
    for (int j = 0; j < 6 && copied < 8; ++j)
      for (int k = j + 1; k < 6 && copied < 8; ++k)
        if (truth.at(0, j, k)) est.set(0, j, k, true), ++copied;
    est.set(0, 3, 5, true);
    est.set(0, 4, 5, true);
    REQUIRE_FALSE(truth.at(0, 3, 5));
    REQUIRE_FALSE(truth.at(0, 4, 5));
    const auto r = structure_metrics(est, truth);
    CHECK(r.precision == Catch::Approx(0.8));
    CHECK(r.recall == Catch::Approx(0.8));
    CHECK(r.f1 == Catch::Approx(0.8));
  }
  SECTION("matches a brute-force confusion matrix") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      const int p = 2 + static_cast<int>(rng.below(3));
      const int n = 1 + static_cast<int>(rng.below(5));
      GraphTrajectory est(p, n), truth(p, n);
      for (int t = 0; t < n; ++t)
        for (int j = 0; j < p; ++j)
          for (int k = j + 1; k < p; ++k) {
            if (rng.uniform() < 0.4) est.set(t, j, k, true);
            if (rng.uniform() < 0.4) truth.set(t, j, k, true);
          }
      long tp = 0, fp = 0, fn = 0;
      for (int t = 0; t < n; ++t)
        for (int j = 0; j < p; ++j)
          for (int k = j + 1; k < p; ++k) {
            tp += est.at(t, j, k) && truth.at(t, j, k);
            fp += est.at(t, j, k) && !truth.at(t, j, k);
            fn += !est.at(t, j, k) && truth.at(t, j, k);
          }
      const auto r = structure_metrics(est, truth);
      const double prec = tp + fp > 0 ? double(tp) / (tp + fp) : (tp + fn > 0 ? 0.0 : 1.0);
      const double rec = tp + fn > 0 ? double(tp) / (tp + fn) : (tp + fp > 0 ? 0.0 : 1.0);
      CHECK(r.precision == Catch::Approx(prec).margin(1e-14));
      CHECK(r.recall == Catch::Approx(rec).margin(1e-14));
      if (prec + rec > 0)
        CHECK(r.f1 == Catch::Approx(2 * prec * rec / (prec + rec)).margin(1e-14));
    }
  }
  SECTION("macro averaging differs when slices are unbalanced") {
    GraphTrajectory est(3, 2), truth(3, 2);
    truth.set(0, 0, 1, true);
    est.set(0, 0, 1, true);
    est.set(1, 0, 2, true);  // slice 1 truth empty
    const auto micro = structure_metrics(est, truth, false);
    const auto macro = structure_metrics(est, truth, true);
    CHECK(micro.precision == Catch::Approx(0.5));
    CHECK(macro.precision == Catch::Approx(0.5));  // (1 + 0) / 2
    CHECK(macro.recall == Catch::Approx(0.5));     // (1 + 0) / 2
    CHECK(micro.recall == Catch::Approx(1.0));
  }
  SECTION("dimension mismatch throws") {
    CHECK_THROWS_AS(structure_metrics(GraphTrajectory(3, 2), GraphTrajectory(3, 3)),
                    std::invalid_argument);
  }
}
