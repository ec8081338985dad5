#include <doctest.h>

#include "effdid/design.hpp"
#include "effdid/rng.hpp"
#include "test_helpers.hpp"

using namespace effdid;

namespace {

CohortIndex index_of(const std::vector<int>& cohorts, int T) {
  std::vector<std::vector<double>> rows(cohorts.size(), std::vector<double>(T, 0.0));
  return cohort_index(test::make_panel(rows, cohorts));
}

std::vector<std::pair<int, int>> pairs_of(const IfIndex& ix) {
  std::vector<std::pair<int, int>> out;
  for (const auto& e : ix.entries) out.push_back({e.comp_g, e.base_t});
  return out;
}

} // namespace

TEST_CASE("if_index enumerates the hand-worked staggered cases") {
  const auto idx = index_of({2, 2, 3, 3, kNever, kNever}, 4);

  const auto i33 = if_index(3, 3, PtRegime::pt_all, idx);
  CHECK(pairs_of(i33) == std::vector<std::pair<int, int>>{{3, 1}, {3, 2}});

  const auto i22 = if_index(2, 2, PtRegime::pt_all, idx);
  CHECK(pairs_of(i22) == std::vector<std::pair<int, int>>{{2, 1}, {3, 2}});
  CHECK(i22.entries[0].own);
  CHECK_FALSE(i22.entries[1].own);
}

TEST_CASE("pt-post reduces to the single (g, g-1) pair") {
  const auto idx = index_of({2, 2, 3, 3, kNever, kNever}, 4);
  for (int g : {2, 3})
    for (int t = g; t <= 4; ++t) {
      const auto ix = if_index(g, t, PtRegime::pt_post, idx);
      CHECK(pairs_of(ix) == std::vector<std::pair<int, int>>{{g, g - 1}});
    }
}

TEST_CASE("if_index rejects pre-treatment targets") {
  const auto idx = index_of({3, 3, kNever, kNever}, 4);
  CHECK_THROWS_WITH_AS(if_index(3, 2, PtRegime::pt_all, idx),
                       doctest::Contains("POST_TREATMENT_ONLY"), Error);
}

TEST_CASE("entry count formula holds on random cohort sets") {
  Rng rng(7);
  for (int rep = 0; rep < 200; ++rep) {
    const int T = 3 + static_cast<int>(rng.below(10)); // up to 12
    std::vector<int> cohorts = {kNever, kNever};
    std::vector<int> treated;
    for (int g = 2; g <= T; ++g)
      if (rng.bernoulli(0.5)) {
        treated.push_back(g);
        cohorts.push_back(g);
        cohorts.push_back(g);
      }
    if (treated.empty()) continue;
    const auto idx = index_of(cohorts, T);
    const int g = treated[rng.below(treated.size())];
    const int t = g + static_cast<int>(rng.below(T - g + 1));
    const auto ix = if_index(g, t, PtRegime::pt_all, idx);

    int expected = g - 1;
    for (int gp : treated)
      if (gp != g) expected += std::max(0, gp - 2);
    CHECK(ix.size() == expected);

    // pt-post index is a sub-list of the pt-all index
    const auto post = if_index(g, t, PtRegime::pt_post, idx);
    bool found = false;
    for (const auto& e : ix.entries) found = found || e == post.entries[0];
    CHECK(found);

    // entries unique
    for (int a = 0; a < ix.size(); ++a)
      for (int b = a + 1; b < ix.size(); ++b) CHECK_FALSE(ix.entries[a] == ix.entries[b]);
  }
}

TEST_CASE("entry filter hook restricts the enumeration") {
  const auto idx = index_of({2, 2, 3, 3, kNever, kNever}, 4);
  const auto ix = if_index(2, 3, PtRegime::pt_all, idx,
                           [](const IfEntry& e) { return e.own; });
  for (const auto& e : ix.entries) CHECK(e.own);
  CHECK(ix.size() == 1); // own block of g=2 is {t'=1}
}

TEST_CASE("es_cohort_weights matches the share arithmetic") {
  const auto idx = index_of({2, 2, 2, 3, 3, 3, kNever, kNever, kNever, kNever}, 4);

  const auto w2 = es_cohort_weights(2, idx);
  REQUIRE(w2.size() == 1);
  CHECK(w2.at(2) == doctest::Approx(1.0).epsilon(1e-15));

  const auto w1 = es_cohort_weights(1, idx);
  REQUIRE(w1.size() == 2);
  CHECK(w1.at(2) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w1.at(3) == doctest::Approx(0.5).epsilon(1e-15));

  CHECK_THROWS_WITH_AS(es_cohort_weights(3, idx),
                       doctest::Contains("NO_COHORT_AT_HORIZON"), Error);
}

TEST_CASE("es weights sum to one exactly") {
  Rng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const PanelDataset ds = test::random_staggered(rng);
    const auto idx = cohort_index(ds);
    for (int e : idx.event_horizons()) {
      const auto w = es_cohort_weights(e, idx);
      double total = 0.0;
      for (const auto& [g, v] : w) total += v;
      CHECK(std::abs(total - 1.0) < 1e-15);
    }
  }
}

TEST_CASE("single treated cohort takes full weight at every horizon") {
  const auto idx = index_of({2, 2, kNever, kNever}, 3);
  for (int e : {0, 1}) {
    const auto w = es_cohort_weights(e, idx);
    REQUIRE(w.size() == 1);
    CHECK(w.at(2) == 1.0);
  }
}
