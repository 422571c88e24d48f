#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "talesumm/error.hpp"
#include "talesumm/metrics.hpp"
#include "talesumm/rng.hpp"

using namespace talesumm;
using namespace talesumm::metrics;

namespace {

RaterMatrix raters(std::vector<std::vector<double>> rows, double threshold = 0.5) {
  RaterMatrix m;
  m.thresholds.assign(rows.size(), threshold);
  m.scores = std::move(rows);
  return m;
}

std::vector<double> random_vector(Rng& rng, std::size_t n, int levels = 0) {
  std::vector<double> v(n);
  for (auto& x : v) x = levels > 0 ? double(rng.uniform_int(0, levels - 1)) : rng.uniform();
  return v;
}

}  // namespace

TEST_CASE("average precision examples") {
  CHECK(average_precision({0.9, 0.8, 0.3, 0.1}, {1, 1, 0, 0}) == 1.0);
  CHECK(average_precision({0.9, 0.8, 0.1}, {1, 0, 1}) == 5.0 / 6.0);
  CHECK(average_precision({0.5, 0.5}, {1, 0}) == 1.0);
  CHECK(average_precision({0.5, 0.5}, {0, 1}) == 0.5);
  CHECK_THROWS_AS(average_precision({0.1, 0.2}, {0, 0}), Error);
  CHECK_THROWS_AS(average_precision({0.1}, {1, 0}), Error);
}

TEST_CASE("average precision properties") {
  Rng rng(13);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(0, 40);
    auto scores = random_vector(rng, n, trial % 2 ? 4 : 0);
    std::vector<std::uint8_t> labels(n);
    for (auto& l : labels) l = rng.uniform() < 0.3;
    labels[rng.uniform_int(0, std::int64_t(n) - 1)] = 1;
    const double ap = average_precision(scores, labels);
    CHECK(ap == doctest::Approx(oracle::oracle_ap(scores, labels)).epsilon(1e-12));
    CHECK(ap >= 0.0);
    CHECK(ap <= 1.0);
    std::vector<double> mapped(n);
    for (std::size_t i = 0; i < n; ++i) mapped[i] = std::exp(3.0 * scores[i]) - 7.0;
    CHECK(average_precision(mapped, labels) == ap);
  }
}

TEST_CASE("average precision of random scores tracks prevalence") {
  Rng rng(2718);
  std::vector<std::uint8_t> labels(200, 0);
  for (std::size_t i = 0; i < 200; i += 5) labels[i] = 1;  // p = 0.2
  double total = 0.0;
  for (int t = 0; t < 1000; ++t) total += average_precision(random_vector(rng, 200), labels);
  CHECK(std::abs(total / 1000.0 - 0.2) <= 0.05);
}

TEST_CASE("rank correlation examples") {
  const std::vector<double> a{1, 2, 3, 4};
  for (auto kind : {RankCorrelation::kKendall, RankCorrelation::kSpearman}) {
    CHECK(rank_correlation(a, a, kind) == doctest::Approx(1.0));
    CHECK(rank_correlation(a, {4, 3, 2, 1}, kind) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(rank_correlation(a, {1, 1, 1, 1}, kind), Error);
    CHECK_THROWS_AS(rank_correlation({1}, {2}, kind), Error);
    CHECK_THROWS_AS(rank_correlation(a, {1, 2}, kind), Error);
  }
  CHECK(rank_correlation(a, {1, 3, 2, 4}, RankCorrelation::kKendall) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(rank_correlation(a, {1, 3, 2, 4}, RankCorrelation::kSpearman) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("rank correlation against direct formulas") {
  Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.uniform_int(0, 30);
    const int levels = trial % 3 == 0 ? 0 : 2 + int(rng.uniform_int(0, 4));
    auto a = random_vector(rng, n, levels), b = random_vector(rng, n, levels);
    a[0] = -1.0;
    b[1] = -1.0;  // never all-constant
    const double k = rank_correlation(a, b, RankCorrelation::kKendall);
    const double s = rank_correlation(a, b, RankCorrelation::kSpearman);
    CHECK(k == doctest::Approx(oracle::oracle_kendall(a, b)).epsilon(1e-12));
    CHECK(s == doctest::Approx(oracle::oracle_spearman(a, b)).epsilon(1e-12));
    CHECK(std::abs(k) <= 1.0);
    CHECK(std::abs(s) <= 1.0);
    CHECK(rank_correlation(a, b, RankCorrelation::kKendall) == rank_correlation(b, a, RankCorrelation::kKendall));
  }
  Rng r(4);
  auto distinct = random_vector(r, 25);
  std::vector<double> neg(distinct.size());
  std::transform(distinct.begin(), distinct.end(), neg.begin(), [](double x) { return -x; });
  CHECK(rank_correlation(distinct, neg, RankCorrelation::kKendall) == doctest::Approx(-1.0));
  CHECK(rank_correlation(distinct, neg, RankCorrelation::kSpearman) == doctest::Approx(-1.0));
}

TEST_CASE("cronbach alpha") {
  CHECK(cronbach_alpha(raters({{0, 1, 0, 1}, {0, 1, 1, 1}})) == doctest::Approx(8.0 / 11.0).epsilon(1e-12));
  CHECK(cronbach_alpha(raters({{0.1, 0.5, 0.9}, {0.1, 0.5, 0.9}, {0.1, 0.5, 0.9}})) == doctest::Approx(1.0));
  Rng rng(10);
  const auto a = random_vector(rng, 10000), b = random_vector(rng, 10000);
  CHECK(std::abs(cronbach_alpha(raters({a, b}))) < 0.2);
  CHECK_THROWS_AS(cronbach_alpha(raters({{1, 1}, {1, 1}})), Error);
  CHECK_THROWS_AS(cronbach_alpha(raters({{1, 0}})), Error);
  CHECK_THROWS_AS(cronbach_alpha(raters({{1}, {0}})), Error);
}

TEST_CASE("pairwise F1") {
  const auto sel = [](std::vector<int> idx, std::size_t n = 6) {
    std::vector<double> v(n, 0.0);
    for (int i : idx) v[i] = 1.0;
    return v;
  };
  CHECK(pairwise_f1(raters({sel({1, 2}), sel({1, 2}), sel({1, 2})})) == 1.0);
  CHECK(pairwise_f1(raters({sel({0, 1}), sel({2, 3})})) == 0.0);
  CHECK(pairwise_f1(raters({sel({1, 2, 3}), sel({2, 3, 4, 5})})) == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
  CHECK_THROWS_AS(pairwise_f1(raters({sel({1}), sel({})})), Error);

  // Per-rater thresholds.
  auto m = raters({{0.2, 0.8}, {0.6, 0.7}});
  m.thresholds = {0.5, 0.65};
  CHECK(pairwise_f1(m) == 1.0);
}

TEST_CASE("fleiss kappa") {
  CHECK(fleiss_kappa(raters({{1, 0, 1}, {1, 0, 1}, {1, 0, 1}})) == 1.0);
  CHECK(fleiss_kappa(raters({{1, 0}, {1, 0}, {1, 0}})) == 1.0);
  CHECK(fleiss_kappa(raters({{1, 1, 1}, {1, 0, 1}, {0, 0, 1}})) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(fleiss_kappa(raters({{1, 1}, {1, 1}})), Error);
}

TEST_CASE("agreement invariants") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = 2 + rng.uniform_int(0, 3), n = 2 + rng.uniform_int(0, 20);
    std::vector<std::vector<double>> rows(r);
    for (auto& row : rows) {
      row = random_vector(rng, n);
      row[0] = 0.9;  // everyone selects something
      row[1] = 0.1;
    }
    auto shuffled = rows;
    rng.shuffle(shuffled);
    const auto m = raters(rows), p = raters(shuffled);
    const double f1 = pairwise_f1(m);
    CHECK(f1 >= 0.0);
    CHECK(f1 <= 1.0);
    CHECK(f1 == doctest::Approx(pairwise_f1(p)).epsilon(1e-12));
    const double kappa = fleiss_kappa(m);
    CHECK(kappa <= 1.0);
    CHECK(kappa == doctest::Approx(fleiss_kappa(p)).epsilon(1e-12));
  }
}

TEST_CASE("knapsack examples") {
  CHECK(knapsack_select({0.1, 0.9, 0.5}, {3, 4, 5}, 1.0) == std::vector<std::size_t>{0, 1, 2});
  CHECK(knapsack_select({1, 1}, {10, 10}, 0.5) == std::vector<std::size_t>{0});
  CHECK(knapsack_select({3, 2, 2}, {5, 3, 3}, 6.0 / 11.0) == std::vector<std::size_t>{1, 2});
  CHECK(knapsack_select({1, 1}, {10, 12}, 0.4).empty());
  CHECK(knapsack_select({}, {}, 0.5).empty());
  // Equal value, lower duration wins.
  CHECK(knapsack_select({2, 1, 1}, {3, 1, 1}, 0.7) == std::vector<std::size_t>{1, 2});
  CHECK(knapsack_select({1, 1, 2}, {1, 1, 2}, 0.5) == std::vector<std::size_t>{0, 1});
  CHECK_THROWS_AS(knapsack_select({1}, {0}, 0.5), Error);
  CHECK_THROWS_AS(knapsack_select({1}, {1}, 0.0), Error);
  CHECK_THROWS_AS(knapsack_select({1}, {1}, 1.5), Error);
  CHECK_THROWS_AS(knapsack_select({1, 2}, {1}, 0.5), Error);
  CHECK(quantize_durations({0.04, 1.26}) == std::vector<std::uint64_t>{1, 13});
  CHECK(knapsack_capacity({10, 20}, 0.15) == 4);
}

TEST_CASE("knapsack agrees with exhaustive enumeration") {
  Rng rng(404);
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t n = rng.uniform_int(1, 12);
    // Integer scores force many exact ties.
    const auto scores = random_vector(rng, n, trial % 2 ? 4 : 0);
    std::vector<double> durations(n);
    for (auto& d : durations) d = 0.1 * double(rng.uniform_int(1, 40));
    const double fraction = 0.05 + 0.95 * rng.uniform();
    const auto weights = quantize_durations(durations);
    const auto cap = knapsack_capacity(weights, fraction);
    CAPTURE(trial);
    CHECK(knapsack_select(scores, durations, fraction) == oracle::oracle_knapsack(scores, weights, cap));
  }
}
