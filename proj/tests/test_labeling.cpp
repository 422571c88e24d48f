#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "oracles.hpp"
#include "support.hpp"
#include "talesumm/error.hpp"
#include "talesumm/labeling.hpp"

using namespace talesumm;
using namespace talesumm::labeling;
using talesumm::testing::random_matrix;
using talesumm::oracle::oracle_match;
using talesumm::oracle::oracle_smooth;

namespace {

Tensor<float> unit_rows(Rng& rng, std::size_t rows, std::size_t dim) {
  auto t = random_matrix<float>(rng, rows, dim);
  for (std::size_t r = 0; r < rows; ++r) {
    double n = 0.0;
    for (auto v : t.row(r)) n += double(v) * v;
    for (auto& v : t.row(r)) v = static_cast<float>(v / std::sqrt(n));
  }
  return t;
}

/// Row `src` of `from` plus isotropic noise of the given size.
void copy_noisy(const Tensor<float>& from, std::size_t src, Tensor<float>& to, std::size_t dst,
                Rng& rng, double noise) {
  for (std::size_t c = 0; c < from.cols(); ++c) {
    to(dst, c) = static_cast<float>(from(src, c) + noise * rng.normal());
  }
}

FrameBank random_bank(Rng& rng, std::size_t shots, std::size_t dim, std::size_t max_frames = 3) {
  FrameBank bank;
  for (std::size_t s = 0; s < shots; ++s) {
    bank.shots.push_back(unit_rows(rng, 1 + rng.uniform_int(0, std::int64_t(max_frames) - 1), dim));
  }
  return bank;
}

}  // namespace

TEST_CASE("cosine similarity matrix") {
  SUBCASE("hand examples") {
    const Tensor<double> a(Dims{2, 2}, {1, 0, 0, 1});
    const double r = 1.0 / std::sqrt(2.0);
    const Tensor<double> b(Dims{1, 2}, {r, r});
    const auto m = cosine_similarity_matrix(a, b);
    REQUIRE(m.rows() == 2);
    REQUIRE(m.cols() == 1);
    CHECK(m(0, 0) == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-12));
    CHECK(m(1, 0) == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-12));
    const auto self = cosine_similarity_matrix(a, a);
    CHECK(self(0, 0) == doctest::Approx(1.0));
    CHECK(self(0, 1) == 0.0);
  }
  SUBCASE("invalid frames get the sentinel and never match") {
    const Tensor<double> a(Dims{2, 2}, {1, 0, 0, 0});
    const auto m = cosine_similarity_matrix(a, a, {1, 0}, {1, 0});
    CHECK(m(0, 0) == doctest::Approx(1.0));
    CHECK(m(1, 0) == -2.0);
    CHECK(m(0, 1) == -2.0);
  }
  SUBCASE("zero-norm valid frame is reported") {
    const Tensor<double> a(Dims{2, 2}, {1, 0, 0, 0});
    try {
      cosine_similarity_matrix(a, a);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("frame 1") != std::string::npos);
    }
  }
  SUBCASE("width mismatch") {
    CHECK_THROWS_AS(cosine_similarity_matrix(Tensor<double>::matrix(1, 2), Tensor<double>::matrix(1, 3)), Error);
  }
  SUBCASE("entries stay in [-1, 1]") {
    Rng rng(3);
    const auto a = random_matrix(rng, 6, 4), b = random_matrix(rng, 5, 4);
    const auto m = cosine_similarity_matrix(a, b);
    for (double v : m.data()) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("match_recap_shot hand examples") {
  Rng rng(11);
  const auto bank = random_bank(rng, 12, 64);
  MatchConfig cfg;

  SUBCASE("unique exact match") {
    const auto r = match_recap_shot(bank.shots[7], {}, bank, cfg);
    CHECK(r.candidates == std::vector<std::size_t>{7});
    REQUIRE(r.best_shot);
    CHECK(*r.best_shot == 7);
    CHECK(r.matched == std::vector<std::size_t>{7});
    CHECK_FALSE(r.max_rounds_reached);
  }
  SUBCASE("nothing above threshold") {
    const auto r = match_recap_shot(unit_rows(rng, 3, 64), {}, bank, cfg);
    CHECK(r.candidates.empty());
    CHECK_FALSE(r.best_shot);
    CHECK(r.matched.empty());
  }
  SUBCASE("invalid episode frames are skipped") {
    FrameBank masked = bank;
    masked.validity.assign(bank.size(), {});
    Tensor<float> two = Tensor<float>::matrix(2, 64);
    for (std::size_t c = 0; c < 64; ++c) {
      two(0, c) = bank.shots[7](0, c);
      two(1, c) = rng.normal();
    }
    masked.shots[7] = two;
    masked.validity[7] = {0, 1};
    const auto r = match_recap_shot(bank.shots[7].cast<float>(), {}, masked, cfg);
    CHECK(r.candidates.empty());
  }
  SUBCASE("config validation") {
    MatchConfig bad;
    bad.sim_threshold = 1.5;
    CHECK_THROWS_AS(match_recap_shot(bank.shots[0], {}, bank, bad), Error);
    bad = MatchConfig{};
    bad.sim_threshold = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = MatchConfig{};
    bad.top_k = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
  }
}

TEST_CASE("planted thread with a distant decoy") {
  Rng rng(2024);
  const auto bank = random_bank(rng, 30, 64, 2);
  // Recap frames: an exact copy of shot 8, noisy copies of shots 5, 14 and 28.
  Tensor<float> recap = Tensor<float>::matrix(4, 64);
  copy_noisy(bank.shots[8], 0, recap, 0, rng, 0.0);
  copy_noisy(bank.shots[5], 0, recap, 1, rng, 0.03);
  copy_noisy(bank.shots[14], 0, recap, 2, rng, 0.03);
  copy_noisy(bank.shots[28], 0, recap, 3, rng, 0.03);
  const MatchConfig cfg;
  const auto r = match_recap_shot(recap, {}, bank, cfg);
  CHECK(r.candidates == std::vector<std::size_t>{5, 8, 14, 28});
  REQUIRE(r.best_shot);
  CHECK(*r.best_shot == 8);
  CHECK(r.matched == std::vector<std::size_t>{5, 8, 14});

  const auto o = oracle_match(recap, bank, cfg);
  CHECK(std::set<std::size_t>(r.matched.begin(), r.matched.end()) == o.matched);
}

TEST_CASE("closure reaches shots through intermediate members") {
  // 0 -> 9 -> 18 -> 27 with radius 10 chains even though 27 is far from 0.
  Rng rng(5);
  const auto bank = random_bank(rng, 30, 64, 1);
  Tensor<float> recap = Tensor<float>::matrix(4, 64);
  for (std::size_t k = 0; k < 4; ++k) copy_noisy(bank.shots[9 * k], 0, recap, k, rng, k == 0 ? 0.0 : 0.03);
  MatchConfig cfg;
  auto r = match_recap_shot(recap, {}, bank, cfg);
  CHECK(*r.best_shot == 0);
  CHECK(r.matched == std::vector<std::size_t>{0, 9, 18, 27});
  CHECK(r.rounds == 4);

  cfg.max_rounds = 2;
  r = match_recap_shot(recap, {}, bank, cfg);
  CHECK(r.matched == std::vector<std::size_t>{0, 9, 18});
  CHECK(r.max_rounds_reached);

  cfg.max_rounds = 3;
  r = match_recap_shot(recap, {}, bank, cfg);
  CHECK(r.matched == std::vector<std::size_t>{0, 9, 18, 27});
  CHECK_FALSE(r.max_rounds_reached);
}

TEST_CASE("best shot ties go to the lower index") {
  FrameBank bank;
  const Tensor<float> e0(Dims{1, 2}, {1.0f, 0.0f});
  bank.shots = {e0, Tensor<float>(Dims{1, 2}, {0.0f, 1.0f}), e0};
  const auto r = match_recap_shot(e0, {}, bank, MatchConfig{});
  CHECK(r.candidates == std::vector<std::size_t>{0, 2});
  CHECK(*r.best_shot == 0);
  CHECK(r.scores.at(0) == r.scores.at(2));
}

TEST_CASE("top-k only counts frames that pass the threshold") {
  FrameBank bank;
  bank.shots = {Tensor<float>(Dims{3, 2}, {1.0f, 0.0f, 1.0f, 0.01f, 0.0f, 1.0f})};
  MatchConfig cfg;
  cfg.top_k = 3;
  const auto r = match_recap_shot(Tensor<float>(Dims{1, 2}, {1.0f, 0.0f}), {}, bank, cfg);
  // Two frames pass; the per-shot maximum is what accumulates.
  CHECK(r.scores.at(0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("matching agrees with the brute-force oracle") {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(0, 29);
    const std::size_t dim = 3 + rng.uniform_int(0, 5);
    FrameBank bank = random_bank(rng, n, dim, 4);
    if (trial % 3 == 0) {
      bank.validity.resize(n);
      for (std::size_t s = 0; s < n; ++s) {
        bank.validity[s].assign(bank.shots[s].rows(), 1);
        for (std::size_t f = 1; f < bank.shots[s].rows(); ++f) bank.validity[s][f] = rng.uniform() < 0.7;
      }
    }
    const std::size_t frames = 1 + rng.uniform_int(0, 3);
    Tensor<float> recap = Tensor<float>::matrix(frames, dim);
    for (std::size_t f = 0; f < frames; ++f) {
      const std::size_t s = rng.uniform_int(0, std::int64_t(n) - 1);
      copy_noisy(bank.shots[s], 0, recap, f, rng, 0.1);
    }
    MatchConfig cfg;
    cfg.sim_threshold = 0.6 + 0.35 * rng.uniform();
    cfg.top_k = 1 + rng.uniform_int(0, 3);
    cfg.window_radius = rng.uniform_int(0, 10);
    cfg.max_rounds = trial % 5 == 0 ? 1 + rng.uniform_int(0, 2) : 64;
    CAPTURE(trial);
    const auto r = match_recap_shot(recap, {}, bank, cfg);
    const auto o = oracle_match(recap, bank, cfg);
    CHECK(std::set<std::size_t>(r.candidates.begin(), r.candidates.end()) == o.candidates);
    CHECK(r.best_shot == o.best);
    CHECK(std::set<std::size_t>(r.matched.begin(), r.matched.end()) == o.matched);
    CHECK(r.max_rounds_reached == o.capped);
    REQUIRE(r.scores.size() == o.scores.size());
    for (const auto& [s, v] : o.scores) CHECK(r.scores.at(s) == doctest::Approx(v).epsilon(1e-12));

    // Structural properties.
    for (const auto m : r.matched) CHECK(std::binary_search(r.candidates.begin(), r.candidates.end(), m));
    if (!r.matched.empty()) CHECK(std::count(r.matched.begin(), r.matched.end(), *r.best_shot) == 1);
    if (!r.max_rounds_reached) {
      for (const auto m : r.matched) {
        bool linked = r.best_shot && m == *r.best_shot;
        for (const auto other : r.matched)
          if (other != m && (other > m ? other - m : m - other) <= cfg.window_radius) linked = true;
        CHECK(linked);
      }
    }
    CHECK(match_recap_shot(recap, {}, bank, cfg) == r);
  }
}

TEST_CASE("match_recap handles each recap shot independently") {
  Rng rng(8);
  const auto bank = random_bank(rng, 10, 32);
  FrameBank recap;
  recap.shots = {bank.shots[2], unit_rows(rng, 2, 32), bank.shots[6]};
  const auto all = match_recap(recap, bank, MatchConfig{});
  REQUIRE(all.size() == 3);
  for (std::size_t s = 0; s < 3; ++s) CHECK(all[s] == match_recap_shot(recap.shots[s], {}, bank, MatchConfig{}));
  CHECK(binary_labels_from_matches(all, 10) == std::vector<std::uint8_t>{0, 0, 1, 0, 0, 0, 1, 0, 0, 0});
}

TEST_CASE("binary labels from matches") {
  CHECK(binary_labels_from_matches({}, 4) == std::vector<std::uint8_t>(4, 0));
  MatchResult a, b;
  a.matched = {2};
  CHECK(binary_labels_from_matches({a}, 5) == std::vector<std::uint8_t>{0, 0, 1, 0, 0});
  a.matched = {1, 2};
  b.matched = {2, 3};
  CHECK(binary_labels_from_matches({a, b}, 5) == std::vector<std::uint8_t>{0, 1, 1, 1, 0});
  b.matched = {7};
  CHECK_THROWS_AS(binary_labels_from_matches({b}, 5), Error);
}

TEST_CASE("triangle smoothing examples") {
  std::vector<std::uint8_t> b(10, 0);
  b[5] = 1;
  auto s = triangle_smooth(b, SmoothConfig{3});
  CHECK(s == std::vector<double>{0, 0, 0, 0, 0.5, 1, 0.5, 0, 0, 0});

  b[4] = 1;
  s = triangle_smooth(b, SmoothConfig{3});
  CHECK(s == std::vector<double>{0, 0, 0, 0.5, 1, 1, 0.5, 0, 0, 0});

  std::vector<std::uint8_t> wide(30, 0);
  wide[10] = wide[13] = 1;
  s = triangle_smooth(wide, SmoothConfig{17});
  CHECK(s[11] == 1.0);
  CHECK(std::abs(s[20] - 2.0 / 9.0) < 1e-12);
  CHECK(std::abs(s[21] - 1.0 / 9.0) < 1e-12);
  CHECK(s[22] == 0.0);
  CHECK(std::abs(s[2] - 1.0 / 9.0) < 1e-12);
  CHECK(s[1] == 0.0);

  CHECK(triangle_smooth(std::vector<std::uint8_t>{1, 0, 1}, SmoothConfig{1}) == std::vector<double>{1, 0, 1});
  CHECK_THROWS_AS(triangle_smooth(b, SmoothConfig{4}), Error);
  CHECK_THROWS_AS(triangle_smooth(b, SmoothConfig{0}), Error);
  CHECK_THROWS_AS(triangle_smooth(std::vector<std::uint8_t>{2}, SmoothConfig{3}), Error);
  CHECK(triangle_smooth({}, SmoothConfig{}).empty());
}

TEST_CASE("triangle smoothing properties") {
  Rng rng(19);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = rng.uniform_int(0, 40);
    const std::size_t w = 2 * rng.uniform_int(0, 12) + 1;
    std::vector<std::uint8_t> b(n);
    for (auto& v : b) v = rng.uniform() < 0.15;
    const auto s = triangle_smooth(b, SmoothConfig{w});
    const auto o = oracle_smooth(b, w);
    REQUIRE(s.size() == n);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(s[i] - o[i]) < 1e-12);
      CHECK(s[i] >= 0.0);
      CHECK(s[i] <= 1.0);
      if (b[i]) CHECK(s[i] == 1.0);
    }
    if (n == 0) continue;
    auto more = b;
    more[rng.uniform_int(0, std::int64_t(n) - 1)] = 1;
    const auto s2 = triangle_smooth(more, SmoothConfig{w});
    for (std::size_t i = 0; i < n; ++i) CHECK(s2[i] >= s[i]);
    CHECK(triangle_smooth(std::vector<std::uint8_t>(n, 0), SmoothConfig{w}) == std::vector<double>(n, 0.0));
  }
}

TEST_CASE("dialog label inheritance") {
  const std::vector<Span> shots{{5.0, 9.0}, {10.5, 14.0}, {14.0, 18.0}};
  const std::vector<double> scores{0.4, 0.7, 0.9};
  const auto at = [&](double mid) {
    return inherit_dialog_labels(scores, shots, {Span{mid - 0.5, mid + 0.5}})[0];
  };
  CHECK(at(12.0) == 0.7);
  CHECK(at(14.0) == 0.9);
  CHECK(at(9.5) == 0.4);
  CHECK(at(10.0) == 0.7);
  CHECK(at(9.75) == 0.4);  // equidistant gap goes to the earlier shot
  CHECK(at(2.0) == 0.4);
  CHECK(at(30.0) == 0.9);
  CHECK(inherit_dialog_labels(scores, shots, {}).empty());
  CHECK_THROWS_AS(inherit_dialog_labels({}, {}, {Span{0, 1}}), Error);
  CHECK_THROWS_AS(inherit_dialog_labels({0.1}, shots, {Span{0, 1}}), Error);

  Rng rng(4);
  std::vector<Span> spans;
  std::vector<double> values;
  double t = 0.0;
  for (int i = 0; i < 20; ++i) {
    t += rng.uniform() < 0.3 ? rng.uniform() : 0.0;
    spans.push_back({t, t + 0.5 + rng.uniform()});
    t = spans.back().end_s;
    values.push_back(rng.uniform());
  }
  std::vector<Span> utts;
  for (int l = 0; l < 200; ++l) {
    const double s = rng.uniform() * (t + 2.0) - 1.0;
    utts.push_back({s, s + rng.uniform()});
  }
  for (double v : inherit_dialog_labels(values, spans, utts)) {
    CHECK(std::find(values.begin(), values.end(), v) != values.end());
  }
}

TEST_CASE("labels from recap") {
  Rng rng(31);
  const std::size_t n = 25;
  const auto bank = random_bank(rng, n, 64);
  std::vector<Span> shots;
  for (std::size_t i = 0; i < n; ++i) shots.push_back({2.0 * i, 2.0 * (i + 1)});
  const std::vector<Span> utts{{6.2, 7.0}, {9.1, 9.5}, {40.5, 41.0}, {20.0, 21.0}};
  SmoothConfig smooth{3};

  SUBCASE("copies of two shots") {
    FrameBank recap;
    recap.shots = {bank.shots[3], bank.shots[20]};
    std::vector<MatchResult> matches;
    const auto labels = labels_from_recap(bank, shots, utts, recap, MatchConfig{}, smooth, &matches);
    REQUIRE(matches.size() == 2);
    std::vector<double> expect(n, 0.0);
    expect[3] = expect[20] = 1.0;
    expect[2] = expect[4] = expect[19] = expect[21] = 0.5;
    CHECK(labels.shot_scores == expect);
    CHECK(labels.dialog_scores == std::vector<double>{1.0, 0.5, 1.0, 0.0});
    CHECK(labels.provenance == "recap");
    CHECK_NOTHROW(labels.validate(n, utts.size()));
  }
  SUBCASE("no matches") {
    FrameBank recap;
    recap.shots = {unit_rows(rng, 3, 64)};
    const auto labels = labels_from_recap(bank, shots, utts, recap, MatchConfig{}, smooth);
    CHECK(labels.shot_scores == std::vector<double>(n, 0.0));
    CHECK(labels.dialog_scores == std::vector<double>(utts.size(), 0.0));
  }
}

TEST_CASE("label set validation") {
  LabelSet l;
  l.shot_scores = {0.0, 1.0};
  l.dialog_scores = {0.5};
  CHECK_NOTHROW(l.validate(2, 1));
  CHECK_THROWS_AS(l.validate(3, 1), Error);
  CHECK_THROWS_AS(l.validate(2, 0), Error);
  l.shot_scores[0] = 1.5;
  CHECK_THROWS_AS(l.validate(2, 1), Error);
  l.shot_scores[0] = std::nan("");
  CHECK_THROWS_AS(l.validate(2, 1), Error);
}
