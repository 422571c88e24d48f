#include "talesumm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "talesumm/error.hpp"

namespace talesumm::metrics {

double average_precision(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size()) {
    throw invalid_input("average_precision: " + std::to_string(scores.size()) + " scores vs " +
                        std::to_string(labels.size()) + " labels");
  }
  const auto positives = static_cast<std::size_t>(std::count_if(
      labels.begin(), labels.end(), [](std::uint8_t v) { return v != 0; }));
  if (positives == 0) throw invalid_input("average_precision: no positive label");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  // Extended accumulator with a single final rounding.
  long double total = 0.0L;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (!labels[order[k]]) continue;
    ++hits;
    total += static_cast<long double>(hits) / static_cast<long double>(k + 1);
  }
  return static_cast<double>(total / static_cast<long double>(positives));
}

std::vector<std::uint8_t> binarize(const std::vector<double>& values, double threshold) {
  std::vector<std::uint8_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] >= threshold;
  return out;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

bool is_constant(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

double sample_variance(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (const auto x : v) ss += (x - mean) * (x - mean);
  return ss / (n - 1.0);
}

}  // namespace

double rank_correlation(const std::vector<double>& a, const std::vector<double>& b,
                        RankCorrelation kind) {
  if (a.size() != b.size()) throw invalid_input("rank_correlation: length mismatch");
  if (a.size() < 2) throw invalid_input("rank_correlation: need at least two items");
  if (is_constant(a) || is_constant(b)) {
    throw invalid_input("rank_correlation: undefined for an all-constant vector");
  }
  if (kind == RankCorrelation::kSpearman) {
    return std::clamp(pearson(average_ranks(a), average_ranks(b)), -1.0, 1.0);
  }
  // tau-b = (C - D) / sqrt((n0 - n1)(n0 - n2)), counted pairwise.
  double concordant_minus_discordant = 0.0;
  double ties_a = 0.0, ties_b = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      pairs += 1.0;
      const double da = a[i] - a[j];
      const double db = b[i] - b[j];
      if (da == 0.0) ties_a += 1.0;
      if (db == 0.0) ties_b += 1.0;
      if (da != 0.0 && db != 0.0) concordant_minus_discordant += (da > 0) == (db > 0) ? 1.0 : -1.0;
    }
  }
  const double denom = std::sqrt((pairs - ties_a) * (pairs - ties_b));
  return std::clamp(concordant_minus_discordant / denom, -1.0, 1.0);
}

void RaterMatrix::validate(std::size_t min_items) const {
  if (scores.size() < 2) throw invalid_input("agreement statistics need at least two raters");
  if (thresholds.size() != scores.size()) {
    throw invalid_input("rater matrix: one binarization threshold per rater required");
  }
  for (const auto& row : scores) {
    if (row.size() != scores[0].size()) throw invalid_input("rater matrix: ragged rows");
  }
  if (items() < min_items) {
    throw invalid_input("rater matrix: need at least " + std::to_string(min_items) + " items");
  }
}

std::vector<std::vector<std::uint8_t>> RaterMatrix::binarized() const {
  std::vector<std::vector<std::uint8_t>> out;
  for (std::size_t r = 0; r < scores.size(); ++r) out.push_back(binarize(scores[r], thresholds[r]));
  return out;
}

double cronbach_alpha(const RaterMatrix& m) {
  m.validate(2);
  const double R = static_cast<double>(m.raters());
  double item_variance = 0.0;
  std::vector<double> totals(m.items(), 0.0);
  for (const auto& row : m.scores) {
    item_variance += sample_variance(row);
    for (std::size_t i = 0; i < row.size(); ++i) totals[i] += row[i];
  }
  const double total_variance = sample_variance(totals);
  if (!(total_variance > 0.0)) throw invalid_input("cronbach_alpha: zero total variance");
  return R / (R - 1.0) * (1.0 - item_variance / total_variance);
}

double pairwise_f1(const RaterMatrix& m) {
  m.validate();
  const auto sel = m.binarized();
  std::vector<std::size_t> sizes;
  for (std::size_t r = 0; r < sel.size(); ++r) {
    sizes.push_back(static_cast<std::size_t>(std::count(sel[r].begin(), sel[r].end(), 1)));
    if (sizes.back() == 0) {
      throw invalid_input("pairwise_f1: rater " + std::to_string(r) + " selects no item");
    }
  }
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < sel.size(); ++a) {
    for (std::size_t b = a + 1; b < sel.size(); ++b) {
      std::size_t both = 0;
      for (std::size_t i = 0; i < sel[a].size(); ++i) both += sel[a][i] && sel[b][i];
      total += 2.0 * static_cast<double>(both) / static_cast<double>(sizes[a] + sizes[b]);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

double fleiss_kappa(const RaterMatrix& m) {
  m.validate();
  const auto sel = m.binarized();
  const double R = static_cast<double>(m.raters());
  const double N = static_cast<double>(m.items());
  double agreement = 0.0, positive_total = 0.0;
  for (std::size_t i = 0; i < m.items(); ++i) {
    double pos = 0.0;
    for (const auto& row : sel) pos += row[i];
    const double neg = R - pos;
    agreement += (pos * (pos - 1.0) + neg * (neg - 1.0)) / (R * (R - 1.0));
    positive_total += pos;
  }
  const double p_bar = agreement / N;
  const double p_pos = positive_total / (N * R);
  const double p_e = p_pos * p_pos + (1.0 - p_pos) * (1.0 - p_pos);
  if (p_e >= 1.0) throw invalid_input("fleiss_kappa: undefined when every rating falls in one category");
  return (p_bar - p_e) / (1.0 - p_e);
}

std::vector<std::uint64_t> quantize_durations(const std::vector<double>& durations) {
  std::vector<std::uint64_t> w(durations.size());
  for (std::size_t i = 0; i < durations.size(); ++i) {
    if (!(durations[i] > 0.0) || !std::isfinite(durations[i])) {
      throw invalid_input("knapsack: duration " + std::to_string(i) + " must be positive");
    }
    w[i] = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(durations[i] * 10.0)));
  }
  return w;
}

std::uint64_t knapsack_capacity(const std::vector<std::uint64_t>& weights, double budget_fraction) {
  const double total = static_cast<double>(std::accumulate(weights.begin(), weights.end(), std::uint64_t{0}));
  return static_cast<std::uint64_t>(std::floor(budget_fraction * total * (1.0 + 1e-12) + 1e-9));
}

std::vector<std::size_t> knapsack_select(const std::vector<double>& scores,
                                         const std::vector<double>& durations,
                                         double budget_fraction) {
  if (scores.size() != durations.size()) throw invalid_input("knapsack: length mismatch");
  if (!(budget_fraction > 0.0 && budget_fraction <= 1.0)) {
    throw invalid_input("knapsack: budget fraction must lie in (0, 1]");
  }
  const auto weights = quantize_durations(durations);
  const std::size_t n = scores.size();
  const std::size_t cap = static_cast<std::size_t>(knapsack_capacity(weights, budget_fraction));

  // best[i][c]: optimum over items i..n-1 with capacity c, under the order
  // (value desc, weight asc, index set lexicographically asc). Filling from
  // the back lets "take i" win lexicographic ties against "skip i".
  struct Cell {
    double value = 0.0;
    std::uint64_t weight = 0;
  };
  std::vector<Cell> next(cap + 1), current(cap + 1);
  std::vector<std::vector<std::uint8_t>> take(n, std::vector<std::uint8_t>(cap + 1, 0));
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t c = 0; c <= cap; ++c) {
      const Cell skip = next[c];
      Cell chosen = skip;
      if (weights[i] <= c) {
        const Cell& rest = next[c - weights[i]];
        const Cell with{scores[i] + rest.value, weights[i] + rest.weight};
        if (with.value > skip.value || (with.value == skip.value && with.weight <= skip.weight)) {
          chosen = with;
          take[i][c] = 1;
        }
      }
      current[c] = chosen;
    }
    std::swap(current, next);
  }
  std::vector<std::size_t> selected;
  std::size_t c = cap;
  for (std::size_t i = 0; i < n; ++i) {
    if (take[i][c]) {
      selected.push_back(i);
      c -= weights[i];
    }
  }
  return selected;
}

}  // namespace talesumm::metrics
