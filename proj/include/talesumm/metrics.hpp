#pragma once

#include <cstdint>
#include <vector>

namespace talesumm::metrics {

/// Area under the precision-recall curve. Items are ranked by descending
/// score with ties broken by ascending index; AP = sum_k P@k * rel_k / #pos.
/// Throws when labels contain no positive.
double average_precision(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

/// 1 where value >= threshold.
std::vector<std::uint8_t> binarize(const std::vector<double>& values, double threshold);

enum class RankCorrelation { kKendall, kSpearman };

/// Kendall tau-b (tie corrected) or Spearman rho (Pearson correlation of
/// average ranks). Throws for N < 2 or an all-constant input.
double rank_correlation(const std::vector<double>& a, const std::vector<double>& b,
                        RankCorrelation kind);

/// Per-item scores of R label sources (rows) over N items, each source with
/// its own binarization threshold.
struct RaterMatrix {
  std::vector<std::vector<double>> scores;
  std::vector<double> thresholds;

  std::size_t raters() const { return scores.size(); }
  std::size_t items() const { return scores.empty() ? 0 : scores[0].size(); }
  void validate(std::size_t min_items = 1) const;
  std::vector<std::vector<std::uint8_t>> binarized() const;
};

/// Raters as test items: alpha = R/(R-1) (1 - sum_r var_r / var_total), with
/// N-1 variance denominators.
double cronbach_alpha(const RaterMatrix& m);

/// Mean over unordered rater pairs of 2|A n B| / (|A| + |B|) on binarized
/// selections. Throws when a rater selects nothing.
double pairwise_f1(const RaterMatrix& m);

/// Fleiss' kappa with the two categories selected / not selected.
double fleiss_kappa(const RaterMatrix& m);

/// Exact 0/1 knapsack over durations quantized to 0.1 s: maximizes the
/// summed score within budget_fraction of the total (quantized) duration.
/// Ties prefer the lower total duration, then the lexicographically smaller
/// index set. Returns sorted indices.
std::vector<std::size_t> knapsack_select(const std::vector<double>& scores,
                                         const std::vector<double>& durations,
                                         double budget_fraction);

/// Durations in tenths of a second as used by knapsack_select (each >= 1).
std::vector<std::uint64_t> quantize_durations(const std::vector<double>& durations);

/// Capacity in tenths of a second for a budget fraction of the quantized total.
std::uint64_t knapsack_capacity(const std::vector<std::uint64_t>& weights, double budget_fraction);

}  // namespace talesumm::metrics
