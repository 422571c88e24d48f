#include "talesumm/attention_mask.hpp"

#include <algorithm>
#include <string>

#include "talesumm/error.hpp"

namespace talesumm {

AttentionMask::AttentionMask(std::size_t size, const std::vector<std::uint8_t>& dense) {
  if (dense.size() != size * size) {
    throw invalid_input("attention mask: expected " + std::to_string(size * size) + " entries");
  }
  std::vector<std::vector<std::uint32_t>> rows(size);
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j)
      if (dense[i * size + j]) rows[i].push_back(static_cast<std::uint32_t>(j));
  *this = AttentionMask(std::move(rows));
}

AttentionMask::AttentionMask(std::vector<std::vector<std::uint32_t>> rows) {
  const std::size_t n = rows.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = rows[i];
    if (r.empty()) {
      throw invalid_input("attention mask row " + std::to_string(i) +
                          " has no allowed position (softmax undefined)");
    }
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    if (r.back() >= n) throw invalid_input("attention mask column out of range");
  }
  rows_ = std::make_shared<const std::vector<std::vector<std::uint32_t>>>(std::move(rows));
}

AttentionMask AttentionMask::full(std::size_t size) {
  return block_diagonal({size});
}

AttentionMask AttentionMask::identity(std::size_t size) {
  std::vector<std::vector<std::uint32_t>> rows(size);
  for (std::size_t i = 0; i < size; ++i) rows[i] = {static_cast<std::uint32_t>(i)};
  return AttentionMask(std::move(rows));
}

AttentionMask AttentionMask::block_diagonal(const std::vector<std::size_t>& block_sizes) {
  std::vector<std::vector<std::uint32_t>> rows;
  std::uint32_t start = 0;
  for (const auto b : block_sizes) {
    std::vector<std::uint32_t> cols(b);
    for (std::size_t j = 0; j < b; ++j) cols[j] = start + static_cast<std::uint32_t>(j);
    for (std::size_t i = 0; i < b; ++i) rows.push_back(cols);
    start += static_cast<std::uint32_t>(b);
  }
  return AttentionMask(std::move(rows));
}

bool AttentionMask::allowed(std::size_t i, std::size_t j) const {
  const auto& r = (*rows_)[i];
  return std::binary_search(r.begin(), r.end(), static_cast<std::uint32_t>(j));
}

std::vector<std::uint8_t> AttentionMask::dense() const {
  const std::size_t n = size();
  std::vector<std::uint8_t> out(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto j : (*rows_)[i]) out[i * n + j] = 1;
  return out;
}

bool AttentionMask::operator==(const AttentionMask& other) const {
  if (size() != other.size()) return false;
  if (rows_ == other.rows_) return true;
  return *rows_ == *other.rows_;
}

}  // namespace talesumm
