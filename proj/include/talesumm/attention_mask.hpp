#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

namespace talesumm {

/// Square binary attention mask stored as sorted allowed-column lists per
/// row. Attention visits only allowed pairs, which is equivalent to adding a
/// -1e9 sentinel to disallowed logits: their softmax weight underflows to
/// exactly zero. Copies share storage.
class AttentionMask {
 public:
  AttentionMask() = default;

  /// Row-major size x size matrix of 0/1 entries. Throws if any row has no
  /// allowed column.
  AttentionMask(std::size_t size, const std::vector<std::uint8_t>& dense);

  /// Sorted allowed columns per row. Throws on an empty or out-of-range row.
  explicit AttentionMask(std::vector<std::vector<std::uint32_t>> rows);

  static AttentionMask full(std::size_t size);
  static AttentionMask identity(std::size_t size);
  /// Block-diagonal mask over consecutive blocks of the given sizes.
  static AttentionMask block_diagonal(const std::vector<std::size_t>& block_sizes);

  std::size_t size() const { return rows_ ? rows_->size() : 0; }
  bool allowed(std::size_t i, std::size_t j) const;
  const std::vector<std::uint32_t>& allowed_columns(std::size_t row) const { return (*rows_)[row]; }

  /// Dense 0/1 expansion, row-major.
  std::vector<std::uint8_t> dense() const;

  bool operator==(const AttentionMask& other) const;

 private:
  std::shared_ptr<const std::vector<std::vector<std::uint32_t>>> rows_;
};

}  // namespace talesumm
