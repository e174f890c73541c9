#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <vector>

#include "distana/autodiff.hpp"

namespace distana {

/// Neighbour slot order used everywhere a lateral vector is laid out.
enum class Direction : std::size_t { kNW = 0, kN, kNE, kW, kE, kSW, kS, kSE };

inline constexpr std::size_t kNeighbourSlots = 8;

/// (dy, dx) per Direction, in slot order.
inline constexpr std::array<std::array<int, 2>, kNeighbourSlots> kNeighbourOffsets{{
    {-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1},
}};

/// Eight-neighbour lattice over an H x W grid, cells numbered row-major.
/// Slots that fall off the grid hold -1 and feed zeros.
class LatticeTopology {
 public:
  LatticeTopology(std::size_t height, std::size_t width) : height_(height), width_(width) {
    auto table = std::make_shared<ad::GatherTable>();
    table->slots = kNeighbourSlots;
    table->index.resize(height * width * kNeighbourSlots, -1);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x)
        for (std::size_t k = 0; k < kNeighbourSlots; ++k) {
          const long ny = static_cast<long>(y) + kNeighbourOffsets[k][0];
          const long nx = static_cast<long>(x) + kNeighbourOffsets[k][1];
          if (ny < 0 || nx < 0 || ny >= static_cast<long>(height) || nx >= static_cast<long>(width)) continue;
          table->index[(y * width + x) * kNeighbourSlots + k] = static_cast<int>(ny * static_cast<long>(width) + nx);
        }
    table_ = std::move(table);
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t cells() const { return height_ * width_; }

  /// Neighbour of `cell` in slot `k`, or -1.
  int neighbour(std::size_t cell, std::size_t k) const { return table_->index[cell * kNeighbourSlots + k]; }

  std::size_t degree(std::size_t cell) const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < kNeighbourSlots; ++k) n += neighbour(cell, k) >= 0;
    return n;
  }

  const std::shared_ptr<const ad::GatherTable>& gather_table() const { return table_; }

 private:
  std::size_t height_;
  std::size_t width_;
  std::shared_ptr<const ad::GatherTable> table_;
};

}  // namespace distana
