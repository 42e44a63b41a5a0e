#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "ots/core.hpp"

namespace ots {

enum class BasisKind { kPixel, kDct8 };

std::string_view to_string(BasisKind kind);
BasisKind parse_basis_kind(std::string_view text);

/// Ordered orthonormal basis of the image space.
///
/// kPixel is the standard coordinate basis. kDct8 tiles every channel into
/// 8x8 blocks and uses the orthonormal 2-D DCT-II atoms of each block:
///   a_{u,v}(r, c) = s(u) s(v) cos((2r+1) u pi / 16) cos((2c+1) v pi / 16)
/// with s(0) = sqrt(1/8) and s(k) = 1/2 otherwise. Atom index order is
/// (channel, block row, block column, u, v), v fastest.
class Basis {
 public:
  Basis(Shape shape, BasisKind kind);

  BasisKind kind() const { return kind_; }
  const Shape& shape() const { return shape_; }
  std::size_t size() const { return shape_.size(); }

  /// pixels += scale * atom(index)
  void add_atom(std::span<double> pixels, std::size_t index, double scale) const;

  std::vector<double> dense(std::size_t index) const;

 private:
  Shape shape_;
  BasisKind kind_;
  std::array<double, 64> cosines_{};  // cosines_[u * 8 + r]
};

/// Throws ConfigError when kDct8 is requested for a shape whose height or
/// width is not a multiple of 8.
Basis build_basis(Shape shape, BasisKind kind);

}  // namespace ots
