#include "ots/basis.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace ots {

std::string_view to_string(BasisKind kind) {
  return kind == BasisKind::kPixel ? "pixel" : "dct8";
}

BasisKind parse_basis_kind(std::string_view text) {
  if (text == "pixel") return BasisKind::kPixel;
  if (text == "dct8" || text == "dct") return BasisKind::kDct8;
  throw ConfigError("unknown basis '" + std::string(text) +
                    "' (expected pixel or dct8)");
}

Basis::Basis(Shape shape, BasisKind kind) : shape_(shape), kind_(kind) {
  if (kind == BasisKind::kDct8 &&
      (shape.height % 8 != 0 || shape.width % 8 != 0)) {
    throw ConfigError("dct8 basis needs height and width divisible by 8, got " +
                      to_string(shape));
  }
  for (int u = 0; u < 8; ++u) {
    const double s = u == 0 ? std::sqrt(1.0 / 8.0) : 0.5;
    for (int r = 0; r < 8; ++r) {
      cosines_[u * 8 + r] =
          s * std::cos((2.0 * r + 1.0) * u * std::numbers::pi / 16.0);
    }
  }
}

void Basis::add_atom(std::span<double> pixels, std::size_t index,
                     double scale) const {
  if (index >= size()) throw ContractViolation("basis index out of range");
  if (kind_ == BasisKind::kPixel) {
    pixels[index] += scale;
    return;
  }
  const std::size_t blocks_c = shape_.width / 8;
  const std::size_t blocks_r = shape_.height / 8;
  const std::size_t v = index % 8;
  const std::size_t u = (index / 8) % 8;
  const std::size_t block = index / 64;
  const std::size_t bc = block % blocks_c;
  const std::size_t br = (block / blocks_c) % blocks_r;
  const int channel = static_cast<int>(block / (blocks_c * blocks_r));
  for (int r = 0; r < 8; ++r) {
    const double row_factor = scale * cosines_[u * 8 + r];
    const int row = static_cast<int>(br * 8) + r;
    for (int c = 0; c < 8; ++c) {
      const int col = static_cast<int>(bc * 8) + c;
      const std::size_t at =
          (static_cast<std::size_t>(row) * shape_.width + col) *
              shape_.channels +
          channel;
      pixels[at] += row_factor * cosines_[v * 8 + c];
    }
  }
}

std::vector<double> Basis::dense(std::size_t index) const {
  std::vector<double> out(size(), 0.0);
  add_atom(out, index, 1.0);
  return out;
}

Basis build_basis(Shape shape, BasisKind kind) { return Basis(shape, kind); }

}  // namespace ots
