#pragma once

#include <string_view>

#include "steinflow/lattice.hpp"

namespace steinflow {

enum class MaskRole { fg, sim, context, custom };

std::string_view to_string(MaskRole role);

/// Per-cell weight in [0, 1] over an H x W x N x 1 lattice.
struct Mask {
  LatticeField values;
  MaskRole role = MaskRole::custom;

  static Mask constant(const LatticeShape& shape, double v, MaskRole role = MaskRole::custom) {
    return {LatticeField::Constant(shape.single_channel(), v), role};
  }
  static Mask ones(const LatticeShape& shape, MaskRole role = MaskRole::custom) { return constant(shape, 1.0, role); }
  static Mask zeros(const LatticeShape& shape, MaskRole role = MaskRole::custom) { return constant(shape, 0.0, role); }

  const LatticeShape& shape() const { return values.shape(); }

  /// Throws ContractViolation unless every entry lies in [0, 1] and C == 1.
  void validate() const;

  /// Values repeated across the channels of a field with shape `field`.
  Eigen::ArrayXd broadcast(const LatticeShape& field) const;
};

}  // namespace steinflow
