#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>

#include "steinflow/errors.hpp"

namespace steinflow {

/// Extent of a lattice tensor, H x W x N x C with C varying fastest.
struct LatticeShape {
  int h = 1;
  int w = 1;
  int n = 1;
  int c = 1;

  Eigen::Index size() const { return Eigen::Index(h) * w * n * c; }
  Eigen::Index cells() const { return Eigen::Index(h) * w * n; }
  bool valid() const { return h > 0 && w > 0 && n > 0 && c > 0; }

  Eigen::Index index(int hi, int wi, int ni, int ci = 0) const {
    return ((Eigen::Index(hi) * w + wi) * n + ni) * c + ci;
  }

  LatticeShape with_frames(int frames) const { return {h, w, frames, c}; }
  LatticeShape single_channel() const { return {h, w, n, 1}; }

  std::array<int, 4> dims() const { return {h, w, n, c}; }
  std::string str() const;

  friend bool operator==(const LatticeShape&, const LatticeShape&) = default;
};

/// Dense lattice tensor. Storage is a flat Eigen array so expressions compose
/// without temporaries; the shape travels alongside for frame and mask ops.
template <typename Scalar>
class BasicLatticeField {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  BasicLatticeField() = default;
  explicit BasicLatticeField(const LatticeShape& shape) : shape_(shape), values_(Array::Zero(shape.size())) {}

  template <typename Derived>
  BasicLatticeField(const LatticeShape& shape, const Eigen::ArrayBase<Derived>& values)
      : shape_(shape), values_(values) {
    if (values_.size() != shape_.size()) {
      throw ContractViolation("field data length " + std::to_string(values_.size()) +
                              " does not match shape " + shape_.str());
    }
  }

  static BasicLatticeField Zero(const LatticeShape& shape) { return BasicLatticeField(shape); }
  static BasicLatticeField Constant(const LatticeShape& shape, Scalar v) {
    return BasicLatticeField(shape, Array::Constant(shape.size(), v));
  }

  const LatticeShape& shape() const { return shape_; }
  Eigen::Index size() const { return values_.size(); }

  Array& array() { return values_; }
  const Array& array() const { return values_; }
  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }

  Scalar& operator()(int h, int w, int n, int c = 0) { return values_[shape_.index(h, w, n, c)]; }
  Scalar operator()(int h, int w, int n, int c = 0) const { return values_[shape_.index(h, w, n, c)]; }

  template <typename Other>
  BasicLatticeField<Other> cast() const {
    return BasicLatticeField<Other>(shape_, values_.template cast<Other>());
  }

  bool all_finite() const { return values_.allFinite(); }

  /// Copy of frames [first, first + count).
  BasicLatticeField frames(int first, int count) const {
    if (first < 0 || count < 0 || first + count > shape_.n) {
      throw ContractViolation("frame range out of bounds");
    }
    BasicLatticeField out(shape_.with_frames(count));
    for (int h = 0; h < shape_.h; ++h)
      for (int w = 0; w < shape_.w; ++w)
        for (int n = 0; n < count; ++n)
          for (int c = 0; c < shape_.c; ++c) out(h, w, n, c) = (*this)(h, w, first + n, c);
    return out;
  }

  /// Overwrite frames starting at `first` with `src`.
  void set_frames(int first, const BasicLatticeField& src) {
    const auto& s = src.shape();
    if (s.h != shape_.h || s.w != shape_.w || s.c != shape_.c || first < 0 || first + s.n > shape_.n) {
      throw ContractViolation("frame block " + s.str() + " does not fit " + shape_.str());
    }
    for (int h = 0; h < s.h; ++h)
      for (int w = 0; w < s.w; ++w)
        for (int n = 0; n < s.n; ++n)
          for (int c = 0; c < s.c; ++c) (*this)(h, w, first + n, c) = src(h, w, n, c);
  }

 private:
  LatticeShape shape_{};
  Array values_;
};

using LatticeField = BasicLatticeField<double>;

inline void require_same_shape(const LatticeShape& a, const LatticeShape& b, const char* what) {
  if (!(a == b)) {
    throw ContractViolation(std::string(what) + ": shape " + a.str() + " vs " + b.str());
  }
}

/// Concatenate along the frame axis.
LatticeField concat_frames(const LatticeField& a, const LatticeField& b);

}  // namespace steinflow
