#pragma once

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "paml/error.hpp"

namespace paml {

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Index = Eigen::Index;

/// Named, shaped slice of a flat parameter buffer.
struct Block {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  Index offset = 0;

  Index size() const { return rows * cols; }
  bool operator==(const Block&) const = default;
};

/// Ordered list of blocks describing how a flat buffer is carved up.
class Layout {
 public:
  Index add(std::string name, Index rows, Index cols) {
    if (rows <= 0 || cols <= 0) throw InputError("layout block '" + name + "' has an empty shape");
    if (find(name) >= 0) throw InputError("duplicate layout block '" + name + "'");
    blocks_.push_back(Block{std::move(name), rows, cols, total_});
    total_ += rows * cols;
    return static_cast<Index>(blocks_.size()) - 1;
  }

  Index find(std::string_view name) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      if (blocks_[i].name == name) return static_cast<Index>(i);
    return -1;
  }

  const Block& block(Index i) const { return blocks_[static_cast<std::size_t>(i)]; }
  const std::vector<Block>& blocks() const { return blocks_; }
  Index size() const { return static_cast<Index>(blocks_.size()); }
  Index total() const { return total_; }

  bool operator==(const Layout& o) const { return blocks_ == o.blocks_; }

 private:
  std::vector<Block> blocks_;
  Index total_ = 0;
};

/// A flat vector of parameters viewed through a shared Layout.
///
/// All arithmetic happens on `flat()`; `block()` hands out Eigen maps for the
/// per-layer view. Copies are deep for values and shallow for the layout.
template <class Scalar>
class ParamSet {
 public:
  using MatrixMap = Eigen::Map<Mat<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const Mat<Scalar>>;

  ParamSet() = default;
  explicit ParamSet(std::shared_ptr<const Layout> layout)
      : layout_(std::move(layout)), values_(Vec<Scalar>::Zero(layout_->total())) {}
  ParamSet(std::shared_ptr<const Layout> layout, Vec<Scalar> values)
      : layout_(std::move(layout)), values_(std::move(values)) {
    if (values_.size() != layout_->total())
      throw InputError("parameter buffer does not match its layout");
  }

  static ParamSet zeros_like(const ParamSet& other) { return ParamSet(other.layout_); }

  MatrixMap block(Index i) {
    const Block& b = layout_->block(i);
    return MatrixMap(values_.data() + b.offset, b.rows, b.cols);
  }
  ConstMatrixMap block(Index i) const {
    const Block& b = layout_->block(i);
    return ConstMatrixMap(values_.data() + b.offset, b.rows, b.cols);
  }
  MatrixMap operator[](std::string_view name) { return block(index_of(name)); }
  ConstMatrixMap operator[](std::string_view name) const { return block(index_of(name)); }

  Vec<Scalar>& flat() { return values_; }
  const Vec<Scalar>& flat() const { return values_; }

  const std::shared_ptr<const Layout>& layout() const { return layout_; }
  Index total_dim() const { return values_.size(); }
  bool empty() const { return layout_ == nullptr; }

  bool compatible(const ParamSet& o) const {
    if (layout_ == o.layout_) return true;
    return layout_ && o.layout_ && *layout_ == *o.layout_;
  }
  void require_compatible(const ParamSet& o, const char* what) const {
    if (!compatible(o)) throw InputError(std::string(what) + ": parameter shapes differ");
  }

  bool all_finite() const { return values_.allFinite(); }

  template <class Other>
  ParamSet<Other> cast() const {
    return ParamSet<Other>(layout_, values_.template cast<Other>());
  }

 private:
  Index index_of(std::string_view name) const {
    const Index i = layout_->find(name);
    if (i < 0) throw InputError("unknown parameter block '" + std::string(name) + "'");
    return i;
  }

  std::shared_ptr<const Layout> layout_;
  Vec<Scalar> values_;
};

/// theta - step * g, with a scalar step.
template <class Scalar>
ParamSet<Scalar> axpy_update(const ParamSet<Scalar>& theta, const ParamSet<Scalar>& g, Scalar step) {
  theta.require_compatible(g, "axpy_update");
  using std::isfinite;
  if (!isfinite(step)) throw NumericError("axpy_update: non-finite step");
  return ParamSet<Scalar>(theta.layout(), theta.flat() - step * g.flat());
}

/// theta - step (.) g, elementwise per parameter (Meta-SGD).
template <class Scalar>
ParamSet<Scalar> axpy_update(const ParamSet<Scalar>& theta, const ParamSet<Scalar>& g,
                             const Vec<Scalar>& step) {
  theta.require_compatible(g, "axpy_update");
  if (step.size() != theta.total_dim()) throw InputError("axpy_update: per-entry step has wrong length");
  if (!step.allFinite()) throw NumericError("axpy_update: non-finite step");
  return ParamSet<Scalar>(theta.layout(), theta.flat() - step.cwiseProduct(g.flat()));
}

}  // namespace paml
