#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "agrav/errors.hpp"

namespace agrav {

using Index = std::int64_t;
using Shape = std::vector<Index>;

/// Product of the dimensions; throws on non-positive entries.
Index shape_size(const Shape& shape);

std::string shape_to_string(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  Eigen::ArrayXd data;
  Eigen::ArrayXd grad;  // size 0 until requires_grad is set
  bool requires_grad = false;
};

}  // namespace detail

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatView = Eigen::Map<RowMat>;
using ConstMatView = Eigen::Map<const RowMat>;

/// Dense n-dimensional array of 64-bit floats in row-major order, with an
/// optional gradient slot of the same length. Copies share storage; use
/// detached_copy() for an independent clone.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor constant(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from_array(Shape shape, Eigen::ArrayXd values,
                           bool requires_grad = false);
  static Tensor from_vector(Shape shape, const std::vector<double>& values,
                            bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  Index dim(std::size_t axis) const { return impl_->shape[axis]; }
  Index size() const { return impl_->data.size(); }

  Eigen::ArrayXd& values() { return impl_->data; }
  const Eigen::ArrayXd& values() const { return impl_->data; }

  double scalar_value() const;

  bool requires_grad() const { return impl_->requires_grad; }
  /// Enabling allocates a zero gradient of matching length.
  Tensor& set_requires_grad(bool enabled);

  bool has_grad() const { return impl_->grad.size() == size(); }
  Eigen::ArrayXd& grad();
  const Eigen::ArrayXd& grad() const;
  void zero_grad();

  /// Deep copy of the values; gradient state is not copied.
  Tensor detached_copy() const;

  /// Rank-2 row-major matrix view.
  ConstMatView matrix_view() const;
  MatView matrix_view();

  /// View of the flat data as [rows, cols] regardless of rank.
  ConstMatView reshaped_view(Index rows, Index cols) const;
  MatView reshaped_view(Index rows, Index cols);

  const detail::TensorImpl* impl() const { return impl_.get(); }
  detail::TensorImpl* impl() { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Per-backward-pass gradient flow. Keyed by tensor identity; values are the
/// gradients accumulated during the current traversal only, so repeated
/// backward() calls add identical contributions into the persistent slots.
class GradFlow {
 public:
  Eigen::ArrayXd* find(const Tensor& t);
  void add(const Tensor& t, const Eigen::ArrayXd& g);
  void seed(const Tensor& t);

  const std::unordered_map<const detail::TensorImpl*, Eigen::ArrayXd>& entries()
      const {
    return map_;
  }

 private:
  std::unordered_map<const detail::TensorImpl*, Eigen::ArrayXd> map_;
};

/// Reverse-mode tape. Operations append nodes in execution order (inputs
/// always precede their consumers); backward() walks the list once in
/// reverse and accumulates gradients additively.
class Tape {
 public:
  using BackwardRule =
      std::function<void(const Eigen::ArrayXd& out_grad, GradFlow& flow)>;

  void record(const char* op, Tensor output, BackwardRule rule);

  /// Populates .grad for every requires_grad tensor reachable from loss.
  void backward(const Tensor& loss);

  /// Same traversal, but flushes gradients only into the listed tensors.
  /// Used by attack generation so a shared frozen model's parameter
  /// gradients are never touched.
  void backward(const Tensor& loss, const std::vector<Tensor>& only_into);

  void clear() { nodes_.clear(); }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op;
    Tensor output;
    BackwardRule rule;
  };

  void backward_impl(const Tensor& loss, const std::vector<Tensor>* only_into);

  std::vector<Node> nodes_;
};

namespace detail {

/// NaN guard: every completed forward/backward product must be finite.
void ensure_finite(const Eigen::ArrayXd& values, const char* context);

}  // namespace detail

}  // namespace agrav
