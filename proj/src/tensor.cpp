#include "agrav/tensor.hpp"

#include <sstream>
#include <utility>

namespace agrav {

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d <= 0) {
      throw ShapeError("shape_size: non-positive dimension in " +
                       shape_to_string(shape));
    }
    n *= d;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const Index n = shape_size(shape);
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = Eigen::ArrayXd::Zero(n);
  Tensor t(std::move(impl));
  if (requires_grad) t.set_requires_grad(true);
  return t;
}

Tensor Tensor::constant(Shape shape, double value) {
  const Index n = shape_size(shape);
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = Eigen::ArrayXd::Constant(n, value);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return constant({1}, value); }

Tensor Tensor::from_array(Shape shape, Eigen::ArrayXd values,
                          bool requires_grad) {
  const Index n = shape_size(shape);
  if (values.size() != n) {
    throw ShapeError("from_array: " + std::to_string(values.size()) +
                     " values for shape " + shape_to_string(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  Tensor t(std::move(impl));
  if (requires_grad) t.set_requires_grad(true);
  return t;
}

Tensor Tensor::from_vector(Shape shape, const std::vector<double>& values,
                           bool requires_grad) {
  Eigen::ArrayXd data(static_cast<Index>(values.size()));
  for (Index i = 0; i < data.size(); ++i)
    data[i] = values[static_cast<std::size_t>(i)];
  return from_array(std::move(shape), std::move(data), requires_grad);
}

double Tensor::scalar_value() const {
  if (size() != 1) {
    throw ShapeError("scalar_value: tensor has shape " +
                     shape_to_string(shape()));
  }
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool enabled) {
  impl_->requires_grad = enabled;
  if (enabled && impl_->grad.size() != size()) {
    impl_->grad = Eigen::ArrayXd::Zero(size());
  }
  return *this;
}

Eigen::ArrayXd& Tensor::grad() {
  if (!has_grad()) {
    throw ValueError("grad: tensor does not require gradients");
  }
  return impl_->grad;
}

const Eigen::ArrayXd& Tensor::grad() const {
  if (!has_grad()) {
    throw ValueError("grad: tensor does not require gradients");
  }
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (has_grad()) impl_->grad.setZero();
}

Tensor Tensor::detached_copy() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

ConstMatView Tensor::matrix_view() const {
  if (rank() != 2) {
    throw ShapeError("matrix_view: tensor has shape " +
                     shape_to_string(shape()));
  }
  return ConstMatView(impl_->data.data(), dim(0), dim(1));
}

MatView Tensor::matrix_view() {
  if (rank() != 2) {
    throw ShapeError("matrix_view: tensor has shape " +
                     shape_to_string(shape()));
  }
  return MatView(impl_->data.data(), dim(0), dim(1));
}

ConstMatView Tensor::reshaped_view(Index rows, Index cols) const {
  if (rows * cols != size()) {
    throw ShapeError("reshaped_view: cannot view " + shape_to_string(shape()) +
                     " as " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  return ConstMatView(impl_->data.data(), rows, cols);
}

MatView Tensor::reshaped_view(Index rows, Index cols) {
  if (rows * cols != size()) {
    throw ShapeError("reshaped_view: cannot view " + shape_to_string(shape()) +
                     " as " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  return MatView(impl_->data.data(), rows, cols);
}

Eigen::ArrayXd* GradFlow::find(const Tensor& t) {
  auto it = map_.find(t.impl());
  return it == map_.end() ? nullptr : &it->second;
}

void GradFlow::add(const Tensor& t, const Eigen::ArrayXd& g) {
  auto [it, inserted] = map_.try_emplace(t.impl());
  if (inserted) {
    it->second = g;
  } else {
    it->second += g;
  }
}

void GradFlow::seed(const Tensor& t) {
  map_[t.impl()] = Eigen::ArrayXd::Ones(1);
}

void Tape::record(const char* op, Tensor output, BackwardRule rule) {
  nodes_.push_back(Node{op, std::move(output), std::move(rule)});
}

void Tape::backward(const Tensor& loss) { backward_impl(loss, nullptr); }

void Tape::backward(const Tensor& loss, const std::vector<Tensor>& only_into) {
  backward_impl(loss, &only_into);
}

void Tape::backward_impl(const Tensor& loss,
                         const std::vector<Tensor>* only_into) {
  if (loss.size() != 1) {
    throw ValueError("backward: loss must be scalar, got shape " +
                     shape_to_string(loss.shape()));
  }
  if (nodes_.empty()) {
    throw ValueError("backward: tape is empty");
  }

  GradFlow flow;
  flow.seed(loss);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    const Eigen::ArrayXd* out_grad = flow.find(it->output);
    if (out_grad == nullptr) continue;  // node not on the path to loss
    // Copy: the rule may insert into the flow map and invalidate references.
    const Eigen::ArrayXd g = *out_grad;
    it->rule(g, flow);
  }

  if (only_into != nullptr) {
    for (Tensor t : *only_into) {
      if (!t.has_grad()) {
        throw ValueError("backward: target tensor does not require gradients");
      }
      if (const Eigen::ArrayXd* g = flow.find(t)) {
        detail::ensure_finite(*g, "backward");
        t.impl()->grad += *g;
      }
    }
    return;
  }

  for (const auto& [impl, g] : flow.entries()) {
    if (!impl->requires_grad) continue;
    detail::ensure_finite(g, "backward");
    const_cast<detail::TensorImpl*>(impl)->grad += g;
  }
}

namespace detail {

void ensure_finite(const Eigen::ArrayXd& values, const char* context) {
  if (!values.allFinite()) {
    throw NumericError(std::string(context) +
                       ": non-finite value encountered");
  }
}

}  // namespace detail

}  // namespace agrav
