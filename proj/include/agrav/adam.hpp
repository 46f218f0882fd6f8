#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "agrav/errors.hpp"
#include "agrav/tensor.hpp"

namespace agrav {

/// Adam with bias correction. One optimizer instance owns the moment state
/// for a fixed parameter list; step() consumes whatever is in each
/// parameter's .grad and leaves the grads untouched (callers zero them).
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<Tensor> params, double lr = 1e-4,
                         double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
        eps_(eps) {
    if (lr_ <= 0.0) throw ValueError("AdamOptimizer: learning rate must be positive");
    for (const Tensor& p : params_) {
      if (!p.requires_grad()) {
        throw ValueError("AdamOptimizer: parameter does not track gradients");
      }
      m_.emplace_back(Eigen::ArrayXd::Zero(p.size()));
      v_.emplace_back(Eigen::ArrayXd::Zero(p.size()));
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = params_[i];
      if (!p.has_grad()) {
        throw ValueError("AdamOptimizer: parameter has no gradient to apply");
      }
      const Eigen::ArrayXd& g = p.grad();
      detail::ensure_finite(g, "AdamOptimizer::step");
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.square();
      const Eigen::ArrayXd mhat = m_[i] / bc1;
      const Eigen::ArrayXd vhat = v_[i] / bc2;
      p.values() -= lr_ * mhat / (vhat.sqrt() + eps_);
    }
  }

  std::int64_t step_count() const { return t_; }
  double learning_rate() const { return lr_; }

 private:
  std::vector<Tensor> params_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Eigen::ArrayXd> m_, v_;
};

}  // namespace agrav
