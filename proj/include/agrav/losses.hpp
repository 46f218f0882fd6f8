#pragma once

#include <vector>

#include <Eigen/Core>

#include "agrav/tensor.hpp"

namespace agrav {

/// Mean over the batch of -sum(Y * log softmax(logits)); log clamped at
/// 1e-12. Y must be exactly one-hot.
Tensor cross_entropy_loss(Tape& tape, const Tensor& logits,
                          const Tensor& onehot);

/// Mean squared distance between each sample's latent vector and its class
/// target centroid, averaged over batch size B and latent width n:
/// (1/(B*n)) sum_f ||c_{label(f)} - latent_f||^2.
Tensor latent_alignment_loss(Tape& tape, const Tensor& latents,
                             const std::vector<Index>& labels,
                             const std::vector<Eigen::VectorXd>& targets);

/// Per-layer target centroids the student is pulled toward; one vector per
/// class, produced by the relocation step.
struct RelocatedTargets {
  std::vector<Eigen::VectorXd> head;
  std::vector<Eigen::VectorXd> tail;
};

/// (1-gamma) * cross-entropy + gamma * (head alignment + tail alignment).
/// gamma must lie in [0,1]. Exact at the endpoints: gamma=0 reproduces the
/// cross-entropy value bit-for-bit, gamma=1 the alignment sum.
Tensor gravity_loss(Tape& tape, const Tensor& logits, const Tensor& onehot,
                    const Tensor& tail_latents, const Tensor& head_latents,
                    const std::vector<Index>& labels,
                    const RelocatedTargets& targets, double gamma);

}  // namespace agrav
