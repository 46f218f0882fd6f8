#include "agrav/losses.hpp"

#include <string>

#include "agrav/errors.hpp"
#include "agrav/ops.hpp"

namespace agrav {

Tensor cross_entropy_loss(Tape& tape, const Tensor& logits,
                          const Tensor& onehot) {
  if (logits.rank() != 2 || onehot.shape() != logits.shape()) {
    throw ShapeError("cross_entropy_loss: logits " +
                     shape_to_string(logits.shape()) + " vs labels " +
                     shape_to_string(onehot.shape()));
  }
  const Index batch = logits.dim(0), n = logits.dim(1);
  for (Index b = 0; b < batch; ++b) {
    double row_sum = 0.0;
    for (Index c = 0; c < n; ++c) {
      const double v = onehot.values()[b * n + c];
      if (v != 0.0 && v != 1.0) {
        throw ValueError("cross_entropy_loss: labels are not one-hot at row " +
                         std::to_string(b));
      }
      row_sum += v;
    }
    if (row_sum != 1.0) {
      throw ValueError("cross_entropy_loss: label row " + std::to_string(b) +
                       " sums to " + std::to_string(row_sum));
    }
  }
  Tensor probs = softmax(tape, logits);
  Tensor logp = log_clamped(tape, probs);
  Tensor picked = mul(tape, onehot, logp);
  Tensor total = sum(tape, picked);
  return scale(tape, total, -1.0 / static_cast<double>(batch));
}

Tensor latent_alignment_loss(Tape& tape, const Tensor& latents,
                             const std::vector<Index>& labels,
                             const std::vector<Eigen::VectorXd>& targets) {
  if (latents.rank() != 2) {
    throw ShapeError("latent_alignment_loss: latents must be B x n, got " +
                     shape_to_string(latents.shape()));
  }
  const Index batch = latents.dim(0), n = latents.dim(1);
  if (static_cast<Index>(labels.size()) != batch) {
    throw ShapeError("latent_alignment_loss: " + std::to_string(batch) +
                     " latent rows vs " + std::to_string(labels.size()) +
                     " labels");
  }
  if (targets.empty()) {
    throw ValueError("latent_alignment_loss: no target centroids");
  }
  for (const Eigen::VectorXd& t : targets) {
    if (t.size() != n) {
      throw ShapeError("latent_alignment_loss: target centroid dim " +
                       std::to_string(t.size()) + " vs latent width " +
                       std::to_string(n));
    }
  }
  Eigen::ArrayXd target_rows(batch * n);
  for (Index b = 0; b < batch; ++b) {
    const Index lab = labels[static_cast<std::size_t>(b)];
    if (lab < 0 || lab >= static_cast<Index>(targets.size())) {
      throw ValueError("latent_alignment_loss: unknown label " +
                       std::to_string(lab));
    }
    for (Index c = 0; c < n; ++c) {
      target_rows[b * n + c] = targets[static_cast<std::size_t>(lab)][c];
    }
  }
  Tensor target = Tensor::from_array({batch, n}, std::move(target_rows));
  Tensor diff = sub(tape, target, latents);
  Tensor sq = mul(tape, diff, diff);
  Tensor total = sum(tape, sq);
  return scale(tape, total, 1.0 / static_cast<double>(batch * n));
}

Tensor gravity_loss(Tape& tape, const Tensor& logits, const Tensor& onehot,
                    const Tensor& tail_latents, const Tensor& head_latents,
                    const std::vector<Index>& labels,
                    const RelocatedTargets& targets, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw ValueError("gravity_loss: gamma must lie in [0,1], got " +
                     std::to_string(gamma));
  }
  Tensor ce = cross_entropy_loss(tape, logits, onehot);
  Tensor l_head = latent_alignment_loss(tape, head_latents, labels,
                                        targets.head);
  Tensor l_tail = latent_alignment_loss(tape, tail_latents, labels,
                                        targets.tail);
  Tensor align = add(tape, l_head, l_tail);
  return add(tape, scale(tape, ce, 1.0 - gamma), scale(tape, align, gamma));
}

}  // namespace agrav
