#pragma once

#include "agrav/tensor.hpp"

namespace agrav {

// Differentiable operations. Each records a node on the tape when any input
// requires gradients; output.requires_grad is the OR of the inputs'.

/// [m,k] x [k,n] -> [m,n].
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

/// Elementwise add for equal shapes, or [B,n] + [n] bias broadcast over rows.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);

/// Elementwise product, equal shapes only.
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

Tensor scale(Tape& tape, const Tensor& a, double factor);

/// Sum of all entries -> scalar.
Tensor sum(Tape& tape, const Tensor& a);

Tensor relu(Tape& tape, const Tensor& a);

/// PReLU with a single learnable slope (shape [1]) for the negative part.
Tensor prelu(Tape& tape, const Tensor& a, const Tensor& slope);

/// x: [B,C,H,W], w: [F,C,kh,kw], b: [F]. Stride 1, valid padding.
Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);

/// 2x2 max pooling, stride 2; H and W must be even. Ties route the gradient
/// to the first maximal entry in scan order.
Tensor maxpool2x2(Tape& tape, const Tensor& x);

/// [B, ...] -> [B, prod(rest)]; row-major data is untouched.
Tensor flatten(Tape& tape, const Tensor& x);

/// Row-wise softmax over [B,N].
Tensor softmax(Tape& tape, const Tensor& x);

/// log(max(x, floor)); the gradient is zero where the clamp is active.
Tensor log_clamped(Tape& tape, const Tensor& x, double floor = 1e-12);

}  // namespace agrav
