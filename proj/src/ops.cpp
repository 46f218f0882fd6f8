#include "agrav/ops.hpp"

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

namespace agrav {

namespace {

bool any_requires_grad(std::initializer_list<Tensor> inputs) {
  for (const Tensor& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

Eigen::ArrayXd flat_of(const RowMat& m) {
  return Eigen::Map<const Eigen::ArrayXd>(m.data(), m.size());
}

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

Tensor finish(Tape& tape, const char* op, Shape shape, Eigen::ArrayXd data,
              bool requires_grad, Tape::BackwardRule rule) {
  detail::ensure_finite(data, op);
  Tensor out = Tensor::from_array(std::move(shape), std::move(data));
  if (requires_grad) {
    out.set_requires_grad(true);
    tape.record(op, out, std::move(rule));
  }
  return out;
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    shape_fail("matmul", "expects rank-2 tensors, got " +
                             shape_to_string(a.shape()) + " and " +
                             shape_to_string(b.shape()));
  }
  if (a.dim(1) != b.dim(0)) {
    shape_fail("matmul", "inner dimensions mismatch: " +
                             shape_to_string(a.shape()) + " x " +
                             shape_to_string(b.shape()));
  }
  RowMat c = a.matrix_view() * b.matrix_view();
  const bool rg = any_requires_grad({a, b});
  return finish(
      tape, "matmul", {a.dim(0), b.dim(1)}, flat_of(c), rg,
      [a, b](const Eigen::ArrayXd& g, GradFlow& flow) {
        ConstMatView gm(g.data(), a.dim(0), b.dim(1));
        if (a.requires_grad()) {
          RowMat ga = gm * b.matrix_view().transpose();
          flow.add(a, flat_of(ga));
        }
        if (b.requires_grad()) {
          RowMat gb = a.matrix_view().transpose() * gm;
          flow.add(b, flat_of(gb));
        }
      });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  const bool bias_case =
      a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0);
  if (!bias_case && a.shape() != b.shape()) {
    shape_fail("add", "shapes " + shape_to_string(a.shape()) + " and " +
                          shape_to_string(b.shape()) + " are incompatible");
  }
  Eigen::ArrayXd out;
  if (bias_case) {
    RowMat m = a.matrix_view();
    m.rowwise() += b.values().matrix().transpose();
    out = flat_of(m);
  } else {
    out = a.values() + b.values();
  }
  const bool rg = any_requires_grad({a, b});
  return finish(tape, "add", a.shape(), std::move(out), rg,
                [a, b, bias_case](const Eigen::ArrayXd& g, GradFlow& flow) {
                  if (a.requires_grad()) flow.add(a, g);
                  if (b.requires_grad()) {
                    if (bias_case) {
                      ConstMatView gm(g.data(), a.dim(0), a.dim(1));
                      Eigen::ArrayXd gb = gm.colwise().sum().array();
                      flow.add(b, gb);
                    } else {
                      flow.add(b, g);
                    }
                  }
                });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_fail("sub", "shapes " + shape_to_string(a.shape()) + " and " +
                          shape_to_string(b.shape()) + " differ");
  }
  const bool rg = any_requires_grad({a, b});
  return finish(tape, "sub", a.shape(), a.values() - b.values(), rg,
                [a, b](const Eigen::ArrayXd& g, GradFlow& flow) {
                  if (a.requires_grad()) flow.add(a, g);
                  if (b.requires_grad()) flow.add(b, Eigen::ArrayXd(-g));
                });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_fail("mul", "shapes " + shape_to_string(a.shape()) + " and " +
                          shape_to_string(b.shape()) + " differ");
  }
  const bool rg = any_requires_grad({a, b});
  return finish(tape, "mul", a.shape(), a.values() * b.values(), rg,
                [a, b](const Eigen::ArrayXd& g, GradFlow& flow) {
                  if (a.requires_grad())
                    flow.add(a, Eigen::ArrayXd(g * b.values()));
                  if (b.requires_grad())
                    flow.add(b, Eigen::ArrayXd(g * a.values()));
                });
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  const bool rg = a.requires_grad();
  return finish(tape, "scale", a.shape(), Eigen::ArrayXd(factor * a.values()),
                rg, [a, factor](const Eigen::ArrayXd& g, GradFlow& flow) {
                  flow.add(a, Eigen::ArrayXd(factor * g));
                });
}

Tensor sum(Tape& tape, const Tensor& a) {
  Eigen::ArrayXd out(1);
  out[0] = a.values().sum();
  const bool rg = a.requires_grad();
  return finish(tape, "sum", {1}, std::move(out), rg,
                [a](const Eigen::ArrayXd& g, GradFlow& flow) {
                  flow.add(a, Eigen::ArrayXd::Constant(a.size(), g[0]));
                });
}

Tensor relu(Tape& tape, const Tensor& a) {
  const bool rg = a.requires_grad();
  return finish(tape, "relu", a.shape(), a.values().max(0.0), rg,
                [a](const Eigen::ArrayXd& g, GradFlow& flow) {
                  Eigen::ArrayXd ga =
                      (a.values() > 0.0).select(g, Eigen::ArrayXd::Zero(g.size()));
                  flow.add(a, ga);
                });
}

Tensor prelu(Tape& tape, const Tensor& a, const Tensor& slope) {
  if (slope.size() != 1) {
    shape_fail("prelu", "slope must be a single scalar, got " +
                            shape_to_string(slope.shape()));
  }
  const double s = slope.values()[0];
  Eigen::ArrayXd out =
      (a.values() > 0.0).select(a.values(), s * a.values());
  const bool rg = any_requires_grad({a, slope});
  return finish(
      tape, "prelu", a.shape(), std::move(out), rg,
      [a, slope](const Eigen::ArrayXd& g, GradFlow& flow) {
        const double sl = slope.values()[0];
        if (a.requires_grad()) {
          Eigen::ArrayXd ga = (a.values() > 0.0).select(g, sl * g);
          flow.add(a, ga);
        }
        if (slope.requires_grad()) {
          Eigen::ArrayXd gs(1);
          gs[0] = (a.values() > 0.0)
                      .select(Eigen::ArrayXd::Zero(g.size()), g * a.values())
                      .sum();
          flow.add(slope, gs);
        }
      });
}

namespace {

// Gathers sliding kernel windows into a [C*kh*kw, B*OH*OW] matrix so the
// convolution becomes a single GEMM against the [F, C*kh*kw] kernel matrix.
Eigen::MatrixXd im2col(const Tensor& x, Index kh, Index kw) {
  const Index batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index oh = h - kh + 1, ow = w - kw + 1, positions = oh * ow;
  Eigen::MatrixXd cols(ch * kh * kw, batch * positions);
  const double* src = x.values().data();
  for (Index b = 0; b < batch; ++b) {
    for (Index c = 0; c < ch; ++c) {
      const double* plane = src + (b * ch + c) * h * w;
      for (Index i = 0; i < kh; ++i) {
        for (Index j = 0; j < kw; ++j) {
          const Index row = (c * kh + i) * kw + j;
          for (Index oy = 0; oy < oh; ++oy) {
            const double* line = plane + (oy + i) * w + j;
            for (Index ox = 0; ox < ow; ++ox) {
              cols(row, b * positions + oy * ow + ox) = line[ox];
            }
          }
        }
      }
    }
  }
  return cols;
}

void col2im_add(Eigen::ArrayXd& dx, const Eigen::MatrixXd& dcols, Index batch,
                Index ch, Index h, Index w, Index kh, Index kw) {
  const Index oh = h - kh + 1, ow = w - kw + 1, positions = oh * ow;
  for (Index b = 0; b < batch; ++b) {
    for (Index c = 0; c < ch; ++c) {
      double* plane = dx.data() + (b * ch + c) * h * w;
      for (Index i = 0; i < kh; ++i) {
        for (Index j = 0; j < kw; ++j) {
          const Index row = (c * kh + i) * kw + j;
          for (Index oy = 0; oy < oh; ++oy) {
            double* line = plane + (oy + i) * w + j;
            for (Index ox = 0; ox < ow; ++ox) {
              line[ox] += dcols(row, b * positions + oy * ow + ox);
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 4 || w.rank() != 4 || b.rank() != 1) {
    shape_fail("conv2d", "expects x[B,C,H,W], w[F,C,kh,kw], b[F]; got " +
                             shape_to_string(x.shape()) + ", " +
                             shape_to_string(w.shape()) + ", " +
                             shape_to_string(b.shape()));
  }
  if (x.dim(1) != w.dim(1)) {
    shape_fail("conv2d", "input channels " + std::to_string(x.dim(1)) +
                             " do not match kernel channels " +
                             std::to_string(w.dim(1)));
  }
  if (w.dim(0) != b.dim(0)) {
    shape_fail("conv2d", "bias length " + std::to_string(b.dim(0)) +
                             " does not match filter count " +
                             std::to_string(w.dim(0)));
  }
  const Index kh = w.dim(2), kw = w.dim(3);
  if (x.dim(2) < kh || x.dim(3) < kw) {
    shape_fail("conv2d", "kernel " + shape_to_string(w.shape()) +
                             " larger than input " + shape_to_string(x.shape()));
  }
  const Index batch = x.dim(0), filters = w.dim(0);
  const Index oh = x.dim(2) - kh + 1, ow = x.dim(3) - kw + 1;
  const Index positions = oh * ow, k = w.dim(1) * kh * kw;

  Eigen::MatrixXd cols = im2col(x, kh, kw);
  ConstMatView wmat(w.values().data(), filters, k);
  Eigen::MatrixXd prod = wmat * cols;  // [F, B*positions]

  Eigen::ArrayXd out(batch * filters * positions);
  for (Index bi = 0; bi < batch; ++bi) {
    for (Index f = 0; f < filters; ++f) {
      const double bias = b.values()[f];
      double* dst = out.data() + (bi * filters + f) * positions;
      for (Index p = 0; p < positions; ++p) {
        dst[p] = prod(f, bi * positions + p) + bias;
      }
    }
  }

  const bool rg = any_requires_grad({x, w, b});
  Tape::BackwardRule rule;
  if (rg) {
    rule = [x, w, b, cols = std::move(cols), batch, filters, positions, k, kh,
            kw](const Eigen::ArrayXd& g, GradFlow& flow) {
      Eigen::MatrixXd gmat(filters, batch * positions);
      for (Index bi = 0; bi < batch; ++bi) {
        for (Index f = 0; f < filters; ++f) {
          const double* src = g.data() + (bi * filters + f) * positions;
          for (Index p = 0; p < positions; ++p) {
            gmat(f, bi * positions + p) = src[p];
          }
        }
      }
      if (w.requires_grad()) {
        Eigen::MatrixXd gw = gmat * cols.transpose();  // [F, k]
        Eigen::ArrayXd gw_flat(filters * k);
        for (Index f = 0; f < filters; ++f) {
          for (Index c = 0; c < k; ++c) gw_flat[f * k + c] = gw(f, c);
        }
        flow.add(w, gw_flat);
      }
      if (b.requires_grad()) {
        Eigen::ArrayXd gb = gmat.rowwise().sum().array();
        flow.add(b, gb);
      }
      if (x.requires_grad()) {
        ConstMatView wmat2(w.values().data(), filters, k);
        Eigen::MatrixXd dcols = wmat2.transpose() * gmat;
        Eigen::ArrayXd gx = Eigen::ArrayXd::Zero(x.size());
        col2im_add(gx, dcols, batch, x.dim(1), x.dim(2), x.dim(3), kh, kw);
        flow.add(x, gx);
      }
    };
  }
  return finish(tape, "conv2d", {batch, filters, oh, ow}, std::move(out), rg,
                std::move(rule));
}

Tensor maxpool2x2(Tape& tape, const Tensor& x) {
  if (x.rank() != 4) {
    shape_fail("maxpool2x2",
               "expects x[B,C,H,W], got " + shape_to_string(x.shape()));
  }
  const Index h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    shape_fail("maxpool2x2", "spatial dims must be even, got " +
                                 shape_to_string(x.shape()));
  }
  const Index batch = x.dim(0), ch = x.dim(1), oh = h / 2, ow = w / 2;
  Eigen::ArrayXd out(batch * ch * oh * ow);
  std::vector<Index> argmax(static_cast<std::size_t>(out.size()));
  const double* src = x.values().data();
  Index oi = 0;
  for (Index b = 0; b < batch; ++b) {
    for (Index c = 0; c < ch; ++c) {
      const Index plane = (b * ch + c) * h * w;
      for (Index oy = 0; oy < oh; ++oy) {
        for (Index ox = 0; ox < ow; ++ox) {
          const Index base = plane + (2 * oy) * w + 2 * ox;
          Index best = base;
          double best_v = src[base];
          for (Index di = 0; di < 2; ++di) {
            for (Index dj = 0; dj < 2; ++dj) {
              const Index idx = base + di * w + dj;
              if (src[idx] > best_v) {
                best_v = src[idx];
                best = idx;
              }
            }
          }
          out[oi] = best_v;
          argmax[static_cast<std::size_t>(oi)] = best;
          ++oi;
        }
      }
    }
  }
  const bool rg = x.requires_grad();
  return finish(tape, "maxpool2x2", {batch, ch, oh, ow}, std::move(out), rg,
                [x, argmax = std::move(argmax)](const Eigen::ArrayXd& g,
                                                GradFlow& flow) {
                  Eigen::ArrayXd gx = Eigen::ArrayXd::Zero(x.size());
                  for (Index i = 0; i < g.size(); ++i) {
                    gx[argmax[static_cast<std::size_t>(i)]] += g[i];
                  }
                  flow.add(x, gx);
                });
}

Tensor flatten(Tape& tape, const Tensor& x) {
  if (x.rank() < 2) {
    shape_fail("flatten",
               "expects a batched tensor, got " + shape_to_string(x.shape()));
  }
  const Index batch = x.dim(0);
  const Index rest = x.size() / batch;
  const bool rg = x.requires_grad();
  return finish(tape, "flatten", {batch, rest}, x.values(), rg,
                [x](const Eigen::ArrayXd& g, GradFlow& flow) {
                  flow.add(x, g);
                });
}

Tensor softmax(Tape& tape, const Tensor& x) {
  if (x.rank() != 2) {
    shape_fail("softmax",
               "expects [B,N] logits, got " + shape_to_string(x.shape()));
  }
  const Index batch = x.dim(0), n = x.dim(1);
  Eigen::ArrayXd out(x.size());
  for (Index b = 0; b < batch; ++b) {
    const auto row = x.values().segment(b * n, n);
    Eigen::ArrayXd e = (row - row.maxCoeff()).exp();
    out.segment(b * n, n) = e / e.sum();
  }
  const bool rg = x.requires_grad();
  Tensor result = finish(
      tape, "softmax", x.shape(), std::move(out), rg,
      [x, batch, n](const Eigen::ArrayXd& g, GradFlow& flow) {
        // Recomputes the row softmax; same float ops as forward, so exact.
        Eigen::ArrayXd gx(x.size());
        for (Index b = 0; b < batch; ++b) {
          const auto row = x.values().segment(b * n, n);
          Eigen::ArrayXd e = (row - row.maxCoeff()).exp();
          Eigen::ArrayXd s = e / e.sum();
          const auto grow = g.segment(b * n, n);
          const double dot = (grow * s).sum();
          gx.segment(b * n, n) = s * (grow - dot);
        }
        flow.add(x, gx);
      });
  return result;
}

Tensor log_clamped(Tape& tape, const Tensor& x, double floor) {
  if (floor <= 0.0) {
    throw ValueError("log_clamped: floor must be positive");
  }
  Eigen::ArrayXd out = x.values().max(floor).log();
  const bool rg = x.requires_grad();
  return finish(tape, "log_clamped", x.shape(), std::move(out), rg,
                [x, floor](const Eigen::ArrayXd& g, GradFlow& flow) {
                  Eigen::ArrayXd gx =
                      (x.values() > floor)
                          .select(g / x.values(),
                                  Eigen::ArrayXd::Zero(g.size()));
                  flow.add(x, gx);
                });
}

}  // namespace agrav
