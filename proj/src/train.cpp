#include "agrav/train.hpp"

#include <algorithm>

#include "agrav/adam.hpp"
#include "agrav/errors.hpp"
#include "agrav/losses.hpp"

namespace agrav {

void train_supervised(Model& model, const Dataset& train,
                      const TrainOptions& opts) {
  if (opts.epochs < 1) {
    throw ValueError("train_supervised: epochs must be >= 1");
  }
  AdamOptimizer opt(model.parameters(), opts.learning_rate);
  Tape tape;
  for (Index e = 0; e < opts.epochs; ++e) {
    const auto batches =
        epoch_batches(train.size(), opts.batch_size, opts.seed,
                      opts.shuffle_stream, opts.first_epoch_index + e);
    for (const std::vector<Index>& batch : batches) {
      Tensor x = gather_inputs(train, batch);
      Tensor y = gather_onehot(train, batch);
      model.zero_all_grads();
      Tensor logits = model.forward(tape, x);
      Tensor loss = cross_entropy_loss(tape, logits, y);
      tape.backward(loss);
      tape.clear();
      opt.step();
    }
  }
}

namespace {

std::vector<std::vector<Index>> sequential_chunks(Index n, Index chunk) {
  if (chunk < 1) throw ValueError("evaluation chunk size must be >= 1");
  std::vector<std::vector<Index>> out;
  for (Index at = 0; at < n; at += chunk) {
    const Index len = std::min(chunk, n - at);
    std::vector<Index> idx(static_cast<std::size_t>(len));
    for (Index i = 0; i < len; ++i) idx[static_cast<std::size_t>(i)] = at + i;
    out.push_back(std::move(idx));
  }
  return out;
}

Index argmax_row(const Eigen::ArrayXd& flat, Index row, Index width) {
  Index best = 0;
  double best_v = flat[row * width];
  for (Index c = 1; c < width; ++c) {
    const double v = flat[row * width + c];
    if (v > best_v) {
      best_v = v;
      best = c;
    }
  }
  return best;
}

}  // namespace

double evaluate_accuracy(const Model& model, const Dataset& ds, Index chunk) {
  Index correct = 0;
  Tape tape;
  for (const auto& idx : sequential_chunks(ds.size(), chunk)) {
    Tensor x = gather_inputs(ds, idx);
    Tensor logits = model.forward(tape, x);
    tape.clear();
    const Index width = logits.dim(1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const Index pred =
          argmax_row(logits.values(), static_cast<Index>(i), width);
      if (pred == ds.labels[static_cast<std::size_t>(idx[i])]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

LatentSet collect_latents(const Model& model, const Dataset& ds, Index chunk) {
  LatentSet out;
  out.head.resize(ds.size(), model.spec().head_dim());
  out.tail.resize(ds.size(), model.spec().tail_dim());
  out.labels = ds.labels;
  Tape tape;
  Index row = 0;
  for (const auto& idx : sequential_chunks(ds.size(), chunk)) {
    Tensor x = gather_inputs(ds, idx);
    Latents lat = model.forward_with_latents(tape, x);
    tape.clear();
    const Index b = static_cast<Index>(idx.size());
    out.head.middleRows(row, b) =
        ConstMatView(lat.head.values().data(), b, out.head.cols());
    out.tail.middleRows(row, b) =
        ConstMatView(lat.tail.values().data(), b, out.tail.cols());
    row += b;
  }
  return out;
}

std::vector<Index> predict_labels(const Model& model, const Tensor& inputs,
                                  Index chunk) {
  const Index n = inputs.dim(0);
  const Index stride = inputs.size() / n;
  std::vector<Index> preds(static_cast<std::size_t>(n));
  Tape tape;
  for (Index at = 0; at < n; at += chunk) {
    const Index len = std::min(chunk, n - at);
    Shape shape = inputs.shape();
    shape[0] = len;
    Tensor x = Tensor::from_array(
        std::move(shape),
        Eigen::ArrayXd(inputs.values().segment(at * stride, len * stride)));
    Tensor logits = model.forward(tape, x);
    tape.clear();
    const Index width = logits.dim(1);
    for (Index i = 0; i < len; ++i) {
      preds[static_cast<std::size_t>(at + i)] =
          argmax_row(logits.values(), i, width);
    }
  }
  return preds;
}

}  // namespace agrav
