#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agrav/data.hpp"
#include "agrav/model.hpp"

namespace agrav {

struct TrainOptions {
  Index epochs = 1;
  Index batch_size = 64;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  /// Substream tag for the per-epoch shuffle; training loops that must not
  /// share an order use different tags.
  std::string shuffle_stream = "shuffle/baseline";
  /// Epoch substream offset, so a run split into consecutive segments can
  /// reproduce the unsplit run's shuffle sequence exactly.
  Index first_epoch_index = 0;
};

/// Plain cross-entropy training with Adam. Creates a fresh optimizer, so
/// two consecutive calls behave like two independent segments.
void train_supervised(Model& model, const Dataset& train,
                      const TrainOptions& opts);

/// Fraction of samples whose argmax logit (first index on ties) matches the
/// label. Deterministic, unshuffled, chunked evaluation.
double evaluate_accuracy(const Model& model, const Dataset& ds,
                         Index chunk = 256);

/// Head and tail activations for every sample, in dataset order.
struct LatentSet {
  RowMat head;
  RowMat tail;
  std::vector<Index> labels;
};

LatentSet collect_latents(const Model& model, const Dataset& ds,
                          Index chunk = 256);

/// Argmax predictions (first index on ties) for every sample.
std::vector<Index> predict_labels(const Model& model, const Tensor& inputs,
                                  Index chunk = 256);

}  // namespace agrav
