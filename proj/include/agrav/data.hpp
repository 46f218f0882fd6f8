#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "agrav/tensor.hpp"

namespace agrav {

/// Immutable labelled sample collection. inputs holds all samples stacked
/// along dim 0, values in [0,1]; labels are 0..classes-1.
struct Dataset {
  Tensor inputs;
  std::vector<Index> labels;
  Index classes = 0;
  Shape sample_shape;

  Index size() const { return static_cast<Index>(labels.size()); }
};

struct SplitDataset {
  Dataset train;
  Dataset eval;
};

/// Synthetic Gaussian class clusters in [0,1]^dim.
struct BlobSpec {
  Index classes = 0;
  Index per_class = 0;
  Index dim = 0;
  std::vector<Eigen::VectorXd> means;  // one per class, pairwise distinct
  std::vector<double> stds;            // isotropic, one per class, > 0
  std::uint64_t seed = 0;
};

/// Reads an MNIST-format IDX image/label pair. Pixels scale by 1/255 into
/// [0,1]; sample shape becomes {1,rows,cols}. Distinct errors for bad magic,
/// truncation, and image/label count mismatch.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

/// Inverse of load_idx: quantizes inputs to bytes (round(v*255)) and writes
/// the standard big-endian IDX pair. Samples must be {1,rows,cols}.
void write_idx(const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path, const Dataset& ds);

/// Samples spec.per_class points per class from N(mean_c, std_c^2 I),
/// clamped to [0,1] per dimension. Deterministic under spec.seed.
Dataset make_blobs(const BlobSpec& spec);

/// Class-proportional subset selection: picks train_count + eval_count
/// samples (largest-remainder quotas per class), shuffled with the "split"
/// stream of seed. Every class lands in both splits or the call errors.
SplitDataset stratified_split(const Dataset& ds, Index train_count,
                              Index eval_count, std::uint64_t seed);

/// Resolves "train" / "eval"; anything else is an error.
const Dataset& pick_split(const SplitDataset& split, const std::string& name);

/// Shuffled index batches for one epoch. The shuffle order derives from
/// (seed, stream, epoch), so distinct epochs reorder differently and two
/// loops with different stream tags never share an order. The final short
/// batch is kept.
std::vector<std::vector<Index>> epoch_batches(Index n, Index batch_size,
                                              std::uint64_t seed,
                                              const std::string& stream,
                                              Index epoch);

/// Stacks the indexed samples into a [B, sample_shape...] tensor.
Tensor gather_inputs(const Dataset& ds, const std::vector<Index>& indices);

/// One-hot label rows, [B, classes].
Tensor gather_onehot(const Dataset& ds, const std::vector<Index>& indices);

std::vector<Index> gather_labels(const Dataset& ds,
                                 const std::vector<Index>& indices);

}  // namespace agrav
