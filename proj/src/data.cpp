#include "agrav/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "agrav/errors.hpp"
#include "agrav/rng.hpp"

namespace agrav {

namespace {

std::uint32_t read_be_u32(std::istream& is, const std::string& ctx) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw TruncatedFileError(ctx + ": unexpected end of file");
  }
  return (static_cast<std::uint32_t>(b[0]) << 24) |
         (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) |
         static_cast<std::uint32_t>(b[3]);
}

void write_be_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw IoError("cannot open '" + images_path.string() + "'");
  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw IoError("cannot open '" + labels_path.string() + "'");

  const std::string ictx = "images '" + images_path.string() + "'";
  const std::string lctx = "labels '" + labels_path.string() + "'";

  const std::uint32_t imagic = read_be_u32(imgs, ictx);
  if (imagic != kImagesMagic) {
    throw BadMagicError(ictx + ": magic 0x" + std::to_string(imagic) +
                        " is not an IDX image file");
  }
  const std::uint32_t count = read_be_u32(imgs, ictx);
  const std::uint32_t rows = read_be_u32(imgs, ictx);
  const std::uint32_t cols = read_be_u32(imgs, ictx);

  const std::uint32_t lmagic = read_be_u32(labs, lctx);
  if (lmagic != kLabelsMagic) {
    throw BadMagicError(lctx + ": magic 0x" + std::to_string(lmagic) +
                        " is not an IDX label file");
  }
  const std::uint32_t lcount = read_be_u32(labs, lctx);
  if (lcount != count) {
    throw CountMismatchError("IDX pair: " + std::to_string(count) +
                             " images vs " + std::to_string(lcount) +
                             " labels");
  }

  const std::size_t pixels =
      static_cast<std::size_t>(count) * rows * cols;
  std::vector<unsigned char> raw(pixels);
  if (!imgs.read(reinterpret_cast<char*>(raw.data()),
                 static_cast<std::streamsize>(pixels))) {
    throw TruncatedFileError(ictx + ": expected " + std::to_string(pixels) +
                             " pixel bytes");
  }
  std::vector<unsigned char> raw_labels(count);
  if (!labs.read(reinterpret_cast<char*>(raw_labels.data()),
                 static_cast<std::streamsize>(count))) {
    throw TruncatedFileError(lctx + ": expected " + std::to_string(count) +
                             " label bytes");
  }

  Dataset ds;
  ds.sample_shape = {1, static_cast<Index>(rows), static_cast<Index>(cols)};
  Eigen::ArrayXd data(static_cast<Index>(pixels));
  for (std::size_t i = 0; i < pixels; ++i) {
    data[static_cast<Index>(i)] = static_cast<double>(raw[i]) / 255.0;
  }
  ds.inputs = Tensor::from_array({static_cast<Index>(count), 1,
                                  static_cast<Index>(rows),
                                  static_cast<Index>(cols)},
                                 std::move(data));
  ds.labels.reserve(count);
  Index max_label = 0;
  for (unsigned char l : raw_labels) {
    ds.labels.push_back(static_cast<Index>(l));
    max_label = std::max(max_label, static_cast<Index>(l));
  }
  ds.classes = max_label + 1;
  return ds;
}

void write_idx(const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path, const Dataset& ds) {
  if (ds.sample_shape.size() != 3 || ds.sample_shape[0] != 1) {
    throw ValueError("write_idx: samples must be 1 x rows x cols, got " +
                     shape_to_string(ds.sample_shape));
  }
  std::ofstream imgs(images_path, std::ios::binary | std::ios::trunc);
  if (!imgs) {
    throw IoError("cannot open '" + images_path.string() + "' for writing");
  }
  std::ofstream labs(labels_path, std::ios::binary | std::ios::trunc);
  if (!labs) {
    throw IoError("cannot open '" + labels_path.string() + "' for writing");
  }
  const Index count = ds.size();
  write_be_u32(imgs, kImagesMagic);
  write_be_u32(imgs, static_cast<std::uint32_t>(count));
  write_be_u32(imgs, static_cast<std::uint32_t>(ds.sample_shape[1]));
  write_be_u32(imgs, static_cast<std::uint32_t>(ds.sample_shape[2]));
  std::vector<unsigned char> bytes(
      static_cast<std::size_t>(ds.inputs.size()));
  for (Index i = 0; i < ds.inputs.size(); ++i) {
    bytes[static_cast<std::size_t>(i)] = static_cast<unsigned char>(
        std::lround(std::clamp(ds.inputs.values()[i], 0.0, 1.0) * 255.0));
  }
  imgs.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  if (!imgs) throw IoError("write failed for '" + images_path.string() + "'");

  write_be_u32(labs, kLabelsMagic);
  write_be_u32(labs, static_cast<std::uint32_t>(count));
  std::vector<unsigned char> lbytes(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    lbytes[static_cast<std::size_t>(i)] =
        static_cast<unsigned char>(ds.labels[static_cast<std::size_t>(i)]);
  }
  labs.write(reinterpret_cast<const char*>(lbytes.data()),
             static_cast<std::streamsize>(lbytes.size()));
  if (!labs) throw IoError("write failed for '" + labels_path.string() + "'");
}

Dataset make_blobs(const BlobSpec& spec) {
  if (spec.classes < 1 || spec.per_class < 1 || spec.dim < 1) {
    throw ValueError("make_blobs: classes, per_class, and dim must be "
                     "positive");
  }
  if (static_cast<Index>(spec.means.size()) != spec.classes ||
      static_cast<Index>(spec.stds.size()) != spec.classes) {
    throw ValueError("make_blobs: need one mean and one std per class");
  }
  for (std::size_t c = 0; c < spec.means.size(); ++c) {
    if (spec.means[c].size() != spec.dim) {
      throw ValueError("make_blobs: mean " + std::to_string(c) +
                       " has dim " + std::to_string(spec.means[c].size()) +
                       ", expected " + std::to_string(spec.dim));
    }
    if (!(spec.stds[c] > 0.0)) {
      throw ValueError("make_blobs: std for class " + std::to_string(c) +
                       " must be > 0");
    }
    for (std::size_t o = 0; o < c; ++o) {
      if (spec.means[c] == spec.means[o]) {
        throw ValueError("make_blobs: means for classes " +
                         std::to_string(o) + " and " + std::to_string(c) +
                         " coincide");
      }
    }
  }
  Rng rng(spec.seed, "blobs");
  const Index total = spec.classes * spec.per_class;
  Eigen::ArrayXd data(total * spec.dim);
  Dataset ds;
  ds.classes = spec.classes;
  ds.sample_shape = {spec.dim};
  ds.labels.reserve(static_cast<std::size_t>(total));
  Index at = 0;
  for (Index c = 0; c < spec.classes; ++c) {
    const Eigen::VectorXd& mean = spec.means[static_cast<std::size_t>(c)];
    const double sd = spec.stds[static_cast<std::size_t>(c)];
    for (Index s = 0; s < spec.per_class; ++s) {
      for (Index d = 0; d < spec.dim; ++d) {
        data[at++] = std::clamp(mean[d] + sd * rng.normal(), 0.0, 1.0);
      }
      ds.labels.push_back(c);
    }
  }
  ds.inputs = Tensor::from_array({total, spec.dim}, std::move(data));
  return ds;
}

namespace {

// Largest-remainder quotas: apportions `want` samples across classes in
// proportion to class frequency, hitting the total exactly.
std::vector<Index> quotas(const std::vector<Index>& class_counts, Index want,
                          Index total) {
  const std::size_t n = class_counts.size();
  std::vector<Index> q(n);
  std::vector<std::pair<double, std::size_t>> frac(n);
  Index assigned = 0;
  for (std::size_t c = 0; c < n; ++c) {
    const double exact = static_cast<double>(want) *
                         static_cast<double>(class_counts[c]) /
                         static_cast<double>(total);
    q[c] = static_cast<Index>(exact);
    frac[c] = {exact - static_cast<double>(q[c]), c};
    assigned += q[c];
  }
  std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t i = 0; assigned < want; ++i) {
    ++q[frac[i % n].second];
    ++assigned;
  }
  return q;
}

Dataset take(const Dataset& ds, const std::vector<Index>& indices) {
  Dataset out;
  out.classes = ds.classes;
  out.sample_shape = ds.sample_shape;
  const Index stride = shape_size(ds.sample_shape);
  Eigen::ArrayXd data(static_cast<Index>(indices.size()) * stride);
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    data.segment(static_cast<Index>(i) * stride, stride) =
        ds.inputs.values().segment(indices[i] * stride, stride);
    out.labels.push_back(ds.labels[static_cast<std::size_t>(indices[i])]);
  }
  Shape shape = ds.sample_shape;
  shape.insert(shape.begin(), static_cast<Index>(indices.size()));
  out.inputs = Tensor::from_array(std::move(shape), std::move(data));
  return out;
}

}  // namespace

SplitDataset stratified_split(const Dataset& ds, Index train_count,
                              Index eval_count, std::uint64_t seed) {
  if (train_count < 1 || eval_count < 1) {
    throw ValueError("stratified_split: both splits need at least 1 sample");
  }
  if (train_count + eval_count > ds.size()) {
    throw ValueError("stratified_split: requested " +
                     std::to_string(train_count + eval_count) +
                     " samples from a dataset of " + std::to_string(ds.size()));
  }
  std::vector<std::vector<Index>> by_class(
      static_cast<std::size_t>(ds.classes));
  for (Index i = 0; i < ds.size(); ++i) {
    const Index lab = ds.labels[static_cast<std::size_t>(i)];
    if (lab < 0 || lab >= ds.classes) {
      throw ValueError("stratified_split: label " + std::to_string(lab) +
                       " outside 0.." + std::to_string(ds.classes - 1));
    }
    by_class[static_cast<std::size_t>(lab)].push_back(i);
  }
  std::vector<Index> counts;
  counts.reserve(by_class.size());
  for (const auto& v : by_class) counts.push_back(static_cast<Index>(v.size()));

  const std::vector<Index> train_q = quotas(counts, train_count, ds.size());
  const std::vector<Index> eval_q = quotas(counts, eval_count, ds.size());
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (train_q[c] < 1 || eval_q[c] < 1) {
      throw ValueError("stratified_split: class " + std::to_string(c) +
                       " would be missing from one split; increase counts");
    }
    if (train_q[c] + eval_q[c] > counts[c]) {
      throw ValueError("stratified_split: class " + std::to_string(c) +
                       " has only " + std::to_string(counts[c]) +
                       " samples, needs " +
                       std::to_string(train_q[c] + eval_q[c]));
    }
  }

  Rng rng(seed, "split");
  std::vector<Index> train_idx, eval_idx;
  train_idx.reserve(static_cast<std::size_t>(train_count));
  eval_idx.reserve(static_cast<std::size_t>(eval_count));
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    rng.shuffle(by_class[c].begin(), by_class[c].end());
    for (Index i = 0; i < train_q[c]; ++i) {
      train_idx.push_back(by_class[c][static_cast<std::size_t>(i)]);
    }
    for (Index i = 0; i < eval_q[c]; ++i) {
      eval_idx.push_back(
          by_class[c][static_cast<std::size_t>(train_q[c] + i)]);
    }
  }
  return {take(ds, train_idx), take(ds, eval_idx)};
}

const Dataset& pick_split(const SplitDataset& split, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "eval") return split.eval;
  throw ValueError("unknown split '" + name + "' (expected train or eval)");
}

std::vector<std::vector<Index>> epoch_batches(Index n, Index batch_size,
                                              std::uint64_t seed,
                                              const std::string& stream,
                                              Index epoch) {
  if (batch_size < 1) {
    throw ValueError("epoch_batches: batch_size must be >= 1");
  }
  if (n < 1) throw ValueError("epoch_batches: empty index range");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed, stream, static_cast<std::uint64_t>(epoch));
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<Index>> out;
  for (Index at = 0; at < n; at += batch_size) {
    const Index len = std::min(batch_size, n - at);
    out.emplace_back(order.begin() + at, order.begin() + at + len);
  }
  return out;
}

Tensor gather_inputs(const Dataset& ds, const std::vector<Index>& indices) {
  if (indices.empty()) throw ValueError("gather_inputs: empty batch");
  const Index stride = shape_size(ds.sample_shape);
  Eigen::ArrayXd data(static_cast<Index>(indices.size()) * stride);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= ds.size()) {
      throw ValueError("gather_inputs: index " + std::to_string(indices[i]) +
                       " out of range");
    }
    data.segment(static_cast<Index>(i) * stride, stride) =
        ds.inputs.values().segment(indices[i] * stride, stride);
  }
  Shape shape = ds.sample_shape;
  shape.insert(shape.begin(), static_cast<Index>(indices.size()));
  return Tensor::from_array(std::move(shape), std::move(data));
}

Tensor gather_onehot(const Dataset& ds, const std::vector<Index>& indices) {
  if (indices.empty()) throw ValueError("gather_onehot: empty batch");
  Eigen::ArrayXd data =
      Eigen::ArrayXd::Zero(static_cast<Index>(indices.size()) * ds.classes);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Index lab = ds.labels.at(static_cast<std::size_t>(indices[i]));
    data[static_cast<Index>(i) * ds.classes + lab] = 1.0;
  }
  return Tensor::from_array({static_cast<Index>(indices.size()), ds.classes},
                            std::move(data));
}

std::vector<Index> gather_labels(const Dataset& ds,
                                 const std::vector<Index>& indices) {
  std::vector<Index> out;
  out.reserve(indices.size());
  for (Index i : indices) {
    out.push_back(ds.labels.at(static_cast<std::size_t>(i)));
  }
  return out;
}

}  // namespace agrav
