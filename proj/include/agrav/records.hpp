#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "agrav/tensor.hpp"

namespace agrav {

/// Centroid-distance summary. avg is the 1/N-scaled sum over unordered
/// pairs (N = class count), so it is not bounded by min and max; with two
/// classes at distance d it equals d/2.
struct IcdTriple {
  double min = 0.0;
  double avg = 0.0;
  double max = 0.0;
};

/// One row of a training run's history. gamma is absent at k=0 (the
/// baseline has no teacher); pgd_acc is filled when the run scores each
/// checkpoint for selection.
struct IterationRecord {
  Index k = 0;
  double acc = 0.0;
  double icc_head = 0.0;
  double icc_tail = 0.0;
  IcdTriple icd_head;
  IcdTriple icd_tail;
  std::optional<double> gamma;
  std::string checkpoint_path;
  std::optional<double> pgd_acc;
};

/// One JSON object per line, keys: k, acc, icc_head, icc_tail,
/// icd_head{min,avg,max}, icd_tail{...}, gamma (null at k=0),
/// checkpoint_path, pgd_acc (optional).
void write_records_jsonl(const std::filesystem::path& file,
                         const std::vector<IterationRecord>& records);

std::vector<IterationRecord> read_records_jsonl(
    const std::filesystem::path& file);

}  // namespace agrav
