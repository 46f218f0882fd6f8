#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "agrav/attacks.hpp"
#include "agrav/data.hpp"
#include "agrav/geometry.hpp"
#include "agrav/losses.hpp"
#include "agrav/metrics.hpp"
#include "agrav/model.hpp"
#include "agrav/records.hpp"

namespace agrav {

/// Adversarial augmentation applied inside student training.
enum class AdvMode { none, fgsm, pgd };

std::string adv_mode_name(AdvMode m);
AdvMode adv_mode_from_name(const std::string& s);

struct GravityConfig {
  double g_head = 100.0;
  double g_tail = 200.0;
  Index iterations = 1;
  Index epochs_per_iteration = 2;
  Index batch_size = 64;
  double learning_rate = 1e-4;
  double accuracy_threshold = 0.5;  // theta, consumed by selection
  std::uint64_t seed = 0;
  AdvMode adv_mode = AdvMode::none;
  AttackSpec adv_attack;  // used when adv_mode != none
  /// Start each student from fresh random weights instead of the teacher's.
  bool cold_start = false;
  /// Overrides the teacher-accuracy schedule when set (testing hook).
  std::optional<double> fixed_gamma;
  /// When set, every persisted checkpoint is scored with this attack on a
  /// stratified eval subset and the robust accuracy lands in the record.
  std::optional<AttackSpec> selection_attack;
  Index selection_samples = 512;
  IccMode icc_mode = IccMode::mean_distance;

  void validate() const;
};

/// Mutable loop state. teacher_masses caches the current teacher's per-layer
/// train-set statistics so consecutive iterations extract latents once.
struct GravityState {
  explicit GravityState(Model t) : teacher(std::move(t)) {}

  Model teacher;
  Index k = 0;
  double teacher_accuracy = 0.0;
  std::vector<double> gamma_history;
  RelocatedTargets last_targets;
  std::optional<std::pair<std::vector<ClassMass>, std::vector<ClassMass>>>
      teacher_masses;  // (head, tail)
};

struct Batch {
  Tensor x;
  Tensor onehot;
  std::vector<Index> labels;
};

/// Per-class head and tail statistics of the model over the dataset.
std::pair<std::vector<ClassMass>, std::vector<ClassMass>> extract_model_masses(
    const Model& model, const Dataset& ds, Index chunk = 256);

/// Crafts adversarial counterparts against the (frozen) student and appends
/// them, labels preserved: the result is twice the input batch.
Batch adversarial_augment(const Model& student, const Batch& batch,
                          const AttackSpec& spec, AdvMode mode);

/// One teacher-to-student step: relocate the teacher's centroids, train a
/// student against the blended objective with gamma = the teacher's eval
/// accuracy (or fixed_gamma), promote the student to teacher, and report
/// the student's metrics. Record k equals state.k after the call.
IterationRecord gravity_iteration(GravityState& state,
                                  const GravityConfig& config,
                                  const SplitDataset& data);

/// Metrics row for an already-trained model, used for the k=0 baseline row
/// (gamma stays empty).
IterationRecord baseline_record(const Model& model, const GravityConfig& config,
                                const SplitDataset& data);

/// Persists one checkpoint, returning the path stored in the record.
using CheckpointSink =
    std::function<std::string(Index k, const Model& model)>;

struct GravityRunResult {
  Model final_teacher;
  std::vector<IterationRecord> records;     // index == k, 0..iterations
  std::vector<TrajectoryPoint> trajectory;  // per-iteration measured centroids
};

/// Full loop: emits the baseline record at k=0, then config.iterations
/// gravity iterations. sink may be empty (no checkpoints persisted).
GravityRunResult run_gravity(Model baseline, const GravityConfig& config,
                             const SplitDataset& data,
                             const CheckpointSink& sink = {});

}  // namespace agrav
