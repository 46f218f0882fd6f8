#include "agrav/gravity.hpp"

#include <algorithm>

#include "agrav/adam.hpp"
#include "agrav/errors.hpp"
#include "agrav/rng.hpp"
#include "agrav/train.hpp"

namespace agrav {

std::string adv_mode_name(AdvMode m) {
  switch (m) {
    case AdvMode::none: return "none";
    case AdvMode::fgsm: return "fgsm";
    case AdvMode::pgd: return "pgd";
  }
  throw ValueError("unknown adversarial mode");
}

AdvMode adv_mode_from_name(const std::string& s) {
  if (s == "none") return AdvMode::none;
  if (s == "fgsm") return AdvMode::fgsm;
  if (s == "pgd") return AdvMode::pgd;
  throw ValueError("unknown adversarial mode '" + s + "'");
}

void GravityConfig::validate() const {
  if (iterations < 1) {
    throw ValueError("gravity config: iterations must be >= 1");
  }
  if (epochs_per_iteration < 1) {
    throw ValueError("gravity config: epochs_per_iteration must be >= 1");
  }
  if (batch_size < 1) {
    throw ValueError("gravity config: batch_size must be >= 1");
  }
  if (learning_rate <= 0.0) {
    throw ValueError("gravity config: learning_rate must be > 0");
  }
  // g == 0 is allowed: it degenerates to distillation toward the teacher's
  // own centroids, which tests rely on
  if (g_head < 0.0 || g_tail < 0.0) {
    throw ValueError("gravity config: g_head and g_tail must be >= 0");
  }
  if (!(accuracy_threshold > 0.0 && accuracy_threshold < 1.0)) {
    throw ValueError("gravity config: accuracy_threshold must lie in (0,1)");
  }
  if (fixed_gamma.has_value() &&
      !(*fixed_gamma >= 0.0 && *fixed_gamma <= 1.0)) {
    throw ValueError("gravity config: fixed_gamma must lie in [0,1]");
  }
  if (selection_samples < 1) {
    throw ValueError("gravity config: selection_samples must be >= 1");
  }
  if (adv_mode != AdvMode::none) adv_attack.validate();
  if (selection_attack.has_value()) selection_attack->validate();
}

std::pair<std::vector<ClassMass>, std::vector<ClassMass>> extract_model_masses(
    const Model& model, const Dataset& ds, Index chunk) {
  const LatentSet lat = collect_latents(model, ds, chunk);
  return {extract_centroids(lat.head, lat.labels, ds.classes),
          extract_centroids(lat.tail, lat.labels, ds.classes)};
}

Batch adversarial_augment(const Model& student, const Batch& batch,
                          const AttackSpec& spec, AdvMode mode) {
  if (mode == AdvMode::none) {
    throw ValueError("adversarial_augment: mode is none");
  }
  AttackSpec craft_spec = spec;
  craft_spec.family =
      mode == AdvMode::fgsm ? AttackFamily::fgsm : AttackFamily::pgd;
  Tensor adv = craft(student, batch.x, batch.onehot, craft_spec);

  const Index b = batch.x.dim(0);
  Shape shape = batch.x.shape();
  shape[0] = 2 * b;
  Eigen::ArrayXd x2(batch.x.size() * 2);
  x2.head(batch.x.size()) = batch.x.values();
  x2.tail(batch.x.size()) = adv.values();

  Shape yshape = batch.onehot.shape();
  yshape[0] = 2 * b;
  Eigen::ArrayXd y2(batch.onehot.size() * 2);
  y2.head(batch.onehot.size()) = batch.onehot.values();
  y2.tail(batch.onehot.size()) = batch.onehot.values();

  Batch out;
  out.x = Tensor::from_array(std::move(shape), std::move(x2));
  out.onehot = Tensor::from_array(std::move(yshape), std::move(y2));
  out.labels = batch.labels;
  out.labels.insert(out.labels.end(), batch.labels.begin(),
                    batch.labels.end());
  return out;
}

namespace {

// Class-balanced eval subset used to score checkpoints for selection.
Dataset selection_subset(const Dataset& eval, Index want, std::uint64_t seed) {
  if (want >= eval.size()) return eval;
  std::vector<std::vector<Index>> by_class(
      static_cast<std::size_t>(eval.classes));
  for (Index i = 0; i < eval.size(); ++i) {
    by_class[static_cast<std::size_t>(eval.labels[static_cast<std::size_t>(i)])]
        .push_back(i);
  }
  Rng rng(seed, "selection-attack");
  std::vector<Index> chosen;
  // round-robin over shuffled class pools until the quota is met
  for (auto& pool : by_class) rng.shuffle(pool.begin(), pool.end());
  std::size_t depth = 0;
  while (static_cast<Index>(chosen.size()) < want) {
    bool any = false;
    for (auto& pool : by_class) {
      if (depth < pool.size() && static_cast<Index>(chosen.size()) < want) {
        chosen.push_back(pool[depth]);
        any = true;
      }
    }
    if (!any) break;
    ++depth;
  }
  std::sort(chosen.begin(), chosen.end());
  Dataset out;
  out.classes = eval.classes;
  out.sample_shape = eval.sample_shape;
  out.inputs = gather_inputs(eval, chosen);
  out.labels = gather_labels(eval, chosen);
  return out;
}

IterationRecord measure(const Model& model, const GravityConfig& config,
                        const SplitDataset& data,
                        std::pair<std::vector<ClassMass>,
                                  std::vector<ClassMass>>* masses_out) {
  auto masses = extract_model_masses(model, data.train);
  IterationRecord rec;
  rec.acc = evaluate_accuracy(model, data.eval);
  rec.icc_head = compute_icc(masses.first, config.icc_mode);
  rec.icc_tail = compute_icc(masses.second, config.icc_mode);
  rec.icd_head = compute_icd(masses.first);
  rec.icd_tail = compute_icd(masses.second);
  if (masses_out != nullptr) *masses_out = std::move(masses);
  return rec;
}

}  // namespace

IterationRecord baseline_record(const Model& model,
                                const GravityConfig& config,
                                const SplitDataset& data) {
  config.validate();
  IterationRecord rec = measure(model, config, data, nullptr);
  rec.k = 0;
  return rec;
}

IterationRecord gravity_iteration(GravityState& state,
                                  const GravityConfig& config,
                                  const SplitDataset& data) {
  config.validate();
  if (state.teacher.spec().classes != data.train.classes) {
    throw ValueError("gravity_iteration: teacher expects " +
                     std::to_string(state.teacher.spec().classes) +
                     " classes, dataset has " +
                     std::to_string(data.train.classes));
  }

  // (1) teacher statistics at both tagged layers
  if (!state.teacher_masses.has_value()) {
    state.teacher_masses = extract_model_masses(state.teacher, data.train);
  }
  const auto& [head_masses, tail_masses] = *state.teacher_masses;

  // (2)+(3) repulsion forces, then relocation per layer
  const Relocation head_rel =
      relocate_centroids(total_force(head_masses), head_masses, config.g_head);
  const Relocation tail_rel =
      relocate_centroids(total_force(tail_masses), tail_masses, config.g_tail);
  state.last_targets.head = head_rel.centroids;
  state.last_targets.tail = tail_rel.centroids;

  const double gamma =
      config.fixed_gamma.value_or(state.teacher_accuracy);

  // (4) student warm-starts from the teacher unless configured cold
  Model student =
      config.cold_start
          ? Model::build(state.teacher.spec(),
                         Rng::derive(config.seed, "cold-init",
                                     static_cast<std::uint64_t>(state.k + 1)))
          : state.teacher.clone();
  AdamOptimizer opt(student.parameters(), config.learning_rate);
  Tape tape;
  for (Index e = 0; e < config.epochs_per_iteration; ++e) {
    const Index epoch_index = state.k * config.epochs_per_iteration + e;
    const auto batches = epoch_batches(data.train.size(), config.batch_size,
                                       config.seed, "shuffle/gravity",
                                       epoch_index);
    for (const std::vector<Index>& idx : batches) {
      Batch batch{gather_inputs(data.train, idx),
                  gather_onehot(data.train, idx),
                  gather_labels(data.train, idx)};
      if (config.adv_mode != AdvMode::none) {
        batch = adversarial_augment(student, batch, config.adv_attack,
                                    config.adv_mode);
      }
      student.zero_all_grads();
      Latents lat = student.forward_with_latents(tape, batch.x);
      Tensor loss =
          gravity_loss(tape, lat.logits, batch.onehot, lat.tail, lat.head,
                       batch.labels, state.last_targets, gamma);
      tape.backward(loss);
      tape.clear();
      opt.step();
    }
  }

  std::pair<std::vector<ClassMass>, std::vector<ClassMass>> student_masses;
  IterationRecord rec = measure(student, config, data, &student_masses);
  state.teacher = std::move(student);
  state.teacher_masses = std::move(student_masses);
  state.teacher_accuracy = rec.acc;
  state.gamma_history.push_back(gamma);
  ++state.k;
  rec.k = state.k;
  rec.gamma = gamma;
  return rec;
}

GravityRunResult run_gravity(Model baseline, const GravityConfig& config,
                             const SplitDataset& data,
                             const CheckpointSink& sink) {
  config.validate();
  std::vector<IterationRecord> records;
  std::vector<TrajectoryPoint> trajectory;

  Dataset sel_data;
  if (config.selection_attack.has_value()) {
    sel_data =
        selection_subset(data.eval, config.selection_samples, config.seed);
  }

  GravityState state(std::move(baseline));

  // reuses the masses gravity_iteration caches on the state, so each model
  // runs the latent pass exactly once
  const auto finish_record = [&](IterationRecord& rec) {
    if (sink) rec.checkpoint_path = sink(rec.k, state.teacher);
    if (config.selection_attack.has_value()) {
      rec.pgd_acc = run_attack_eval(state.teacher, state.teacher, sel_data,
                                    *config.selection_attack)
                        .robust_acc;
    }
    for (const ClassMass& cm : state.teacher_masses->first) {
      trajectory.push_back({rec.k, "head", cm.class_id, cm.centroid});
    }
    for (const ClassMass& cm : state.teacher_masses->second) {
      trajectory.push_back({rec.k, "tail", cm.class_id, cm.centroid});
    }
  };

  std::pair<std::vector<ClassMass>, std::vector<ClassMass>> masses0;
  IterationRecord rec0 = measure(state.teacher, config, data, &masses0);
  rec0.k = 0;
  state.teacher_masses = std::move(masses0);
  state.teacher_accuracy = rec0.acc;
  finish_record(rec0);
  records.push_back(std::move(rec0));

  for (Index k = 0; k < config.iterations; ++k) {
    IterationRecord rec = gravity_iteration(state, config, data);
    finish_record(rec);
    records.push_back(std::move(rec));
  }
  return {std::move(state.teacher), std::move(records),
          std::move(trajectory)};
}

}  // namespace agrav
