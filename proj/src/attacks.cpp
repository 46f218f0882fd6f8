#include "agrav/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "agrav/errors.hpp"
#include "agrav/losses.hpp"
#include "agrav/rng.hpp"
#include "agrav/train.hpp"

namespace agrav {

std::string family_name(AttackFamily f) {
  switch (f) {
    case AttackFamily::fgsm: return "fgsm";
    case AttackFamily::bim: return "bim";
    case AttackFamily::mim: return "mim";
    case AttackFamily::pgd: return "pgd";
  }
  throw ValueError("unknown attack family");
}

AttackFamily family_from_name(const std::string& s) {
  if (s == "fgsm") return AttackFamily::fgsm;
  if (s == "bim") return AttackFamily::bim;
  if (s == "mim") return AttackFamily::mim;
  if (s == "pgd") return AttackFamily::pgd;
  throw ValueError("unknown attack family '" + s + "'");
}

void AttackSpec::validate() const {
  if (epsilon < 0.0) {
    throw ValueError("attack '" + family_name(family) +
                     "': epsilon must be >= 0, got " + std::to_string(epsilon));
  }
  if (steps < 1) {
    throw ValueError("attack '" + family_name(family) +
                     "': steps must be >= 1");
  }
  if (family != AttackFamily::fgsm && step_size <= 0.0 && epsilon > 0.0) {
    throw ValueError("attack '" + family_name(family) +
                     "': step_size must be > 0");
  }
  if (decay < 0.0) {
    throw ValueError("attack '" + family_name(family) +
                     "': decay must be >= 0");
  }
}

AttackSpec default_attack(AttackFamily family, double epsilon,
                          std::uint64_t seed) {
  AttackSpec s;
  s.family = family;
  s.epsilon = epsilon;
  s.seed = seed;
  if (family == AttackFamily::fgsm) {
    s.step_size = epsilon;
    s.steps = 1;
  } else {
    s.step_size = epsilon / 4.0;
    s.steps = 10;
    s.random_start = family == AttackFamily::pgd;
  }
  return s;
}

namespace {

// One projected-sign-ascent run shared by every family. momentum < 0 means
// plain sign(grad); otherwise the mim accumulator with that decay.
Tensor linf_ascent(const Model& model, const Tensor& x, const Tensor& onehot,
                   double epsilon, double step, Index steps, double momentum,
                   bool random_start, std::uint64_t seed,
                   Index sample_offset) {
  const Index batch = x.dim(0);
  const Index stride = x.size() / batch;
  const Eigen::ArrayXd& x0 = x.values();

  Eigen::ArrayXd cur = x0;
  if (random_start && epsilon > 0.0) {
    Rng rng(seed, "attack-start", static_cast<std::uint64_t>(sample_offset));
    for (Index i = 0; i < cur.size(); ++i) {
      cur[i] += rng.uniform(-epsilon, epsilon);
    }
    cur = cur.min(x0 + epsilon).max(x0 - epsilon).min(1.0).max(0.0);
  }

  Eigen::ArrayXd mom;
  if (momentum >= 0.0) mom = Eigen::ArrayXd::Zero(x.size());

  Tape tape;
  for (Index t = 0; t < steps; ++t) {
    Tensor xt = Tensor::from_array(x.shape(), cur, true);
    Tensor logits = model.forward(tape, xt);
    Tensor loss = cross_entropy_loss(tape, logits, onehot);
    tape.backward(loss, {xt});
    tape.clear();
    const Eigen::ArrayXd& g = xt.grad();

    Eigen::ArrayXd dir(x.size());
    if (momentum >= 0.0) {
      for (Index b = 0; b < batch; ++b) {
        const double l1 = g.segment(b * stride, stride).abs().sum();
        if (l1 > 0.0) {
          mom.segment(b * stride, stride) =
              momentum * mom.segment(b * stride, stride) +
              g.segment(b * stride, stride) / l1;
        } else {
          mom.segment(b * stride, stride) *= momentum;
        }
      }
      dir = mom.sign();
    } else {
      dir = g.sign();
    }
    cur += step * dir;
    cur = cur.min(x0 + epsilon).max(x0 - epsilon).min(1.0).max(0.0);
  }
  return Tensor::from_array(x.shape(), std::move(cur));
}

void check_attack_inputs(const Model& model, const Tensor& x,
                         const Tensor& onehot) {
  if (x.rank() != model.spec().input_shape.size() + 1) {
    throw ShapeError("attack input " + shape_to_string(x.shape()) +
                     " does not match model '" + model.spec().name + "'");
  }
  if (onehot.rank() != 2 || onehot.dim(0) != x.dim(0) ||
      onehot.dim(1) != model.spec().classes) {
    throw ShapeError("attack labels " + shape_to_string(onehot.shape()) +
                     " do not match batch " + std::to_string(x.dim(0)) +
                     " x " + std::to_string(model.spec().classes));
  }
}

}  // namespace

Tensor fgsm(const Model& model, const Tensor& x, const Tensor& onehot,
            double epsilon) {
  check_attack_inputs(model, x, onehot);
  if (epsilon < 0.0) throw ValueError("fgsm: epsilon must be >= 0");
  return linf_ascent(model, x, onehot, epsilon, epsilon, 1, -1.0, false, 0, 0);
}

Tensor bim(const Model& model, const Tensor& x, const Tensor& onehot,
           const AttackSpec& spec) {
  check_attack_inputs(model, x, onehot);
  spec.validate();
  return linf_ascent(model, x, onehot, spec.epsilon, spec.step_size,
                     spec.steps, -1.0, false, 0, 0);
}

Tensor mim(const Model& model, const Tensor& x, const Tensor& onehot,
           const AttackSpec& spec) {
  check_attack_inputs(model, x, onehot);
  spec.validate();
  return linf_ascent(model, x, onehot, spec.epsilon, spec.step_size,
                     spec.steps, spec.decay, false, 0, 0);
}

Tensor pgd(const Model& model, const Tensor& x, const Tensor& onehot,
           const AttackSpec& spec, Index sample_offset) {
  check_attack_inputs(model, x, onehot);
  spec.validate();
  return linf_ascent(model, x, onehot, spec.epsilon, spec.step_size,
                     spec.steps, -1.0, spec.random_start, spec.seed,
                     sample_offset);
}

Tensor craft(const Model& model, const Tensor& x, const Tensor& onehot,
             const AttackSpec& spec, Index sample_offset) {
  switch (spec.family) {
    case AttackFamily::fgsm: {
      spec.validate();
      check_attack_inputs(model, x, onehot);
      return linf_ascent(model, x, onehot, spec.epsilon, spec.epsilon, 1,
                         -1.0, false, 0, 0);
    }
    case AttackFamily::bim: return bim(model, x, onehot, spec);
    case AttackFamily::mim: return mim(model, x, onehot, spec);
    case AttackFamily::pgd: return pgd(model, x, onehot, spec, sample_offset);
  }
  throw ValueError("unknown attack family");
}

RobustnessReport run_attack_eval(const Model& crafter, const Model& target,
                                 const Dataset& ds, const AttackSpec& spec,
                                 Index chunk) {
  spec.validate();
  if (chunk < 1) throw ValueError("run_attack_eval: chunk must be >= 1");
  RobustnessReport rep;
  rep.spec = spec;

  const std::vector<Index> clean_preds = predict_labels(target, ds.inputs);
  Index clean_correct = 0;
  for (Index i = 0; i < ds.size(); ++i) {
    if (clean_preds[static_cast<std::size_t>(i)] ==
        ds.labels[static_cast<std::size_t>(i)]) {
      ++clean_correct;
    }
  }
  rep.clean_acc =
      static_cast<double>(clean_correct) / static_cast<double>(ds.size());

  Index robust_correct = 0, flipped = 0;
  double linf_sum = 0.0, sq_sum = 0.0;
  const Index stride = shape_size(ds.sample_shape);
  for (Index at = 0; at < ds.size(); at += chunk) {
    const Index len = std::min(chunk, ds.size() - at);
    std::vector<Index> idx(static_cast<std::size_t>(len));
    for (Index i = 0; i < len; ++i) idx[static_cast<std::size_t>(i)] = at + i;
    Tensor x = gather_inputs(ds, idx);
    Tensor y = gather_onehot(ds, idx);
    Tensor adv = craft(crafter, x, y, spec, at);
    const std::vector<Index> adv_preds = predict_labels(target, adv);
    const Eigen::ArrayXd diff = adv.values() - x.values();
    sq_sum += diff.square().sum();
    for (Index i = 0; i < len; ++i) {
      linf_sum += diff.segment(i * stride, stride).abs().maxCoeff();
      const Index truth = ds.labels[static_cast<std::size_t>(at + i)];
      const bool clean_ok =
          clean_preds[static_cast<std::size_t>(at + i)] == truth;
      const bool adv_ok = adv_preds[static_cast<std::size_t>(i)] == truth;
      if (adv_ok) ++robust_correct;
      if (clean_ok && !adv_ok) ++flipped;
    }
  }
  rep.robust_acc =
      static_cast<double>(robust_correct) / static_cast<double>(ds.size());
  rep.fooling_rate =
      clean_correct == 0
          ? 0.0
          : static_cast<double>(flipped) / static_cast<double>(clean_correct);
  rep.mean_linf = linf_sum / static_cast<double>(ds.size());
  const double mse =
      sq_sum / static_cast<double>(ds.size() * stride);
  rep.psnr = mse == 0.0 ? std::numeric_limits<double>::infinity()
                        : 10.0 * std::log10(1.0 / mse);
  return rep;
}

std::vector<RobustnessReport> evaluate_robustness(
    const Model& model, const Dataset& ds,
    const std::vector<AttackSpec>& specs) {
  std::vector<RobustnessReport> out;
  out.reserve(specs.size());
  for (const AttackSpec& s : specs) {
    out.push_back(run_attack_eval(model, model, ds, s));
  }
  return out;
}

std::vector<RobustnessReport> transfer_attack_eval(
    const Model& substitute, const Model& target, const Dataset& ds,
    const std::vector<AttackSpec>& specs) {
  if (substitute.spec().input_shape != target.spec().input_shape ||
      substitute.spec().classes != target.spec().classes) {
    throw ShapeError("transfer_attack_eval: substitute '" +
                     substitute.spec().name + "' and target '" +
                     target.spec().name +
                     "' disagree on input shape or class count");
  }
  std::vector<RobustnessReport> out;
  out.reserve(specs.size());
  for (const AttackSpec& s : specs) {
    out.push_back(run_attack_eval(substitute, target, ds, s));
  }
  return out;
}

void write_robustness_csv(const std::filesystem::path& file,
                          const std::vector<RobustnessReport>& reports,
                          bool with_psnr) {
  std::ofstream os(file, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + file.string() + "' for writing");
  os << "family,epsilon,steps,clean_acc,robust_acc,fooling_rate,mean_linf";
  if (with_psnr) os << ",psnr";
  os << '\n';
  os.precision(17);
  for (const RobustnessReport& r : reports) {
    os << family_name(r.spec.family) << ',' << r.spec.epsilon << ','
       << r.spec.steps << ',' << r.clean_acc << ',' << r.robust_acc << ','
       << r.fooling_rate << ',' << r.mean_linf;
    if (with_psnr) os << ',' << r.psnr;
    os << '\n';
  }
  if (!os) throw IoError("write failed for '" + file.string() + "'");
}

}  // namespace agrav
