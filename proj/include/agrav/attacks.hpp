#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "agrav/data.hpp"
#include "agrav/model.hpp"

namespace agrav {

enum class AttackFamily { fgsm, bim, mim, pgd };

std::string family_name(AttackFamily f);
AttackFamily family_from_name(const std::string& s);

/// L-infinity attack parameters. epsilon and step_size are in input units
/// (inputs live in [0,1]). decay applies to mim only, random_start to pgd.
struct AttackSpec {
  AttackFamily family = AttackFamily::fgsm;
  double epsilon = 0.0;
  double step_size = 0.0;
  Index steps = 1;
  double decay = 1.0;
  bool random_start = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Conventional defaults per family: iterative attacks get step_size =
/// epsilon/4 and 10 steps; pgd starts from a random point in the ball.
AttackSpec default_attack(AttackFamily family, double epsilon,
                          std::uint64_t seed = 0);

/// Single-step sign attack: clamp(x + epsilon * sign(grad_x CE), 0, 1).
Tensor fgsm(const Model& model, const Tensor& x, const Tensor& onehot,
            double epsilon);

/// Iterative sign attack with projection into both the epsilon ball around
/// the original x and the [0,1] box, every step.
Tensor bim(const Model& model, const Tensor& x, const Tensor& onehot,
           const AttackSpec& spec);

/// bim with a momentum accumulator: g <- decay*g + grad/||grad||_1 (L1 norm
/// taken per sample; zero-gradient samples contribute nothing).
Tensor mim(const Model& model, const Tensor& x, const Tensor& onehot,
           const AttackSpec& spec);

/// bim with an optional uniform random start inside the epsilon ball. The
/// start noise derives from (spec.seed, "attack-start", sample_offset), so
/// chunked and unchunked generation agree bit for bit.
Tensor pgd(const Model& model, const Tensor& x, const Tensor& onehot,
           const AttackSpec& spec, Index sample_offset = 0);

/// Dispatches on spec.family.
Tensor craft(const Model& model, const Tensor& x, const Tensor& onehot,
             const AttackSpec& spec, Index sample_offset = 0);

struct RobustnessReport {
  AttackSpec spec;
  double clean_acc = 0.0;
  double robust_acc = 0.0;
  /// Fraction of correctly-classified clean samples that the attack flips.
  double fooling_rate = 0.0;
  double mean_linf = 0.0;
  /// Peak signal-to-noise ratio of adversarial vs clean inputs; +inf when
  /// the attack leaves inputs untouched.
  double psnr = 0.0;
};

/// Crafts adversarials against `crafter`, scores them on `target`. The two
/// coincide for white-box evaluation.
RobustnessReport run_attack_eval(const Model& crafter, const Model& target,
                                 const Dataset& ds, const AttackSpec& spec,
                                 Index chunk = 128);

/// White-box: model attacks itself.
std::vector<RobustnessReport> evaluate_robustness(
    const Model& model, const Dataset& ds, const std::vector<AttackSpec>& specs);

/// Black-box transfer: adversarials from the substitute, accuracy on the
/// target. Input shapes and class counts must agree.
std::vector<RobustnessReport> transfer_attack_eval(
    const Model& substitute, const Model& target, const Dataset& ds,
    const std::vector<AttackSpec>& specs);

/// CSV rows: family,epsilon,steps,clean_acc,robust_acc,fooling_rate,
/// mean_linf and, when with_psnr, a trailing psnr column.
void write_robustness_csv(const std::filesystem::path& file,
                          const std::vector<RobustnessReport>& reports,
                          bool with_psnr = false);

}  // namespace agrav
