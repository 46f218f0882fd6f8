#pragma once

#include <filesystem>
#include <vector>

#include "agrav/geometry.hpp"
#include "agrav/records.hpp"

namespace agrav {

/// Which per-class scalar feeds the compactness sum: the mean L2
/// sample-to-centroid distance (default) or the L2 norm of the per-dim std.
enum class IccMode { mean_distance, spread_norm };

/// Sum over classes of the per-class compactness scalar.
double compute_icc(const std::vector<ClassMass>& masses,
                   IccMode mode = IccMode::mean_distance);

/// Min and max over unordered centroid pairs, plus the 1/N-scaled pair sum
/// (see IcdTriple). Needs >= 2 classes.
IcdTriple compute_icd(const std::vector<ClassMass>& masses);

/// Which distance series enters the normalized separation score: the
/// per-iteration min pair distance (default) or the 1/N-scaled average.
enum class IcdNormalization { min_distance, avg_distance };

struct NormalizedPoint {
  Index k = 0;
  double icc_star = 0.0;  // lower is better (tighter classes)
  double icd_star = 0.0;  // higher is better (wider separation)
};

/// Per-iteration normalized scores. icc_star = (icc_head * icc_tail) over
/// the product of the series maxima; icd_star likewise from the chosen
/// distance series. Errors when a series is identically zero (nothing to
/// normalize by).
std::vector<NormalizedPoint> normalize_series(
    const std::vector<IterationRecord>& records,
    IcdNormalization norm = IcdNormalization::min_distance);

struct ParetoSelection {
  double theta = 0.0;
  std::vector<Index> eligible;  // ks with acc >= theta, ascending
  std::vector<Index> front;     // non-dominated subset, ascending
  Index chosen_k = 0;
  double chosen_pgd_acc = 0.0;
};

/// Filters records by accuracy >= theta, keeps the Pareto front (maximize
/// icd_star, minimize icc_star), and picks the front member with the best
/// robust score, ties to the smaller k. robust_scores aligns with records
/// by index. Throws NoEligibleError when nothing clears theta.
ParetoSelection pareto_select(
    const std::vector<IterationRecord>& records, double theta,
    const std::vector<double>& robust_scores,
    IcdNormalization norm = IcdNormalization::min_distance);

/// {theta, eligible, front, chosen_k, chosen_pgd_acc} as one JSON object.
void write_selection_json(const std::filesystem::path& file,
                          const ParetoSelection& sel);

/// Plot-ready rows k,icc_star,icd_star.
void write_pareto_csv(const std::filesystem::path& file,
                      const std::vector<NormalizedPoint>& points);

}  // namespace agrav
