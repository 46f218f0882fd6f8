#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "agrav/tensor.hpp"

namespace agrav {

/// Read-only row-major view; binds Tensor::matrix_view() and plain matrices
/// without copying.
using LatentView = Eigen::Ref<const RowMat>;

/// Per-class latent statistics. mass is the scalar standing in for the
/// class's gravitational weight; mean_distance feeds the compactness metric.
struct ClassMass {
  Index class_id = 0;
  Eigen::VectorXd centroid;
  Eigen::VectorXd spread;      // per-dimension population std, entries >= 0
  double mass = 0.0;           // L2 norm of spread
  Index cardinality = 0;
  double mean_distance = 0.0;  // mean sample-to-centroid L2 distance
};

/// Per-class repulsion forces and, after relocation, the applied steps.
struct ForceField {
  std::vector<Eigen::VectorXd> forces;
  std::vector<Eigen::VectorXd> steps;
  double g = 0.0;
  double f_max = 0.0;
};

/// Relocated centroids plus the steps that produced them. The step of the
/// class attaining the max force magnitude has L2 norm exactly g.
struct Relocation {
  std::vector<Eigen::VectorXd> centroids;
  std::vector<Eigen::VectorXd> steps;
  double f_max = 0.0;
};

/// Means, population stds, masses, and mean distances per class. Every
/// class 0..n_classes-1 must be present in labels; missing ones raise
/// EmptyClassError naming them all.
std::vector<ClassMass> extract_centroids(LatentView latents,
                                         const std::vector<Index>& labels,
                                         Index n_classes);

/// Symmetric centroid distance matrix with zero diagonal; needs >= 2 classes.
Eigen::MatrixXd pairwise_distances(const std::vector<ClassMass>& masses);

/// Repulsion force on a exerted by b: (m_a*m_b / max(d^2, 1e-12)) * (c_a - c_b).
Eigen::VectorXd anti_gravity_pair(const ClassMass& a, const ClassMass& b);

/// Sums anti_gravity_pair over all ordered pairs: F_i = sum_{j != i} F_{i,j}.
ForceField total_force(const std::vector<ClassMass>& masses);

/// Normalizes forces by the max magnitude and steps every centroid:
/// alpha_i = (g / F_M) * F_i, c_i' = c_i + alpha_i. Errors when every force
/// is zero (no direction to move) or g < 0.
Relocation relocate_centroids(const ForceField& field,
                              const std::vector<ClassMass>& masses, double g);

/// One exported centroid position. layer distinguishes the two tagged
/// capture points ("head" or "tail").
struct TrajectoryPoint {
  Index iteration = 0;
  std::string layer;
  Index class_id = 0;
  Eigen::VectorXd centroid;
};

/// CSV export of centroid motion across iterations. Centroids are projected
/// to their first two principal components per layer (fitted over all of
/// that layer's points); the header records the projection method. Column
/// order: iteration,layer,class_id,c0,c1.
void write_trajectories_csv(const std::filesystem::path& file,
                            const std::vector<TrajectoryPoint>& points);

}  // namespace agrav
