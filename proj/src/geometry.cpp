#include "agrav/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <Eigen/Eigenvalues>

#include "agrav/errors.hpp"

namespace agrav {

namespace {
constexpr double kDistanceFloorSquared = 1e-12;  // d_floor = 1e-6
}

std::vector<ClassMass> extract_centroids(LatentView latents,
                                         const std::vector<Index>& labels,
                                         Index n_classes) {
  if (n_classes < 1) {
    throw ValueError("extract_centroids: n_classes must be positive");
  }
  if (static_cast<Index>(labels.size()) != latents.rows()) {
    throw ShapeError("extract_centroids: " + std::to_string(latents.rows()) +
                     " latent rows vs " + std::to_string(labels.size()) +
                     " labels");
  }
  const Index dim = latents.cols();
  std::vector<Index> counts(static_cast<std::size_t>(n_classes), 0);
  for (Index lab : labels) {
    if (lab < 0 || lab >= n_classes) {
      throw ValueError("extract_centroids: label " + std::to_string(lab) +
                       " outside 0.." + std::to_string(n_classes - 1));
    }
    ++counts[static_cast<std::size_t>(lab)];
  }
  std::string missing;
  for (Index c = 0; c < n_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      if (!missing.empty()) missing += ", ";
      missing += std::to_string(c);
    }
  }
  if (!missing.empty()) {
    throw EmptyClassError("extract_centroids: no samples for classes " +
                          missing);
  }

  std::vector<ClassMass> out(static_cast<std::size_t>(n_classes));
  for (Index c = 0; c < n_classes; ++c) {
    ClassMass& m = out[static_cast<std::size_t>(c)];
    m.class_id = c;
    m.cardinality = counts[static_cast<std::size_t>(c)];
    m.centroid = Eigen::VectorXd::Zero(dim);
    m.spread = Eigen::VectorXd::Zero(dim);
  }
  for (Index r = 0; r < latents.rows(); ++r) {
    out[static_cast<std::size_t>(labels[static_cast<std::size_t>(r)])]
        .centroid += latents.row(r).transpose();
  }
  for (ClassMass& m : out) m.centroid /= static_cast<double>(m.cardinality);
  for (Index r = 0; r < latents.rows(); ++r) {
    ClassMass& m =
        out[static_cast<std::size_t>(labels[static_cast<std::size_t>(r)])];
    const Eigen::VectorXd diff = latents.row(r).transpose() - m.centroid;
    m.spread += diff.array().square().matrix();
    m.mean_distance += diff.norm();
  }
  for (ClassMass& m : out) {
    const double inv = 1.0 / static_cast<double>(m.cardinality);
    m.spread = (m.spread * inv).array().sqrt().matrix();
    m.mass = m.spread.norm();
    m.mean_distance *= inv;
  }
  return out;
}

Eigen::MatrixXd pairwise_distances(const std::vector<ClassMass>& masses) {
  const Index n = static_cast<Index>(masses.size());
  if (n < 2) {
    throw ValueError("pairwise_distances: needs at least 2 classes, got " +
                     std::to_string(n));
  }
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double dist = (masses[static_cast<std::size_t>(i)].centroid -
                           masses[static_cast<std::size_t>(j)].centroid)
                              .norm();
      d(i, j) = dist;
      d(j, i) = dist;
    }
  }
  return d;
}

Eigen::VectorXd anti_gravity_pair(const ClassMass& a, const ClassMass& b) {
  const Eigen::VectorXd delta = a.centroid - b.centroid;
  const double d2 = std::max(delta.squaredNorm(), kDistanceFloorSquared);
  return (a.mass * b.mass / d2) * delta;
}

ForceField total_force(const std::vector<ClassMass>& masses) {
  const std::size_t n = masses.size();
  if (n < 2) {
    throw ValueError("total_force: needs at least 2 classes, got " +
                     std::to_string(n));
  }
  ForceField field;
  field.forces.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(masses[i].centroid.size());
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      f += anti_gravity_pair(masses[i], masses[j]);
    }
    field.forces[i] = std::move(f);
  }
  double fm = 0.0;
  for (const Eigen::VectorXd& f : field.forces) fm = std::max(fm, f.norm());
  field.f_max = fm;
  return field;
}

Relocation relocate_centroids(const ForceField& field,
                              const std::vector<ClassMass>& masses, double g) {
  if (g < 0.0) {
    throw ValueError("relocate_centroids: gravitization constant must be "
                     "nonnegative, got " + std::to_string(g));
  }
  if (field.forces.size() != masses.size()) {
    throw ShapeError("relocate_centroids: " +
                     std::to_string(field.forces.size()) + " forces vs " +
                     std::to_string(masses.size()) + " classes");
  }
  double fm = 0.0;
  for (const Eigen::VectorXd& f : field.forces) fm = std::max(fm, f.norm());
  if (fm == 0.0) {
    throw ValueError("relocate_centroids: all forces are zero, no direction "
                     "to move");
  }
  // scale first, then multiply: keeps steps exact when g/fm is exact
  const double scale = g / fm;
  Relocation out;
  out.f_max = fm;
  out.centroids.reserve(masses.size());
  out.steps.reserve(masses.size());
  for (std::size_t i = 0; i < masses.size(); ++i) {
    Eigen::VectorXd alpha = scale * field.forces[i];
    out.centroids.push_back(masses[i].centroid + alpha);
    out.steps.push_back(std::move(alpha));
  }
  return out;
}

namespace {

// First two principal directions of the point cloud, deterministic sign
// (largest-magnitude coordinate made positive). Pads with zero columns when
// the latent dimension is 1.
Eigen::MatrixXd pca2_basis(const Eigen::MatrixXd& rows) {
  const Index dim = rows.cols();
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(dim, 2);
  if (dim == 1) {
    basis(0, 0) = 1.0;
    return basis;
  }
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - mean;
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / std::max<double>(1.0, rows.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  // eigenvalues ascend; take the last two columns
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd v = solver.eigenvectors().col(dim - 1 - k);
    Index arg = 0;
    v.array().abs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    basis.col(k) = v;
  }
  return basis;
}

}  // namespace

void write_trajectories_csv(const std::filesystem::path& file,
                            const std::vector<TrajectoryPoint>& points) {
  if (points.empty()) {
    throw ValueError("write_trajectories_csv: no points to export");
  }
  // group by layer; projections are fitted per layer since dims differ
  std::map<std::string, std::vector<std::size_t>> by_layer;
  for (std::size_t i = 0; i < points.size(); ++i) {
    by_layer[points[i].layer].push_back(i);
  }
  std::map<std::string, Eigen::MatrixXd> bases;
  for (const auto& [layer, idx] : by_layer) {
    const Index dim = points[idx.front()].centroid.size();
    Eigen::MatrixXd rows(static_cast<Index>(idx.size()), dim);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (points[idx[r]].centroid.size() != dim) {
        throw ShapeError("write_trajectories_csv: centroid dim varies "
                         "within layer '" + layer + "'");
      }
      rows.row(static_cast<Index>(r)) = points[idx[r]].centroid.transpose();
    }
    bases[layer] = pca2_basis(rows);
  }

  std::ofstream os(file, std::ios::trunc);
  if (!os) {
    throw IoError("cannot open '" + file.string() + "' for writing");
  }
  os << "# projection=pca2 (fitted per layer over all iterations)\n";
  os << "iteration,layer,class_id,c0,c1\n";
  os.precision(17);
  for (const TrajectoryPoint& p : points) {
    const Eigen::Vector2d proj = bases[p.layer].transpose() * p.centroid;
    os << p.iteration << ',' << p.layer << ',' << p.class_id << ','
       << proj[0] << ',' << proj[1] << '\n';
  }
  if (!os) throw IoError("write failed for '" + file.string() + "'");
}

}  // namespace agrav
