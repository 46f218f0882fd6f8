#include "agrav/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "agrav/errors.hpp"

namespace agrav {

double compute_icc(const std::vector<ClassMass>& masses, IccMode mode) {
  if (masses.empty()) {
    throw ValueError("compute_icc: needs at least 1 class");
  }
  double sum = 0.0;
  for (const ClassMass& m : masses) {
    sum += mode == IccMode::mean_distance ? m.mean_distance : m.mass;
  }
  return sum;
}

IcdTriple compute_icd(const std::vector<ClassMass>& masses) {
  const std::size_t n = masses.size();
  if (n < 2) {
    throw ValueError("compute_icd: needs at least 2 classes, got " +
                     std::to_string(n));
  }
  IcdTriple t;
  t.min = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = (masses[i].centroid - masses[j].centroid).norm();
      t.min = std::min(t.min, d);
      t.max = std::max(t.max, d);
      sum += d;
    }
  }
  t.avg = sum / static_cast<double>(n);
  return t;
}

std::vector<NormalizedPoint> normalize_series(
    const std::vector<IterationRecord>& records, IcdNormalization norm) {
  if (records.empty()) {
    throw ValueError("normalize_series: empty record list");
  }
  const auto icd_of = [norm](const IcdTriple& t) {
    return norm == IcdNormalization::min_distance ? t.min : t.avg;
  };
  double max_icc_head = 0.0, max_icc_tail = 0.0;
  double max_icd_head = 0.0, max_icd_tail = 0.0;
  for (const IterationRecord& r : records) {
    max_icc_head = std::max(max_icc_head, r.icc_head);
    max_icc_tail = std::max(max_icc_tail, r.icc_tail);
    max_icd_head = std::max(max_icd_head, icd_of(r.icd_head));
    max_icd_tail = std::max(max_icd_tail, icd_of(r.icd_tail));
  }
  if (max_icc_head == 0.0 || max_icc_tail == 0.0) {
    throw ValueError("normalize_series: compactness series is identically "
                     "zero, nothing to normalize by");
  }
  if (max_icd_head == 0.0 || max_icd_tail == 0.0) {
    throw ValueError("normalize_series: separation series is identically "
                     "zero, nothing to normalize by");
  }
  std::vector<NormalizedPoint> out;
  out.reserve(records.size());
  for (const IterationRecord& r : records) {
    NormalizedPoint p;
    p.k = r.k;
    p.icc_star = (r.icc_head * r.icc_tail) / (max_icc_head * max_icc_tail);
    p.icd_star =
        (icd_of(r.icd_head) * icd_of(r.icd_tail)) /
        (max_icd_head * max_icd_tail);
    out.push_back(p);
  }
  return out;
}

ParetoSelection pareto_select(const std::vector<IterationRecord>& records,
                              double theta,
                              const std::vector<double>& robust_scores,
                              IcdNormalization norm) {
  if (records.size() != robust_scores.size()) {
    throw ValueError("pareto_select: " + std::to_string(records.size()) +
                     " records vs " + std::to_string(robust_scores.size()) +
                     " robust scores");
  }
  if (!(theta > 0.0 && theta < 1.0)) {
    throw ValueError("pareto_select: theta must lie in (0,1), got " +
                     std::to_string(theta));
  }
  // normalize over the full series first; eligibility filtering afterwards
  // does not change relative order (same positive denominators)
  const std::vector<NormalizedPoint> scored = normalize_series(records, norm);

  ParetoSelection sel;
  sel.theta = theta;
  struct Entry {
    NormalizedPoint p;
    double robust;
    std::size_t record_index;
  };
  std::vector<Entry> eligible;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].acc >= theta) {
      eligible.push_back({scored[i], robust_scores[i], i});
      sel.eligible.push_back(records[i].k);
    }
  }
  if (eligible.empty()) {
    throw NoEligibleError("pareto_select: no iteration reaches accuracy " +
                          std::to_string(theta));
  }
  std::sort(sel.eligible.begin(), sel.eligible.end());

  // skyline sweep: sort by separation desc, compactness asc; a point joins
  // the front iff no earlier point beats it on compactness (duplicates of a
  // front point stay on the front, since dominance needs one strict edge)
  std::vector<Entry> order = eligible;
  std::sort(order.begin(), order.end(), [](const Entry& a, const Entry& b) {
    if (a.p.icd_star != b.p.icd_star) return a.p.icd_star > b.p.icd_star;
    if (a.p.icc_star != b.p.icc_star) return a.p.icc_star < b.p.icc_star;
    return a.p.k < b.p.k;
  });
  std::vector<Entry> front;
  double best_icc = std::numeric_limits<double>::infinity();
  double icd_at_best = 0.0;
  for (const Entry& e : order) {
    if (e.p.icc_star < best_icc) {
      best_icc = e.p.icc_star;
      icd_at_best = e.p.icd_star;
      front.push_back(e);
    } else if (e.p.icc_star == best_icc && e.p.icd_star == icd_at_best) {
      front.push_back(e);
    }
  }

  const Entry* chosen = nullptr;
  for (const Entry& e : front) {
    sel.front.push_back(e.p.k);
    if (chosen == nullptr || e.robust > chosen->robust ||
        (e.robust == chosen->robust && e.p.k < chosen->p.k)) {
      chosen = &e;
    }
  }
  std::sort(sel.front.begin(), sel.front.end());
  sel.chosen_k = chosen->p.k;
  sel.chosen_pgd_acc = chosen->robust;
  return sel;
}

void write_selection_json(const std::filesystem::path& file,
                          const ParetoSelection& sel) {
  nlohmann::json j{{"theta", sel.theta},
                   {"eligible", sel.eligible},
                   {"front", sel.front},
                   {"chosen_k", sel.chosen_k},
                   {"chosen_pgd_acc", sel.chosen_pgd_acc}};
  std::ofstream os(file, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + file.string() + "' for writing");
  os << j.dump(2) << '\n';
  if (!os) throw IoError("write failed for '" + file.string() + "'");
}

void write_pareto_csv(const std::filesystem::path& file,
                      const std::vector<NormalizedPoint>& points) {
  std::ofstream os(file, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + file.string() + "' for writing");
  os << "k,icc_star,icd_star\n";
  os.precision(17);
  for (const NormalizedPoint& p : points) {
    os << p.k << ',' << p.icc_star << ',' << p.icd_star << '\n';
  }
  if (!os) throw IoError("write failed for '" + file.string() + "'");
}

}  // namespace agrav
