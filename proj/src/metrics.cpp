#include "strandopt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "strandopt/spatial_grid.hpp"
#include "strandopt/spline.hpp"

namespace strandopt {

OrientedSampleSet sample_strands(const StrandSet& set, double spacing_mm) {
  if (spacing_mm <= 0.0) throw ConfigError("sample spacing must be positive");
  OrientedSampleSet out;
  out.spacing_mm = spacing_mm;
  std::vector<Vec3> pts, dirs;
  for (size_t si = 0; si < set.strands.size(); ++si) {
    sample_polyline(set.strands[si], spacing_mm, pts, dirs);
    for (size_t k = 0; k < pts.size(); ++k) {
      out.positions.push_back(pts[k]);
      out.directions.push_back(dirs[k]);
      out.strand_ids.push_back((int)si);
    }
  }
  return out;
}

namespace {

// Single comparison expression shared by the grid and brute-force paths so
// both produce identical booleans.
inline bool sample_match(const Vec3& p, const Vec3& d, const Vec3& q, const Vec3& e, double r2,
                         double cos_thresh, bool folded) {
  if ((p - q).squaredNorm() > r2) return false;
  double dot = d.dot(e);
  if (folded) dot = std::abs(dot);
  return dot >= cos_thresh;
}

double matched_fraction_grid(const OrientedSampleSet& src, const OrientedSampleSet& dst,
                             double d_mm, double cos_thresh, bool folded) {
  if (src.size() == 0 || dst.size() == 0) return 0.0;
  SpatialGrid grid(dst.positions, d_mm);
  double r2 = d_mm * d_mm;
  long matched = 0;
#pragma omp parallel reduction(+ : matched)
  {
    std::vector<int> cand;
#pragma omp for schedule(static)
    for (int i = 0; i < (int)src.size(); ++i) {
      grid.query_radius(src.positions[i], d_mm, cand);
      for (int j : cand)
        if (sample_match(src.positions[i], src.directions[i], dst.positions[j], dst.directions[j],
                         r2, cos_thresh, folded)) {
          ++matched;
          break;
        }
    }
  }
  return (double)matched / (double)src.size();
}

double matched_fraction_brute(const OrientedSampleSet& src, const OrientedSampleSet& dst,
                              double d_mm, double cos_thresh, bool folded) {
  if (src.size() == 0 || dst.size() == 0) return 0.0;
  double r2 = d_mm * d_mm;
  long matched = 0;
  for (size_t i = 0; i < src.size(); ++i)
    for (size_t j = 0; j < dst.size(); ++j)
      if (sample_match(src.positions[i], src.directions[i], dst.positions[j], dst.directions[j],
                       r2, cos_thresh, folded)) {
        ++matched;
        break;
      }
  return (double)matched / (double)src.size();
}

MatchScore finish(double p, double r, double d_mm, double a_deg, MatchMode mode) {
  MatchScore s;
  s.precision = p;
  s.recall = r;
  s.f1 = (p + r > 0.0) ? 2.0 * p * r / (p + r) : 0.0;
  s.d_mm = d_mm;
  s.a_deg = a_deg;
  s.mode = mode;
  return s;
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace

MatchScore score(const OrientedSampleSet& rec, const OrientedSampleSet& ref, double d_mm,
                 double a_deg, MatchMode mode) {
  if (d_mm <= 0.0 || a_deg <= 0.0) throw ConfigError("match thresholds must be positive");
  double cos_thresh = std::cos(a_deg * kPi / 180.0);
  bool folded = mode == MatchMode::kDeg180;
  double p = matched_fraction_grid(rec, ref, d_mm, cos_thresh, folded);
  double r = matched_fraction_grid(ref, rec, d_mm, cos_thresh, folded);
  return finish(p, r, d_mm, a_deg, mode);
}

std::vector<MatchScore> score_table(const OrientedSampleSet& rec, const OrientedSampleSet& ref,
                                    const std::vector<std::pair<double, double>>& thresholds,
                                    MatchMode mode) {
  std::vector<MatchScore> rows;
  for (const auto& [d, a] : thresholds) rows.push_back(score(rec, ref, d, a, mode));
  return rows;
}

std::string format_score_table(const std::vector<MatchScore>& rows) {
  std::string out = "threshold      precision  recall     f1\n";
  char line[128];
  for (const auto& s : rows) {
    std::snprintf(line, sizeof(line), "%.0fmm/%-3.0fdeg   %8.1f %8.1f %8.1f\n", s.d_mm, s.a_deg,
                  100.0 * s.precision, 100.0 * s.recall, 100.0 * s.f1);
    out += line;
  }
  return out;
}

namespace reference {

MatchScore score(const OrientedSampleSet& rec, const OrientedSampleSet& ref, double d_mm,
                 double a_deg, MatchMode mode) {
  if (d_mm <= 0.0 || a_deg <= 0.0) throw ConfigError("match thresholds must be positive");
  double cos_thresh = std::cos(a_deg * kPi / 180.0);
  bool folded = mode == MatchMode::kDeg180;
  double p = matched_fraction_brute(rec, ref, d_mm, cos_thresh, folded);
  double r = matched_fraction_brute(ref, rec, d_mm, cos_thresh, folded);
  return finish(p, r, d_mm, a_deg, mode);
}

}  // namespace reference

}  // namespace strandopt
