#pragma once

#include <string>
#include <vector>

#include "strandopt/types.hpp"

namespace strandopt {

// Arc-length samples of a strand set: position, unit root-to-tip direction,
// and owning strand index, at a recorded spacing.
struct OrientedSampleSet {
  std::vector<Vec3> positions;
  std::vector<Vec3> directions;
  std::vector<int> strand_ids;
  double spacing_mm = 0.0;

  size_t size() const { return positions.size(); }
};

enum class MatchMode { kDeg360, kDeg180 };

struct MatchScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double d_mm = 0.0;
  double a_deg = 0.0;
  MatchMode mode = MatchMode::kDeg360;
};

OrientedSampleSet sample_strands(const StrandSet& set, double spacing_mm);

// A sample in `rec` counts as matched when some sample in `ref` lies within
// d_mm AND within a_deg of its direction (deg180 folds the angle via |dot|).
// precision = matched fraction of rec, recall = matched fraction of ref.
// Uses a uniform grid with cell size d_mm; bit-equal to the brute-force path.
MatchScore score(const OrientedSampleSet& rec, const OrientedSampleSet& ref, double d_mm,
                 double a_deg, MatchMode mode);

std::vector<MatchScore> score_table(const OrientedSampleSet& rec, const OrientedSampleSet& ref,
                                    const std::vector<std::pair<double, double>>& thresholds,
                                    MatchMode mode);

// Aligned text table, one row per threshold pair, percentages to one decimal.
std::string format_score_table(const std::vector<MatchScore>& rows);

namespace reference {
// O(N*M) scan over every sample pair. The grid path must agree bit-for-bit.
MatchScore score(const OrientedSampleSet& rec, const OrientedSampleSet& ref, double d_mm,
                 double a_deg, MatchMode mode);
}  // namespace reference

}  // namespace strandopt
