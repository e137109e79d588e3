#pragma once

// Serial reference implementations of the parallel kernels. They take the
// straightforward route (per-pixel loops over all triangles, brute-force
// neighbor scans) and exist so tests can compare the fast paths against them;
// the benchmark target reports the speed difference.

#include "strandopt/diffrast.hpp"
#include "strandopt/types.hpp"

namespace strandopt {
namespace reference {

// Per-pixel loop over every triangle. Bit-identical to rasterize().
RenderBuffers rasterize(const BillboardMesh& mesh, const Camera& camera);

// Brute-force k nearest neighbors, ties by index. skip_same groups points so
// same-group candidates are excluded (used for segment neighborhoods).
std::vector<std::vector<int>> knn(const std::vector<Vec3>& points, int k,
                                  const std::vector<int>* group = nullptr);

// Brute-force radius search, ascending index order.
std::vector<int> radius(const std::vector<Vec3>& points, const Vec3& q, double rad);

}  // namespace reference
}  // namespace strandopt
