#include "strandopt/reference.hpp"

#include <algorithm>
#include <limits>

#include "raster_detail.hpp"

namespace strandopt {
namespace reference {

RenderBuffers rasterize(const BillboardMesh& mesh, const Camera& camera) {
  RenderBuffers rb;
  rb.width = camera.width;
  rb.height = camera.height;
  size_t npx = (size_t)rb.width * rb.height;
  rb.tri.assign(npx, -1);
  rb.depth.assign(npx, std::numeric_limits<double>::infinity());
  rb.b0.assign(npx, 0.0);
  rb.b1.assign(npx, 0.0);

  detail::ProjectedVerts pv = detail::project_all(mesh, camera);
  int ntri = (int)mesh.triangles.size();
  std::vector<detail::TriSetup> setups(ntri);
  for (int t = 0; t < ntri; ++t)
    setups[t] = detail::setup_triangle(pv, mesh.triangles[t], rb.width, rb.height);

  for (int y = 0; y < rb.height; ++y)
    for (int x = 0; x < rb.width; ++x) {
      size_t p = rb.pixel(x, y);
      for (int t = 0; t < ntri; ++t) {
        const auto& s = setups[t];
        if (!s.valid || x < s.xmin || x > s.xmax || y < s.ymin || y > s.ymax) continue;
        double z, b0, b1;
        if (!detail::shade_pixel(s, x, y, z, b0, b1)) continue;
        if (z < rb.depth[p] || (z == rb.depth[p] && t < rb.tri[p])) {
          rb.depth[p] = z;
          rb.tri[p] = t;
          rb.b0[p] = b0;
          rb.b1[p] = b1;
        }
      }
    }
  return rb;
}

std::vector<std::vector<int>> knn(const std::vector<Vec3>& points, int k,
                                  const std::vector<int>* group) {
  int n = (int)points.size();
  std::vector<std::vector<int>> out(n);
  std::vector<std::pair<double, int>> cand;
  for (int i = 0; i < n; ++i) {
    cand.clear();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      if (group && (*group)[j] == (*group)[i]) continue;
      cand.emplace_back((points[j] - points[i]).squaredNorm(), j);
    }
    std::sort(cand.begin(), cand.end());
    int m = std::min<int>(k, (int)cand.size());
    out[i].reserve(m);
    for (int j = 0; j < m; ++j) out[i].push_back(cand[j].second);
  }
  return out;
}

std::vector<int> radius(const std::vector<Vec3>& points, const Vec3& q, double rad) {
  std::vector<int> out;
  double r2 = rad * rad;
  for (int i = 0; i < (int)points.size(); ++i)
    if ((points[i] - q).squaredNorm() <= r2) out.push_back(i);
  return out;
}

}  // namespace reference
}  // namespace strandopt
