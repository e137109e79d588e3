#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace strandopt {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// One hair strand, root first. Positions are in millimeters.
struct Strand {
  std::vector<Vec3> vertices;

  int segment_count() const { return (int)vertices.size() - 1; }
  double length() const {
    double len = 0.0;
    for (size_t i = 1; i < vertices.size(); ++i)
      len += (vertices[i] - vertices[i - 1]).norm();
    return len;
  }
};

struct StrandSet {
  std::vector<Strand> strands;

  size_t total_vertices() const {
    size_t n = 0;
    for (const auto& s : strands) n += s.vertices.size();
    return n;
  }
  // Offset of strand i's first vertex in the flattened vertex list.
  std::vector<int> vertex_offsets() const {
    std::vector<int> off(strands.size() + 1, 0);
    for (size_t i = 0; i < strands.size(); ++i)
      off[i + 1] = off[i] + (int)strands[i].vertices.size();
    return off;
  }
};

// A strand is usable if it has at least 2 vertices and no zero-length segment.
void validate_strand(const Strand& s);
void validate_strandset(const StrandSet& set);

// Indexed triangle mesh. Used for scalp / outer shell geometry.
struct TriMesh {
  std::vector<Vec3> positions;
  std::vector<std::array<int, 3>> triangles;

  Vec3 face_normal(int t) const {
    const auto& f = triangles[t];
    return (positions[f[1]] - positions[f[0]]).cross(positions[f[2]] - positions[f[0]]);
  }
  double face_area(int t) const { return 0.5 * face_normal(t).norm(); }
  double area() const {
    double a = 0.0;
    for (int t = 0; t < (int)triangles.size(); ++t) a += face_area(t);
    return a;
  }
};

// Scalp = mesh plus outward unit vertex normals; guide roots live on its vertices.
struct ScalpSurface {
  TriMesh mesh;
  std::vector<Vec3> vertex_normals;
};

// Pinhole camera. world -> camera is p_c = R p + t; x axis right, y down, z forward.
struct Camera {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  Vec3 to_camera(const Vec3& p) const { return R * p + t; }
  Vec3 position() const { return -(R.transpose() * t); }
  // Perspective projection of a camera-space point (z > 0).
  Vec2 project_cam(const Vec3& pc) const {
    return Vec2(fx * pc.x() / pc.z() + cx, fy * pc.y() / pc.z() + cy);
  }
  Vec2 project(const Vec3& p) const { return project_cam(to_camera(p)); }
  // Screen-space direction of a world-space direction at pixel (u,v), up to a
  // positive per-pixel scale. Independent of depth.
  Vec2 project_dir(const Vec3& dir_world, const Vec2& uv) const {
    Vec3 d = R * dir_world;
    double un = (uv.x() - cx) / fx;
    double vn = (uv.y() - cy) / fy;
    return Vec2(fx * (d.x() - un * d.z()), fy * (d.y() - vn * d.z()));
  }
};

// Inverse-distance weights over the four nearest guides, per child root.
struct GuideChildMap {
  struct Entry {
    std::array<int, 4> guide;
    std::array<double, 4> weight;  // sums to 1
  };
  std::vector<Entry> entries;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace strandopt
