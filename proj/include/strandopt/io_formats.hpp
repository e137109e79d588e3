#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "strandopt/types.hpp"

namespace strandopt {

// Binary strand container. 128-byte little-endian header:
//   "HAIR" | u32 strands | u32 points | u32 flags | u32 default segments |
//   f32 default thickness | f32 default transparency | 3*f32 default color |
//   88-byte info string
// flags bit0: per-strand u16 segment-count array follows the header;
// flags bit1: f32 xyz point array follows the segment counts.
struct HairFile {
  uint32_t strand_count = 0;
  uint32_t point_count = 0;
  uint32_t flags = 0;
  uint32_t default_segments = 0;
  float default_thickness = 0.1f;
  float default_transparency = 0.0f;
  float default_color[3] = {0.2f, 0.15f, 0.1f};
  char info[88] = {};
  std::vector<uint16_t> segments;  // flags bit0
  std::vector<float> points;       // flags bit1, 3 per point
};

HairFile read_hair(const std::string& path);
void write_hair(const std::string& path, const HairFile& hf);

HairFile hair_from_strands(const StrandSet& set);
StrandSet strands_from_hair(const HairFile& hf);

StrandSet read_hair_strands(const std::string& path);
void write_hair_strands(const std::string& path, const StrandSet& set);

// Volume dump: 64-byte header ("OVOL" | u32 version | u32 nx ny nz |
// u32 channels | f32 h | 3*f32 origin | 24 reserved bytes), then
// nx*ny*nz*channels f32 values, x fastest.
struct VolumeDump {
  int nx = 0, ny = 0, nz = 0;
  int channels = 0;
  double h = 0.0;
  Vec3 origin = Vec3::Zero();
  std::vector<float> data;
};

VolumeDump read_ovol(const std::string& path);
void write_ovol(const std::string& path, const VolumeDump& v);

// PFM float image. 1 channel = "Pf", 3 = "PF"; 2-channel maps use the
// nonstandard tag "Pf2" with the same layout. Data is row-major top-down in
// memory and bottom-up on disk (scale -1.0 = little-endian).
struct PfmImage {
  int width = 0, height = 0, channels = 0;
  std::vector<float> data;  // width*height*channels, top-down

  float& at(int x, int y, int c) { return data[(size_t)(y * width + x) * channels + c]; }
  float at(int x, int y, int c) const { return data[(size_t)(y * width + x) * channels + c]; }
};

PfmImage read_pfm(const std::string& path);
void write_pfm(const std::string& path, const PfmImage& img);

// 8-bit PNG, zlib-deflated, filter 0 scanlines. channels 1 (gray) or 3 (RGB).
void write_png(const std::string& path, int width, int height, int channels,
               const std::vector<unsigned char>& pixels);

// ASCII PLY point cloud: x y z nx ny nz confidence.
struct OrientedPoints {
  std::vector<Vec3> positions;
  std::vector<Vec3> directions;
  std::vector<double> confidence;

  size_t size() const { return positions.size(); }
};

OrientedPoints read_ply_points(const std::string& path);
void write_ply_points(const std::string& path, const OrientedPoints& pts);

// ASCII OBJ, v/f records only; faces must be triangles.
TriMesh read_obj(const std::string& path);
void write_obj(const std::string& path, const TriMesh& mesh);

// Streaming CSV log with a fixed column header.
class CsvLogger {
 public:
  CsvLogger() = default;
  CsvLogger(const std::string& path, const std::vector<std::string>& columns);
  void row(const std::vector<double>& values);

 private:
  std::ofstream out_;
  size_t n_cols_ = 0;
};

void write_cameras_json(const std::string& path, const std::vector<Camera>& cams);
std::vector<Camera> read_cameras_json(const std::string& path);

}  // namespace strandopt
