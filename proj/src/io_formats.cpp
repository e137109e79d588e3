#include "strandopt/io_formats.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <json.hpp>
#include <sstream>

namespace strandopt {

namespace {

// All binary formats here are little-endian, matching the host.
static_assert(std::endian::native == std::endian::little, "little-endian host required");

struct RawReader {
  std::ifstream in;
  std::string path;

  RawReader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw ConfigError("cannot open " + p);
  }
  void bytes(void* dst, size_t n) {
    in.read(reinterpret_cast<char*>(dst), n);
    if ((size_t)in.gcount() != n) throw ContractError("truncated file " + path);
  }
  template <class T>
  T get() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  void expect_eof() {
    in.peek();
    if (!in.eof()) throw ContractError("trailing bytes in " + path);
  }
};

struct RawWriter {
  std::ofstream out;
  std::string path;

  RawWriter(const std::string& p) : out(p, std::ios::binary), path(p) {
    if (!out) throw ConfigError("cannot open " + p + " for writing");
  }
  void bytes(const void* src, size_t n) { out.write(reinterpret_cast<const char*>(src), n); }
  template <class T>
  void put(const T& v) {
    bytes(&v, sizeof(T));
  }
  void close() {
    out.close();
    if (!out) throw ContractError("write failed for " + path);
  }
};

void check_hair_counts(const HairFile& hf, const std::string& path) {
  uint64_t expect = 0;
  if (hf.flags & 1u) {
    if (hf.segments.size() != hf.strand_count)
      throw ContractError("count mismatch in " + path + ": segment array length");
    for (uint16_t s : hf.segments) expect += (uint64_t)s + 1;
  } else {
    expect = (uint64_t)hf.strand_count * ((uint64_t)hf.default_segments + 1);
  }
  if (expect != hf.point_count)
    throw ContractError("count mismatch in " + path + ": points != sum(segments+1)");
  if ((hf.flags & 2u) && hf.points.size() != (size_t)hf.point_count * 3)
    throw ContractError("count mismatch in " + path + ": point array length");
}

}  // namespace

HairFile read_hair(const std::string& path) {
  RawReader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "HAIR", 4) != 0) throw ContractError("bad magic in " + path);
  HairFile hf;
  hf.strand_count = r.get<uint32_t>();
  hf.point_count = r.get<uint32_t>();
  hf.flags = r.get<uint32_t>();
  hf.default_segments = r.get<uint32_t>();
  hf.default_thickness = r.get<float>();
  hf.default_transparency = r.get<float>();
  for (int i = 0; i < 3; ++i) hf.default_color[i] = r.get<float>();
  r.bytes(hf.info, 88);
  if (hf.flags & 1u) {
    hf.segments.resize(hf.strand_count);
    if (hf.strand_count) r.bytes(hf.segments.data(), (size_t)hf.strand_count * 2);
  }
  if (hf.flags & 2u) {
    hf.points.resize((size_t)hf.point_count * 3);
    if (hf.point_count) r.bytes(hf.points.data(), (size_t)hf.point_count * 12);
  }
  r.expect_eof();
  check_hair_counts(hf, path);
  return hf;
}

void write_hair(const std::string& path, const HairFile& hf) {
  check_hair_counts(hf, path);
  RawWriter w(path);
  w.bytes("HAIR", 4);
  w.put(hf.strand_count);
  w.put(hf.point_count);
  w.put(hf.flags);
  w.put(hf.default_segments);
  w.put(hf.default_thickness);
  w.put(hf.default_transparency);
  for (int i = 0; i < 3; ++i) w.put(hf.default_color[i]);
  w.bytes(hf.info, 88);
  if (hf.flags & 1u) w.bytes(hf.segments.data(), hf.segments.size() * 2);
  if (hf.flags & 2u) w.bytes(hf.points.data(), hf.points.size() * 4);
  w.close();
}

HairFile hair_from_strands(const StrandSet& set) {
  HairFile hf;
  hf.strand_count = (uint32_t)set.strands.size();
  hf.flags = 3;  // segment counts + points
  std::snprintf(hf.info, sizeof(hf.info), "strand set, millimeters");
  uint64_t points = 0;
  for (const auto& s : set.strands) {
    int segs = s.segment_count();
    if (segs < 1) throw ContractError("strand with fewer than 2 vertices");
    if (segs > 65535) throw ContractError("strand exceeds 65535 segments");
    hf.segments.push_back((uint16_t)segs);
    points += segs + 1;
  }
  hf.point_count = (uint32_t)points;
  hf.points.reserve(points * 3);
  for (const auto& s : set.strands)
    for (const auto& p : s.vertices) {
      hf.points.push_back((float)p.x());
      hf.points.push_back((float)p.y());
      hf.points.push_back((float)p.z());
    }
  return hf;
}

StrandSet strands_from_hair(const HairFile& hf) {
  if (!(hf.flags & 2u)) throw ContractError("hair file has no point data");
  StrandSet set;
  set.strands.resize(hf.strand_count);
  size_t at = 0;
  for (uint32_t i = 0; i < hf.strand_count; ++i) {
    uint32_t segs = (hf.flags & 1u) ? hf.segments[i] : hf.default_segments;
    auto& v = set.strands[i].vertices;
    v.resize(segs + 1);
    for (auto& p : v) {
      p = Vec3(hf.points[at], hf.points[at + 1], hf.points[at + 2]);
      at += 3;
    }
  }
  return set;
}

StrandSet read_hair_strands(const std::string& path) { return strands_from_hair(read_hair(path)); }

void write_hair_strands(const std::string& path, const StrandSet& set) {
  write_hair(path, hair_from_strands(set));
}

VolumeDump read_ovol(const std::string& path) {
  RawReader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "OVOL", 4) != 0) throw ContractError("bad magic in " + path);
  uint32_t version = r.get<uint32_t>();
  if (version != 1) throw ContractError("unsupported volume version in " + path);
  VolumeDump v;
  v.nx = (int)r.get<uint32_t>();
  v.ny = (int)r.get<uint32_t>();
  v.nz = (int)r.get<uint32_t>();
  v.channels = (int)r.get<uint32_t>();
  v.h = r.get<float>();
  for (int i = 0; i < 3; ++i) v.origin[i] = r.get<float>();
  char reserved[24];
  r.bytes(reserved, 24);
  size_t n = (size_t)v.nx * v.ny * v.nz * v.channels;
  v.data.resize(n);
  if (n) r.bytes(v.data.data(), n * 4);
  r.expect_eof();
  return v;
}

void write_ovol(const std::string& path, const VolumeDump& v) {
  if (v.data.size() != (size_t)v.nx * v.ny * v.nz * v.channels)
    throw ContractError("volume data size does not match dims");
  RawWriter w(path);
  w.bytes("OVOL", 4);
  w.put<uint32_t>(1);
  w.put<uint32_t>((uint32_t)v.nx);
  w.put<uint32_t>((uint32_t)v.ny);
  w.put<uint32_t>((uint32_t)v.nz);
  w.put<uint32_t>((uint32_t)v.channels);
  w.put<float>((float)v.h);
  for (int i = 0; i < 3; ++i) w.put<float>((float)v.origin[i]);
  char reserved[24] = {};
  w.bytes(reserved, 24);
  w.bytes(v.data.data(), v.data.size() * 4);
  w.close();
}

PfmImage read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  if (!in || w <= 0 || h <= 0) throw ContractError("bad header in " + path);
  PfmImage img;
  if (magic == "Pf")
    img.channels = 1;
  else if (magic == "Pf2")
    img.channels = 2;
  else if (magic == "PF")
    img.channels = 3;
  else
    throw ContractError("bad magic in " + path);
  if (scale >= 0.0) throw ContractError("big-endian data unsupported in " + path);
  in.get();  // single whitespace before the raster
  img.width = w;
  img.height = h;
  img.data.resize((size_t)w * h * img.channels);
  size_t row = (size_t)w * img.channels;
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(img.data.data() + (size_t)y * row), row * 4);
    if ((size_t)in.gcount() != row * 4) throw ContractError("truncated file " + path);
  }
  in.peek();
  if (!in.eof()) throw ContractError("trailing bytes in " + path);
  return img;
}

void write_pfm(const std::string& path, const PfmImage& img) {
  if (img.data.size() != (size_t)img.width * img.height * img.channels)
    throw ContractError("image data size does not match dims");
  const char* magic = img.channels == 1 ? "Pf" : img.channels == 2 ? "Pf2" : "PF";
  if (img.channels < 1 || img.channels > 3) throw ConfigError("pfm channels must be 1, 2, or 3");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << magic << "\n" << img.width << " " << img.height << "\n-1.0\n";
  size_t row = (size_t)img.width * img.channels;
  for (int y = img.height - 1; y >= 0; --y)
    out.write(reinterpret_cast<const char*>(img.data.data() + (size_t)y * row), row * 4);
  out.close();
  if (!out) throw ContractError("write failed for " + path);
}

namespace {

void png_chunk(RawWriter& w, const char type[4], const std::vector<unsigned char>& data) {
  uint32_t len = (uint32_t)data.size();
  unsigned char be[4] = {(unsigned char)(len >> 24), (unsigned char)(len >> 16),
                         (unsigned char)(len >> 8), (unsigned char)len};
  w.bytes(be, 4);
  w.bytes(type, 4);
  if (!data.empty()) w.bytes(data.data(), data.size());
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
  if (!data.empty()) crc = crc32(crc, data.data(), (uInt)data.size());
  unsigned char cbe[4] = {(unsigned char)(crc >> 24), (unsigned char)(crc >> 16),
                          (unsigned char)(crc >> 8), (unsigned char)crc};
  w.bytes(cbe, 4);
}

}  // namespace

void write_png(const std::string& path, int width, int height, int channels,
               const std::vector<unsigned char>& pixels) {
  if (channels != 1 && channels != 3) throw ConfigError("png channels must be 1 or 3");
  if (pixels.size() != (size_t)width * height * channels)
    throw ContractError("image data size does not match dims");
  // Filter byte 0 in front of every scanline, then one zlib stream.
  std::vector<unsigned char> raw((size_t)height * (1 + (size_t)width * channels));
  for (int y = 0; y < height; ++y) {
    unsigned char* dst = raw.data() + (size_t)y * (1 + (size_t)width * channels);
    dst[0] = 0;
    std::memcpy(dst + 1, pixels.data() + (size_t)y * width * channels, (size_t)width * channels);
  }
  uLongf comp_len = compressBound((uLong)raw.size());
  std::vector<unsigned char> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), (uLong)raw.size(), 6) != Z_OK)
    throw ContractError("png compression failed");
  comp.resize(comp_len);

  RawWriter w(path);
  const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  w.bytes(sig, 8);
  std::vector<unsigned char> ihdr(13);
  auto be32 = [](unsigned char* p, uint32_t v) {
    p[0] = (unsigned char)(v >> 24);
    p[1] = (unsigned char)(v >> 16);
    p[2] = (unsigned char)(v >> 8);
    p[3] = (unsigned char)v;
  };
  be32(ihdr.data(), (uint32_t)width);
  be32(ihdr.data() + 4, (uint32_t)height);
  ihdr[8] = 8;                                // bit depth
  ihdr[9] = channels == 1 ? 0 : 2;            // gray / truecolor
  ihdr[10] = ihdr[11] = ihdr[12] = 0;
  png_chunk(w, "IHDR", ihdr);
  png_chunk(w, "IDAT", comp);
  png_chunk(w, "IEND", {});
  w.close();
}

OrientedPoints read_ply_points(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  size_t count = 0;
  bool header_done = false;
  std::vector<std::string> props;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "element") {
      std::string what;
      ls >> what >> count;
      if (what != "vertex") throw ContractError("unsupported ply element in " + path);
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    } else if (tok == "end_header") {
      header_done = true;
      break;
    } else if (tok == "format") {
      std::string kind;
      ls >> kind;
      if (kind != "ascii") throw ContractError("binary ply unsupported in " + path);
    }
  }
  std::vector<std::string> want = {"x", "y", "z", "nx", "ny", "nz", "confidence"};
  if (!header_done || props != want) throw ContractError("bad header in " + path);
  OrientedPoints pts;
  for (size_t i = 0; i < count; ++i) {
    Vec3 p, n;
    double c;
    if (!(in >> p.x() >> p.y() >> p.z() >> n.x() >> n.y() >> n.z() >> c))
      throw ContractError("truncated file " + path);
    pts.positions.push_back(p);
    pts.directions.push_back(n);
    pts.confidence.push_back(c);
  }
  return pts;
}

void write_ply_points(const std::string& path, const OrientedPoints& pts) {
  if (pts.directions.size() != pts.size() || pts.confidence.size() != pts.size())
    throw ContractError("point cloud arrays have mismatched lengths");
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << "ply\nformat ascii 1.0\nelement vertex " << pts.size() << "\n";
  for (const char* n : {"x", "y", "z", "nx", "ny", "nz", "confidence"})
    out << "property double " << n << "\n";
  out << "end_header\n";
  char buf[256];
  for (size_t i = 0; i < pts.size(); ++i) {
    const Vec3& p = pts.positions[i];
    const Vec3& d = pts.directions[i];
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", p.x(), p.y(),
                  p.z(), d.x(), d.y(), d.z(), pts.confidence[i]);
    out << buf;
  }
  out.close();
  if (!out) throw ContractError("write failed for " + path);
}

TriMesh read_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  TriMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z())) throw ContractError("bad vertex in " + path);
      mesh.positions.push_back(p);
    } else if (tok == "f") {
      std::vector<int> idx;
      std::string ref;
      while (ls >> ref) idx.push_back(std::stoi(ref));  // stoi stops at '/'
      if (idx.size() != 3) throw ContractError("non-triangle face in " + path);
      for (int& i : idx) {
        if (i < 1 || i > (int)mesh.positions.size())
          throw ContractError("face index out of range in " + path);
        --i;
      }
      mesh.triangles.push_back({idx[0], idx[1], idx[2]});
    }
  }
  return mesh;
}

void write_obj(const std::string& path, const TriMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  char buf[160];
  for (const auto& p : mesh.positions) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out << buf;
  }
  for (const auto& f : mesh.triangles)
    out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
  out.close();
  if (!out) throw ContractError("write failed for " + path);
}

CsvLogger::CsvLogger(const std::string& path, const std::vector<std::string>& columns)
    : out_(path), n_cols_(columns.size()) {
  if (!out_) throw ConfigError("cannot open " + path + " for writing");
  for (size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
  out_ << "\n";
}

void CsvLogger::row(const std::vector<double>& values) {
  if (values.size() != n_cols_) throw ContractError("csv row length does not match header");
  char buf[40];
  for (size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.10g", values[i]);
    out_ << (i ? "," : "") << buf;
  }
  out_ << "\n";
  out_.flush();
}

void write_cameras_json(const std::string& path, const std::vector<Camera>& cams) {
  nlohmann::json root;
  root["cameras"] = nlohmann::json::array();
  for (const auto& c : cams) {
    nlohmann::json j;
    j["fx"] = c.fx;
    j["fy"] = c.fy;
    j["cx"] = c.cx;
    j["cy"] = c.cy;
    j["width"] = c.width;
    j["height"] = c.height;
    std::vector<double> r(9), t(3);
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) r[i * 3 + k] = c.R(i, k);
    for (int i = 0; i < 3; ++i) t[i] = c.t[i];
    j["R"] = r;  // world-to-camera rows
    j["t"] = t;
    root["cameras"].push_back(j);
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << root.dump(2) << "\n";
  out.close();
  if (!out) throw ContractError("write failed for " + path);
}

std::vector<Camera> read_cameras_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  nlohmann::json root;
  try {
    in >> root;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError("bad json in " + path + ": " + e.what());
  }
  std::vector<Camera> cams;
  try {
    for (const auto& j : root.at("cameras")) {
      Camera c;
      c.fx = j.at("fx");
      c.fy = j.at("fy");
      c.cx = j.at("cx");
      c.cy = j.at("cy");
      c.width = j.at("width");
      c.height = j.at("height");
      std::vector<double> r = j.at("R"), t = j.at("t");
      if (r.size() != 9 || t.size() != 3) throw ContractError("bad camera matrix in " + path);
      for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) c.R(i, k) = r[i * 3 + k];
      for (int i = 0; i < 3; ++i) c.t[i] = t[i];
      cams.push_back(c);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractError("bad camera entry in " + path + ": " + e.what());
  }
  return cams;
}

}  // namespace strandopt
