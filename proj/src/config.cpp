#include "strandopt/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "strandopt/types.hpp"

namespace strandopt {
namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

template <class T>
T parse_value(const std::string& key, const std::string& text);

template <>
std::string parse_value<std::string>(const std::string&, const std::string& text) {
  return text;
}

template <>
int parse_value<int>(const std::string& key, const std::string& text) {
  int v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size())
    throw ConfigError("config key '" + key + "': expected integer, got '" + text + "'");
  return v;
}

template <>
uint64_t parse_value<uint64_t>(const std::string& key, const std::string& text) {
  uint64_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size())
    throw ConfigError("config key '" + key + "': expected unsigned integer, got '" + text + "'");
  return v;
}

template <>
double parse_value<double>(const std::string& key, const std::string& text) {
  try {
    size_t idx = 0;
    double v = std::stod(text, &idx);
    while (idx < text.size() && std::isspace(static_cast<unsigned char>(text[idx]))) ++idx;
    if (idx != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected number, got '" + text + "'");
  }
}

std::string format_value(const std::string& v) { return v; }
std::string format_value(int v) { return std::to_string(v); }
std::string format_value(uint64_t v) { return std::to_string(v); }
std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

struct Entry {
  const char* key;
  const char* desc;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <class T>
Entry make_entry(const char* key, T PipelineConfig::* mem, const char* desc) {
  return Entry{
      key, desc,
      [key, mem](PipelineConfig& c, const std::string& text) { c.*mem = parse_value<T>(key, text); },
      [mem](const PipelineConfig& c) { return format_value(c.*mem); }};
}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = {
      make_entry("style", &PipelineConfig::style, "synthetic hairstyle: straight | wavy | curly"),
      make_entry("guides", &PipelineConfig::guides, "guide strand count for scene synthesis"),
      make_entry("children", &PipelineConfig::children, "child strand count for scene synthesis"),
      make_entry("strand_vertices", &PipelineConfig::strand_vertices, "vertices per strand"),
      make_entry("scalp_radius", &PipelineConfig::scalp_radius, "scalp sphere radius in mm"),
      make_entry("strand_length", &PipelineConfig::strand_length, "nominal strand length in mm"),
      make_entry("views", &PipelineConfig::views, "number of hemisphere cameras"),
      make_entry("image_size", &PipelineConfig::image_size, "square target resolution in px"),
      make_entry("noise_sigma", &PipelineConfig::noise_sigma,
                 "stddev of Gaussian noise added to target gray images"),
      make_entry("seed", &PipelineConfig::seed, "master RNG seed"),
      make_entry("out_dir", &PipelineConfig::out_dir, "output directory (locked per process)"),
      make_entry("width_mm", &PipelineConfig::width_mm, "billboard width in mm for rendering"),
      make_entry("orient_source", &PipelineConfig::orient_source,
                 "2D orientation targets: gabor (filter bank on gray) | exact (projected tangents)"),
      make_entry("gabor_orientations", &PipelineConfig::gabor_orientations,
                 "orientation samples in [0,pi) for the filter bank"),
      make_entry("gabor_wavelengths", &PipelineConfig::gabor_wavelengths,
                 "comma list of filter wavelengths in px"),
      make_entry("gabor_sigma_factor", &PipelineConfig::gabor_sigma_factor,
                 "Gaussian envelope sigma as a fraction of wavelength"),
      make_entry("gabor_conf_floor", &PipelineConfig::gabor_conf_floor,
                 "pixels with confidence at or below this are invalid"),
      make_entry("lift_candidates", &PipelineConfig::lift_candidates,
                 "hemisphere directions scored when lifting 2D orientations to 3D"),
      make_entry("lift_refine_steps", &PipelineConfig::lift_refine_steps,
                 "pattern-search refinement steps after the candidate argmax"),
      make_entry("lift_score_floor", &PipelineConfig::lift_score_floor,
                 "minimum normalized multi-view score to keep a lifted point"),
      make_entry("lift_min_views", &PipelineConfig::lift_min_views,
                 "minimum agreeing views to keep a lifted point"),
      make_entry("lift_stride", &PipelineConfig::lift_stride,
                 "pixel stride when sampling reference views for lifting"),
      make_entry("lift_depth_tol", &PipelineConfig::lift_depth_tol,
                 "mm tolerance between projected and rendered depth"),
      make_entry("meanshift_radius", &PipelineConfig::meanshift_radius,
                 "mm radius for direction mean-shift denoising"),
      make_entry("meanshift_iters", &PipelineConfig::meanshift_iters, "mean-shift iterations"),
      make_entry("downsample_voxel", &PipelineConfig::downsample_voxel,
                 "mm voxel size for cloud downsampling"),
      make_entry("mst_k", &PipelineConfig::mst_k, "kNN graph degree for sign disambiguation"),
      make_entry("mst_restarts", &PipelineConfig::mst_restarts,
                 "random restarts of the spanning-tree sign propagation"),
      make_entry("mst_perturbation", &PipelineConfig::mst_perturbation,
                 "uniform edge-weight perturbation amplitude per restart"),
      make_entry("noise_cutoff_deg", &PipelineConfig::noise_cutoff_deg,
                 "points deviating more than this from their cell representative are dropped"),
      make_entry("init_mode", &PipelineConfig::init_mode,
                 "strand initialization: laplace (flow field) | lines (straight along normals)"),
      make_entry("grid_h", &PipelineConfig::grid_h, "voxel size in mm for the orientation volume"),
      make_entry("sor_omega", &PipelineConfig::sor_omega, "SOR relaxation factor, in [1,2)"),
      make_entry("sor_tol", &PipelineConfig::sor_tol, "SOR stop threshold on the max update"),
      make_entry("sor_max_iter", &PipelineConfig::sor_max_iter, "SOR iteration cap"),
      make_entry("trace_step_factor", &PipelineConfig::trace_step_factor,
                 "streamline step as a fraction of grid_h"),
      make_entry("trace_max_steps", &PipelineConfig::trace_max_steps, "streamline step cap"),
      make_entry("k_guides", &PipelineConfig::k_guides,
                 "extra nearest-neighbor edges per vertex in the guide-stage Laplacian"),
      make_entry("k_children", &PipelineConfig::k_children,
                 "extra nearest-neighbor edges per vertex in the first child stage"),
      make_entry("lambda", &PipelineConfig::lambda, "Laplacian reparameterization strength"),
      make_entry("iters_guides", &PipelineConfig::iters_guides, "guide fit iterations"),
      make_entry("iters_children0", &PipelineConfig::iters_children0,
                 "child fit iterations, coupled stage"),
      make_entry("iters_children1", &PipelineConfig::iters_children1,
                 "child fit iterations, per-strand stage"),
      make_entry("lr", &PipelineConfig::lr, "Adam learning rate"),
      make_entry("beta1", &PipelineConfig::beta1, "Adam first-moment decay"),
      make_entry("beta2", &PipelineConfig::beta2, "Adam second-moment decay"),
      make_entry("adam_eps", &PipelineConfig::adam_eps, "Adam denominator epsilon"),
      make_entry("view_batch", &PipelineConfig::view_batch,
                 "views sampled per iteration (0 = all)"),
      make_entry("checkpoint_every", &PipelineConfig::checkpoint_every,
                 "dump intermediate strand files every N iterations (0 = off)"),
      make_entry("w_stick", &PipelineConfig::w_stick, "weight of the scalp penetration penalty"),
      make_entry("w_root", &PipelineConfig::w_root, "weight of the root anchoring penalty"),
      make_entry("w_c", &PipelineConfig::w_c, "weight of the curvature penalty"),
      make_entry("w_d", &PipelineConfig::w_d, "weight of the depth loss"),
      make_entry("w_m", &PipelineConfig::w_m, "weight of the mask loss"),
      make_entry("w_t", &PipelineConfig::w_t, "weight of the 3D tangent loss"),
      make_entry("w_o", &PipelineConfig::w_o, "weight of the 2D orientation loss"),
      make_entry("sample_spacing", &PipelineConfig::sample_spacing,
                 "mm spacing when resampling strands for evaluation"),
      make_entry("eval_thresholds", &PipelineConfig::eval_thresholds,
                 "comma list of d_mm:a_deg matching thresholds"),
      make_entry("toy_size", &PipelineConfig::toy_size, "toy benchmark image size in px"),
      make_entry("toy_iters", &PipelineConfig::toy_iters, "toy benchmark iteration cap"),
      make_entry("toy_lr", &PipelineConfig::toy_lr, "toy benchmark gradient-descent step"),
      make_entry("toy_widths", &PipelineConfig::toy_widths,
                 "comma list of line widths in px for the toy benchmark"),
  };
  return entries;
}

const Entry* find_entry(const std::string& key) {
  for (const Entry& e : registry())
    if (key == e.key) return &e;
  return nullptr;
}

}  // namespace

void apply_config_line(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  const Entry* e = find_entry(key);
  if (!e) throw ConfigError("unknown config key '" + key + "'");
  e->set(cfg, value);
}

PipelineConfig load_config(const std::string& path) {
  PipelineConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    apply_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void apply_env_overrides(PipelineConfig& cfg) {
  for (const Entry& e : registry()) {
    std::string var = "STRANDOPT_";
    for (const char* p = e.key; *p; ++p)
      var += static_cast<char>(std::toupper(static_cast<unsigned char>(*p)));
    if (const char* val = std::getenv(var.c_str())) e.set(cfg, val);
  }
}

void validate_config(const PipelineConfig& cfg) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid config: " + what);
  };
  require(cfg.style == "straight" || cfg.style == "wavy" || cfg.style == "curly",
          "style must be straight, wavy, or curly");
  require(cfg.orient_source == "gabor" || cfg.orient_source == "exact",
          "orient_source must be gabor or exact");
  require(cfg.guides > 0, "guides must be positive");
  require(cfg.children >= 0, "children must be nonnegative");
  require(cfg.strand_vertices >= 2, "strand_vertices must be at least 2");
  require(cfg.scalp_radius > 0, "scalp_radius must be positive");
  require(cfg.strand_length > 0, "strand_length must be positive");
  require(cfg.views >= 2, "views must be at least 2");
  require(cfg.image_size > 0, "image_size must be positive");
  require(cfg.noise_sigma >= 0, "noise_sigma must be nonnegative");
  require(!cfg.out_dir.empty(), "out_dir must be set");
  require(cfg.width_mm > 0, "width_mm must be positive");
  require(cfg.gabor_orientations > 0, "gabor_orientations must be positive");
  require(cfg.gabor_sigma_factor > 0, "gabor_sigma_factor must be positive");
  for (double w : parse_double_list(cfg.gabor_wavelengths))
    require(w > 0, "gabor_wavelengths must be positive");
  require(cfg.lift_candidates > 0, "lift_candidates must be positive");
  require(cfg.lift_refine_steps >= 0, "lift_refine_steps must be nonnegative");
  require(cfg.lift_min_views >= 1, "lift_min_views must be at least 1");
  require(cfg.lift_stride >= 1, "lift_stride must be at least 1");
  require(cfg.lift_depth_tol > 0, "lift_depth_tol must be positive");
  require(cfg.meanshift_radius > 0, "meanshift_radius must be positive");
  require(cfg.meanshift_iters >= 0, "meanshift_iters must be nonnegative");
  require(cfg.downsample_voxel > 0, "downsample_voxel must be positive");
  require(cfg.mst_k >= 1, "mst_k must be at least 1");
  require(cfg.mst_restarts >= 1, "mst_restarts must be at least 1");
  require(cfg.mst_perturbation >= 0, "mst_perturbation must be nonnegative");
  require(cfg.noise_cutoff_deg > 0 && cfg.noise_cutoff_deg <= 180,
          "noise_cutoff_deg must be in (0,180]");
  require(cfg.init_mode == "laplace" || cfg.init_mode == "lines",
          "init_mode must be laplace or lines");
  require(cfg.grid_h > 0, "grid_h must be positive");
  require(cfg.sor_omega >= 1.0 && cfg.sor_omega < 2.0, "sor_omega must be in [1,2)");
  require(cfg.sor_tol > 0, "sor_tol must be positive");
  require(cfg.sor_max_iter > 0, "sor_max_iter must be positive");
  require(cfg.trace_step_factor > 0, "trace_step_factor must be positive");
  require(cfg.trace_max_steps > 0, "trace_max_steps must be positive");
  require(cfg.k_guides >= 0, "k_guides must be nonnegative");
  require(cfg.k_children >= 0, "k_children must be nonnegative");
  require(cfg.lambda >= 0, "lambda must be nonnegative");
  require(cfg.iters_guides >= 0 && cfg.iters_children0 >= 0 && cfg.iters_children1 >= 0,
          "iteration counts must be nonnegative");
  require(cfg.lr > 0, "lr must be positive");
  require(cfg.beta1 >= 0 && cfg.beta1 < 1, "beta1 must be in [0,1)");
  require(cfg.beta2 >= 0 && cfg.beta2 < 1, "beta2 must be in [0,1)");
  require(cfg.adam_eps > 0, "adam_eps must be positive");
  require(cfg.view_batch >= 0, "view_batch must be nonnegative");
  require(cfg.checkpoint_every >= 0, "checkpoint_every must be nonnegative");
  require(cfg.sample_spacing > 0, "sample_spacing must be positive");
  for (auto [d, a] : parse_thresholds(cfg.eval_thresholds))
    require(d > 0 && a > 0, "eval_thresholds entries must be positive");
  require(cfg.toy_size > 0, "toy_size must be positive");
  require(cfg.toy_iters > 0, "toy_iters must be positive");
  require(cfg.toy_lr >= 0, "toy_lr must be nonnegative");
  for (double w : parse_double_list(cfg.toy_widths)) require(w > 0, "toy_widths must be positive");
}

std::string serialize_config(const PipelineConfig& cfg) {
  std::ostringstream out;
  for (const Entry& e : registry()) out << e.key << " = " << e.get(cfg) << "\n";
  return out.str();
}

std::string config_documentation() {
  const PipelineConfig defaults;
  std::ostringstream out;
  for (const Entry& e : registry())
    out << e.key << " = " << e.get(defaults) << "\n    " << e.desc << "\n";
  return out.str();
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_value<double>("list", item));
  }
  if (out.empty()) throw ConfigError("empty list: '" + csv + "'");
  return out;
}

std::vector<std::pair<double, double>> parse_thresholds(const std::string& spec) {
  std::vector<std::pair<double, double>> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    size_t colon = item.find(':');
    if (colon == std::string::npos)
      throw ConfigError("threshold '" + item + "' must look like d_mm:a_deg");
    out.emplace_back(parse_value<double>("threshold", trim(item.substr(0, colon))),
                     parse_value<double>("threshold", trim(item.substr(colon + 1))));
  }
  if (out.empty()) throw ConfigError("empty threshold list: '" + spec + "'");
  return out;
}

}  // namespace strandopt
