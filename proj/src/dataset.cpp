#include "prema/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace prema {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kCamDist = 3.0;    // reference distance along the view axis
constexpr double kWindow = 1.0;     // half-size of the orthographic window
constexpr double kNear = kCamDist - 1.5;
constexpr double kFar = kCamDist + 1.5;
const double kCosEl = std::sqrt(3.0) / 2.0;  // 30 degree elevation
constexpr double kSinEl = 0.5;
const Vec3 kCenter{0.5, 0.5, 0.5};

Vec3 add3(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 mul3(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }

struct RayHit {
  bool hit = false;
  double t = std::numeric_limits<double>::infinity();
};

// Slab intersection for an orthographic ray; dir components may be zero.
RayHit ray_box(const Vec3& origin, const Vec3& dir, const Box& box) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  const double o[3] = {origin.x, origin.y, origin.z};
  const double d[3] = {dir.x, dir.y, dir.z};
  const double lo[3] = {box.center.x - box.half.x, box.center.y - box.half.y,
                        box.center.z - box.half.z};
  const double hi[3] = {box.center.x + box.half.x, box.center.y + box.half.y,
                        box.center.z + box.half.z};
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-300) {
      if (o[a] < lo[a] || o[a] > hi[a]) return {};
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a];
    double tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return {};
  }
  return {true, t0};
}

double brightness(double t) {
  double v = (kFar - t) / (kFar - kNear);
  return std::clamp(v, 0.0, 1.0);
}

struct AABB {
  Vec3 lo{1e30, 1e30, 1e30};
  Vec3 hi{-1e30, -1e30, -1e30};
  void include(const Box& b) {
    lo.x = std::min(lo.x, b.center.x - b.half.x);
    lo.y = std::min(lo.y, b.center.y - b.half.y);
    lo.z = std::min(lo.z, b.center.z - b.half.z);
    hi.x = std::max(hi.x, b.center.x + b.half.x);
    hi.y = std::max(hi.y, b.center.y + b.half.y);
    hi.z = std::max(hi.z, b.center.z + b.half.z);
  }
  Vec3 center() const { return {(lo.x + hi.x) / 2, (lo.y + hi.y) / 2, (lo.z + hi.z) / 2}; }
  double max_edge() const {
    return std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
  }
};

AABB bounds_of(const std::vector<Box>& parts) {
  AABB b;
  for (const Box& p : parts) b.include(p);
  return b;
}

}  // namespace

bool Image::all_zero() const {
  for (double v : pix) {
    if (v != 0.0) return false;
  }
  return true;
}

std::array<double, 2> circle_point(std::size_t k, std::size_t n) {
  const std::size_t m = k % n;
  if (n % 4 == 0) {
    const std::size_t quarter = n / 4;
    const std::size_t q = m / quarter;
    const std::size_t r = m % quarter;
    const double ang = 2.0 * kPi * static_cast<double>(r) / static_cast<double>(n);
    const double c = std::cos(ang);
    const double s = std::sin(ang);
    switch (q) {
      case 0: return {c, s};
      case 1: return {-s, c};
      case 2: return {-c, -s};
      default: return {s, -c};
    }
  }
  const double ang = 2.0 * kPi * static_cast<double>(m) / static_cast<double>(n);
  return {std::cos(ang), std::sin(ang)};
}

Camera make_camera(std::size_t k, std::size_t n) {
  const auto [ca, sa] = circle_point(k, n);
  Camera cam;
  cam.eye_dir = {kCosEl * ca, kCosEl * sa, kSinEl};
  cam.fwd = {-cam.eye_dir.x, -cam.eye_dir.y, -cam.eye_dir.z};
  cam.right = {-sa, ca, 0.0};
  cam.up = {-ca * kSinEl, -sa * kSinEl, kCosEl};
  return cam;
}

Image render_boxes(const std::vector<Box>& subject, const std::vector<Box>& other,
                   std::size_t k, std::size_t n, std::size_t image_size,
                   std::vector<int>* part_index) {
  const Camera cam = make_camera(k, n);
  const Vec3 base = add3(kCenter, mul3(cam.eye_dir, kCamDist));
  Image img;
  img.height = image_size;
  img.width = image_size;
  img.pix.assign(image_size * image_size, 0.0);
  if (part_index) part_index->assign(image_size * image_size, -1);

  for (std::size_t row = 0; row < image_size; ++row) {
    const double y_ndc = 1.0 - 2.0 * (static_cast<double>(row) + 0.5) / static_cast<double>(image_size);
    for (std::size_t col = 0; col < image_size; ++col) {
      const double x_ndc = 2.0 * (static_cast<double>(col) + 0.5) / static_cast<double>(image_size) - 1.0;
      const Vec3 origin =
          add3(base, add3(mul3(cam.right, x_ndc * kWindow), mul3(cam.up, y_ndc * kWindow)));
      double t_subj = std::numeric_limits<double>::infinity();
      int subj_part = -1;
      for (std::size_t p = 0; p < subject.size(); ++p) {
        const RayHit h = ray_box(origin, cam.fwd, subject[p]);
        if (h.hit && h.t < t_subj) {
          t_subj = h.t;
          subj_part = static_cast<int>(p);
        }
      }
      double t_other = std::numeric_limits<double>::infinity();
      for (const Box& b : other) {
        const RayHit h = ray_box(origin, cam.fwd, b);
        if (h.hit && h.t < t_other) t_other = h.t;
      }
      const std::size_t px = row * image_size + col;
      // Subject wins depth ties; occluders/distractors must be strictly nearer.
      if (subj_part >= 0 && !(t_other < t_subj)) {
        img.pix[px] = brightness(t_subj);
        if (part_index) (*part_index)[px] = subj_part;
      } else if (t_other < std::numeric_limits<double>::infinity()) {
        img.pix[px] = brightness(t_other);
      }
    }
  }
  return img;
}

ViewSequence render_views(const ShapeSpec& spec, std::size_t n, std::size_t image_size) {
  if (spec.parts.empty()) throw std::invalid_argument("render_views: spec has no parts");
  if (spec.discriminant_part_index >= spec.parts.size()) {
    throw std::invalid_argument("render_views: discriminant part index out of range");
  }
  ViewSequence seq;
  seq.shape_id = spec.shape_id;
  seq.views.reserve(n);
  seq.camera_azimuths.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    seq.views.push_back(render_boxes(spec.parts, {}, k, n, image_size));
    seq.camera_azimuths.push_back(2.0 * kPi * static_cast<double>(k) / static_cast<double>(n));
  }
  return seq;
}

std::vector<BBox> view_bboxes(const ShapeSpec& spec, std::size_t n, std::size_t image_size) {
  std::vector<BBox> out;
  out.reserve(n);
  const int want = static_cast<int>(spec.discriminant_part_index);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<int> parts;
    render_boxes(spec.parts, {}, k, n, image_size, &parts);
    double x0 = 1e30, y0 = 1e30, x1 = -1e30, y1 = -1e30;
    bool seen = false;
    for (std::size_t row = 0; row < image_size; ++row) {
      for (std::size_t col = 0; col < image_size; ++col) {
        if (parts[row * image_size + col] == want) {
          seen = true;
          x0 = std::min(x0, static_cast<double>(col));
          x1 = std::max(x1, static_cast<double>(col));
          y0 = std::min(y0, static_cast<double>(row));
          y1 = std::max(y1, static_cast<double>(row));
        }
      }
    }
    if (seen) {
      out.push_back({x0, y0, x1, y1});
    } else {
      out.push_back({0.0, 0.0, -1.0, -1.0});
    }
  }
  return out;
}

ViewSequence apply_view_missing(ViewSequence seq, std::size_t count, std::uint64_t seed) {
  if (count > seq.views.size()) {
    throw std::invalid_argument("apply_view_missing: count exceeds view count");
  }
  Rng rng(seed);
  for (std::size_t idx : rng.sample_indices(seq.views.size(), count)) {
    std::fill(seq.views[idx].pix.begin(), seq.views[idx].pix.end(), 0.0);
  }
  return seq;
}

Box make_occluder(const ShapeSpec& spec, double scale, std::uint64_t seed) {
  const AABB bb = bounds_of(spec.parts);
  const double edge = scale * bb.max_edge();
  Rng rng(hash_seed(seed, spec.shape_id + "/occluder"));
  Vec3 center = bb.center();
  center.x += rng.uniform(-0.2, 0.2);
  center.y += rng.uniform(-0.2, 0.2);
  center.z += rng.uniform(-0.2, 0.2);
  return Box{center, {edge / 2, edge / 2, edge / 2}};
}

namespace {

std::vector<Box> base_parts();
std::vector<Box> class_parts(int class_id, std::size_t class_count);
void jitter_parts(std::vector<Box>& parts, std::size_t discriminant_index, Rng& rng);

// Distractor part-sets for background clutter: shapes of other classes,
// shrunk and re-centered per view behind the subject.
struct Distractor {
  std::vector<Box> parts;  // centered at the origin
  double depth;            // offset along the viewing direction
  double side1, side2;     // lateral offsets in the camera frame
};

double half_diag(const AABB& bb) {
  const double ex = (bb.hi.x - bb.lo.x) / 2;
  const double ey = (bb.hi.y - bb.lo.y) / 2;
  const double ez = (bb.hi.z - bb.lo.z) / 2;
  return std::sqrt(ex * ex + ey * ey + ez * ez);
}

std::vector<Distractor> make_distractors(const ShapeSpec& spec, std::size_t count,
                                         std::uint64_t seed, std::size_t class_count) {
  Rng rng(hash_seed(seed, spec.shape_id + "/clutter"));
  const double subject_radius = half_diag(bounds_of(spec.parts));
  std::vector<Distractor> out;
  for (std::size_t i = 0; i < count; ++i) {
    int cls = static_cast<int>(rng.index(class_count));
    if (class_count > 1) {
      while (cls == spec.class_id) cls = static_cast<int>(rng.index(class_count));
    }
    std::vector<Box> parts = class_parts(cls, class_count);
    jitter_parts(parts, parts.size() - 1, rng);
    const AABB bb = bounds_of(parts);
    const Vec3 c = bb.center();
    Distractor d;
    for (Box b : parts) {
      b.center = mul3(add3(b.center, mul3(c, -1.0)), 0.45);
      b.half = mul3(b.half, 0.45);
      d.parts.push_back(b);
    }
    // Depth offset past both bounding radii keeps every distractor surface
    // strictly behind every subject surface on any shared ray.
    const double own_radius = 0.45 * half_diag(bb);
    d.depth = subject_radius + own_radius + rng.uniform(0.05, 0.35);
    d.side1 = rng.uniform(-0.55, 0.55);
    d.side2 = rng.uniform(-0.35, 0.35);
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Box> place_distractors(const std::vector<Distractor>& ds, const Camera& cam) {
  std::vector<Box> out;
  for (const Distractor& d : ds) {
    const Vec3 at = add3(kCenter, add3(mul3(cam.fwd, d.depth),
                                       add3(mul3(cam.right, d.side1), mul3(cam.up, d.side2))));
    for (Box b : d.parts) {
      b.center = add3(b.center, at);
      out.push_back(b);
    }
  }
  return out;
}

ViewSequence render_scene(const ShapeSpec& spec, const std::vector<Box>& occluders,
                          const std::vector<Distractor>& distractors, std::size_t n,
                          std::size_t image_size) {
  ViewSequence seq;
  seq.shape_id = spec.shape_id;
  seq.views.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<Box> other = occluders;
    if (!distractors.empty()) {
      const Camera cam = make_camera(k, n);
      std::vector<Box> placed = place_distractors(distractors, cam);
      other.insert(other.end(), placed.begin(), placed.end());
    }
    seq.views.push_back(render_boxes(spec.parts, other, k, n, image_size));
    seq.camera_azimuths.push_back(2.0 * kPi * static_cast<double>(k) / static_cast<double>(n));
  }
  return seq;
}

}  // namespace

ViewSequence apply_occlusion(const ShapeSpec& spec, double occluder_scale, std::uint64_t seed,
                             std::size_t n, std::size_t image_size) {
  if (occluder_scale < 0) throw std::invalid_argument("apply_occlusion: negative scale");
  std::vector<Box> occ;
  if (occluder_scale > 0) occ.push_back(make_occluder(spec, occluder_scale, seed));
  return render_scene(spec, occ, {}, n, image_size);
}

ViewSequence apply_clutter(const ShapeSpec& spec, std::size_t clutter_count, std::uint64_t seed,
                           std::size_t n, std::size_t image_size, std::size_t class_count) {
  return render_scene(spec, {}, make_distractors(spec, clutter_count, seed, class_count), n,
                      image_size);
}

ViewSequence render_noisy(const ShapeSpec& spec, const NoiseConfig& noise, std::size_t n,
                          std::size_t image_size, std::size_t class_count) {
  std::vector<Box> occ;
  if (noise.occluder_scale > 0) {
    occ.push_back(make_occluder(spec, noise.occluder_scale, noise.noise_seed));
  }
  std::vector<Distractor> ds;
  if (noise.clutter_count > 0) {
    ds = make_distractors(spec, noise.clutter_count, noise.noise_seed, class_count);
  }
  ViewSequence seq = render_scene(spec, occ, ds, n, image_size);
  if (noise.missing_view_count > 0) {
    seq = apply_view_missing(std::move(seq), noise.missing_view_count,
                             hash_seed(noise.noise_seed, spec.shape_id + "/missing"));
  }
  return seq;
}

// ---- shape construction ----

namespace {

std::vector<Box> base_parts() {
  return {
      Box{{0.5, 0.5, 0.36}, {0.20, 0.20, 0.10}},  // body slab, shared by all classes
  };
}

// The discriminant "arm": size and aspect separate classes in any single
// pooled view; the azimuthal position (opposite corners) only resolves
// through the ordered view sequence. Class ids above 7 repeat the pattern on
// a tighter radius.
std::vector<Box> class_parts(int class_id, std::size_t class_count) {
  if (class_count < 2 || class_count > 16) {
    throw std::invalid_argument("class_count must be in [2,16]");
  }
  std::vector<Box> parts = base_parts();
  const bool large = class_id % 2 == 1;
  const bool tall = (class_id / 2) % 2 == 1;
  const bool sw = (class_id / 4) % 2 == 1;
  const double radius = class_id < 8 ? 0.34 : 0.25;
  const double ang = kPi / 4.0 + (sw ? kPi : 0.0);
  const double cx = 0.5 + radius * std::cos(ang);
  const double cy = 0.5 + radius * std::sin(ang);
  const double s = large ? 1.45 : 1.0;
  const Vec3 half = tall ? Vec3{0.085 * s, 0.085 * s, 0.20 * s}
                         : Vec3{0.18 * s, 0.18 * s, 0.05 * s};
  parts.push_back(Box{{cx, cy, 0.66}, half});
  return parts;
}

// Per-shape variation, within the 10%-of-extents budget. Shared parts wobble
// at the full rate; the discriminant part stays nearly rigid, so it is the
// stable signal recurring across views while the body acts as nuisance.
void jitter_parts(std::vector<Box>& parts, std::size_t discriminant_index, Rng& rng) {
  for (std::size_t i = 0; i < parts.size(); ++i) {
    Box& b = parts[i];
    const double rate = i == discriminant_index ? 0.02 : 0.10;
    b.center.x += rng.uniform(-rate, rate) * b.half.x;
    b.center.y += rng.uniform(-rate, rate) * b.half.y;
    b.center.z += rng.uniform(-rate, rate) * b.half.z;
    b.half.x *= 1.0 + rng.uniform(-rate, rate);
    b.half.y *= 1.0 + rng.uniform(-rate, rate);
    b.half.z *= 1.0 + rng.uniform(-rate, rate);
  }
}

}  // namespace

// Index-first ids: lexicographic order (the ranking tie-break) interleaves
// classes instead of grouping them.
std::string shape_id_of(int class_id, int shape_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%03d_c%02d", shape_index, class_id);
  return buf;
}

std::string class_name(int class_id) {
  std::string name = "arm_";
  name += ((class_id / 4) % 2 == 1) ? "sw" : "ne";
  name += ((class_id / 2) % 2 == 1) ? "_tall" : "_flat";
  name += (class_id % 2 == 1) ? "_large" : "_small";
  if (class_id >= 8) name += "_inner";
  return name;
}

ShapeSpec make_shape_spec(std::uint64_t global_seed, int class_id, int shape_index,
                          std::size_t class_count) {
  ShapeSpec spec;
  spec.shape_id = shape_id_of(class_id, shape_index);
  spec.class_id = class_id;
  spec.parts = class_parts(class_id, class_count);
  spec.discriminant_part_index = spec.parts.size() - 1;
  spec.jitter_seed = hash_seed(global_seed, spec.shape_id);
  Rng rng(spec.jitter_seed);
  jitter_parts(spec.parts, spec.discriminant_part_index, rng);
  return spec;
}

ShapeSpec spec_from_id(std::uint64_t global_seed, const std::string& shape_id,
                       std::size_t class_count) {
  int class_id = 0, index = 0;
  if (std::sscanf(shape_id.c_str(), "s%d_c%d", &index, &class_id) != 2) {
    throw std::invalid_argument("spec_from_id: malformed shape id '" + shape_id + "'");
  }
  return make_shape_spec(global_seed, class_id, index, class_count);
}

DatasetManifest generate_dataset(const GenConfig& config) {
  if (config.class_count < 2) throw std::invalid_argument("generate_dataset: class_count must be >= 2");
  if (config.shapes_per_class < 2) {
    throw std::invalid_argument("generate_dataset: shapes_per_class must be >= 2");
  }
  if (config.train_fraction <= 0.0 || config.train_fraction >= 1.0) {
    throw std::invalid_argument("generate_dataset: train_fraction must be in (0,1)");
  }

  DatasetManifest manifest;
  manifest.global_seed = config.global_seed;
  manifest.view_count = config.view_count;
  manifest.image_size = config.image_size;
  manifest.base_dir = config.out_dir;
  for (std::size_t c = 0; c < config.class_count; ++c) {
    manifest.class_names.push_back(class_name(static_cast<int>(c)));
  }

  std::error_code ec;
  fs::create_directories(fs::path(config.out_dir) / "views", ec);
  if (ec) throw io_error("generate_dataset: cannot create " + config.out_dir + ": " + ec.message());

  const std::size_t spc = config.shapes_per_class;
  std::size_t train_count = static_cast<std::size_t>(
      std::llround(config.train_fraction * static_cast<double>(spc)));
  train_count = std::clamp<std::size_t>(train_count, 1, spc - 1);

  for (std::size_t c = 0; c < config.class_count; ++c) {
    for (std::size_t s = 0; s < spc; ++s) {
      const ShapeSpec spec = make_shape_spec(config.global_seed, static_cast<int>(c),
                                             static_cast<int>(s), config.class_count);
      const ViewSequence seq = render_views(spec, config.view_count, config.image_size);
      ManifestRecord rec;
      rec.shape_id = spec.shape_id;
      rec.class_id = spec.class_id;
      rec.split = s < train_count ? "train" : "test";
      rec.bboxes = view_bboxes(spec, config.view_count, config.image_size);
      for (std::size_t k = 0; k < config.view_count; ++k) {
        char name[48];
        std::snprintf(name, sizeof(name), "views/%s_v%02zu.pvwi", spec.shape_id.c_str(), k);
        save_image((fs::path(config.out_dir) / name).string(), seq.views[k]);
        rec.view_paths.emplace_back(name);
      }
      manifest.records.push_back(std::move(rec));
    }
  }
  save_manifest((fs::path(config.out_dir) / "manifest.jsonl").string(), manifest);
  return manifest;
}

// ---- files ----

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void save_image(const std::string& path, const Image& img) {
  std::string buf;
  buf.reserve(16 + img.pix.size() * 4);
  buf += "PVWI";
  put_u32(buf, 1);
  put_u32(buf, static_cast<std::uint32_t>(img.height));
  put_u32(buf, static_cast<std::uint32_t>(img.width));
  for (double v : img.pix) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(buf, bits);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("save_image: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw io_error("save_image: write failed for " + path);
}

Image load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("load_image: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 16 || buf.compare(0, 4, "PVWI") != 0) {
    throw io_error("load_image: bad magic in " + path);
  }
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  const std::uint32_t version = get_u32(p + 4);
  if (version != 1) throw io_error("load_image: unsupported version in " + path);
  Image img;
  img.height = get_u32(p + 8);
  img.width = get_u32(p + 12);
  const std::size_t count = img.height * img.width;
  if (buf.size() != 16 + count * 4) throw io_error("load_image: truncated file " + path);
  img.pix.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t bits = get_u32(p + 16 + i * 4);
    float f;
    std::memcpy(&f, &bits, 4);
    img.pix[i] = static_cast<double>(f);
  }
  return img;
}

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("save_manifest: cannot open " + path);
  json header;
  header["global_seed"] = manifest.global_seed;
  header["class_names"] = manifest.class_names;
  header["view_count"] = manifest.view_count;
  header["image_size"] = manifest.image_size;
  out << header.dump() << '\n';
  for (const ManifestRecord& rec : manifest.records) {
    json j;
    j["shape_id"] = rec.shape_id;
    j["class_id"] = rec.class_id;
    j["split"] = rec.split;
    j["views"] = rec.view_paths;
    j["bboxes"] = rec.bboxes;
    out << j.dump() << '\n';
  }
  if (!out) throw io_error("save_manifest: write failed for " + path);
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("load_manifest: cannot open " + path);
  DatasetManifest manifest;
  manifest.base_dir = fs::path(path).parent_path().string();
  if (manifest.base_dir.empty()) manifest.base_dir = ".";
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw io_error("load_manifest: bad JSON line in " + path);
    if (first && j.contains("global_seed")) {
      manifest.global_seed = j["global_seed"].get<std::uint64_t>();
      manifest.class_names = j["class_names"].get<std::vector<std::string>>();
      manifest.view_count = j["view_count"].get<std::size_t>();
      manifest.image_size = j["image_size"].get<std::size_t>();
      first = false;
      continue;
    }
    first = false;
    ManifestRecord rec;
    rec.shape_id = j["shape_id"].get<std::string>();
    rec.class_id = j["class_id"].get<int>();
    rec.split = j["split"].get<std::string>();
    rec.view_paths = j["views"].get<std::vector<std::string>>();
    for (const auto& b : j["bboxes"]) {
      rec.bboxes.push_back({b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                            b[3].get<double>()});
    }
    manifest.records.push_back(std::move(rec));
  }
  for (const ManifestRecord& rec : manifest.records) {
    for (const std::string& rel : rec.view_paths) {
      const fs::path p = fs::path(manifest.base_dir) / rel;
      if (!fs::exists(p)) throw io_error("load_manifest: missing view file " + p.string());
    }
  }
  return manifest;
}

}  // namespace prema
