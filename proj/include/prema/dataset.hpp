#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prema/common.hpp"

namespace prema {

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

// Axis-aligned box: center plus half extents.
struct Box {
  Vec3 center;
  Vec3 half;
};

// One parametric shape: a handful of axis-aligned boxes inside the unit
// cube. The discriminant part is the box whose placement distinguishes the
// class; everything else is shared across classes up to jitter.
struct ShapeSpec {
  std::string shape_id;
  int class_id = 0;
  std::vector<Box> parts;
  std::size_t discriminant_part_index = 0;
  std::uint64_t jitter_seed = 0;
};

struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pix;  // row-major, values in [0,1]

  bool all_zero() const;
};

struct ViewSequence {
  std::string shape_id;
  std::vector<Image> views;
  std::vector<double> camera_azimuths;
};

struct NoiseConfig {
  std::size_t missing_view_count = 0;
  double occluder_scale = 0.0;  // 0 = off; paper sweep 0.8..1.4
  std::size_t clutter_count = 0;
  std::uint64_t noise_seed = 0;
};

// [x0, y0, x1, y1] in continuous pixel coordinates; x1 < x0 encodes an
// empty box (part not visible in that view).
using BBox = std::array<double, 4>;
inline bool bbox_empty(const BBox& b) { return b[2] < b[0] || b[3] < b[1]; }

struct ManifestRecord {
  std::string shape_id;
  int class_id = 0;
  std::string split;  // "train" | "test"
  std::vector<std::string> view_paths;  // relative to the manifest directory
  std::vector<BBox> bboxes;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::uint64_t global_seed = 0;
  std::vector<std::string> class_names;
  std::size_t view_count = 12;
  std::size_t image_size = 32;
  std::string base_dir;  // set on load; not serialized
};

struct GenConfig {
  std::uint64_t global_seed = 7;
  std::size_t class_count = 8;
  std::size_t shapes_per_class = 40;
  std::size_t image_size = 32;
  std::size_t view_count = 12;
  double train_fraction = 0.8;
  std::string out_dir = "data";
};

// ---- cameras / rendering ----

// (cos, sin) of 2*pi*k/n with exact quarter-turn symmetry when 4 | n.
std::array<double, 2> circle_point(std::size_t k, std::size_t n);

struct Camera {
  Vec3 eye_dir;  // unit vector from scene center toward the camera
  Vec3 fwd, right, up;
};

Camera make_camera(std::size_t k, std::size_t n);

// Orthographic depth render of a box soup from azimuth 2*pi*k/n at 30 deg
// elevation. Pixel = (far - t_hit) / (far - near); 0 where nothing is hit.
// part_index, when given, receives the nearest *subject* part id per pixel
// (-1 for background / non-subject geometry).
Image render_boxes(const std::vector<Box>& subject, const std::vector<Box>& other,
                   std::size_t k, std::size_t n, std::size_t image_size,
                   std::vector<int>* part_index = nullptr);

ViewSequence render_views(const ShapeSpec& spec, std::size_t n, std::size_t image_size);

// Tight pixel bbox of the visible discriminant-part pixels per clean view.
std::vector<BBox> view_bboxes(const ShapeSpec& spec, std::size_t n, std::size_t image_size);

// ---- noise protocols ----

ViewSequence apply_view_missing(ViewSequence seq, std::size_t count, std::uint64_t seed);
ViewSequence apply_occlusion(const ShapeSpec& spec, double occluder_scale, std::uint64_t seed,
                             std::size_t n, std::size_t image_size);
ViewSequence apply_clutter(const ShapeSpec& spec, std::size_t clutter_count, std::uint64_t seed,
                           std::size_t n, std::size_t image_size, std::size_t class_count);
// All three protocols composed: occluder and distractors enter the 3D scene,
// then the selected views are blacked out.
ViewSequence render_noisy(const ShapeSpec& spec, const NoiseConfig& noise, std::size_t n,
                          std::size_t image_size, std::size_t class_count);

// Occluder cube for a spec (exposed for tests).
Box make_occluder(const ShapeSpec& spec, double scale, std::uint64_t seed);

// ---- generation ----

// Deterministic spec for shape `index` of `class_id`; the same function the
// generator uses, so specs can be rebuilt from (global_seed, shape_id).
ShapeSpec make_shape_spec(std::uint64_t global_seed, int class_id, int shape_index,
                          std::size_t class_count);
ShapeSpec spec_from_id(std::uint64_t global_seed, const std::string& shape_id,
                       std::size_t class_count);
std::string shape_id_of(int class_id, int shape_index);
std::string class_name(int class_id);

DatasetManifest generate_dataset(const GenConfig& config);

// ---- files ----

void save_image(const std::string& path, const Image& img);
Image load_image(const std::string& path);

void save_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::string& path);  // checks view files exist

}  // namespace prema
