#include "prema/config.hpp"

#include <fstream>
#include <sstream>

namespace prema {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::uint64_t out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad unsigned value for " + key + ": '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad numeric value for " + key + ": '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad boolean value for " + key + ": '" + v + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "global_seed") global_seed = to_u64(key, value);
  else if (key == "class_count") class_count = to_u64(key, value);
  else if (key == "shapes_per_class") shapes_per_class = to_u64(key, value);
  else if (key == "image_size") image_size = to_u64(key, value);
  else if (key == "views") views = to_u64(key, value);
  else if (key == "train_fraction") train_fraction = to_double(key, value);
  else if (key == "data_dir") data_dir = value;
  else if (key == "d_h1") d_h1 = to_u64(key, value);
  else if (key == "d_k") d_k = to_u64(key, value);
  else if (key == "d_h2") d_h2 = to_u64(key, value);
  else if (key == "stage1_epochs") stage1_epochs = to_u64(key, value);
  else if (key == "stage1_lr") stage1_lr = to_double(key, value);
  else if (key == "stage1_anneal") stage1_anneal = to_u64(key, value);
  else if (key == "stage2_epochs") stage2_epochs = to_u64(key, value);
  else if (key == "stage2_lr") stage2_lr = to_double(key, value);
  else if (key == "stage2_anneal") stage2_anneal = to_u64(key, value);
  else if (key == "batch_views") batch_views = to_u64(key, value);
  else if (key == "batch_shapes") batch_shapes = to_u64(key, value);
  else if (key == "train_seed") train_seed = to_u64(key, value);
  else if (key == "variant") variant = value;
  else if (key == "missing") missing = to_u64(key, value);
  else if (key == "occluder_scale") occluder_scale = to_double(key, value);
  else if (key == "clutter") clutter = to_u64(key, value);
  else if (key == "noise_seed") noise_seed = to_u64(key, value);
  else if (key == "split") split = value;
  else if (key == "f1_k") f1_k = to_u64(key, value);
  else if (key == "export_conf") export_conf = to_bool(key, value);
  else if (key == "out_dir") out_dir = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "checkpoint_dtype") checkpoint_dtype = value;
  else if (key == "workers") workers = to_u64(key, value);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("config: cannot open " + path);
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not key=value: '" + t + "'");
    }
    cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  os << "global_seed=" << global_seed << '\n';
  os << "class_count=" << class_count << '\n';
  os << "shapes_per_class=" << shapes_per_class << '\n';
  os << "image_size=" << image_size << '\n';
  os << "views=" << views << '\n';
  os << "train_fraction=" << train_fraction << '\n';
  os << "data_dir=" << data_dir << '\n';
  os << "d_h1=" << d_h1 << '\n';
  os << "d_k=" << d_k << '\n';
  os << "d_h2=" << d_h2 << '\n';
  os << "stage1_epochs=" << stage1_epochs << '\n';
  os << "stage1_lr=" << stage1_lr << '\n';
  os << "stage1_anneal=" << stage1_anneal << '\n';
  os << "stage2_epochs=" << stage2_epochs << '\n';
  os << "stage2_lr=" << stage2_lr << '\n';
  os << "stage2_anneal=" << stage2_anneal << '\n';
  os << "batch_views=" << batch_views << '\n';
  os << "batch_shapes=" << batch_shapes << '\n';
  os << "train_seed=" << train_seed << '\n';
  os << "variant=" << variant << '\n';
  os << "missing=" << missing << '\n';
  os << "occluder_scale=" << occluder_scale << '\n';
  os << "clutter=" << clutter << '\n';
  os << "noise_seed=" << noise_seed << '\n';
  os << "split=" << split << '\n';
  os << "f1_k=" << f1_k << '\n';
  os << "export_conf=" << (export_conf ? "true" : "false") << '\n';
  os << "out_dir=" << out_dir << '\n';
  os << "checkpoint=" << checkpoint << '\n';
  os << "checkpoint_dtype=" << checkpoint_dtype << '\n';
  os << "workers=" << workers << '\n';
  return os.str();
}

GenConfig RunConfig::gen_config() const {
  GenConfig g;
  g.global_seed = global_seed;
  g.class_count = class_count;
  g.shapes_per_class = shapes_per_class;
  g.image_size = image_size;
  g.view_count = views;
  g.train_fraction = train_fraction;
  g.out_dir = data_dir;
  return g;
}

ModelDims RunConfig::model_dims() const {
  ModelDims d;
  d.image_size = image_size;
  d.d_h1 = d_h1;
  d.d_k = d_k;
  d.d_h2 = d_h2;
  d.class_count = class_count;
  return d;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.stage1 = {stage1_epochs, stage1_lr, stage1_anneal, 0.1};
  t.stage2 = {stage2_epochs, stage2_lr, stage2_anneal, 0.1};
  t.batch_views = batch_views;
  t.batch_shapes = batch_shapes;
  t.seed = train_seed;
  t.variant = parse_variant(variant);
  return t;
}

NoiseConfig RunConfig::noise_config() const {
  NoiseConfig n;
  n.missing_view_count = missing;
  n.occluder_scale = occluder_scale;
  n.clutter_count = clutter;
  n.noise_seed = noise_seed;
  return n;
}

}  // namespace prema
