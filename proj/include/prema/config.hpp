#pragma once

#include <cstdint>
#include <string>

#include "prema/dataset.hpp"
#include "prema/train.hpp"

namespace prema {

// Flat key=value run configuration. Every knob of every command lives here;
// unknown keys are rejected so typos fail loudly.
struct RunConfig {
  // dataset
  std::uint64_t global_seed = 7;
  std::size_t class_count = 8;
  std::size_t shapes_per_class = 40;
  std::size_t image_size = 32;
  std::size_t views = 12;
  double train_fraction = 0.8;
  std::string data_dir = "data";

  // model dims
  std::size_t d_h1 = 32;
  std::size_t d_k = 32;
  std::size_t d_h2 = 64;

  // training
  std::size_t stage1_epochs = 20;
  double stage1_lr = 0.01;
  std::size_t stage1_anneal = 10;
  std::size_t stage2_epochs = 30;
  double stage2_lr = 0.001;
  std::size_t stage2_anneal = 20;
  std::size_t batch_views = 32;
  std::size_t batch_shapes = 4;
  std::uint64_t train_seed = 1;
  std::string variant = "PREMA";

  // evaluation noise
  std::size_t missing = 0;
  double occluder_scale = 0.0;
  std::size_t clutter = 0;
  std::uint64_t noise_seed = 99;

  // evaluation
  std::string split = "test";
  std::size_t f1_k = 10;
  bool export_conf = false;

  // io
  std::string out_dir = "out";
  std::string checkpoint;  // path for evaluate/robust
  std::string checkpoint_dtype = "f64";
  std::size_t workers = 2;

  static RunConfig load(const std::string& path);
  void set(const std::string& key, const std::string& value);  // unknown key -> invalid_argument
  std::string serialize() const;  // fully-resolved key=value dump

  GenConfig gen_config() const;
  ModelDims model_dims() const;
  TrainConfig train_config() const;
  NoiseConfig noise_config() const;
};

}  // namespace prema
