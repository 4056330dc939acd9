#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prema/aggregator.hpp"
#include "prema/dataset.hpp"

namespace prema {

// Step-function learning-rate schedule: base_lr until the anneal epoch,
// base_lr * factor from there on. Epochs are 1-based.
struct StageSchedule {
  std::size_t epochs = 0;
  double base_lr = 0.01;
  std::size_t anneal_epoch = 10;
  double factor = 0.1;

  double lr(std::size_t epoch) const {
    if (epoch == 0) throw std::invalid_argument("StageSchedule::lr: epochs are 1-based");
    return epoch >= anneal_epoch ? base_lr * factor : base_lr;
  }
};

struct TrainConfig {
  StageSchedule stage1{20, 0.01, 10, 0.1};
  StageSchedule stage2{30, 0.001, 20, 0.1};
  std::size_t batch_views = 32;   // stage 1: independent views per step
  std::size_t batch_shapes = 4;   // stage 2: sequences per step
  std::uint64_t seed = 1;
  AggregationVariant variant = AggregationVariant::Prema;
};

struct TrainLogRow {
  int stage = 1;
  std::size_t epoch = 0;
  double lr = 0;
  double mean_loss = 0;
};

// Dataset pulled into memory once; images stay as raw pixel buffers and are
// wrapped into tensors per use.
struct LoadedShape {
  std::string shape_id;
  int class_id = 0;
  std::string split;
  std::vector<Image> views;
  std::vector<BBox> bboxes;
};

struct LoadedDataset {
  std::vector<LoadedShape> shapes;
  std::uint64_t global_seed = 0;
  std::size_t class_count = 0;
  std::size_t view_count = 12;
  std::size_t image_size = 32;

  std::vector<std::size_t> split_indices(const std::string& split) const;
};

LoadedDataset load_dataset(const DatasetManifest& manifest);

Tensor image_tensor(const Image& img);

// Stage-1 model: the shared encoder plus a throwaway per-view linear head.
struct Stage1Model {
  CnnEncoderParams encoder;
  Tensor head_w;  // class_count x C_v
  Tensor head_b;  // class_count
};

Stage1Model make_stage1_model(std::uint64_t seed, const ModelDims& dims);

// Mean per-view cross-entropy over a split, no updates.
double stage1_mean_loss(const Stage1Model& model, const LoadedDataset& data,
                        const std::string& split);

struct Stage1Result {
  CnnEncoderParams encoder;
  std::size_t steps = 0;
};

// Stage 1: every view is an independent classification sample; the head is
// discarded afterwards.
Stage1Result train_stage1(const TrainConfig& config, const LoadedDataset& data,
                          const ModelDims& dims, std::vector<TrainLogRow>* log = nullptr);

// Stage 2: full-sequence training of the aggregation network, encoder
// initialized from stage 1.
PremaParams train_stage2(const TrainConfig& config, const LoadedDataset& data,
                         const ModelDims& dims, const CnnEncoderParams& stage1_encoder,
                         std::vector<TrainLogRow>* log = nullptr);

}  // namespace prema
