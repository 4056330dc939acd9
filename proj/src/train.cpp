#include "prema/train.hpp"

#include <filesystem>

namespace fs = std::filesystem;

namespace prema {

std::vector<std::size_t> LoadedDataset::split_indices(const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (shapes[i].split == split) out.push_back(i);
  }
  return out;
}

LoadedDataset load_dataset(const DatasetManifest& manifest) {
  LoadedDataset data;
  data.global_seed = manifest.global_seed;
  data.class_count = manifest.class_names.size();
  data.view_count = manifest.view_count;
  data.image_size = manifest.image_size;
  data.shapes.reserve(manifest.records.size());
  for (const ManifestRecord& rec : manifest.records) {
    LoadedShape s;
    s.shape_id = rec.shape_id;
    s.class_id = rec.class_id;
    s.split = rec.split;
    s.bboxes = rec.bboxes;
    for (const std::string& rel : rec.view_paths) {
      s.views.push_back(load_image((fs::path(manifest.base_dir) / rel).string()));
    }
    data.shapes.push_back(std::move(s));
  }
  return data;
}

Tensor image_tensor(const Image& img) {
  return Tensor::from({1, img.height, img.width}, img.pix);
}

Stage1Model make_stage1_model(std::uint64_t seed, const ModelDims& dims) {
  Rng rng(hash_seed(seed, "stage1/init"));
  Stage1Model m;
  m.encoder = CnnEncoderParams::init(dims.image_size, rng);
  const std::size_t c_v = m.encoder.feature_dim();
  // Small head: keeps the pre-training loss near ln(C) for any feature scale
  // underneath, while nonzero rows still pass gradient to the encoder from
  // the first step.
  m.head_w = Tensor::glorot({dims.class_count, c_v}, c_v, dims.class_count, rng, true);
  for (double& v : m.head_w.data()) v *= 0.25;
  m.head_b = Tensor::zeros({dims.class_count}, true);
  return m;
}

namespace {

Tensor view_loss(const Stage1Model& model, const Image& img, int label) {
  const ViewFeatures vf = cnn_encode(model.encoder, image_tensor(img));
  const Tensor logits = add(matmul(model.head_w, vf.v), model.head_b);
  return cross_entropy(logits, static_cast<std::size_t>(label));
}

Tensor mean_of(std::vector<Tensor> losses) {
  Tensor total = losses.front();
  for (std::size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
  return scale(total, 1.0 / static_cast<double>(losses.size()));
}

}  // namespace

double stage1_mean_loss(const Stage1Model& model, const LoadedDataset& data,
                        const std::string& split) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t idx : data.split_indices(split)) {
    const LoadedShape& s = data.shapes[idx];
    for (const Image& img : s.views) {
      acc += view_loss(model, img, s.class_id).item();
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("stage1_mean_loss: empty split '" + split + "'");
  return acc / static_cast<double>(n);
}

Stage1Result train_stage1(const TrainConfig& config, const LoadedDataset& data,
                          const ModelDims& dims, std::vector<TrainLogRow>* log) {
  const std::vector<std::size_t> train = data.split_indices("train");
  if (train.empty()) throw std::invalid_argument("train_stage1: train split is empty");

  Stage1Model model = make_stage1_model(config.seed, dims);
  std::vector<Tensor> params = model.encoder.all();
  params.push_back(model.head_w);
  params.push_back(model.head_b);

  // (shape, view) sample pool.
  std::vector<std::pair<std::size_t, std::size_t>> samples;
  for (std::size_t idx : train) {
    for (std::size_t v = 0; v < data.shapes[idx].views.size(); ++v) samples.emplace_back(idx, v);
  }

  Rng shuffle_rng(hash_seed(config.seed, "stage1/shuffle"));
  std::size_t steps = 0;
  for (std::size_t epoch = 1; epoch <= config.stage1.epochs; ++epoch) {
    const double lr = config.stage1.lr(epoch);
    shuffle_rng.shuffle(samples);
    double epoch_loss = 0.0;
    for (std::size_t at = 0; at < samples.size(); at += config.batch_views) {
      const std::size_t end = std::min(at + config.batch_views, samples.size());
      std::vector<Tensor> losses;
      losses.reserve(end - at);
      for (std::size_t i = at; i < end; ++i) {
        const LoadedShape& s = data.shapes[samples[i].first];
        losses.push_back(view_loss(model, s.views[samples[i].second], s.class_id));
      }
      const Tensor loss = mean_of(std::move(losses));
      epoch_loss += loss.item() * static_cast<double>(end - at);
      backward(loss);
      sgd_step(params, lr);
      ++steps;
    }
    if (log) {
      log->push_back({1, epoch, lr, epoch_loss / static_cast<double>(samples.size())});
    }
  }
  return Stage1Result{model.encoder, steps};
}

namespace {

void copy_values(const Tensor& from, Tensor& to) {
  if (from.shape() != to.shape()) {
    throw shape_error("encoder handoff: shape mismatch " + shape_str(from.shape()) + " vs " +
                      shape_str(to.shape()));
  }
  to.data() = from.data();
}

void adopt_encoder(PremaParams& params, const CnnEncoderParams& encoder) {
  if (params.encoder.stages.size() != encoder.stages.size()) {
    throw shape_error("encoder handoff: stage count mismatch");
  }
  for (std::size_t s = 0; s < encoder.stages.size(); ++s) {
    copy_values(encoder.stages[s].kernel, params.encoder.stages[s].kernel);
    copy_values(encoder.stages[s].bias, params.encoder.stages[s].bias);
  }
  copy_values(encoder.head_w, params.encoder.head_w);
  copy_values(encoder.head_b, params.encoder.head_b);
}

}  // namespace

PremaParams train_stage2(const TrainConfig& config, const LoadedDataset& data,
                         const ModelDims& dims, const CnnEncoderParams& stage1_encoder,
                         std::vector<TrainLogRow>* log) {
  const std::vector<std::size_t> train = data.split_indices("train");
  if (train.empty()) throw std::invalid_argument("train_stage2: train split is empty");

  Rng init_rng(hash_seed(config.seed, "stage2/init"));
  PremaParams params = PremaParams::init(dims, config.variant, init_rng);
  adopt_encoder(params, stage1_encoder);
  const std::vector<Tensor> trainable = params.all();

  std::vector<std::size_t> order = train;
  Rng shuffle_rng(hash_seed(config.seed, "stage2/shuffle"));
  for (std::size_t epoch = 1; epoch <= config.stage2.epochs; ++epoch) {
    const double lr = config.stage2.lr(epoch);
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t at = 0; at < order.size(); at += config.batch_shapes) {
      const std::size_t end = std::min(at + config.batch_shapes, order.size());
      std::vector<Tensor> losses;
      losses.reserve(end - at);
      for (std::size_t i = at; i < end; ++i) {
        const LoadedShape& s = data.shapes[order[i]];
        std::vector<ViewFeatures> views;
        views.reserve(s.views.size());
        for (const Image& img : s.views) {
          views.push_back(cnn_encode(params.encoder, image_tensor(img)));
        }
        auto [descriptor, traces] = aggregate(params, views, s.shape_id);
        const Tensor logits = classify(params, descriptor);
        losses.push_back(cross_entropy(logits, static_cast<std::size_t>(s.class_id)));
      }
      const Tensor loss = mean_of(std::move(losses));
      epoch_loss += loss.item() * static_cast<double>(end - at);
      backward(loss);
      sgd_step(trainable, lr);
    }
    if (log) {
      log->push_back({2, epoch, lr, epoch_loss / static_cast<double>(order.size())});
    }
  }
  return params;
}

}  // namespace prema
