#include "prema/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>

namespace prema {

std::vector<std::size_t> missing_indices(const NoiseConfig& noise, const std::string& shape_id,
                                         std::size_t view_count) {
  if (noise.missing_view_count == 0) return {};
  Rng rng(hash_seed(noise.noise_seed, shape_id + "/missing"));
  return rng.sample_indices(view_count, noise.missing_view_count);
}

std::vector<EmbeddedShape> embed_split(const PremaParams& params, const LoadedDataset& data,
                                       const std::string& split, const NoiseConfig& noise,
                                       bool keep_conf, std::size_t workers) {
  const std::vector<std::size_t> indices = data.split_indices(split);
  if (indices.empty()) throw std::invalid_argument("embed_split: empty split '" + split + "'");
  const PremaParams frozen = params.detached();
  const bool rerender = noise.occluder_scale > 0 || noise.clutter_count > 0;

  std::vector<EmbeddedShape> out(indices.size());
  parallel_for(indices.size(), workers, [&](std::size_t slot) {
    const LoadedShape& shape = data.shapes[indices[slot]];
    EmbeddedShape& e = out[slot];
    e.shape_id = shape.shape_id;
    e.class_id = shape.class_id;
    e.view_missing.assign(shape.views.size(), 0);

    std::vector<Image> images;
    if (rerender) {
      const ShapeSpec spec = spec_from_id(data.global_seed, shape.shape_id, data.class_count);
      images = render_noisy(spec, noise, shape.views.size(), data.image_size, data.class_count)
                   .views;
    } else {
      images = shape.views;
      for (std::size_t idx : missing_indices(noise, shape.shape_id, images.size())) {
        std::fill(images[idx].pix.begin(), images[idx].pix.end(), 0.0);
      }
    }
    for (std::size_t idx : missing_indices(noise, shape.shape_id, images.size())) {
      e.view_missing[idx] = 1;
    }

    std::vector<ViewFeatures> views;
    views.reserve(images.size());
    for (const Image& img : images) {
      views.push_back(cnn_encode(frozen.encoder, image_tensor(img)));
    }
    auto [descriptor, traces] = aggregate(frozen, views, shape.shape_id);
    e.descriptor = descriptor.D.data();
    double norm2 = 0.0;
    for (double v : e.descriptor) norm2 += v * v;
    e.zero_norm = norm2 == 0.0;
    if (keep_conf) {
      for (const PremaStepTrace& tr : traces) {
        if (tr.conf.conf.defined()) e.conf_maps.push_back(tr.conf.conf.data());
      }
    }
  });
  return out;
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b, bool a_zero,
              bool b_zero) {
  if (a_zero || b_zero) return 0.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

std::vector<RetrievalResult> rank_results(const std::vector<EmbeddedShape>& shapes) {
  // Fixed query order (ascending shape id) for reproducible reports.
  std::vector<std::size_t> order(shapes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return shapes[a].shape_id < shapes[b].shape_id;
  });

  std::vector<RetrievalResult> results;
  results.reserve(shapes.size());
  for (std::size_t qi : order) {
    const EmbeddedShape& q = shapes[qi];
    if (q.zero_norm) {
      std::cerr << "[eval] zero-norm descriptor for query " << q.shape_id << "\n";
    }
    struct Entry {
      double score;
      std::size_t idx;
    };
    std::vector<Entry> entries;
    entries.reserve(shapes.size() - 1);
    for (std::size_t gi = 0; gi < shapes.size(); ++gi) {
      if (gi == qi) continue;
      entries.push_back(
          {cosine(q.descriptor, shapes[gi].descriptor, q.zero_norm, shapes[gi].zero_norm), gi});
    }
    std::sort(entries.begin(), entries.end(), [&](const Entry& a, const Entry& b) {
      if (a.score != b.score) return a.score > b.score;
      return shapes[a.idx].shape_id < shapes[b.idx].shape_id;
    });
    RetrievalResult r;
    r.query_id = q.shape_id;
    r.query_class = q.class_id;
    for (const Entry& e : entries) {
      r.ranked_ids.push_back(shapes[e.idx].shape_id);
      r.scores.push_back(e.score);
      r.relevant.push_back(shapes[e.idx].class_id == q.class_id ? 1 : 0);
    }
    results.push_back(std::move(r));
  }
  return results;
}

std::pair<double, double> compute_accuracy(const PremaParams& params,
                                           const std::vector<EmbeddedShape>& shapes) {
  const PremaParams frozen = params.detached();
  std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // class -> (correct, total)
  std::size_t correct = 0;
  for (const EmbeddedShape& e : shapes) {
    ShapeDescriptor d{Tensor::from({e.descriptor.size()}, e.descriptor), frozen.variant,
                      e.shape_id};
    const Tensor logits = classify(frozen, d);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
      if (logits.at(i) > logits.at(arg)) arg = i;
    }
    const bool ok = static_cast<int>(arg) == e.class_id;
    correct += ok;
    auto& slot = per_class[e.class_id];
    slot.first += ok;
    slot.second += 1;
  }
  const double per_instance =
      shapes.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(shapes.size());
  double recall_sum = 0.0;
  std::size_t classes = 0;
  for (const auto& [cls, counts] : per_class) {
    if (counts.second == 0) {
      std::cerr << "[eval] class " << cls << " absent from split, skipped in per-class mean\n";
      continue;
    }
    recall_sum += static_cast<double>(counts.first) / static_cast<double>(counts.second);
    ++classes;
  }
  const double per_class_mean = classes ? recall_sum / static_cast<double>(classes) : 0.0;
  return {per_instance, per_class_mean};
}

LocalizationReport attention_localization_score(const PremaParams& params,
                                                const LoadedDataset& data,
                                                const std::string& split,
                                                const std::vector<EmbeddedShape>& embedded) {
  if (!params.has_rau()) {
    throw std::invalid_argument("attention_localization_score: variant has no attention unit");
  }
  const std::size_t grid = params.encoder.middle_side();
  const std::size_t img = data.image_size;
  const double cell = static_cast<double>(img) / static_cast<double>(grid);

  std::map<std::string, const LoadedShape*> by_id;
  for (std::size_t idx : data.split_indices(split)) {
    by_id[data.shapes[idx].shape_id] = &data.shapes[idx];
  }

  LocalizationReport report;
  double mass_sum = 0.0, base_sum = 0.0;
  std::size_t shape_count = 0;
  for (const EmbeddedShape& e : embedded) {
    auto it = by_id.find(e.shape_id);
    if (it == by_id.end()) continue;
    const LoadedShape& shape = *it->second;
    ShapeLocalization loc;
    loc.shape_id = e.shape_id;
    double mass = 0.0, base = 0.0;
    for (std::size_t v = 0; v < shape.views.size(); ++v) {
      if (v < e.view_missing.size() && e.view_missing[v]) continue;
      if (v >= e.conf_maps.size()) continue;
      if (v >= shape.bboxes.size() || bbox_empty(shape.bboxes[v])) continue;
      const BBox& bb = shape.bboxes[v];
      // Inclusive outward rounding onto the middle-feature grid.
      const std::size_t gx0 = static_cast<std::size_t>(
          std::clamp(std::floor(bb[0] / cell), 0.0, static_cast<double>(grid - 1)));
      const std::size_t gy0 = static_cast<std::size_t>(
          std::clamp(std::floor(bb[1] / cell), 0.0, static_cast<double>(grid - 1)));
      const std::size_t gx1 = static_cast<std::size_t>(
          std::clamp(std::floor(bb[2] / cell), 0.0, static_cast<double>(grid - 1)));
      const std::size_t gy1 = static_cast<std::size_t>(
          std::clamp(std::floor(bb[3] / cell), 0.0, static_cast<double>(grid - 1)));
      const std::vector<double>& conf = e.conf_maps[v];
      double in_box = 0.0;
      for (std::size_t gy = gy0; gy <= gy1; ++gy) {
        for (std::size_t gx = gx0; gx <= gx1; ++gx) in_box += conf[gy * grid + gx];
      }
      mass += in_box;
      base += static_cast<double>((gx1 - gx0 + 1) * (gy1 - gy0 + 1)) /
              static_cast<double>(grid * grid);
      ++loc.scored_views;
    }
    if (loc.scored_views == 0) continue;
    loc.mass = mass / static_cast<double>(loc.scored_views);
    loc.baseline = base / static_cast<double>(loc.scored_views);
    mass_sum += loc.mass;
    base_sum += loc.baseline;
    ++shape_count;
    report.per_shape.push_back(std::move(loc));
  }
  if (shape_count > 0) {
    report.mean_mass = mass_sum / static_cast<double>(shape_count);
    report.mean_baseline = base_sum / static_cast<double>(shape_count);
  }
  return report;
}

}  // namespace prema
