#pragma once

#include <string>
#include <vector>

#include "prema/aggregator.hpp"
#include "prema/metrics.hpp"
#include "prema/train.hpp"

namespace prema {

// One shape pushed through the (frozen) model under some noise protocol.
struct EmbeddedShape {
  std::string shape_id;
  int class_id = 0;
  std::vector<double> descriptor;
  std::vector<std::vector<double>> conf_maps;  // per view, kept on request
  std::vector<char> view_missing;              // per view
  bool zero_norm = false;
};

// Indices blacked out by the missing-view protocol for this shape.
std::vector<std::size_t> missing_indices(const NoiseConfig& noise, const std::string& shape_id,
                                         std::size_t view_count);

// Descriptor per shape of a split. Occlusion/clutter re-render the scene
// from the reconstructed spec; missing views black out the loaded images.
// Parameters are detached internally, and shapes are embedded in parallel.
std::vector<EmbeddedShape> embed_split(const PremaParams& params, const LoadedDataset& data,
                                       const std::string& split, const NoiseConfig& noise,
                                       bool keep_conf = false, std::size_t workers = 2);

// Cosine ranking over the embedded set: descending similarity, ties broken
// by ascending shape id, query excluded from its own gallery. Zero-norm
// descriptors get similarity 0 against everything.
std::vector<RetrievalResult> rank_results(const std::vector<EmbeddedShape>& shapes);

// argmax-of-logits accuracy: (per instance, per class).
std::pair<double, double> compute_accuracy(const PremaParams& params,
                                           const std::vector<EmbeddedShape>& shapes);

struct ShapeLocalization {
  std::string shape_id;
  double mass = 0;      // mean in-bbox confidence mass over scored views
  double baseline = 0;  // mean bbox area fraction (uniform attention)
  std::size_t scored_views = 0;
};

struct LocalizationReport {
  double mean_mass = 0;
  double mean_baseline = 0;
  std::vector<ShapeLocalization> per_shape;
};

// Fig.8-style check: reshape each confidence map to the middle-feature grid,
// map the discriminant-part bbox into that grid (inclusive rounding), sum the
// confidence inside. Views with missing images or empty boxes are skipped.
LocalizationReport attention_localization_score(const PremaParams& params,
                                                const LoadedDataset& data,
                                                const std::string& split,
                                                const std::vector<EmbeddedShape>& embedded);

}  // namespace prema
