#pragma once

#include <string>
#include <utility>
#include <vector>

#include "prema/encoder.hpp"
#include "prema/lstm.hpp"
#include "prema/rau.hpp"

namespace prema {

enum class AggregationVariant {
  Prema,                 // bidirectional two-level LSTMs with regional attention
  DoubleLstms,           // attention removed, LSTM2 consumes o1 directly
  MaxPoolOnly,           // element-wise max over the raw view features
  SingleDirectionPrema,  // forward-only LSTMs
};

std::string to_string(AggregationVariant v);
AggregationVariant parse_variant(const std::string& name);

struct ModelDims {
  std::size_t image_size = 32;
  std::size_t d_h1 = 32;  // level-1 hidden size per direction
  std::size_t d_k = 32;   // attention projection dim
  std::size_t d_h2 = 64;  // level-2 hidden size per direction
  std::size_t class_count = 8;
};

// Full model: shared view encoder, two LSTM levels, attention unit, linear
// classifier. Which pieces exist depends on the aggregation variant
// (MaxPoolOnly keeps only encoder + classifier; single-direction variants
// drop the backward parameter sets).
struct PremaParams {
  ModelDims dims;
  AggregationVariant variant = AggregationVariant::Prema;
  CnnEncoderParams encoder;
  LstmParams level1_fwd, level1_bwd;
  RauParams rau;
  LstmParams level2_fwd, level2_bwd;
  Tensor cls_w;  // class_count x descriptor_dim
  Tensor cls_b;  // class_count

  static PremaParams init(const ModelDims& dims, AggregationVariant variant, Rng& rng);

  bool bidirectional() const { return variant != AggregationVariant::SingleDirectionPrema; }
  bool has_rau() const {
    return variant == AggregationVariant::Prema ||
           variant == AggregationVariant::SingleDirectionPrema;
  }
  bool has_lstms() const { return variant != AggregationVariant::MaxPoolOnly; }
  std::size_t level1_out_dim() const;  // C_o
  std::size_t level2_in_dim() const;
  std::size_t descriptor_dim() const;

  std::vector<Tensor> all() const;  // trainable parameter arrays
  std::vector<std::pair<std::string, Tensor>> named() const;
  PremaParams detached() const;
};

// What one part-based recurrent aggregation step produced. o2 (== d) is the
// unit's output; for bidirectional models it is completed by aggregate()
// after the reverse sweep.
struct PremaStepTrace {
  Tensor o1;
  ConfidenceMap conf;
  AttentivePart att_part;
  Tensor x;  // LSTM2 input for this step
  Tensor o2;
  Tensor d;  // the paper designates o2 as the fused feature
};

struct ShapeDescriptor {
  Tensor D;
  AggregationVariant variant;
  std::string shape_id;
};

// One forward-direction aggregation step: attention between the level-1
// output and the view's middle representation, concat, one LSTM2 advance.
std::pair<PremaStepTrace, LstmState> prema_step(const PremaParams& params, const Tensor& o1_t,
                                                const Tensor& m_t, const LstmState& level2_state);

// Full per-sequence driver: level-1 recurrence over the view features,
// per-step attention + level-2 recurrence, element-wise max over the fused
// features. Traces are empty for MaxPoolOnly.
std::pair<ShapeDescriptor, std::vector<PremaStepTrace>> aggregate(
    const PremaParams& params, const std::vector<ViewFeatures>& views,
    const std::string& shape_id = "");

Tensor classify(const PremaParams& params, const ShapeDescriptor& descriptor);

}  // namespace prema
