#include "prema/aggregator.hpp"

#include <stdexcept>

namespace prema {

std::string to_string(AggregationVariant v) {
  switch (v) {
    case AggregationVariant::Prema: return "PREMA";
    case AggregationVariant::DoubleLstms: return "DoubleLSTMs";
    case AggregationVariant::MaxPoolOnly: return "MaxPoolOnly";
    case AggregationVariant::SingleDirectionPrema: return "SingleDirectionPREMA";
  }
  throw std::logic_error("unreachable variant");
}

AggregationVariant parse_variant(const std::string& name) {
  if (name == "PREMA") return AggregationVariant::Prema;
  if (name == "DoubleLSTMs") return AggregationVariant::DoubleLstms;
  if (name == "MaxPoolOnly") return AggregationVariant::MaxPoolOnly;
  if (name == "SingleDirectionPREMA") return AggregationVariant::SingleDirectionPrema;
  throw std::invalid_argument("unknown aggregation variant: " + name);
}

std::size_t PremaParams::level1_out_dim() const {
  return bidirectional() ? 2 * dims.d_h1 : dims.d_h1;
}

std::size_t PremaParams::level2_in_dim() const {
  return has_rau() ? dims.d_k + level1_out_dim() : level1_out_dim();
}

std::size_t PremaParams::descriptor_dim() const {
  if (variant == AggregationVariant::MaxPoolOnly) return encoder.feature_dim();
  return bidirectional() ? 2 * dims.d_h2 : dims.d_h2;
}

PremaParams PremaParams::init(const ModelDims& dims, AggregationVariant variant, Rng& rng) {
  PremaParams p;
  p.dims = dims;
  p.variant = variant;
  p.encoder = CnnEncoderParams::init(dims.image_size, rng);
  if (p.has_lstms()) {
    const std::size_t d_in = p.encoder.feature_dim();
    p.level1_fwd = LstmParams::init(d_in, dims.d_h1, rng);
    if (p.bidirectional()) p.level1_bwd = LstmParams::init(d_in, dims.d_h1, rng);
    if (p.has_rau()) {
      p.rau = RauParams::init(p.level1_out_dim(), p.encoder.middle_channels(), dims.d_k, rng);
    }
    p.level2_fwd = LstmParams::init(p.level2_in_dim(), dims.d_h2, rng);
    if (p.bidirectional()) p.level2_bwd = LstmParams::init(p.level2_in_dim(), dims.d_h2, rng);
  }
  // Zero-initialized classifier: descriptors drive retrieval directly, and a
  // zero head keeps the initial cross-entropy at exactly ln(class_count).
  const std::size_t desc = p.descriptor_dim();
  p.cls_w = Tensor::zeros({dims.class_count, desc}, true);
  p.cls_b = Tensor::zeros({dims.class_count}, true);
  return p;
}

std::vector<Tensor> PremaParams::all() const {
  std::vector<Tensor> out = encoder.all();
  if (has_lstms()) {
    auto push = [&out](const LstmParams& l) {
      auto v = l.all();
      out.insert(out.end(), v.begin(), v.end());
    };
    push(level1_fwd);
    if (bidirectional()) push(level1_bwd);
    if (has_rau()) {
      auto v = rau.all();
      out.insert(out.end(), v.begin(), v.end());
    }
    push(level2_fwd);
    if (bidirectional()) push(level2_bwd);
  }
  out.push_back(cls_w);
  out.push_back(cls_b);
  return out;
}

std::vector<std::pair<std::string, Tensor>> PremaParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  encoder.named("encoder", out);
  if (has_lstms()) {
    level1_fwd.named("level1.fwd", out);
    if (bidirectional()) level1_bwd.named("level1.bwd", out);
    if (has_rau()) rau.named("rau", out);
    level2_fwd.named("level2.fwd", out);
    if (bidirectional()) level2_bwd.named("level2.bwd", out);
  }
  out.emplace_back("classifier.w", cls_w);
  out.emplace_back("classifier.b", cls_b);
  return out;
}

PremaParams PremaParams::detached() const {
  PremaParams p;
  p.dims = dims;
  p.variant = variant;
  p.encoder = encoder.detached();
  if (has_lstms()) {
    p.level1_fwd = level1_fwd.detached();
    if (bidirectional()) p.level1_bwd = level1_bwd.detached();
    if (has_rau()) p.rau = rau.detached();
    p.level2_fwd = level2_fwd.detached();
    if (bidirectional()) p.level2_bwd = level2_bwd.detached();
  }
  p.cls_w = cls_w.detached();
  p.cls_b = cls_b.detached();
  return p;
}

std::pair<PremaStepTrace, LstmState> prema_step(const PremaParams& params, const Tensor& o1_t,
                                                const Tensor& m_t, const LstmState& level2_state) {
  if (!params.has_lstms()) {
    throw std::invalid_argument("prema_step: variant has no recurrent aggregation unit");
  }
  if (o1_t.rank() != 1 || o1_t.shape()[0] != params.level1_out_dim()) {
    throw shape_error("prema_step: o1 has shape " + shape_str(o1_t.shape()) + ", expected length " +
                      std::to_string(params.level1_out_dim()));
  }
  PremaStepTrace trace;
  trace.o1 = o1_t;
  if (params.has_rau()) {
    auto [att, conf] = rau_forward(params.rau, o1_t, m_t);
    trace.att_part = att;
    trace.conf = conf;
    trace.x = concat(att.att_part, o1_t, 0);
  } else {
    trace.x = o1_t;
  }
  auto [state, gates] = lstm_cell_step(params.level2_fwd, trace.x, level2_state);
  (void)gates;
  trace.o2 = state.h;
  trace.d = trace.o2;
  return {trace, state};
}

std::pair<ShapeDescriptor, std::vector<PremaStepTrace>> aggregate(
    const PremaParams& params, const std::vector<ViewFeatures>& views,
    const std::string& shape_id) {
  if (views.empty()) throw std::invalid_argument("aggregate: empty view sequence");

  if (params.variant == AggregationVariant::MaxPoolOnly) {
    std::vector<Tensor> vs;
    vs.reserve(views.size());
    for (const ViewFeatures& vf : views) vs.push_back(vf.v);
    return {ShapeDescriptor{max_over_set(vs), params.variant, shape_id}, {}};
  }

  std::vector<Tensor> inputs;
  inputs.reserve(views.size());
  for (const ViewFeatures& vf : views) inputs.push_back(vf.v);

  // Level 1 over the global view features.
  std::vector<Tensor> o1;
  if (params.bidirectional()) {
    o1 = bilstm_run(params.level1_fwd, params.level1_bwd, inputs);
  } else {
    auto states = lstm_run(params.level1_fwd, inputs, LstmState::zeros(params.dims.d_h1));
    for (const LstmState& s : states) o1.push_back(s.h);
  }

  // Forward sweep: attention (evaluated once per step) + LSTM2 forward.
  const std::size_t n = views.size();
  std::vector<PremaStepTrace> traces;
  traces.reserve(n);
  LstmState state = LstmState::zeros(params.dims.d_h2);
  for (std::size_t t = 0; t < n; ++t) {
    auto [trace, next] = prema_step(params, o1[t], views[t].m, state);
    traces.push_back(std::move(trace));
    state = next;
  }

  if (params.bidirectional()) {
    // Reverse sweep reprocesses the same step inputs x_t in reverse order.
    std::vector<Tensor> xs_rev;
    xs_rev.reserve(n);
    for (std::size_t t = 0; t < n; ++t) xs_rev.push_back(traces[n - 1 - t].x);
    auto bwd = lstm_run(params.level2_bwd, xs_rev, LstmState::zeros(params.dims.d_h2));
    for (std::size_t t = 0; t < n; ++t) {
      traces[t].o2 = concat(traces[t].o2, bwd[n - 1 - t].h, 0);
      traces[t].d = traces[t].o2;
    }
  }

  std::vector<Tensor> ds;
  ds.reserve(n);
  for (const PremaStepTrace& tr : traces) ds.push_back(tr.d);
  return {ShapeDescriptor{max_over_set(ds), params.variant, shape_id}, std::move(traces)};
}

Tensor classify(const PremaParams& params, const ShapeDescriptor& descriptor) {
  if (descriptor.D.rank() != 1 || descriptor.D.shape()[0] != params.cls_w.shape()[1]) {
    throw shape_error("classify: descriptor has shape " + shape_str(descriptor.D.shape()) +
                      ", classifier expects length " + std::to_string(params.cls_w.shape()[1]));
  }
  return add(matmul(params.cls_w, descriptor.D), params.cls_b);
}

}  // namespace prema
