// model.hpp
// Multi-branch encoder-decoder for surface recovery from a masked RGB image.
// One shared convolutional encoder produces a latent grid plus per-stage
// pooling indices; up to three decoders consume it: dense decoders for
// normal and depth maps that mirror the encoder stage-for-stage and reverse
// each pooling through the recorded argmax indices, and a small vertex head
// (convolution, global average pooling, fully connected regression).

#pragma once

#include <atomic>
#include <optional>
#include <sstream>

#include "defsurf/geometry.hpp"
#include "defsurf/keyvalue.hpp"
#include "defsurf/nn.hpp"
#include "defsurf/types.hpp"

namespace defsurf {

enum class Head { normals, depth, vertices };

struct HeadSet {
  bool normals = false, depth = false, vertices = false;

  bool any() const { return normals || depth || vertices; }
  bool has(Head h) const {
    switch (h) {
      case Head::normals: return normals;
      case Head::depth: return depth;
      case Head::vertices: return vertices;
    }
    return false;
  }
  bool subset_of(const HeadSet& other) const {
    return (!normals || other.normals) && (!depth || other.depth) &&
           (!vertices || other.vertices);
  }

  // Short form used in logs and method names: "N+D", "N+D+C", ...
  std::string short_name() const {
    std::string out;
    auto append = [&out](const char* tag) {
      if (!out.empty()) out += '+';
      out += tag;
    };
    if (normals) append("N");
    if (depth) append("D");
    if (vertices) append("C");
    return out;
  }
  std::string to_list() const {
    std::string out;
    auto append = [&out](const char* tag) {
      if (!out.empty()) out += ',';
      out += tag;
    };
    if (normals) append("normals");
    if (depth) append("depth");
    if (vertices) append("vertices");
    return out;
  }
  static HeadSet from_list(const std::string& list) {
    HeadSet out;
    for (const auto& tok : split_list(list)) {
      if (tok == "normals" || tok == "N") out.normals = true;
      else if (tok == "depth" || tok == "D") out.depth = true;
      else if (tok == "vertices" || tok == "C") out.vertices = true;
      else throw std::invalid_argument("unknown head: " + tok);
    }
    return out;
  }
};

struct ModelConfig {
  Index input_h = 224, input_w = 224;
  HeadSet heads;
  Index vertex_count = 0;  // required iff the vertex head is enabled
  std::vector<Index> stage_widths{64, 128, 256, 512, 512};
  std::vector<int> convs_per_stage{2, 2, 3, 3, 3};

  int stages() const { return static_cast<int>(stage_widths.size()); }
  Index latent_channels() const { return stage_widths.back(); }
  Index latent_h() const { return input_h >> stages(); }
  Index latent_w() const { return input_w >> stages(); }

  void validate() const {
    require(heads.any(), "ModelConfig: at least one head must be enabled");
    require(!stage_widths.empty(), "ModelConfig: no encoder stages");
    require(stage_widths.size() == convs_per_stage.size(),
            "ModelConfig: stage widths and conv counts differ in length");
    for (Index w : stage_widths)
      require(w > 0, "ModelConfig: stage width must be positive");
    for (int c : convs_per_stage)
      require(c >= 1, "ModelConfig: each stage needs at least one convolution");
    const Index factor = Index(1) << stages();
    require(input_h % factor == 0 && input_w % factor == 0 &&
                input_h >= factor && input_w >= factor,
            "ModelConfig: input size must be divisible by 2^stages");
    if (heads.vertices)
      require(vertex_count > 0,
              "ModelConfig: vertex head requires a vertex count");
    else
      require(vertex_count == 0,
              "ModelConfig: vertex count given without a vertex head");
  }

  KeyValue to_keyvalue() const {
    KeyValue kv;
    kv.set("input_h", std::to_string(input_h));
    kv.set("input_w", std::to_string(input_w));
    kv.set("heads", heads.to_list());
    kv.set("vertex_count", std::to_string(vertex_count));
    std::ostringstream widths, convs;
    for (std::size_t i = 0; i < stage_widths.size(); ++i) {
      if (i) widths << ',';
      widths << stage_widths[i];
    }
    for (std::size_t i = 0; i < convs_per_stage.size(); ++i) {
      if (i) convs << ',';
      convs << convs_per_stage[i];
    }
    kv.set("stage_widths", widths.str());
    kv.set("convs_per_stage", convs.str());
    return kv;
  }

  static ModelConfig from_keyvalue(const KeyValue& kv) {
    ModelConfig cfg;
    cfg.input_h = kv.get_int_or("input_h", 224);
    cfg.input_w = kv.get_int_or("input_w", 224);
    cfg.heads = HeadSet::from_list(kv.get("heads"));
    cfg.vertex_count = kv.get_int_or("vertex_count", 0);
    if (kv.has("stage_widths")) {
      cfg.stage_widths.clear();
      for (const auto& tok : split_list(kv.get("stage_widths")))
        cfg.stage_widths.push_back(std::stol(tok));
    }
    if (kv.has("convs_per_stage")) {
      cfg.convs_per_stage.clear();
      for (const auto& tok : split_list(kv.get("convs_per_stage")))
        cfg.convs_per_stage.push_back(static_cast<int>(std::stol(tok)));
    }
    cfg.validate();
    return cfg;
  }
};

// Shared encoder output: the latent activation grid plus the per-stage
// argmax records the dense decoders need for unpooling.
template <typename S>
struct LatentCode {
  nn::FeatureMap<S> features;
  std::vector<nn::PoolIndices> pooling_trace;
};

template <typename S>
struct PredictionSet {
  std::optional<NormalGrid<S>> normals;
  std::optional<Grid<S>> depth;
  std::optional<Points3<S>> vertices;
};

// Gradients of a loss with respect to each active head output.
template <typename S>
struct HeadGradients {
  std::optional<NormalGrid<S>> normals;
  std::optional<Grid<S>> depth;
  std::optional<Points3<S>> vertices;
};

// ---------------------------------------------------------------------------
// Grid <-> feature-map conversions

template <typename S>
nn::FeatureMap<S> rgb_to_feature(const Rgb<S>& image) {
  nn::FeatureMap<S> f(image.rows(), image.cols(), 3);
  const Index w = image.cols();
  for (Index r = 0; r < image.rows(); ++r)
    for (Index c = 0; c < w; ++c) {
      f.data(r * w + c, 0) = image.r(r, c);
      f.data(r * w + c, 1) = image.g(r, c);
      f.data(r * w + c, 2) = image.b(r, c);
    }
  return f;
}

template <typename S>
Grid<S> feature_plane(const nn::FeatureMap<S>& f, Index channel) {
  Grid<S> out(f.h, f.w);
  for (Index r = 0; r < f.h; ++r)
    for (Index c = 0; c < f.w; ++c) out(r, c) = f.data(r * f.w + c, channel);
  return out;
}

template <typename S>
NormalGrid<S> feature_to_normals(const nn::FeatureMap<S>& f) {
  require(f.c == 3, "normals feature map must have 3 channels");
  NormalGrid<S> out;
  out.x = feature_plane(f, 0);
  out.y = feature_plane(f, 1);
  out.z = feature_plane(f, 2);
  return out;
}

template <typename S>
nn::FeatureMap<S> normals_to_feature(const NormalGrid<S>& n) {
  nn::FeatureMap<S> f(n.rows(), n.cols(), 3);
  const Index w = n.cols();
  for (Index r = 0; r < n.rows(); ++r)
    for (Index c = 0; c < w; ++c) {
      f.data(r * w + c, 0) = n.x(r, c);
      f.data(r * w + c, 1) = n.y(r, c);
      f.data(r * w + c, 2) = n.z(r, c);
    }
  return f;
}

template <typename S>
nn::FeatureMap<S> grid_to_feature(const Grid<S>& g) {
  nn::FeatureMap<S> f(g.rows(), g.cols(), 1);
  const Index w = g.cols();
  for (Index r = 0; r < g.rows(); ++r)
    for (Index c = 0; c < w; ++c) f.data(r * w + c, 0) = g(r, c);
  return f;
}

// ---------------------------------------------------------------------------
// SurfaceNet

template <typename S>
class SurfaceNet {
 public:
  struct Tape {
    std::vector<std::vector<typename nn::ConvBlock<S>::Ctx>> encoder;
    std::vector<std::pair<Index, Index>> pool_input_dims;  // (h, w) per stage
    LatentCode<S> latent;
    std::vector<std::vector<typename nn::ConvBlock<S>::Ctx>> dec_normals;
    std::vector<std::vector<typename nn::ConvBlock<S>::Ctx>> dec_depth;
    typename nn::ConvBlock<S>::Ctx vertex_conv;
    nn::Vector<S> vertex_pooled;
    PredictionSet<S> predictions;
  };

  explicit SurfaceNet(ModelConfig config, unsigned seed = 0)
      : cfg_(std::move(config)) {
    cfg_.validate();
    build();
    nn::init_parameters(store_, seed);
  }

  SurfaceNet(const SurfaceNet&) = delete;
  SurfaceNet& operator=(const SurfaceNet&) = delete;

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore<S>& params() { return store_; }
  const nn::ParamStore<S>& params() const { return store_; }
  std::uint64_t weight_hash() const { return store_.hash(); }
  std::uint64_t encode_calls() const { return encode_calls_.load(); }

  // -- inference ------------------------------------------------------------

  LatentCode<S> encode(const Rgb<S>& masked_image) const {
    return encode_impl(rgb_to_feature(masked_image), nullptr);
  }

  nn::FeatureMap<S> decode_dense(const LatentCode<S>& latent, Head head) const {
    require(head != Head::vertices, "decode_dense: use decode_vertices");
    require(cfg_.heads.has(head), "decode_dense: head not configured");
    return dense_forward(head == Head::normals ? dec_normals_ : dec_depth_,
                         latent, nullptr);
  }

  NormalGrid<S> decode_normals(const LatentCode<S>& latent) const {
    return feature_to_normals(decode_dense(latent, Head::normals));
  }
  Grid<S> decode_depth(const LatentCode<S>& latent) const {
    return feature_plane(decode_dense(latent, Head::depth), 0);
  }

  Points3<S> decode_vertices(const LatentCode<S>& latent,
                             Index vertex_count) const {
    require(cfg_.heads.vertices, "decode_vertices: head not configured");
    require(vertex_count == cfg_.vertex_count,
            "decode_vertices: vertex count does not match the weights");
    return vertex_forward(latent, nullptr);
  }

  // Masks the image, encodes once, then runs every configured decoder.
  PredictionSet<S> forward(const Rgb<S>& image, const MaskGrid& mask) const {
    const Rgb<S> masked = apply_mask(image, mask);
    const LatentCode<S> latent = encode(masked);
    PredictionSet<S> out;
    if (cfg_.heads.normals) out.normals = decode_normals(latent);
    if (cfg_.heads.depth) out.depth = decode_depth(latent);
    if (cfg_.heads.vertices)
      out.vertices = decode_vertices(latent, cfg_.vertex_count);
    return out;
  }

  // -- training -------------------------------------------------------------

  // Forward pass through the active heads keeping every layer context.
  // `masked_image` must already be masked.
  PredictionSet<S> forward_train(const Rgb<S>& masked_image,
                                 const HeadSet& active, Tape& tape) const {
    require(active.any() && active.subset_of(cfg_.heads),
            "forward_train: active heads not configured");
    tape = Tape{};
    tape.latent = encode_impl(rgb_to_feature(masked_image), &tape);
    if (active.normals) {
      tape.predictions.normals = feature_to_normals(
          dense_forward(dec_normals_, tape.latent, &tape.dec_normals));
    }
    if (active.depth) {
      tape.predictions.depth =
          feature_plane(dense_forward(dec_depth_, tape.latent, &tape.dec_depth), 0);
    }
    if (active.vertices)
      tape.predictions.vertices = vertex_forward(tape.latent, &tape);
    return tape.predictions;
  }

  // Accumulates parameter gradients for the heads present in `head_grads`.
  void backward(const Tape& tape, const HeadGradients<S>& head_grads,
                nn::GradBuffer<S>& grads) const {
    nn::FeatureMap<S> dlatent(tape.latent.features.h, tape.latent.features.w,
                              tape.latent.features.c);
    if (head_grads.normals) {
      const nn::FeatureMap<S> dy = normals_to_feature(*head_grads.normals);
      dlatent.data += dense_backward(dec_normals_, tape.dec_normals,
                                     tape.latent, dy, grads)
                          .data;
    }
    if (head_grads.depth) {
      const nn::FeatureMap<S> dy = grid_to_feature(*head_grads.depth);
      dlatent.data +=
          dense_backward(dec_depth_, tape.dec_depth, tape.latent, dy, grads).data;
    }
    if (head_grads.vertices)
      dlatent.data += vertex_backward(tape, *head_grads.vertices, grads).data;
    encoder_backward(tape, dlatent, grads);
  }

 private:
  void build() {
    const int n = cfg_.stages();
    enc_stages_.resize(static_cast<std::size_t>(n));
    Index in_c = 3;
    for (int s = 0; s < n; ++s) {
      const Index out_c = cfg_.stage_widths[static_cast<std::size_t>(s)];
      auto& stage = enc_stages_[static_cast<std::size_t>(s)];
      stage.resize(static_cast<std::size_t>(cfg_.convs_per_stage[static_cast<std::size_t>(s)]));
      for (std::size_t b = 0; b < stage.size(); ++b) {
        const Index block_in = b == 0 ? in_c : out_c;
        stage[b].init(store_,
                      "encoder.s" + std::to_string(s) + ".b" + std::to_string(b),
                      block_in, out_c);
      }
      in_c = out_c;
    }
    if (cfg_.heads.normals) build_dense_decoder(dec_normals_, "dec_normals", 3);
    if (cfg_.heads.depth) build_dense_decoder(dec_depth_, "dec_depth", 1);
    if (cfg_.heads.vertices) {
      vertex_conv_.init(store_, "dec_vertices.conv", cfg_.latent_channels(),
                        cfg_.latent_channels(), /*with_norm=*/false,
                        /*with_relu=*/true);
      vertex_fc_.init(store_, "dec_vertices.fc", cfg_.latent_channels(),
                      3 * cfg_.vertex_count);
    }
  }

  // Mirrors the encoder stage-for-stage. Stage k of the decoder unpools with
  // the encoder's stage-k indices, keeps the stage width through its inner
  // convolutions and hands the next stage's width (or the head's channel
  // count, without normalization or rectifier) to its last one.
  void build_dense_decoder(std::vector<std::vector<nn::ConvBlock<S>>>& dec,
                           const std::string& name, Index out_channels) {
    const int n = cfg_.stages();
    dec.resize(static_cast<std::size_t>(n));
    for (int k = n - 1; k >= 0; --k) {
      const Index width = cfg_.stage_widths[static_cast<std::size_t>(k)];
      const Index stage_out =
          k > 0 ? cfg_.stage_widths[static_cast<std::size_t>(k - 1)] : out_channels;
      auto& stage = dec[static_cast<std::size_t>(k)];
      const int blocks = cfg_.convs_per_stage[static_cast<std::size_t>(k)];
      stage.resize(static_cast<std::size_t>(blocks));
      for (int b = 0; b < blocks; ++b) {
        const bool last_block = b == blocks - 1;
        const bool final_layer = last_block && k == 0;
        stage[static_cast<std::size_t>(b)].init(
            store_, name + ".s" + std::to_string(k) + ".b" + std::to_string(b),
            width, last_block ? stage_out : width,
            /*with_norm=*/!final_layer, /*with_relu=*/!final_layer);
      }
    }
  }

  LatentCode<S> encode_impl(nn::FeatureMap<S> x, Tape* tape) const {
    require(x.h == cfg_.input_h && x.w == cfg_.input_w,
            "encode: input size does not match the model configuration");
    ++encode_calls_;
    LatentCode<S> latent;
    latent.pooling_trace.resize(enc_stages_.size());
    if (tape) {
      tape->encoder.resize(enc_stages_.size());
      tape->pool_input_dims.resize(enc_stages_.size());
    }
    for (std::size_t s = 0; s < enc_stages_.size(); ++s) {
      if (tape) tape->encoder[s].resize(enc_stages_[s].size());
      for (std::size_t b = 0; b < enc_stages_[s].size(); ++b)
        x = enc_stages_[s][b].forward(store_, x,
                                      tape ? &tape->encoder[s][b] : nullptr);
      if (tape) tape->pool_input_dims[s] = {x.h, x.w};
      x = nn::MaxPool2<S>{}.forward(x, &latent.pooling_trace[s]);
    }
    latent.features = std::move(x);
    return latent;
  }

  nn::FeatureMap<S> dense_forward(
      const std::vector<std::vector<nn::ConvBlock<S>>>& dec,
      const LatentCode<S>& latent,
      std::vector<std::vector<typename nn::ConvBlock<S>::Ctx>>* ctx) const {
    require(latent.pooling_trace.size() == dec.size(),
            "decode: latent is missing its pooling trace");
    nn::FeatureMap<S> x = latent.features;
    if (ctx) ctx->resize(dec.size());
    for (int k = static_cast<int>(dec.size()) - 1; k >= 0; --k) {
      const auto& indices = latent.pooling_trace[static_cast<std::size_t>(k)];
      require(indices.rows() == x.pixels() && indices.cols() == x.c,
              "decode: pooling trace does not match the latent");
      x = nn::MaxUnpool2<S>{}.forward(x, indices, x.h * 2, x.w * 2);
      auto& stage = dec[static_cast<std::size_t>(k)];
      if (ctx) (*ctx)[static_cast<std::size_t>(k)].resize(stage.size());
      for (std::size_t b = 0; b < stage.size(); ++b)
        x = stage[b].forward(store_, x,
                             ctx ? &(*ctx)[static_cast<std::size_t>(k)][b] : nullptr);
    }
    return x;
  }

  nn::FeatureMap<S> dense_backward(
      const std::vector<std::vector<nn::ConvBlock<S>>>& dec,
      const std::vector<std::vector<typename nn::ConvBlock<S>::Ctx>>& ctx,
      const LatentCode<S>& latent, const nn::FeatureMap<S>& dy,
      nn::GradBuffer<S>& grads) const {
    nn::FeatureMap<S> d = dy;
    for (std::size_t k = 0; k < dec.size(); ++k) {
      const auto& stage = dec[k];
      for (int b = static_cast<int>(stage.size()) - 1; b >= 0; --b)
        d = stage[static_cast<std::size_t>(b)].backward(
            store_, ctx[k][static_cast<std::size_t>(b)], d, grads);
      d = nn::MaxUnpool2<S>{}.backward(d, latent.pooling_trace[k], d.h / 2,
                                       d.w / 2);
    }
    return d;
  }

  Points3<S> vertex_forward(const LatentCode<S>& latent, Tape* tape) const {
    typename nn::ConvBlock<S>::Ctx local_ctx;
    const nn::FeatureMap<S> conv_out = vertex_conv_.forward(
        store_, latent.features, tape ? &tape->vertex_conv : &local_ctx);
    const nn::Vector<S> pooled = nn::GlobalAvgPool<S>{}.forward(conv_out);
    if (tape) tape->vertex_pooled = pooled;
    const nn::Vector<S> out = vertex_fc_.forward(store_, pooled);
    Points3<S> coords(3, cfg_.vertex_count);
    for (Index i = 0; i < cfg_.vertex_count; ++i)
      coords.col(i) = out.template segment<3>(3 * i);
    return coords;
  }

  nn::FeatureMap<S> vertex_backward(const Tape& tape, const Points3<S>& dvert,
                                    nn::GradBuffer<S>& grads) const {
    nn::Vector<S> dout(3 * cfg_.vertex_count);
    for (Index i = 0; i < cfg_.vertex_count; ++i)
      dout.template segment<3>(3 * i) = dvert.col(i);
    const nn::Vector<S> dpooled =
        vertex_fc_.backward(store_, tape.vertex_pooled, dout, grads);
    const nn::FeatureMap<S> dconv = nn::GlobalAvgPool<S>{}.backward(
        dpooled, tape.vertex_conv.output.h, tape.vertex_conv.output.w);
    return vertex_conv_.backward(store_, tape.vertex_conv, dconv, grads);
  }

  void encoder_backward(const Tape& tape, const nn::FeatureMap<S>& dlatent,
                        nn::GradBuffer<S>& grads) const {
    nn::FeatureMap<S> d = dlatent;
    for (int s = static_cast<int>(enc_stages_.size()) - 1; s >= 0; --s) {
      const auto su = static_cast<std::size_t>(s);
      d = nn::MaxPool2<S>{}.backward(d, tape.latent.pooling_trace[su],
                                     tape.pool_input_dims[su].first,
                                     tape.pool_input_dims[su].second);
      const auto& stage = enc_stages_[su];
      for (int b = static_cast<int>(stage.size()) - 1; b >= 0; --b)
        d = stage[static_cast<std::size_t>(b)].backward(
            store_, tape.encoder[su][static_cast<std::size_t>(b)], d, grads);
    }
  }

  ModelConfig cfg_;
  nn::ParamStore<S> store_;
  std::vector<std::vector<nn::ConvBlock<S>>> enc_stages_;
  std::vector<std::vector<nn::ConvBlock<S>>> dec_normals_, dec_depth_;
  nn::ConvBlock<S> vertex_conv_;
  nn::Linear<S> vertex_fc_;
  mutable std::atomic<std::uint64_t> encode_calls_{0};
};

using SurfaceNetF = SurfaceNet<float>;

}  // namespace defsurf
