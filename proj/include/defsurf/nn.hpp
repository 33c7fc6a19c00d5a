// nn.hpp
// Building blocks for the convolutional encoder-decoder: feature maps,
// a flat parameter store, 3x3 convolution via im2col + GEMM, per-sample
// channel normalization, ReLU, 2x2 max pooling with recorded argmax
// indices, index-based unpooling, global average pooling, a fully connected
// layer and the Adam optimizer. Layers are stateless descriptors over a
// ParamStore; training contexts are owned by the caller, so concurrent
// forward passes over one set of weights are safe.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "defsurf/types.hpp"

namespace defsurf::nn {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

using PoolIndices = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>;

// Activation tensor. data is (h*w) x c with pixel p = row * w + col, so each
// channel plane is one contiguous column.
template <typename S>
struct FeatureMap {
  Index h = 0, w = 0, c = 0;
  Matrix<S> data;

  FeatureMap() = default;
  FeatureMap(Index h_, Index w_, Index c_)
      : h(h_), w(w_), c(c_), data(Matrix<S>::Zero(h_ * w_, c_)) {}

  Index pixels() const { return h * w; }
  bool finite() const { return data.allFinite(); }
};

// ---------------------------------------------------------------------------
// Parameter store

template <typename S>
class ParamStore {
 public:
  Index add(std::string name, Index rows, Index cols) {
    entries_.push_back({std::move(name), Matrix<S>::Zero(rows, cols)});
    return static_cast<Index>(entries_.size()) - 1;
  }

  Index count() const { return static_cast<Index>(entries_.size()); }
  Matrix<S>& value(Index i) { return entries_[static_cast<std::size_t>(i)].value; }
  const Matrix<S>& value(Index i) const {
    return entries_[static_cast<std::size_t>(i)].value;
  }
  const std::string& name(Index i) const {
    return entries_[static_cast<std::size_t>(i)].name;
  }

  Index scalar_count() const {
    Index n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  std::vector<Matrix<S>> snapshot() const {
    std::vector<Matrix<S>> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.value);
    return out;
  }
  void restore(const std::vector<Matrix<S>>& snap) {
    require(snap.size() == entries_.size(), "ParamStore: snapshot mismatch");
    for (std::size_t i = 0; i < snap.size(); ++i) entries_[i].value = snap[i];
  }

  // FNV-1a over the raw parameter bytes, in store order.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& e : entries_) {
      const auto* bytes = reinterpret_cast<const std::uint8_t*>(e.value.data());
      const std::size_t n = static_cast<std::size_t>(e.value.size()) * sizeof(S);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
      }
    }
    return h;
  }

 private:
  struct Entry {
    std::string name;
    Matrix<S> value;
  };
  std::vector<Entry> entries_;
};

template <typename S>
using GradBuffer = std::vector<Matrix<S>>;

template <typename S>
GradBuffer<S> make_grad_buffer(const ParamStore<S>& store) {
  GradBuffer<S> out;
  out.reserve(static_cast<std::size_t>(store.count()));
  for (Index i = 0; i < store.count(); ++i)
    out.push_back(Matrix<S>::Zero(store.value(i).rows(), store.value(i).cols()));
  return out;
}

template <typename S>
void zero_grad(GradBuffer<S>& grads) {
  for (auto& g : grads) g.setZero();
}

// ---------------------------------------------------------------------------
// im2col / col2im for 3x3 stride-1 pad-1 convolution

template <typename S>
void im2col_3x3(const FeatureMap<S>& x, Matrix<S>& patches) {
  const Index h = x.h, w = x.w;
  patches.resize(h * w, x.c * 9);
  patches.setZero();
  for (Index ch = 0; ch < x.c; ++ch) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const Index k = ch * 9 + (dy + 1) * 3 + (dx + 1);
        const Index c0 = std::max<Index>(0, -dx);
        const Index len = w - std::abs(dx);
        for (Index r = 0; r < h; ++r) {
          const Index rr = r + dy;
          if (rr < 0 || rr >= h) continue;
          patches.col(k).segment(r * w + c0, len) =
              x.data.col(ch).segment(rr * w + c0 + dx, len);
        }
      }
    }
  }
}

template <typename S>
void col2im_3x3(const Matrix<S>& dpatches, FeatureMap<S>& dx) {
  const Index h = dx.h, w = dx.w;
  for (Index ch = 0; ch < dx.c; ++ch) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx_ = -1; dx_ <= 1; ++dx_) {
        const Index k = ch * 9 + (dy + 1) * 3 + (dx_ + 1);
        const Index c0 = std::max<Index>(0, -dx_);
        const Index len = w - std::abs(dx_);
        for (Index r = 0; r < h; ++r) {
          const Index rr = r + dy;
          if (rr < 0 || rr >= h) continue;
          dx.data.col(ch).segment(rr * w + c0 + dx_, len) +=
              dpatches.col(k).segment(r * w + c0, len);
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Layers

template <typename S>
struct Conv3x3 {
  Index in_c = 0, out_c = 0;
  Index weight = -1, bias = -1;  // weight (in_c*9) x out_c, bias 1 x out_c

  void init(ParamStore<S>& store, const std::string& prefix, Index in,
            Index out) {
    in_c = in;
    out_c = out;
    weight = store.add(prefix + ".weight", in * 9, out);
    bias = store.add(prefix + ".bias", 1, out);
  }

  FeatureMap<S> forward(const ParamStore<S>& store,
                        const FeatureMap<S>& x) const {
    thread_local Matrix<S> patches;
    im2col_3x3(x, patches);
    FeatureMap<S> y(x.h, x.w, out_c);
    y.data.noalias() = patches * store.value(weight);
    y.data.rowwise() += store.value(bias).row(0);
    return y;
  }

  FeatureMap<S> backward(const ParamStore<S>& store, const FeatureMap<S>& x,
                         const FeatureMap<S>& dy, GradBuffer<S>& grads) const {
    thread_local Matrix<S> patches;
    im2col_3x3(x, patches);  // recomputed; cheaper than keeping it in the tape
    grads[static_cast<std::size_t>(weight)].noalias() +=
        patches.transpose() * dy.data;
    grads[static_cast<std::size_t>(bias)].row(0) += dy.data.colwise().sum();

    thread_local Matrix<S> dpatches;
    dpatches.resize(x.pixels(), in_c * 9);
    dpatches.noalias() = dy.data * store.value(weight).transpose();
    FeatureMap<S> dx(x.h, x.w, in_c);
    col2im_3x3(dpatches, dx);
    return dx;
  }
};

// Per-sample, per-channel normalization over the spatial extent, with a
// learned affine. Inference and training use the same statistics, so the
// layer is batch-size independent and deterministic.
template <typename S>
struct ChannelNorm {
  static constexpr double kEps = 1e-5;
  Index channels = 0;
  Index gamma = -1, beta = -1;

  struct Ctx {
    RowVector<S> mean, invstd;
  };

  void init(ParamStore<S>& store, const std::string& prefix, Index c) {
    channels = c;
    gamma = store.add(prefix + ".gamma", 1, c);
    beta = store.add(prefix + ".beta", 1, c);
  }

  FeatureMap<S> forward(const ParamStore<S>& store, const FeatureMap<S>& x,
                        Ctx* ctx) const {
    FeatureMap<S> y(x.h, x.w, x.c);
    RowVector<S> mean(x.c), invstd(x.c);
    const double inv_n = 1.0 / static_cast<double>(x.pixels());
    for (Index c = 0; c < x.c; ++c) {
      const S m = static_cast<S>(x.data.col(c).sum() * inv_n);
      const S var =
          static_cast<S>((x.data.col(c).array() - m).square().sum() * inv_n);
      const S is = S(1) / std::sqrt(var + static_cast<S>(kEps));
      mean(c) = m;
      invstd(c) = is;
      y.data.col(c) = ((x.data.col(c).array() - m) * is *
                           store.value(gamma)(0, c) +
                       store.value(beta)(0, c))
                          .matrix();
    }
    if (ctx) {
      ctx->mean = mean;
      ctx->invstd = invstd;
    }
    return y;
  }

  FeatureMap<S> backward(const ParamStore<S>& store, const FeatureMap<S>& x,
                         const Ctx& ctx, const FeatureMap<S>& dy,
                         GradBuffer<S>& grads) const {
    FeatureMap<S> dx(x.h, x.w, x.c);
    const double inv_n = 1.0 / static_cast<double>(x.pixels());
    for (Index c = 0; c < x.c; ++c) {
      const auto xhat =
          ((x.data.col(c).array() - ctx.mean(c)) * ctx.invstd(c)).eval();
      const auto dyc = dy.data.col(c).array();
      grads[static_cast<std::size_t>(gamma)](0, c) += (dyc * xhat).sum();
      grads[static_cast<std::size_t>(beta)](0, c) += dyc.sum();
      const S g = store.value(gamma)(0, c);
      const S mean_dy = static_cast<S>(dyc.sum() * inv_n);
      const S mean_dy_xhat = static_cast<S>((dyc * xhat).sum() * inv_n);
      dx.data.col(c) =
          ((g * ctx.invstd(c)) * (dyc - mean_dy - xhat * mean_dy_xhat)).matrix();
    }
    return dx;
  }
};

template <typename S>
struct Relu {
  FeatureMap<S> forward(const FeatureMap<S>& x) const {
    FeatureMap<S> y(x.h, x.w, x.c);
    y.data = x.data.cwiseMax(S(0));
    return y;
  }
  // Uses the saved output: y > 0 exactly where x > 0.
  FeatureMap<S> backward(const FeatureMap<S>& saved_output,
                         const FeatureMap<S>& dy) const {
    FeatureMap<S> dx(dy.h, dy.w, dy.c);
    dx.data = (saved_output.data.array() > S(0))
                  .select(dy.data, Matrix<S>::Zero(dy.data.rows(), dy.data.cols()));
    return dx;
  }
};

// 2x2 max pooling, stride 2, with recorded argmax indices (flat input pixel
// per output pixel and channel). Ties resolve to the first maximum in scan
// order, deterministically.
template <typename S>
struct MaxPool2 {
  FeatureMap<S> forward(const FeatureMap<S>& x, PoolIndices* indices) const {
    require(x.h % 2 == 0 && x.w % 2 == 0, "MaxPool2: odd input size");
    const Index oh = x.h / 2, ow = x.w / 2;
    FeatureMap<S> y(oh, ow, x.c);
    if (indices) indices->resize(oh * ow, x.c);
    for (Index c = 0; c < x.c; ++c) {
      for (Index r = 0; r < oh; ++r) {
        for (Index col = 0; col < ow; ++col) {
          const Index base = (2 * r) * x.w + 2 * col;
          const Index cand[4] = {base, base + 1, base + x.w, base + x.w + 1};
          Index best = cand[0];
          S best_v = x.data(cand[0], c);
          for (int k = 1; k < 4; ++k)
            if (x.data(cand[k], c) > best_v) {
              best_v = x.data(cand[k], c);
              best = cand[k];
            }
          y.data(r * ow + col, c) = best_v;
          if (indices)
            (*indices)(r * ow + col, c) = static_cast<std::int32_t>(best);
        }
      }
    }
    return y;
  }

  FeatureMap<S> backward(const FeatureMap<S>& dy, const PoolIndices& indices,
                         Index in_h, Index in_w) const {
    FeatureMap<S> dx(in_h, in_w, dy.c);
    for (Index c = 0; c < dy.c; ++c)
      for (Index p = 0; p < dy.pixels(); ++p)
        dx.data(indices(p, c), c) += dy.data(p, c);
    return dx;
  }
};

// Places each value at the argmax position recorded by the paired encoder
// pool; all other positions stay zero.
template <typename S>
struct MaxUnpool2 {
  FeatureMap<S> forward(const FeatureMap<S>& x, const PoolIndices& indices,
                        Index out_h, Index out_w) const {
    require(indices.rows() == x.pixels() && indices.cols() == x.c,
            "MaxUnpool2: indices do not match the input");
    FeatureMap<S> y(out_h, out_w, x.c);
    for (Index c = 0; c < x.c; ++c)
      for (Index p = 0; p < x.pixels(); ++p)
        y.data(indices(p, c), c) = x.data(p, c);
    return y;
  }

  FeatureMap<S> backward(const FeatureMap<S>& dy, const PoolIndices& indices,
                         Index in_h, Index in_w) const {
    FeatureMap<S> dx(in_h, in_w, dy.c);
    for (Index c = 0; c < dy.c; ++c)
      for (Index p = 0; p < dx.pixels(); ++p)
        dx.data(p, c) = dy.data(indices(p, c), c);
    return dx;
  }
};

template <typename S>
struct GlobalAvgPool {
  Vector<S> forward(const FeatureMap<S>& x) const {
    return x.data.colwise().mean().transpose();
  }
  FeatureMap<S> backward(const Vector<S>& dy, Index h, Index w) const {
    FeatureMap<S> dx(h, w, dy.size());
    const S scale = S(1) / static_cast<S>(h * w);
    for (Index c = 0; c < dy.size(); ++c)
      dx.data.col(c).setConstant(dy(c) * scale);
    return dx;
  }
};

template <typename S>
struct Linear {
  Index in = 0, out = 0;
  Index weight = -1, bias = -1;  // weight in x out, bias out x 1

  void init(ParamStore<S>& store, const std::string& prefix, Index in_,
            Index out_) {
    in = in_;
    out = out_;
    weight = store.add(prefix + ".weight", in_, out_);
    bias = store.add(prefix + ".bias", out_, 1);
  }

  Vector<S> forward(const ParamStore<S>& store, const Vector<S>& x) const {
    return store.value(weight).transpose() * x + store.value(bias).col(0);
  }

  Vector<S> backward(const ParamStore<S>& store, const Vector<S>& x,
                     const Vector<S>& dy, GradBuffer<S>& grads) const {
    grads[static_cast<std::size_t>(weight)].noalias() += x * dy.transpose();
    grads[static_cast<std::size_t>(bias)].col(0) += dy;
    return store.value(weight) * dy;
  }
};

// Convolution + channel normalization + rectifier; the norm and rectifier
// are optional so a stage's last layer can emit raw values.
template <typename S>
struct ConvBlock {
  Conv3x3<S> conv;
  ChannelNorm<S> norm;
  bool use_norm = true, use_relu = true;

  struct Ctx {
    FeatureMap<S> input;
    FeatureMap<S> conv_out;
    typename ChannelNorm<S>::Ctx norm_ctx;
    FeatureMap<S> output;
  };

  void init(ParamStore<S>& store, const std::string& prefix, Index in,
            Index out, bool with_norm = true, bool with_relu = true) {
    use_norm = with_norm;
    use_relu = with_relu;
    conv.init(store, prefix + ".conv", in, out);
    if (use_norm) norm.init(store, prefix + ".norm", out);
  }

  FeatureMap<S> forward(const ParamStore<S>& store, const FeatureMap<S>& x,
                        Ctx* ctx) const {
    FeatureMap<S> a = conv.forward(store, x);
    FeatureMap<S> b =
        use_norm ? norm.forward(store, a, ctx ? &ctx->norm_ctx : nullptr) : a;
    FeatureMap<S> y = use_relu ? Relu<S>{}.forward(b) : b;
    if (ctx) {
      ctx->input = x;
      ctx->conv_out = std::move(a);
      ctx->output = y;
    }
    return y;
  }

  FeatureMap<S> backward(const ParamStore<S>& store, const Ctx& ctx,
                         const FeatureMap<S>& dy, GradBuffer<S>& grads) const {
    FeatureMap<S> d = use_relu ? Relu<S>{}.backward(ctx.output, dy) : dy;
    if (use_norm) d = norm.backward(store, ctx.conv_out, ctx.norm_ctx, d, grads);
    return conv.backward(store, ctx.input, d, grads);
  }
};

// ---------------------------------------------------------------------------
// Initialization and optimization

// Fan-in-scaled normal init for conv and linear weights; normalization
// scales start at one, every bias and shift at zero.
template <typename S>
void init_parameters(ParamStore<S>& store, unsigned seed) {
  std::mt19937 rng(seed);
  for (Index i = 0; i < store.count(); ++i) {
    auto& value = store.value(i);
    const std::string& name = store.name(i);
    if (name.ends_with(".gamma")) {
      value.setOnes();
    } else if (name.ends_with(".beta") || name.ends_with(".bias")) {
      value.setZero();
    } else {
      const double fan_in = static_cast<double>(value.rows());
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (Index col = 0; col < value.cols(); ++col)
        for (Index row = 0; row < value.rows(); ++row)
          value(row, col) = static_cast<S>(dist(rng));
    }
  }
}

template <typename S>
class Adam {
 public:
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  explicit Adam(const ParamStore<S>& store) {
    for (Index i = 0; i < store.count(); ++i) {
      m_.push_back(Matrix<S>::Zero(store.value(i).rows(), store.value(i).cols()));
      v_.push_back(Matrix<S>::Zero(store.value(i).rows(), store.value(i).cols()));
    }
  }

  void step(ParamStore<S>& store, const GradBuffer<S>& grads, double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    const double rate = lr * std::sqrt(bc2) / bc1;
    for (Index i = 0; i < store.count(); ++i) {
      auto& m = m_[static_cast<std::size_t>(i)];
      auto& v = v_[static_cast<std::size_t>(i)];
      const auto& g = grads[static_cast<std::size_t>(i)];
      m = static_cast<S>(beta1) * m + static_cast<S>(1.0 - beta1) * g;
      v = (static_cast<S>(beta2) * v.array() +
           static_cast<S>(1.0 - beta2) * g.array().square())
              .matrix();
      store.value(i).array() -=
          static_cast<S>(rate) * m.array() /
          (v.array().sqrt() + static_cast<S>(eps));
    }
  }

  long step_count() const { return step_; }
  std::vector<Matrix<S>>& first_moment() { return m_; }
  std::vector<Matrix<S>>& second_moment() { return v_; }
  void set_step_count(long n) { step_ = n; }

 private:
  long step_ = 0;
  std::vector<Matrix<S>> m_, v_;
};

}  // namespace defsurf::nn
