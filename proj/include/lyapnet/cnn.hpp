#pragma once

// 1D CNN regressor from a normalized series to a Lyapunov spectrum:
//
//   series (1 x L) -> conv(15, k=10, d=2) -> ReLU -> conv(30, k=5, d=4) -> ReLU
//                  -> global average pool (30) -> affine readout (n_outputs)
//
// Convolutions are stride 1 with zero padding (k-1)*d split floor-left /
// ceil-right so every layer keeps length L. Everything is double precision.
// Training minimizes the mean Huber loss with Adam and coupled L2 weight
// decay, keeping the parameters with the lowest validation loss.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "lyapnet/dynsys.hpp"
#include "lyapnet/errors.hpp"
#include "lyapnet/pipeline.hpp"
#include "lyapnet/rng.hpp"

namespace lyapnet {

struct ConvSpec {
  int out_channels = 1;
  int kernel = 1;
  int dilation = 1;

  int span() const noexcept { return (kernel - 1) * dilation; }
  int pad_left() const noexcept { return span() / 2; }
  int pad_right() const noexcept { return span() - span() / 2; }

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

struct Architecture {
  int in_len = static_cast<int>(kSeriesLength);
  ConvSpec conv1{15, 10, 2};
  ConvSpec conv2{30, 5, 4};
  int n_outputs = 3;

  static Architecture for_system(SystemKind kind) {
    Architecture a;
    a.n_outputs = system_dim(kind);
    return a;
  }

  std::size_t conv1_w_size() const { return static_cast<std::size_t>(conv1.out_channels) * 1 * conv1.kernel; }
  std::size_t conv2_w_size() const {
    return static_cast<std::size_t>(conv2.out_channels) * conv1.out_channels * conv2.kernel;
  }
  std::size_t out_w_size() const { return static_cast<std::size_t>(n_outputs) * conv2.out_channels; }

  std::size_t param_count() const {
    return conv1_w_size() + static_cast<std::size_t>(conv1.out_channels) + conv2_w_size() +
           static_cast<std::size_t>(conv2.out_channels) + out_w_size() + static_cast<std::size_t>(n_outputs);
  }

  void validate() const {
    require(in_len >= 1, "input length must be positive");
    for (const auto& c : {conv1, conv2}) {
      require(c.out_channels >= 1 && c.kernel >= 1 && c.dilation >= 1, "bad convolution shape");
    }
    require(n_outputs >= 1, "need at least one output");
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// All trainable values in one flat buffer, blocks in declaration order:
/// conv1_w [15][1][10], conv1_b [15], conv2_w [30][15][5], conv2_b [30],
/// out_w [n_outputs][30], out_b [n_outputs]. Gradients and Adam moments use
/// the same layout.
class ModelParams {
 public:
  ModelParams() : ModelParams(Architecture{}) {}
  explicit ModelParams(const Architecture& arch) : arch_(arch), values_(arch.param_count(), 0.0) { arch.validate(); }

  const Architecture& arch() const noexcept { return arch_; }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  std::span<double> conv1_w() noexcept { return block(0); }
  std::span<double> conv1_b() noexcept { return block(1); }
  std::span<double> conv2_w() noexcept { return block(2); }
  std::span<double> conv2_b() noexcept { return block(3); }
  std::span<double> out_w() noexcept { return block(4); }
  std::span<double> out_b() noexcept { return block(5); }
  std::span<const double> conv1_w() const noexcept { return block(0); }
  std::span<const double> conv1_b() const noexcept { return block(1); }
  std::span<const double> conv2_w() const noexcept { return block(2); }
  std::span<const double> conv2_b() const noexcept { return block(3); }
  std::span<const double> out_w() const noexcept { return block(4); }
  std::span<const double> out_b() const noexcept { return block(5); }

  static constexpr int kBlocks = 6;
  std::span<double> block(int i) noexcept { return std::span<double>(values_).subspan(offset(i), size(i)); }
  std::span<const double> block(int i) const noexcept {
    return std::span<const double>(values_).subspan(offset(i), size(i));
  }

  /// Fan-in used for initialization bounds of block i (weights and biases of
  /// one layer share it).
  int fan_in(int i) const noexcept {
    switch (i / 2) {
      case 0: return arch_.conv1.kernel;
      case 1: return arch_.conv1.out_channels * arch_.conv2.kernel;
      default: return arch_.conv2.out_channels;
    }
  }

  void set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  std::size_t size(int i) const noexcept {
    switch (i) {
      case 0: return arch_.conv1_w_size();
      case 1: return static_cast<std::size_t>(arch_.conv1.out_channels);
      case 2: return arch_.conv2_w_size();
      case 3: return static_cast<std::size_t>(arch_.conv2.out_channels);
      case 4: return arch_.out_w_size();
      default: return static_cast<std::size_t>(arch_.n_outputs);
    }
  }
  std::size_t offset(int i) const noexcept {
    std::size_t o = 0;
    for (int k = 0; k < i; ++k) o += size(k);
    return o;
  }

  Architecture arch_;
  std::vector<double> values_;
};

using Gradients = ModelParams;

/// Channel-major activations: row = channel, column = position.
using Activations = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

using RowMajorMap = Eigen::Map<const Activations>;

/// cols(j*k + m, i) = input(j, i + m*d - pad_left), zero outside the input.
inline void im2col(const Activations& input, const ConvSpec& c, Activations& cols) {
  const auto cin = input.rows();
  const auto len = input.cols();
  cols.setZero(cin * c.kernel, len);
  const Eigen::Index left = c.pad_left();
  for (Eigen::Index j = 0; j < cin; ++j) {
    for (int m = 0; m < c.kernel; ++m) {
      const Eigen::Index shift = static_cast<Eigen::Index>(m) * c.dilation - left;
      const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
      const Eigen::Index hi = std::min<Eigen::Index>(len, len - shift);
      if (hi > lo) cols.row(j * c.kernel + m).segment(lo, hi - lo) = input.row(j).segment(lo + shift, hi - lo);
    }
  }
}

}  // namespace detail

/// out[c, i] = bias[c] + sum_j sum_m w[c, j, m] * padded[j, i + m*d] with
/// weights laid out [c_out][c_in][k]. No activation.
inline Activations conv1d(const Activations& input, std::span<const double> weights, std::span<const double> bias,
                          int kernel, int dilation) {
  require(kernel >= 1 && dilation >= 1, "kernel and dilation must be positive");
  const auto cin = input.rows();
  require(!bias.empty(), "conv1d needs at least one output channel");
  const auto cout = static_cast<Eigen::Index>(bias.size());
  require(weights.size() == static_cast<std::size_t>(cout * cin * kernel), "conv1d weights have ", weights.size(),
          " entries, expected ", cout * cin * kernel);
  const ConvSpec c{static_cast<int>(cout), kernel, dilation};
  Activations cols;
  detail::im2col(input, c, cols);
  const detail::RowMajorMap w(weights.data(), cout, cin * kernel);
  Activations out = w * cols;
  out.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.data(), cout);
  return out;
}

/// Intermediate values of one forward pass, reused by backward().
struct ForwardCache {
  Activations cols1, a1, a2;
  Activations a1p;  // a1 zero padded: pad_left columns, then len, then zeros up to the block width
  Activations a2w;  // conv2 output before ReLU, block-width columns
  Eigen::VectorXd pooled;
  Eigen::VectorXd out;
};

namespace detail {

constexpr Eigen::Index kLanes = 8;
constexpr Eigen::Index kBlockLen = 4 * kLanes;

typedef double vd __attribute__((vector_size(kLanes * sizeof(double))));

inline vd vload(const double* p) noexcept {
  vd v;
  std::memcpy(&v, p, sizeof v);
  return v;
}
inline void vstore(double* p, vd v) noexcept { std::memcpy(p, &v, sizeof v); }

inline Eigen::Index block_width(Eigen::Index len) noexcept { return (len + kBlockLen - 1) / kBlockLen * kBlockLen; }

/// Direct dilated convolution over pre-padded rows:
///   out[o][i] = sum_j sum_m W(o, j, m) * in[j][i + m*d],  W(o,j,m) = w[o*so + j*sj + m*sm]
/// for o in [o0, o0+CB) and i < width (a multiple of kBlockLen).
template <int CB>
void conv_rows(const double* w, Eigen::Index so, Eigen::Index sj, Eigen::Index sm, Eigen::Index cin, int k, int d,
               const double* in, Eigen::Index in_stride, double* out, Eigen::Index out_stride, Eigen::Index width,
               Eigen::Index o0) {
  for (Eigen::Index i0 = 0; i0 < width; i0 += kBlockLen) {
    vd acc[CB][4] = {};
    for (Eigen::Index j = 0; j < cin; ++j) {
      for (int m = 0; m < k; ++m) {
        const double* src = in + j * in_stride + i0 + static_cast<Eigen::Index>(m) * d;
        const vd x0 = vload(src), x1 = vload(src + kLanes), x2 = vload(src + 2 * kLanes), x3 = vload(src + 3 * kLanes);
        const double* wp = w + o0 * so + j * sj + m * sm;
        for (int c = 0; c < CB; ++c) {
          const double wv = wp[c * so];
          acc[c][0] += wv * x0;
          acc[c][1] += wv * x1;
          acc[c][2] += wv * x2;
          acc[c][3] += wv * x3;
        }
      }
    }
    for (int c = 0; c < CB; ++c)
      for (int q = 0; q < 4; ++q) vstore(out + (o0 + c) * out_stride + i0 + q * kLanes, acc[c][q]);
  }
}

inline void conv_all(const double* w, Eigen::Index so, Eigen::Index sj, Eigen::Index sm, Eigen::Index cout,
                     Eigen::Index cin, int k, int d, const double* in, Eigen::Index in_stride, double* out,
                     Eigen::Index out_stride, Eigen::Index width) {
  auto run = [&]<int CB>(Eigen::Index o) { conv_rows<CB>(w, so, sj, sm, cin, k, d, in, in_stride, out, out_stride, width, o); };
  const int cb = cout % 6 == 0 ? 6 : cout % 5 == 0 ? 5 : cout % 4 == 0 ? 4 : 6;
  Eigen::Index o = 0;
  for (; o + cb <= cout; o += cb) {
    if (cb == 6) run.template operator()<6>(o);
    else if (cb == 5) run.template operator()<5>(o);
    else run.template operator()<4>(o);
  }
  for (; o < cout; ++o) run.template operator()<1>(o);
}

/// g[o][jm] += sum_{i < width} dz[o][i] * in[j][i + m*d], g laid out [o][j][k].
template <int CB>
void conv_weight_grad_rows(const double* dz, Eigen::Index dz_stride, Eigen::Index cin, int k, int d, const double* in,
                           Eigen::Index in_stride, Eigen::Index width, double* g, Eigen::Index o0) {
  constexpr int kMaxTaps = 8;
  for (Eigen::Index j = 0; j < cin; ++j) {
    for (int m0 = 0; m0 < k; m0 += kMaxTaps) {
      const int mk = std::min(kMaxTaps, k - m0);
      vd acc[CB][kMaxTaps] = {};
      for (Eigen::Index i = 0; i < width; i += kLanes) {
        vd x[kMaxTaps];
        for (int m = 0; m < mk; ++m) x[m] = vload(in + j * in_stride + i + static_cast<Eigen::Index>(m0 + m) * d);
        for (int c = 0; c < CB; ++c) {
          const vd z = vload(dz + (o0 + c) * dz_stride + i);
          for (int m = 0; m < mk; ++m) acc[c][m] += z * x[m];
        }
      }
      for (int c = 0; c < CB; ++c)
        for (int m = 0; m < mk; ++m) {
          double s = 0.0;
          for (Eigen::Index l = 0; l < kLanes; ++l) s += acc[c][m][l];
          g[((o0 + c) * cin + j) * k + m0 + m] += s;
        }
    }
  }
}

inline void conv_weight_grad(const double* dz, Eigen::Index dz_stride, Eigen::Index cout, Eigen::Index cin, int k,
                             int d, const double* in, Eigen::Index in_stride, Eigen::Index width, double* g) {
  Eigen::Index o = 0;
  for (; o + 3 <= cout; o += 3) conv_weight_grad_rows<3>(dz, dz_stride, cin, k, d, in, in_stride, width, g, o);
  for (; o < cout; ++o) conv_weight_grad_rows<1>(dz, dz_stride, cin, k, d, in, in_stride, width, g, o);
}

inline void forward_into(const ModelParams& p, std::span<const double> series, ForwardCache& fc) {
  const auto& a = p.arch();
  require(series.size() == static_cast<std::size_t>(a.in_len), "series has length ", series.size(), ", network expects ",
          a.in_len);
  const Eigen::Index len = a.in_len;
  const Eigen::Index c1 = a.conv1.out_channels, c2 = a.conv2.out_channels;
  const Eigen::Index width = block_width(len);

  const Activations x = Eigen::Map<const Activations>(series.data(), 1, len);
  im2col(x, a.conv1, fc.cols1);
  fc.a1.noalias() = RowMajorMap(p.conv1_w().data(), c1, a.conv1.kernel) * fc.cols1;
  fc.a1.colwise() += Eigen::Map<const Eigen::VectorXd>(p.conv1_b().data(), c1);
  fc.a1 = fc.a1.cwiseMax(0.0);

  fc.a1p.setZero(c1, width + a.conv2.span());
  fc.a1p.middleCols(a.conv2.pad_left(), len) = fc.a1;
  fc.a2w.resize(c2, width);
  conv_all(p.conv2_w().data(), c1 * a.conv2.kernel, a.conv2.kernel, 1, c2, c1, a.conv2.kernel, a.conv2.dilation,
           fc.a1p.data(), fc.a1p.cols(), fc.a2w.data(), width, width);
  fc.a2 = (fc.a2w.leftCols(len).colwise() + Eigen::Map<const Eigen::VectorXd>(p.conv2_b().data(), c2)).cwiseMax(0.0);

  fc.pooled = fc.a2.rowwise().mean();
  fc.out = RowMajorMap(p.out_w().data(), a.n_outputs, c2) * fc.pooled +
           Eigen::Map<const Eigen::VectorXd>(p.out_b().data(), a.n_outputs);
  if (!fc.out.allFinite()) throw NumericFault("non-finite network output");
}

}  // namespace detail

/// Predicted spectrum (n_outputs values, LE_1 first).
inline std::vector<double> forward(const ModelParams& params, std::span<const double> series) {
  ForwardCache fc;
  detail::forward_into(params, series, fc);
  return {fc.out.data(), fc.out.data() + fc.out.size()};
}

/// One (input, target) pair of a batch.
struct Example {
  std::span<const double> series;
  std::span<const double> target;
};

inline std::vector<Example> as_examples(std::span<const LabeledSample> samples) {
  std::vector<Example> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({s.series, s.le_truth});
  return out;
}

inline double huber_term(double e, double delta) noexcept {
  const double a = std::abs(e);
  return a < delta ? 0.5 * e * e : delta * (a - 0.5 * delta);
}

inline double huber_slope(double e, double delta) noexcept {
  return std::abs(e) < delta ? e : (e > 0.0 ? delta : -delta);
}

/// Mean over every residual of 0.5 e^2 (|e| < delta) or delta (|e| - delta/2).
inline double huber_loss(std::span<const double> pred, std::span<const double> target, double delta) {
  require(pred.size() == target.size(), "prediction and target shapes differ (", pred.size(), " vs ", target.size(), ")");
  require(!pred.empty(), "huber_loss of an empty batch");
  require(delta > 0.0, "delta must be positive");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += huber_term(pred[i] - target[i], delta);
  return sum / static_cast<double>(pred.size());
}

/// Reusable buffers for backward() so the training loop does not allocate.
struct BackwardWorkspace {
  ForwardCache fc;
  Activations dz2, da1w, da1;
};

/// Exact gradient of the batch-mean Huber loss with respect to every
/// parameter, written into `grads` (overwritten). Returns the loss.
/// ReLU'(0) is taken as 0.
inline double backward(const ModelParams& p, std::span<const Example> batch, double delta, Gradients& grads,
                       BackwardWorkspace& ws) {
  require(!batch.empty(), "backward needs a non-empty batch");
  const auto& a = p.arch();
  require(grads.arch() == a, "gradient buffer has a different architecture");
  const Eigen::Index len = a.in_len;
  const Eigen::Index c1 = a.conv1.out_channels, c2 = a.conv2.out_channels, n_out = a.n_outputs;
  const double scale = 1.0 / static_cast<double>(batch.size() * static_cast<std::size_t>(n_out));

  grads.set_zero();
  using MutMap = Eigen::Map<Activations>;
  using VecMap = Eigen::Map<Eigen::VectorXd>;
  MutMap gw1(grads.conv1_w().data(), c1, a.conv1.kernel);
  VecMap gb1(grads.conv1_b().data(), c1);
  VecMap gb2(grads.conv2_b().data(), c2);
  MutMap gwo(grads.out_w().data(), n_out, c2);
  VecMap gbo(grads.out_b().data(), n_out);
  const Eigen::Index width = detail::block_width(len);
  const Eigen::Index span2 = a.conv2.span();
  ws.dz2.setZero(c2, width + 2 * span2);
  ws.da1w.resize(c1, width);
  const detail::RowMajorMap wo(p.out_w().data(), n_out, c2);

  double loss = 0.0;
  Eigen::VectorXd g_out(n_out), dpool(c2);
  auto& fc = ws.fc;
  for (const auto& ex : batch) {
    require(ex.target.size() == static_cast<std::size_t>(n_out), "target has ", ex.target.size(),
            " values, network has ", n_out, " outputs");
    detail::forward_into(p, ex.series, fc);
    for (Eigen::Index k = 0; k < n_out; ++k) {
      const double e = fc.out[k] - ex.target[static_cast<std::size_t>(k)];
      loss += huber_term(e, delta);
      g_out[k] = huber_slope(e, delta) * scale;
    }
    gbo += g_out;
    gwo.noalias() += g_out * fc.pooled.transpose();
    dpool.noalias() = wo.transpose() * g_out;
    dpool /= static_cast<double>(len);

    // dL/dz2 = dpool broadcast over positions, masked where ReLU was inactive.
    // dz2 sits at column span of its buffer; everything else stays zero.
    for (Eigen::Index c = 0; c < c2; ++c) {
      double* row = ws.dz2.data() + c * ws.dz2.cols() + span2;
      const double* act = fc.a2.data() + c * len;
      const double g = dpool[c];
      double sum = 0.0;
      for (Eigen::Index i = 0; i < len; ++i) {
        row[i] = act[i] > 0.0 ? g : 0.0;
        sum += row[i];
      }
      gb2[c] += sum;
    }
    detail::conv_weight_grad(ws.dz2.data() + span2, ws.dz2.cols(), c2, c1, a.conv2.kernel, a.conv2.dilation,
                             fc.a1p.data(), fc.a1p.cols(), width, grads.conv2_w().data());

    // Transposed convolution: flipped taps, channels swapped.
    detail::conv_all(p.conv2_w().data() + (a.conv2.kernel - 1), a.conv2.kernel, c1 * a.conv2.kernel, -1, c1, c2,
                     a.conv2.kernel, a.conv2.dilation, ws.dz2.data() + a.conv2.pad_left(), ws.dz2.cols(),
                     ws.da1w.data(), width, width);
    ws.da1 = ws.da1w.leftCols(len);
    ws.da1 = (fc.a1.array() > 0.0).select(ws.da1, 0.0);
    gb1 += ws.da1.rowwise().sum();
    gw1.noalias() += ws.da1 * fc.cols1.transpose();
  }
  loss *= scale;
  if (!std::isfinite(loss)) throw NumericFault("non-finite loss in backward pass");
  return loss;
}

inline double backward(const ModelParams& p, std::span<const Example> batch, double delta, Gradients& grads) {
  BackwardWorkspace ws;
  return backward(p, batch, delta, grads, ws);
}

struct TrainConfig {
  int epochs = 2000;
  double lr = 0.008;
  double weight_decay = 1e-5;
  double delta = 0.6;
  int batch_train = 128;
  int batch_eval = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    require(epochs >= 1, "epochs must be >= 1");
    require(lr > 0.0 && weight_decay >= 0.0 && delta > 0.0, "lr and delta must be positive, weight_decay >= 0");
    require(batch_train >= 1 && batch_eval >= 1, "batch sizes must be positive");
    require(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0 && eps_adam > 0.0, "bad Adam constants");
  }
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
};

/// One Adam update at step t >= 1. Weight decay is added to the gradient
/// (coupled L2) before the moment estimates.
inline void adam_step(ModelParams& params, const Gradients& grads, AdamState& st, std::int64_t t,
                      const TrainConfig& cfg) {
  require(t >= 1, "Adam step index starts at 1");
  auto w = params.values();
  auto g = grads.values();
  require(w.size() == g.size(), "gradient and parameter sizes differ");
  if (st.m.size() != w.size()) {
    st.m.assign(w.size(), 0.0);
    st.v.assign(w.size(), 0.0);
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double gi = g[i] + cfg.weight_decay * w[i];
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * gi;
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * gi * gi;
    const double m_hat = st.m[i] / bc1;
    const double v_hat = st.v[i] / bc2;
    w[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps_adam);
  }
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for the weights and biases of
/// each layer, fully determined by the seed.
inline ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
  ModelParams p(arch);
  const CounterRng rng(seed);
  std::uint64_t counter = 0;
  for (int b = 0; b < ModelParams::kBlocks; ++b) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.fan_in(b)));
    for (double& v : p.block(b)) v = rng.uniform(RngStream::Init, counter++, -bound, bound);
  }
  return p;
}

/// Mean Huber loss over every residual of `samples`, accumulated batch by batch.
inline double evaluate_loss(const ModelParams& p, std::span<const LabeledSample> samples, double delta,
                            int batch = 100) {
  require(!samples.empty(), "cannot evaluate on an empty set");
  ForwardCache fc;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch));
    double batch_sum = 0.0;
    for (std::size_t i = start; i < end; ++i) {
      detail::forward_into(p, samples[i].series, fc);
      const auto& t = samples[i].le_truth;
      require(t.size() == static_cast<std::size_t>(fc.out.size()), "label size does not match network outputs");
      for (Eigen::Index k = 0; k < fc.out.size(); ++k) batch_sum += huber_term(fc.out[k] - t[static_cast<std::size_t>(k)], delta);
      count += t.size();
    }
    total += batch_sum;
  }
  return total / static_cast<double>(count);
}

struct EpochLoss {
  double train = 0.0;
  double val = 0.0;
};

struct TrainReport {
  ModelParams best_params;
  int best_epoch = -1;
  std::vector<EpochLoss> history;
};

/// Called after every epoch with (epoch, losses); may be empty.
using EpochCallback = std::function<void(int, const EpochLoss&)>;

/// Full training run. Each epoch draws a fresh permutation from
/// (cfg.seed, epoch), steps Adam once per batch (the last short batch
/// included), then scores the validation set. The parameters with the lowest
/// validation loss seen over all epochs are returned; training never stops
/// early.
inline TrainReport train(const Architecture& arch, std::span<const LabeledSample> train_set,
                         std::span<const LabeledSample> val_set, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  require(!train_set.empty() && !val_set.empty(), "training and validation sets must be non-empty");
  ModelParams params = init_params(arch, cfg.seed);
  Gradients grads(arch);
  AdamState adam;
  BackwardWorkspace ws;
  const CounterRng rng(cfg.seed);
  const auto examples = as_examples(train_set);
  std::vector<Example> batch;
  batch.reserve(static_cast<std::size_t>(cfg.batch_train));

  TrainReport report{params, -1, {}};
  report.history.reserve(static_cast<std::size_t>(cfg.epochs));
  double best = std::numeric_limits<double>::infinity();
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto perm = rng.permutation(examples.size(), substream(RngStream::EpochShuffle, static_cast<std::uint64_t>(epoch)));
    double weighted = 0.0;
    for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(cfg.batch_train)) {
      const std::size_t end = std::min(perm.size(), start + static_cast<std::size_t>(cfg.batch_train));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(examples[perm[i]]);
      double loss = 0.0;
      try {
        loss = backward(params, batch, cfg.delta, grads, ws);
      } catch (const NumericFault& e) {
        throw NumericFault(detail::concat(e.what(), " (epoch ", epoch, ", batch starting at ", start, ")"));
      }
      weighted += loss * static_cast<double>(end - start);
      adam_step(params, grads, adam, ++step, cfg);
    }
    EpochLoss el;
    el.train = weighted / static_cast<double>(examples.size());
    try {
      el.val = evaluate_loss(params, val_set, cfg.delta, cfg.batch_eval);
    } catch (const NumericFault& e) {
      throw NumericFault(detail::concat(e.what(), " (validation after epoch ", epoch, ")"));
    }
    report.history.push_back(el);
    if (el.val < best) {
      best = el.val;
      report.best_epoch = epoch;
      report.best_params = params;
    }
    if (on_epoch) on_epoch(epoch, el);
  }
  return report;
}

inline TrainReport train(const Architecture& arch, const DatasetSplits& splits, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  return train(arch, splits.train, splits.val, cfg, on_epoch);
}

}  // namespace lyapnet
