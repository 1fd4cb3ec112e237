#include "sair/unet.hpp"

#include "sair/parallel.hpp"
#include "sair/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

namespace sair {
namespace {

template <typename S>
using LayerRefs = std::array<ConvLayer<S>*, UNetParams<S>::kLayerCount>;

template <typename S>
LayerRefs<S> layers_of(UNetParams<S>& p) {
  return {&p.enc1a, &p.enc1b, &p.bottle_a, &p.bottle_b, &p.dec1a, &p.dec1b, &p.head};
}

template <typename S>
std::array<const ConvLayer<S>*, UNetParams<S>::kLayerCount> layers_of(const UNetParams<S>& p) {
  return {&p.enc1a, &p.enc1b, &p.bottle_a, &p.bottle_b, &p.dec1a, &p.dec1b, &p.head};
}

int reflect(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

// cols(i * w + j, (c * k + dy) * k + dx) = in(reflect(i + dy - r), reflect(j + dx - r), c)
template <typename S>
void im2col(const Mat<S>& in, int h, int w, int k, Eigen::Ref<Mat<S>> cols) {
  const int r = k / 2;
  for (Eigen::Index c = 0; c < in.cols(); ++c) {
    const S* src = in.col(c).data();
    for (int dy = 0; dy < k; ++dy)
      for (int dx = 0; dx < k; ++dx) {
        S* dst = cols.col((c * k + dy) * k + dx).data();
        const int off = dx - r;
        const int j0 = std::max(0, -off), j1 = std::min(w, w - off);
        for (int i = 0; i < h; ++i) {
          const S* srow = src + static_cast<Eigen::Index>(reflect(i + dy - r, h)) * w;
          S* drow = dst + static_cast<Eigen::Index>(i) * w;
          for (int j = 0; j < j0; ++j) drow[j] = srow[reflect(j + off, w)];
          std::memcpy(drow + j0, srow + j0 + off, sizeof(S) * static_cast<std::size_t>(j1 - j0));
          for (int j = j1; j < w; ++j) drow[j] = srow[reflect(j + off, w)];
        }
      }
  }
}

// Adjoint of im2col: scatter-adds the columns back onto the input grid.
template <typename S>
void col2im(const Eigen::Ref<const Mat<S>>& cols, int h, int w, int k, Eigen::Index channels, Mat<S>& out) {
  const int r = k / 2;
  out.setZero(static_cast<Eigen::Index>(h) * w, channels);
  for (Eigen::Index c = 0; c < channels; ++c) {
    S* dst = out.col(c).data();
    for (int dy = 0; dy < k; ++dy)
      for (int dx = 0; dx < k; ++dx) {
        const S* src = cols.col((c * k + dy) * k + dx).data();
        const int off = dx - r;
        const int j0 = std::max(0, -off), j1 = std::min(w, w - off);
        for (int i = 0; i < h; ++i) {
          S* drow = dst + static_cast<Eigen::Index>(reflect(i + dy - r, h)) * w;
          const S* srow = src + static_cast<Eigen::Index>(i) * w;
          for (int j = 0; j < j0; ++j) drow[reflect(j + off, w)] += srow[j];
          for (int j = j0; j < j1; ++j) drow[j + off] += srow[j];
          for (int j = j1; j < w; ++j) drow[reflect(j + off, w)] += srow[j];
        }
      }
  }
}

// Scratch buffers for the unfolded convolution inputs; they only ever grow, so a
// thread reuses the same allocation across layers and calls.
template <typename S>
struct Workspace {
  std::vector<S> cols_buf, dcols_buf, pad_buf, out_buf;

  static Eigen::Map<Mat<S>> view(std::vector<S>& buf, Eigen::Index rows, Eigen::Index cols) {
    const auto n = static_cast<std::size_t>(rows * cols);
    if (buf.size() < n) buf.resize(n);
    return Eigen::Map<Mat<S>>(buf.data(), rows, cols);
  }
  Eigen::Map<Mat<S>> cols(Eigen::Index rows, Eigen::Index cols) { return view(cols_buf, rows, cols); }
  Eigen::Map<Mat<S>> dcols(Eigen::Index rows, Eigen::Index cols) { return view(dcols_buf, rows, cols); }
  Eigen::Map<Mat<S>> padded(Eigen::Index rows, Eigen::Index cols) { return view(pad_buf, rows, cols); }
  Eigen::Map<Mat<S>> out_t(Eigen::Index rows, Eigen::Index cols) { return view(out_buf, rows, cols); }
};

template <typename S>
Workspace<S>& thread_workspace() {
  thread_local Workspace<S> ws;
  return ws;
}

// Forward convolution in a pixel-major layout: the reflect-padded input is stored channel-last,
// so each pixel's receptive field is k contiguous runs of k * C values and the product is
// W' (C_out x k*k*C) * patches (k*k*C x HW), which Eigen runs much faster than the planar form.
template <typename S>
void conv_forward(const ConvLayer<S>& layer, const Mat<S>& in, int h, int w, Workspace<S>& ws, Mat<S>& out) {
  if (layer.kernel == 1) {
    out.noalias() = in * layer.weight.transpose();
    out.rowwise() += layer.bias.transpose();
    return;
  }
  const int k = layer.kernel, r = k / 2, hp = h + 2 * r, wp = w + 2 * r;
  const Eigen::Index channels = in.cols(), run = static_cast<Eigen::Index>(k) * channels;
  const Eigen::Index pixels = static_cast<Eigen::Index>(h) * w;

  auto pad = ws.padded(channels, static_cast<Eigen::Index>(hp) * wp);
  for (int ip = 0; ip < hp; ++ip) {
    const Eigen::Index row = static_cast<Eigen::Index>(reflect(ip - r, h)) * w;
    for (int jp = 0; jp < wp; ++jp) pad.col(static_cast<Eigen::Index>(ip) * wp + jp) = in.row(row + reflect(jp - r, w)).transpose();
  }

  // Tap order inside a patch is (dy, dx, c); permute the weights to match.
  Mat<S> wperm(layer.out_channels, layer.weight.cols());
  for (Eigen::Index c = 0; c < channels; ++c)
    for (int dy = 0; dy < k; ++dy)
      for (int dx = 0; dx < k; ++dx)
        wperm.col((dy * k + dx) * channels + c) = layer.weight.col((c * k + dy) * k + dx);

  auto patches = ws.cols(layer.weight.cols(), pixels);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      S* dst = patches.col(static_cast<Eigen::Index>(i) * w + j).data();
      for (int dy = 0; dy < k; ++dy)
        std::memcpy(dst + dy * run, pad.col(static_cast<Eigen::Index>(i + dy) * wp + j).data(),
                    sizeof(S) * static_cast<std::size_t>(run));
    }

  auto out_t = ws.out_t(layer.out_channels, pixels);
  out_t.noalias() = wperm * patches;
  out = out_t.transpose();
  out.rowwise() += layer.bias.transpose();
}

// Accumulates parameter gradients into `g`; writes the input gradient to `din` when non-null.
template <typename S>
void conv_backward(const ConvLayer<S>& layer, const Mat<S>& in, int h, int w, const Mat<S>& dout, Workspace<S>& ws,
                   ConvLayer<S>& g, Mat<S>* din) {
  g.bias.noalias() += dout.colwise().sum().transpose();
  if (layer.kernel == 1) {
    g.weight.noalias() += dout.transpose() * in;
    if (din) din->noalias() = dout * layer.weight;
    return;
  }
  const Eigen::Index pixels = static_cast<Eigen::Index>(h) * w;
  auto cols = ws.cols(pixels, layer.weight.cols());
  im2col<S>(in, h, w, layer.kernel, cols);
  g.weight.noalias() += dout.transpose() * cols;
  if (din) {
    auto dcols = ws.dcols(pixels, layer.weight.cols());
    dcols.noalias() = dout * layer.weight;
    col2im<S>(dcols, h, w, layer.kernel, in.cols(), *din);
  }
}

template <typename S>
void relu(Mat<S>& a) {
  a = a.cwiseMax(S(0));
}

// Zeroes gradient entries where the post-activation is not positive.
template <typename S>
void relu_backward(const Mat<S>& activated, Mat<S>& grad) {
  grad = (activated.array() > S(0)).select(grad, S(0));
}

template <typename S>
void maxpool2(const Mat<S>& in, int h, int w, Mat<S>& out, std::vector<Eigen::Index>& argmax) {
  const int ho = h / 2, wo = w / 2;
  out.resize(static_cast<Eigen::Index>(ho) * wo, in.cols());
  argmax.resize(static_cast<std::size_t>(out.size()));
  for (Eigen::Index c = 0; c < in.cols(); ++c)
    for (int i = 0; i < ho; ++i)
      for (int j = 0; j < wo; ++j) {
        Eigen::Index best = (2 * i) * w + 2 * j;
        for (Eigen::Index cand : {best + 1, best + w, best + w + 1})
          if (in(cand, c) > in(best, c)) best = cand;
        const Eigen::Index o = static_cast<Eigen::Index>(i) * wo + j;
        out(o, c) = in(best, c);
        argmax[static_cast<std::size_t>(c * out.rows() + o)] = best;
      }
}

template <typename S>
void maxpool2_backward(const Mat<S>& dout, const std::vector<Eigen::Index>& argmax, Mat<S>& din) {
  for (Eigen::Index c = 0; c < dout.cols(); ++c)
    for (Eigen::Index o = 0; o < dout.rows(); ++o)
      din(argmax[static_cast<std::size_t>(c * dout.rows() + o)], c) += dout(o, c);
}

// Nearest-neighbour x2 upsampling written into a block of `out`.
template <typename S, typename Block>
void upsample2(const Mat<S>& in, int h, int w, Block&& out) {
  const int wo = w / 2;
  for (Eigen::Index c = 0; c < in.cols(); ++c)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) out(static_cast<Eigen::Index>(i) * w + j, c) = in((i / 2) * wo + j / 2, c);
}

template <typename S, typename Block>
void upsample2_backward(const Block& dout, int h, int w, Mat<S>& din) {
  const int wo = w / 2;
  din.setZero(static_cast<Eigen::Index>(h / 2) * wo, dout.cols());
  for (Eigen::Index c = 0; c < dout.cols(); ++c)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) din((i / 2) * wo + j / 2, c) += dout(static_cast<Eigen::Index>(i) * w + j, c);
}

template <typename S>
struct Activations {
  int h = 0, w = 0;
  Mat<S> x, a1, a2, pooled, b1, b2, cat, d1, d2, out;
  std::vector<Eigen::Index> argmax;
};

template <typename S>
void check_shape(Eigen::Index h, Eigen::Index w) {
  if (h < 8 || w < 8) throw NetworkError("U-Net input must be at least 8x8");
  if (h % 2 != 0 || w % 2 != 0) throw NetworkError("U-Net input extents must be even");
}

template <typename S>
void forward(const UNetParams<S>& p, const Image<S>& img, Workspace<S>& ws, Activations<S>& act) {
  check_shape<S>(img.rows(), img.cols());
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  act.h = h;
  act.w = w;
  act.x = Eigen::Map<const Vec<S>>(img.data(), img.size());

  conv_forward(p.enc1a, act.x, h, w, ws, act.a1);
  relu(act.a1);
  conv_forward(p.enc1b, act.a1, h, w, ws, act.a2);
  relu(act.a2);
  maxpool2(act.a2, h, w, act.pooled, act.argmax);
  conv_forward(p.bottle_a, act.pooled, h / 2, w / 2, ws, act.b1);
  relu(act.b1);
  conv_forward(p.bottle_b, act.b1, h / 2, w / 2, ws, act.b2);
  relu(act.b2);

  const Eigen::Index up_channels = act.b2.cols(), skip_channels = act.a2.cols();
  act.cat.resize(static_cast<Eigen::Index>(h) * w, up_channels + skip_channels);
  upsample2<S>(act.b2, h, w, act.cat.leftCols(up_channels));
  act.cat.rightCols(skip_channels) = act.a2;

  conv_forward(p.dec1a, act.cat, h, w, ws, act.d1);
  relu(act.d1);
  conv_forward(p.dec1b, act.d1, h, w, ws, act.d2);
  relu(act.d2);
  conv_forward(p.head, act.d2, h, w, ws, act.out);
  act.out += act.x;
}

// Backpropagates dL/d(out) through the network; returns dL/d(input) when requested.
template <typename S>
void backward(const UNetParams<S>& p, const Activations<S>& act, const Mat<S>& dout, Workspace<S>& ws,
              UNetParams<S>& g, Mat<S>* dinput) {
  const int h = act.h, w = act.w;
  Mat<S> dd2, dd1, dcat, db2, db1, dpooled, da2, da1;

  conv_backward(p.head, act.d2, h, w, dout, ws, g.head, &dd2);
  relu_backward(act.d2, dd2);
  conv_backward(p.dec1b, act.d1, h, w, dd2, ws, g.dec1b, &dd1);
  relu_backward(act.d1, dd1);
  conv_backward(p.dec1a, act.cat, h, w, dd1, ws, g.dec1a, &dcat);

  const Eigen::Index up_channels = act.b2.cols();
  upsample2_backward<S>(dcat.leftCols(up_channels), h, w, db2);
  da2 = dcat.rightCols(act.a2.cols());

  relu_backward(act.b2, db2);
  conv_backward(p.bottle_b, act.b1, h / 2, w / 2, db2, ws, g.bottle_b, &db1);
  relu_backward(act.b1, db1);
  conv_backward(p.bottle_a, act.pooled, h / 2, w / 2, db1, ws, g.bottle_a, &dpooled);
  maxpool2_backward(dpooled, act.argmax, da2);

  relu_backward(act.a2, da2);
  conv_backward(p.enc1b, act.a1, h, w, da2, ws, g.enc1b, &da1);
  relu_backward(act.a1, da1);
  conv_backward(p.enc1a, act.x, h, w, da1, ws, g.enc1a, dinput);
  if (dinput) *dinput += dout;
}

template <typename S>
void validate_batch(const std::vector<ImagePair<S>>& batch) {
  if (batch.empty()) throw NetworkError("empty batch");
  const auto rows = batch.front().input.rows(), cols = batch.front().input.cols();
  for (const auto& pair : batch)
    if (pair.input.rows() != rows || pair.input.cols() != cols || pair.target.rows() != rows ||
        pair.target.cols() != cols)
      throw NetworkError("shape mismatch within batch");
}

template <typename S>
void write_layer(std::ofstream& out, const std::string& name, const ConvLayer<S>& l) {
  auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  put_u32(static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(static_cast<std::uint32_t>(l.in_channels));
  put_u32(static_cast<std::uint32_t>(l.out_channels));
  put_u32(static_cast<std::uint32_t>(l.kernel));
  // Row-major (out, in * k * k) weights, then biases.
  const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> wr = l.weight.template cast<float>();
  out.write(reinterpret_cast<const char*>(wr.data()), static_cast<std::streamsize>(wr.size() * sizeof(float)));
  const Vec<float> b = l.bias.template cast<float>();
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size() * sizeof(float)));
}

constexpr char kCheckpointMagic[8] = {'S', 'A', 'I', 'R', 'U', 'N', 'E', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

template <typename S>
UNetParams<S> UNetParams<S>::zeros() {
  constexpr int c = kBaseChannels, k = kKernelSize;
  UNetParams p;
  p.enc1a = ConvLayer<S>::zeros(1, c, k);
  p.enc1b = ConvLayer<S>::zeros(c, c, k);
  p.bottle_a = ConvLayer<S>::zeros(c, 2 * c, k);
  p.bottle_b = ConvLayer<S>::zeros(2 * c, 2 * c, k);
  p.dec1a = ConvLayer<S>::zeros(3 * c, c, k);
  p.dec1b = ConvLayer<S>::zeros(c, c, k);
  p.head = ConvLayer<S>::zeros(c, 1, 1);
  return p;
}

template <typename S>
Eigen::Index UNetParams<S>::parameter_count() const {
  Eigen::Index n = 0;
  for_each_layer([&](const char*, const ConvLayer<S>& l) { n += l.size(); });
  return n;
}

template <typename S>
bool UNetParams<S>::all_finite() const {
  bool ok = true;
  for_each_layer([&](const char*, const ConvLayer<S>& l) { ok = ok && l.weight.allFinite() && l.bias.allFinite(); });
  return ok;
}

template <typename S>
Vec<S> UNetParams<S>::flatten() const {
  Vec<S> flat(parameter_count());
  Eigen::Index at = 0;
  for_each_layer([&](const char*, const ConvLayer<S>& l) {
    flat.segment(at, l.weight.size()) = l.weight.reshaped();
    at += l.weight.size();
    flat.segment(at, l.bias.size()) = l.bias;
    at += l.bias.size();
  });
  return flat;
}

template <typename S>
void UNetParams<S>::unflatten(const Vec<S>& flat) {
  if (flat.size() != parameter_count()) throw NetworkError("flat parameter vector has the wrong length");
  Eigen::Index at = 0;
  for_each_layer([&](const char*, ConvLayer<S>& l) {
    l.weight.reshaped() = flat.segment(at, l.weight.size());
    at += l.weight.size();
    l.bias = flat.segment(at, l.bias.size());
    at += l.bias.size();
  });
}

template <typename S>
UNetParams<S> init_params(std::uint64_t seed) {
  UNetParams<S> p = UNetParams<S>::zeros();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (ConvLayer<S>* l : layers_of(p)) {
    if (l == &p.head) continue;
    const double scale = std::sqrt(2.0 / static_cast<double>(l->fan_in()));
    for (Eigen::Index i = 0; i < l->weight.size(); ++i) l->weight.data()[i] = static_cast<S>(scale * normal(rng));
  }
  return p;
}

template <typename S>
Image<S> unet_forward(const UNetParams<S>& p, const Image<S>& img) {
  Workspace<S>& ws = thread_workspace<S>();
  Activations<S> act;
  forward(p, img, ws, act);
  Image<S> out(img.rows(), img.cols());
  Eigen::Map<Vec<S>>(out.data(), out.size()) = act.out;
  return out;
}

template <typename S>
Image<S> unet_residual(const UNetParams<S>& p, const Image<S>& img) {
  Workspace<S>& ws = thread_workspace<S>();
  Activations<S> act;
  forward(p, img, ws, act);
  Image<S> out(img.rows(), img.cols());
  Eigen::Map<Vec<S>>(out.data(), out.size()) = act.out - act.x;
  return out;
}

template <typename S>
LossGrad<S> loss_and_grad(const UNetParams<S>& p, const std::vector<ImagePair<S>>& batch, int threads) {
  validate_batch(batch);
  const double denom = static_cast<double>(batch.size()) * static_cast<double>(batch.front().input.size());
  std::vector<UNetParams<S>> grads(batch.size());
  std::vector<double> losses(batch.size());

  parallel_for(batch.size(), threads, [&](std::size_t b) {
    Workspace<S>& ws = thread_workspace<S>();
    Activations<S> act;
    forward(p, batch[b].input, ws, act);
    const Mat<S> residual = act.out - Eigen::Map<const Vec<S>>(batch[b].target.data(), batch[b].target.size());
    losses[b] = residual.template cast<double>().squaredNorm() / denom;
    const Mat<S> dout = residual * static_cast<S>(2.0 / denom);
    grads[b] = UNetParams<S>::zeros();
    backward(p, act, dout, ws, grads[b], static_cast<Mat<S>*>(nullptr));
  });

  LossGrad<S> out{0.0, std::move(grads.front())};
  out.loss = losses.front();
  auto sum = layers_of(out.grad);
  for (std::size_t b = 1; b < batch.size(); ++b) {
    out.loss += losses[b];
    const auto part = layers_of(static_cast<const UNetParams<S>&>(grads[b]));
    for (std::size_t l = 0; l < sum.size(); ++l) {
      sum[l]->weight += part[l]->weight;
      sum[l]->bias += part[l]->bias;
    }
  }
  return out;
}

LossGrad<double> loss_and_grad(const UNetParams<double>& p, const std::vector<TrainingPair>& batch, int threads) {
  std::vector<ImagePair<double>> converted;
  converted.reserve(batch.size());
  for (const auto& pair : batch) converted.push_back({pair.input, pair.target});
  return loss_and_grad(p, converted, threads);
}

template <typename S>
std::vector<Image<S>> input_gradient(const UNetParams<S>& p, const std::vector<ImagePair<S>>& batch) {
  validate_batch(batch);
  const double denom = static_cast<double>(batch.size()) * static_cast<double>(batch.front().input.size());
  std::vector<Image<S>> out;
  for (const auto& pair : batch) {
    Workspace<S>& ws = thread_workspace<S>();
    Activations<S> act;
    forward(p, pair.input, ws, act);
    const Mat<S> dout =
        (act.out - Eigen::Map<const Vec<S>>(pair.target.data(), pair.target.size())) * static_cast<S>(2.0 / denom);
    UNetParams<S> g = UNetParams<S>::zeros();
    Mat<S> din;
    backward(p, act, dout, ws, g, &din);
    Image<S> img(pair.input.rows(), pair.input.cols());
    Eigen::Map<Vec<S>>(img.data(), img.size()) = din;
    out.push_back(std::move(img));
  }
  return out;
}

template <typename S>
void adam_step(UNetParams<S>& p, const UNetParams<S>& grad, OptimState<S>& st) {
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  const S b1 = static_cast<S>(st.beta1), b2 = static_cast<S>(st.beta2);
  const S step = static_cast<S>(st.learning_rate / c1);
  const S inv_c2 = static_cast<S>(1.0 / c2);
  const S eps = static_cast<S>(st.epsilon);
  auto params = layers_of(p);
  const auto grads = layers_of(grad);
  auto ms = layers_of(st.m);
  auto vs = layers_of(st.v);
  auto update = [&](auto& x, const auto& g, auto& m, auto& v) {
    m = b1 * m + (S(1) - b1) * g;
    v = b2 * v + (S(1) - b2) * g.cwiseAbs2();
    x.array() -= step * m.array() / ((v.array() * inv_c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < params.size(); ++l) {
    update(params[l]->weight, grads[l]->weight, ms[l]->weight, vs[l]->weight);
    update(params[l]->bias, grads[l]->bias, ms[l]->bias, vs[l]->bias);
  }
}

std::pair<UNetParams<float>, TrainReport> train(const std::vector<TrainingPair>& pairs, const TrainOptions& opt,
                                                const EpochCallback& on_epoch) {
  if (pairs.empty()) throw NetworkError("no training pairs");
  if (opt.epochs < 1 || opt.batch_size < 1) throw NetworkError("epochs and batch size must be >= 1");
  if (opt.patch_size != 0 && (opt.patch_size < 8 || opt.patch_size % 2 != 0))
    throw NetworkError("patch size must be 0 or an even number >= 8");
  for (const auto& pair : pairs)
    if (pair.input.rows() != pair.target.rows() || pair.input.cols() != pair.target.cols())
      throw NetworkError("training pair shapes differ");

  UNetParams<float> params = init_params<float>(derive_seed(opt.seed, 0x11));
  OptimState<float> state;
  state.learning_rate = opt.learning_rate;
  state.beta1 = opt.beta1;
  state.beta2 = opt.beta2;
  state.epsilon = opt.epsilon;
  std::mt19937_64 rng(derive_seed(opt.seed, 0x22));

  const std::size_t n = pairs.size();
  const std::size_t per_epoch =
      opt.pairs_per_epoch > 0 ? std::min<std::size_t>(n, static_cast<std::size_t>(opt.pairs_per_epoch)) : n;

  auto crop = [&](const TrainingPair& pair) {
    Eigen::Index rows = pair.input.rows() - pair.input.rows() % 2;
    Eigen::Index cols = pair.input.cols() - pair.input.cols() % 2;
    Eigen::Index i0 = 0, j0 = 0;
    if (opt.patch_size > 0) {
      if (rows > opt.patch_size) {
        i0 = std::uniform_int_distribution<Eigen::Index>(0, rows - opt.patch_size)(rng);
        rows = opt.patch_size;
      }
      if (cols > opt.patch_size) {
        j0 = std::uniform_int_distribution<Eigen::Index>(0, cols - opt.patch_size)(rng);
        cols = opt.patch_size;
      }
    }
    return ImagePair<float>{pair.input.block(i0, j0, rows, cols).cast<float>(),
                            pair.target.block(i0, j0, rows, cols).cast<float>()};
  };

  TrainReport report;
  report.seed = opt.seed;
  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < per_epoch; start += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t stop = std::min(per_epoch, start + static_cast<std::size_t>(opt.batch_size));
      std::vector<ImagePair<float>> batch;
      for (std::size_t i = start; i < stop; ++i) batch.push_back(crop(pairs[order[i]]));
      const auto lg = loss_and_grad(params, batch, opt.threads);
      if (!std::isfinite(lg.loss)) throw DivergenceError("training loss became non-finite at epoch " +
                                                         std::to_string(epoch));
      adam_step(params, lg.grad, state);
      total += lg.loss * static_cast<double>(batch.size());
      seen += batch.size();
    }
    if (!params.all_finite()) throw DivergenceError("network parameters became non-finite");
    report.epoch_loss.push_back(total / static_cast<double>(seen));
    ++report.epochs_run;
    if (on_epoch) on_epoch(epoch, report.epoch_loss.back());
  }
  report.final_loss = report.epoch_loss.back();
  return {std::move(params), std::move(report)};
}

void save_checkpoint(const UNetParams<float>& p, const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  const fs::path tmp = path.string() + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw NetworkError("cannot open checkpoint for writing: " + tmp.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint32_t version = kCheckpointVersion, count = UNetParams<float>::kLayerCount;
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&count), 4);
    p.for_each_layer([&](const char* name, const ConvLayer<float>& l) { write_layer(out, name, l); });
    if (!out) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw NetworkError("checkpoint write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw NetworkError("cannot move checkpoint into place: " + path.string());
}

UNetParams<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NetworkError("cannot open checkpoint: " + path.string());
  auto get_u32 = [&] {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw NetworkError("truncated checkpoint");
    return v;
  };
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw NetworkError("not a SAIR U-Net checkpoint");
  if (get_u32() != kCheckpointVersion) throw NetworkError("unsupported checkpoint version");
  if (get_u32() != UNetParams<float>::kLayerCount) throw NetworkError("unexpected layer count");

  UNetParams<float> p = UNetParams<float>::zeros();
  p.for_each_layer([&](const char* name, ConvLayer<float>& l) {
    const std::uint32_t len = get_u32();
    std::string stored(len, '\0');
    in.read(stored.data(), len);
    if (stored != name) throw NetworkError("checkpoint layer '" + stored + "' where '" + name + "' expected");
    const std::uint32_t ci = get_u32(), co = get_u32(), k = get_u32();
    if (static_cast<int>(ci) != l.in_channels || static_cast<int>(co) != l.out_channels ||
        static_cast<int>(k) != l.kernel)
      throw NetworkError("checkpoint layer '" + stored + "' has the wrong shape");
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> wr(l.weight.rows(), l.weight.cols());
    in.read(reinterpret_cast<char*>(wr.data()), static_cast<std::streamsize>(wr.size() * sizeof(float)));
    in.read(reinterpret_cast<char*>(l.bias.data()), static_cast<std::streamsize>(l.bias.size() * sizeof(float)));
    if (!in) throw NetworkError("truncated checkpoint");
    l.weight = wr;
  });
  return p;
}

template struct UNetParams<float>;
template struct UNetParams<double>;
template UNetParams<float> init_params<float>(std::uint64_t);
template UNetParams<double> init_params<double>(std::uint64_t);
template Image<float> unet_forward<float>(const UNetParams<float>&, const Image<float>&);
template Image<double> unet_forward<double>(const UNetParams<double>&, const Image<double>&);
template Image<float> unet_residual<float>(const UNetParams<float>&, const Image<float>&);
template Image<double> unet_residual<double>(const UNetParams<double>&, const Image<double>&);
template LossGrad<float> loss_and_grad<float>(const UNetParams<float>&, const std::vector<ImagePair<float>>&, int);
template LossGrad<double> loss_and_grad<double>(const UNetParams<double>&, const std::vector<ImagePair<double>>&,
                                                int);
template std::vector<Image<float>> input_gradient<float>(const UNetParams<float>&,
                                                         const std::vector<ImagePair<float>>&);
template std::vector<Image<double>> input_gradient<double>(const UNetParams<double>&,
                                                           const std::vector<ImagePair<double>>&);
template void adam_step<float>(UNetParams<float>&, const UNetParams<float>&, OptimState<float>&);
template void adam_step<double>(UNetParams<double>&, const UNetParams<double>&, OptimState<double>&);

}  // namespace sair
