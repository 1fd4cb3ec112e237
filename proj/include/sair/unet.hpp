#pragma once

#include "sair/dataset.hpp"
#include "sair/image.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sair {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr int kBaseChannels = 32;
inline constexpr int kKernelSize = 7;

/// Convolution with `kernel` x `kernel` taps. Weight column index = (c * k + dy) * k + dx.
template <typename Scalar>
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  Mat<Scalar> weight;  // out_channels x (in_channels * kernel^2)
  Vec<Scalar> bias;    // out_channels

  static ConvLayer zeros(int in, int out, int k) {
    return {in, out, k, Mat<Scalar>::Zero(out, in * k * k), Vec<Scalar>::Zero(out)};
  }
  Eigen::Index fan_in() const { return static_cast<Eigen::Index>(in_channels) * kernel * kernel; }
  Eigen::Index size() const { return weight.size() + bias.size(); }
};

/// Shallow 2D U-Net: one encoder step, one decoder step, a skip connection and a residual output.
template <typename Scalar>
struct UNetParams {
  ConvLayer<Scalar> enc1a, enc1b;    // 1 -> 32 -> 32, 7x7
  ConvLayer<Scalar> bottle_a, bottle_b;  // 32 -> 64 -> 64, 7x7, half resolution
  ConvLayer<Scalar> dec1a, dec1b;    // (64 upsampled + 32 skip) -> 32 -> 32, 7x7
  ConvLayer<Scalar> head;            // 32 -> 1, 1x1

  static UNetParams zeros();
  static constexpr Eigen::Index kParameterCount = 553793;
  static constexpr std::size_t kLayerCount = 7;

  Eigen::Index parameter_count() const;

  template <typename Fn>
  void for_each_layer(Fn&& fn) {
    fn("enc1.conv_a", enc1a), fn("enc1.conv_b", enc1b), fn("bottleneck.conv_a", bottle_a),
        fn("bottleneck.conv_b", bottle_b), fn("dec1.conv_a", dec1a), fn("dec1.conv_b", dec1b), fn("head", head);
  }
  template <typename Fn>
  void for_each_layer(Fn&& fn) const {
    fn("enc1.conv_a", enc1a), fn("enc1.conv_b", enc1b), fn("bottleneck.conv_a", bottle_a),
        fn("bottleneck.conv_b", bottle_b), fn("dec1.conv_a", dec1a), fn("dec1.conv_b", dec1b), fn("head", head);
  }

  template <typename Other>
  UNetParams<Other> cast() const {
    UNetParams<Other> out = UNetParams<Other>::zeros();
    auto conv = [](const ConvLayer<Scalar>& l) {
      return ConvLayer<Other>{l.in_channels, l.out_channels, l.kernel, l.weight.template cast<Other>(),
                              l.bias.template cast<Other>()};
    };
    out.enc1a = conv(enc1a), out.enc1b = conv(enc1b), out.bottle_a = conv(bottle_a), out.bottle_b = conv(bottle_b);
    out.dec1a = conv(dec1a), out.dec1b = conv(dec1b), out.head = conv(head);
    return out;
  }

  bool all_finite() const;
  /// Flattened copy of every parameter in layer order (weights, then biases).
  Vec<Scalar> flatten() const;
  void unflatten(const Vec<Scalar>& flat);
};

/// He-style N(0, 2 / fan_in) weights and zero biases; the 1x1 head starts at zero so the
/// network is initially the identity map.
template <typename Scalar>
UNetParams<Scalar> init_params(std::uint64_t seed);

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when the training loss stops being finite.
class DivergenceError : public NetworkError {
 public:
  using NetworkError::NetworkError;
};

/// out = img + f(img). Both image extents must be even and >= 8.
template <typename Scalar>
Image<Scalar> unet_forward(const UNetParams<Scalar>& p, const Image<Scalar>& img);

/// The correction term f(img) alone, so callers can add it to a higher-precision input.
template <typename Scalar>
Image<Scalar> unet_residual(const UNetParams<Scalar>& p, const Image<Scalar>& img);

template <typename Scalar>
struct ImagePair {
  Image<Scalar> input;
  Image<Scalar> target;
};

template <typename Scalar>
struct LossGrad {
  double loss = 0.0;
  UNetParams<Scalar> grad;
};

/// Mean squared error over batch and pixels, with exact reverse-mode gradients.
/// Per-example gradients are summed in batch order, so the result does not depend on `threads`.
template <typename Scalar>
LossGrad<Scalar> loss_and_grad(const UNetParams<Scalar>& p, const std::vector<ImagePair<Scalar>>& batch,
                               int threads = 1);

LossGrad<double> loss_and_grad(const UNetParams<double>& p, const std::vector<TrainingPair>& batch,
                               int threads = 1);

/// Gradient of the batch loss with respect to each input image (used for checking).
template <typename Scalar>
std::vector<Image<Scalar>> input_gradient(const UNetParams<Scalar>& p, const std::vector<ImagePair<Scalar>>& batch);

template <typename Scalar>
struct OptimState {
  UNetParams<Scalar> m = UNetParams<Scalar>::zeros();
  UNetParams<Scalar> v = UNetParams<Scalar>::zeros();
  long step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update.
template <typename Scalar>
void adam_step(UNetParams<Scalar>& p, const UNetParams<Scalar>& grad, OptimState<Scalar>& state);

struct TrainOptions {
  int epochs = 10;
  int batch_size = 8;
  /// Square crop side used for each example (even, >= 8); 0 trains on full slices.
  int patch_size = 48;
  /// Examples drawn (without replacement) per epoch; 0 uses every pair.
  int pairs_per_epoch = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  double final_loss = 0.0;
  int epochs_run = 0;
  std::uint64_t seed = 0;

  bool operator==(const TrainReport&) const = default;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Adam training from init_params(seed) with a seeded shuffle and crop schedule.
std::pair<UNetParams<float>, TrainReport> train(const std::vector<TrainingPair>& pairs, const TrainOptions& opt,
                                                const EpochCallback& on_epoch = {});

/// Binary checkpoint: "SAIRUNET", version, layer table, float32 tensors.
void save_checkpoint(const UNetParams<float>& p, const std::filesystem::path& path);
UNetParams<float> load_checkpoint(const std::filesystem::path& path);

extern template struct UNetParams<float>;
extern template struct UNetParams<double>;

}  // namespace sair
