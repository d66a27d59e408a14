#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "speckle/error.hpp"
#include "speckle/idx.hpp"
#include "speckle/synth.hpp"

namespace speckle {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class Activation { relu, none };

/// Convolutions use "same" padding (kernel / 2), so the output side is ceil(in / stride).
struct LayerSpec {
  enum class Kind { conv, dense };
  Kind kind = Kind::dense;
  int out = 0;  // channels (conv) or width (dense)
  int kernel = 3;
  int stride = 1;
  Activation activation = Activation::relu;
  /// Kernel and stride only matter for convolutions.
  bool operator==(const LayerSpec& o) const {
    return kind == o.kind && out == o.out && activation == o.activation &&
           (kind == Kind::dense || (kernel == o.kernel && stride == o.stride));
  }
};

struct Shape {
  int channels = 1;
  int height = 1;
  int width = 1;
  int size() const { return channels * height * width; }
  bool operator==(const Shape&) const = default;
};

/// Input shape and layer stack. The last layer is a dense layer of width 10 without activation;
/// softmax is applied by the loss. Convolutions must precede dense layers.
struct Architecture {
  Shape input;
  std::vector<LayerSpec> layers;

  /// 16ch 3x3/2 conv, 32ch 3x3/2 conv, dense 128, dense 10 (relu between).
  static Architecture default_cnn(int height = 32, int width = 32);
  /// Flatten, dense `hidden` + relu, dense 10.
  static Architecture mlp(int height, int width, int hidden = 256);

  /// Output shape of every layer; throws ArchitectureError on inconsistent chaining.
  std::vector<Shape> shapes() const;
  void validate() const { shapes(); }
  bool operator==(const Architecture&) const = default;
};

nlohmann::json to_json(const Architecture& arch);
Architecture architecture_from_json(const nlohmann::json& j);

/// Conv weights are out x (in_channels * k * k) with columns ordered (channel, ky, kx); dense
/// weights are out x in. Features are flattened channel-major (c, y, x).
template <typename Scalar>
struct NetworkParams {
  Architecture arch;
  std::uint64_t seed = 0;
  std::vector<Matrix<Scalar>> weights;
  std::vector<Vector<Scalar>> biases;

  std::size_t parameter_count() const;
  bool all_finite() const;
  template <typename To>
  NetworkParams<To> cast() const;
};

template <typename Scalar>
NetworkParams<Scalar> init_network(const Architecture& arch, std::uint64_t seed);

/// Logits for a batch given as rows (batch x input features); returns batch x 10.
template <typename Scalar>
Matrix<Scalar> forward(const NetworkParams<Scalar>& params, const Matrix<Scalar>& batch);

/// Row-wise softmax.
template <typename Scalar>
Matrix<Scalar> softmax(const Matrix<Scalar>& logits);

template <typename Scalar>
struct LossAndGrad {
  Scalar loss = 0;
  NetworkParams<Scalar> grad;  // same shapes as the params; arch and seed copied
};

/// Mean softmax cross-entropy over the batch and its gradient by backpropagation.
template <typename Scalar>
LossAndGrad<Scalar> loss_and_grad(const NetworkParams<Scalar>& params, const Matrix<Scalar>& batch,
                                  std::span<const std::uint8_t> labels);

struct GradientCheck {
  double max_relative_error = 0.0;
  /// Per layer, max over the sampled coordinates of its weights and biases.
  std::vector<double> layer_errors;
  int coordinates = 0;
};

/// Central finite differences on `coordinates` randomly chosen parameters; relative error
/// |a - n| / max(|a| + |n|, 1e-6).
GradientCheck gradient_check(const NetworkParams<double>& params, const Matrix<double>& batch,
                             std::span<const std::uint8_t> labels, int coordinates = 100,
                             double h = 1e-5, std::uint64_t seed = 1);

/// Learner input: one standardized image per column.
struct Samples {
  Shape shape;
  Matrix<float> x;  // features x count
  std::vector<std::uint8_t> labels;
  std::vector<std::uint16_t> sweep_index;

  std::size_t size() const { return labels.size(); }
};

/// Per-image standardization of dataset frames (zero mean, unit variance).
Samples to_samples(const SpeckleDataset& ds);
/// Raw digit bitmaps, per-image standardized; `indices` empty = all.
Samples to_samples(const DigitSet& digits, std::span<const int> indices = {});
Samples take(const Samples& s, std::span<const std::size_t> rows);

struct TrainConfig {
  int epochs = 40;
  int batch_size = 64;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  /// Stop after this many epochs without a validation improvement (0 disables).
  int patience = 5;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Strict parse; every key optional with the defaults above.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  NetworkParams<float> params;  // best validation accuracy
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// SGD with momentum over seeded shuffled mini-batches; serial and bit-reproducible.
TrainResult train(const NetworkParams<float>& params, const Samples& train_set, const Samples& val_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct SweepAccuracy {
  int sweep_index = 0;
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy() const { return count ? static_cast<double>(correct) / count : 0.0; }
};

struct EvalReport {
  double accuracy = 0.0;
  std::array<std::array<std::int64_t, 10>, 10> confusion{};  // rows true, cols predicted
  std::vector<SweepAccuracy> per_sweep;                      // ascending sweep index
  std::size_t total() const;
};

std::vector<int> predict(const NetworkParams<float>& params, const Matrix<float>& x_columns);
EvalReport evaluate(const NetworkParams<float>& params, const Samples& test_set);

inline constexpr std::uint32_t kParamsVersion = 1;
std::vector<std::uint8_t> encode_params(const NetworkParams<float>& params);
NetworkParams<float> decode_params(const std::vector<std::uint8_t>& bytes);
void save_params(const NetworkParams<float>& params, const std::filesystem::path& path);
NetworkParams<float> load_params(const std::filesystem::path& path);
/// Loads and requires the stored architecture to equal `expected` (ArchitectureError otherwise).
NetworkParams<float> load_params(const std::filesystem::path& path, const Architecture& expected);

}  // namespace speckle
