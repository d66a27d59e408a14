#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "../json_reader.hpp"
#include "network_impl.hpp"
#include "speckle/random.hpp"

namespace speckle {

using nlohmann::json;

namespace {

void standardize_into(const double* v, Eigen::Index n, float* out) {
  const RealGrid g = standardize(Eigen::Map<const RealGrid>(v, 1, n));
  for (Eigen::Index i = 0; i < n; ++i) out[i] = static_cast<float>(g(0, i));
}

int argmax(const Matrix<float>& logits, Eigen::Index col) {
  Eigen::Index best;
  logits.col(col).maxCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace

Samples to_samples(const SpeckleDataset& ds) {
  ds.validate();
  Samples s;
  s.shape = {1, ds.height, ds.width};
  const Eigen::Index px = static_cast<Eigen::Index>(ds.width) * ds.height;
  s.x.resize(px, static_cast<Eigen::Index>(ds.size()));
  std::vector<double> buf(static_cast<std::size_t>(px));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::copy(ds.image(i), ds.image(i) + px, buf.begin());
    standardize_into(buf.data(), px, s.x.col(static_cast<Eigen::Index>(i)).data());
  }
  s.labels = ds.labels;
  s.sweep_index = ds.sweep_index;
  return s;
}

Samples to_samples(const DigitSet& digits, std::span<const int> indices) {
  digits.validate();
  std::vector<int> all;
  if (indices.empty()) {
    all.resize(static_cast<std::size_t>(digits.count));
    std::iota(all.begin(), all.end(), 0);
    indices = all;
  }
  Samples s;
  s.shape = {1, digits.rows, digits.cols};
  const Eigen::Index px = static_cast<Eigen::Index>(digits.rows) * digits.cols;
  s.x.resize(px, static_cast<Eigen::Index>(indices.size()));
  std::vector<double> buf(static_cast<std::size_t>(px));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int id = indices[i];
    if (id < 0 || id >= digits.count) throw ArgumentError("digit index out of range");
    const BitmapView b = digits.bitmap(id);
    for (Eigen::Index k = 0; k < px; ++k) buf[k] = b.pixels[k] / 255.0;
    standardize_into(buf.data(), px, s.x.col(static_cast<Eigen::Index>(i)).data());
    s.labels.push_back(digits.labels[id]);
    s.sweep_index.push_back(0);
  }
  return s;
}

Samples take(const Samples& s, std::span<const std::size_t> rows) {
  Samples out;
  out.shape = s.shape;
  out.x.resize(s.x.rows(), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.col(static_cast<Eigen::Index>(i)) = s.x.col(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(s.labels[rows[i]]);
    out.sweep_index.push_back(s.sweep_index[rows[i]]);
  }
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs", "must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate", "must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum", "must be in [0, 1)");
  if (patience < 0) throw ConfigError("patience", "must be >= 0");
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},     {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
          {"momentum", c.momentum}, {"seed", c.seed},             {"patience", c.patience}};
}

TrainConfig train_config_from_json(const json& j) {
  json_reader::Reader r(j, "");
  TrainConfig c;
  c.epochs = r.integer("epochs", c.epochs);
  c.batch_size = r.integer("batch_size", c.batch_size);
  c.learning_rate = r.number("learning_rate", c.learning_rate);
  c.momentum = r.number("momentum", c.momentum);
  c.seed = r.seed("seed", c.seed);
  c.patience = r.integer("patience", c.patience);
  r.finish();
  c.validate();
  return c;
}

std::vector<int> predict(const NetworkParams<float>& params, const Matrix<float>& x) {
  detail::check_params(params);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(x.cols()));
  constexpr Eigen::Index chunk = 256;
  for (Eigen::Index start = 0; start < x.cols(); start += chunk) {
    const Eigen::Index n = std::min(chunk, x.cols() - start);
    const Matrix<float> logits = detail::forward_cols<float>(params, x.middleCols(start, n), nullptr);
    for (Eigen::Index b = 0; b < n; ++b) out.push_back(argmax(logits, b));
  }
  return out;
}

std::size_t EvalReport::total() const {
  std::int64_t n = 0;
  for (const auto& row : confusion)
    for (auto v : row) n += v;
  return static_cast<std::size_t>(n);
}

EvalReport evaluate(const NetworkParams<float>& params, const Samples& test_set) {
  if (test_set.size() == 0) throw ArgumentError("test set is empty");
  const std::vector<int> pred = predict(params, test_set.x);
  EvalReport report;
  std::map<int, SweepAccuracy> sweeps;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int truth = test_set.labels[i];
    ++report.confusion[truth][pred[i]];
    SweepAccuracy& s = sweeps[test_set.sweep_index[i]];
    s.sweep_index = test_set.sweep_index[i];
    ++s.count;
    if (pred[i] == truth) {
      ++s.correct;
      ++correct;
    }
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
  for (const auto& [index, s] : sweeps) report.per_sweep.push_back(s);
  return report;
}

TrainResult train(const NetworkParams<float>& initial, const Samples& train_set, const Samples& val_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  detail::check_params(initial);
  if (train_set.size() == 0 || val_set.size() == 0) throw ArgumentError("training and validation sets must be nonempty");
  if (train_set.x.rows() != initial.arch.input.size() || val_set.x.rows() != initial.arch.input.size())
    throw ShapeError("sample dimensions do not match the network input");

  NetworkParams<float> params = initial;
  NetworkParams<float> velocity = initial;
  for (auto& w : velocity.weights) w.setZero();
  for (auto& b : velocity.biases) b.setZero();
  const auto lr = static_cast<float>(cfg.learning_rate);
  const auto mu = static_cast<float>(cfg.momentum);

  TrainResult result;
  result.params = params;
  double best = -1.0;
  int stale = 0;
  Rng rng(mix_seed({cfg.seed, 0x7a1e5ULL}));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const Eigen::Index features = train_set.x.rows();
  Matrix<float> xb;
  std::vector<std::uint8_t> yb;
  detail::Cache<float> cache;
  NetworkParams<float> grad;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t n = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      xb.resize(features, static_cast<Eigen::Index>(n));
      yb.resize(n);
      for (std::size_t b = 0; b < n; ++b) {
        xb.col(static_cast<Eigen::Index>(b)) = train_set.x.col(static_cast<Eigen::Index>(order[start + b]));
        yb[b] = train_set.labels[order[start + b]];
      }
      const Matrix<float> logits = detail::forward_cols<float>(params, xb, &cache);
      const float loss = detail::backward_cols<float>(params, logits, cache, yb, grad);
      if (!std::isfinite(loss))
        throw TrainingError("loss diverged in epoch " + std::to_string(epoch), epoch);
      loss_sum += static_cast<double>(loss) * static_cast<double>(n);
      for (std::size_t b = 0; b < n; ++b) correct += argmax(logits, static_cast<Eigen::Index>(b)) == yb[b];
      for (std::size_t l = 0; l < params.weights.size(); ++l) {
        velocity.weights[l] = mu * velocity.weights[l] - lr * grad.weights[l];
        velocity.biases[l] = mu * velocity.biases[l] - lr * grad.biases[l];
        params.weights[l] += velocity.weights[l];
        params.biases[l] += velocity.biases[l];
      }
    }
    if (!params.all_finite())
      throw TrainingError("parameters diverged in epoch " + std::to_string(epoch), epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    rec.val_acc = evaluate(params, val_set).accuracy;
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_acc > best) {
      best = rec.val_acc;
      result.params = params;
      result.best_epoch = epoch;
      stale = 0;
    } else if (cfg.patience > 0 && ++stale >= cfg.patience) {
      break;
    }
  }
  return result;
}

}  // namespace speckle
