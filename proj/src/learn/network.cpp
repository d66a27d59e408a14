#include <algorithm>
#include <cmath>

#include "../json_reader.hpp"
#include "network_impl.hpp"
#include "speckle/random.hpp"

namespace speckle {

using nlohmann::json;

Architecture Architecture::default_cnn(int height, int width) {
  return {{1, height, width},
          {{LayerSpec::Kind::conv, 16, 3, 2, Activation::relu},
           {LayerSpec::Kind::conv, 32, 3, 2, Activation::relu},
           {LayerSpec::Kind::dense, 128, 1, 1, Activation::relu},
           {LayerSpec::Kind::dense, 10, 1, 1, Activation::none}}};
}

Architecture Architecture::mlp(int height, int width, int hidden) {
  return {{1, height, width},
          {{LayerSpec::Kind::dense, hidden, 1, 1, Activation::relu},
           {LayerSpec::Kind::dense, 10, 1, 1, Activation::none}}};
}

std::vector<Shape> Architecture::shapes() const {
  if (input.channels < 1 || input.height < 1 || input.width < 1)
    throw ArchitectureError("input dimensions must be >= 1");
  if (layers.empty()) throw ArchitectureError("architecture has no layers");
  std::vector<Shape> out;
  Shape s = input;
  bool dense_seen = false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string where = "layer " + std::to_string(i) + ": ";
    if (l.out < 1) throw ArchitectureError(where + "output size must be >= 1");
    if (l.kind == LayerSpec::Kind::conv) {
      if (dense_seen) throw ArchitectureError(where + "convolution after a dense layer");
      if (l.kernel < 1 || l.kernel % 2 == 0) throw ArchitectureError(where + "kernel must be odd and >= 1");
      if (l.stride < 1) throw ArchitectureError(where + "stride must be >= 1");
      s = {l.out, (s.height + l.stride - 1) / l.stride, (s.width + l.stride - 1) / l.stride};
    } else {
      dense_seen = true;
      s = {l.out, 1, 1};
    }
    out.push_back(s);
  }
  const LayerSpec& last = layers.back();
  if (last.kind != LayerSpec::Kind::dense || last.out != 10)
    throw ArchitectureError("final layer must be dense with 10 outputs");
  if (last.activation != Activation::none)
    throw ArchitectureError("final layer must not have an activation");
  return out;
}

json to_json(const Architecture& arch) {
  json layers = json::array();
  for (const LayerSpec& l : arch.layers) {
    json j{{"type", l.kind == LayerSpec::Kind::conv ? "conv" : "dense"},
           {"out", l.out},
           {"activation", l.activation == Activation::relu ? "relu" : "none"}};
    if (l.kind == LayerSpec::Kind::conv) {
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
    }
    layers.push_back(j);
  }
  return {{"input",
           {{"channels", arch.input.channels}, {"height", arch.input.height}, {"width", arch.input.width}}},
          {"layers", layers}};
}

Architecture architecture_from_json(const json& j) {
  using json_reader::Reader;
  Architecture a;
  Reader root(j, "architecture");
  Reader in = root.object("input");
  a.input = {in.integer("channels", 1), in.integer("height"), in.integer("width")};
  in.finish();
  const json& layers = root.raw("layers");
  if (!layers.is_array()) throw ConfigError("architecture.layers", "expected an array");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Reader r(layers[i], "architecture.layers[" + std::to_string(i) + "]");
    LayerSpec l;
    l.kind = r.choice<LayerSpec::Kind>("type", {{"conv", LayerSpec::Kind::conv}, {"dense", LayerSpec::Kind::dense}});
    l.out = r.integer("out");
    l.activation = r.choice<Activation>("activation", {{"relu", Activation::relu}, {"none", Activation::none}});
    if (l.kind == LayerSpec::Kind::conv) {
      l.kernel = r.integer("kernel");
      l.stride = r.integer("stride", 1);
    }
    r.finish();
    a.layers.push_back(l);
  }
  root.finish();
  a.validate();
  return a;
}

template <typename Scalar>
std::size_t NetworkParams<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
  for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
  return n;
}

template <typename Scalar>
bool NetworkParams<Scalar>::all_finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

template <typename Scalar>
template <typename To>
NetworkParams<To> NetworkParams<Scalar>::cast() const {
  NetworkParams<To> out;
  out.arch = arch;
  out.seed = seed;
  for (const auto& w : weights) out.weights.push_back(w.template cast<To>());
  for (const auto& b : biases) out.biases.push_back(b.template cast<To>());
  return out;
}

template <typename Scalar>
NetworkParams<Scalar> init_network(const Architecture& arch, std::uint64_t seed) {
  const std::vector<Shape> shapes = arch.shapes();
  NetworkParams<Scalar> p;
  p.arch = arch;
  p.seed = seed;
  Shape in = arch.input;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    const int fan_in = l.kind == LayerSpec::Kind::conv ? in.channels * l.kernel * l.kernel : in.size();
    const double limit = std::sqrt(6.0 / fan_in);
    Rng rng(mix_seed({seed, 0x1a7e5ULL, static_cast<std::uint64_t>(i)}));
    Matrix<Scalar> w(l.out, fan_in);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        w(r, c) = static_cast<Scalar>(limit * (2.0 * rng.uniform() - 1.0));
    p.weights.push_back(std::move(w));
    p.biases.push_back(Vector<Scalar>::Zero(l.out));
    in = shapes[i];
  }
  return p;
}

namespace detail {

template <typename Scalar>
void check_params(const NetworkParams<Scalar>& p) {
  const std::vector<Shape> shapes = p.arch.shapes();
  if (p.weights.size() != p.arch.layers.size() || p.biases.size() != p.arch.layers.size())
    throw ArchitectureError("parameter list does not match the architecture");
  Shape in = p.arch.input;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const LayerSpec& l = p.arch.layers[i];
    const int fan_in = l.kind == LayerSpec::Kind::conv ? in.channels * l.kernel * l.kernel : in.size();
    if (p.weights[i].rows() != l.out || p.weights[i].cols() != fan_in || p.biases[i].size() != l.out)
      throw ArchitectureError("layer " + std::to_string(i) + " tensors do not match the architecture");
    in = shapes[i];
  }
}

namespace {

/// Column b * oh * ow + (oy * ow + ox), row (c * k + ky) * k + kx.
template <typename Scalar>
void im2col(const Matrix<Scalar>& in, const Shape& s, const LayerSpec& l, const Shape& o,
            Matrix<Scalar>& cols) {
  const int k = l.kernel, pad = k / 2, batch = static_cast<int>(in.cols());
  const int ohw = o.height * o.width, hw = s.height * s.width;
  cols.resize(s.channels * k * k, static_cast<Eigen::Index>(batch) * ohw);
  for (int b = 0; b < batch; ++b) {
    const Scalar* src = in.col(b).data();
    for (int oy = 0; oy < o.height; ++oy)
      for (int ox = 0; ox < o.width; ++ox) {
        Scalar* dst = cols.col(static_cast<Eigen::Index>(b) * ohw + oy * o.width + ox).data();
        for (int c = 0; c < s.channels; ++c)
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * l.stride - pad + ky;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * l.stride - pad + kx;
              *dst++ = (iy < 0 || iy >= s.height || ix < 0 || ix >= s.width)
                           ? Scalar(0)
                           : src[c * hw + iy * s.width + ix];
            }
          }
      }
  }
}

template <typename Scalar>
void col2im(const Matrix<Scalar>& cols, const Shape& s, const LayerSpec& l, const Shape& o,
            Matrix<Scalar>& out) {
  const int k = l.kernel, pad = k / 2, batch = static_cast<int>(out.cols());
  const int ohw = o.height * o.width, hw = s.height * s.width;
  out.setZero();
  for (int b = 0; b < batch; ++b) {
    Scalar* dst = out.col(b).data();
    for (int oy = 0; oy < o.height; ++oy)
      for (int ox = 0; ox < o.width; ++ox) {
        const Scalar* src = cols.col(static_cast<Eigen::Index>(b) * ohw + oy * o.width + ox).data();
        for (int c = 0; c < s.channels; ++c)
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * l.stride - pad + ky;
            for (int kx = 0; kx < k; ++kx, ++src) {
              const int ix = ox * l.stride - pad + kx;
              if (iy >= 0 && iy < s.height && ix >= 0 && ix < s.width) dst[c * hw + iy * s.width + ix] += *src;
            }
          }
      }
  }
}

}  // namespace

template <typename Scalar>
Matrix<Scalar> forward_cols(const NetworkParams<Scalar>& p, const Matrix<Scalar>& x, Cache<Scalar>* cache) {
  if (x.rows() != p.arch.input.size())
    throw ShapeError("input has " + std::to_string(x.rows()) + " features, network expects " +
                     std::to_string(p.arch.input.size()));
  const std::vector<Shape> shapes = p.arch.shapes();
  const auto batch = x.cols();
  if (cache) {
    cache->inputs.assign(shapes.size(), {});
    cache->cols.assign(shapes.size(), {});
  }
  Matrix<Scalar> a = x;
  Matrix<Scalar> cols, y;
  Shape s = p.arch.input;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const LayerSpec& l = p.arch.layers[i];
    const Shape& o = shapes[i];
    Matrix<Scalar> z(o.size(), batch);
    if (l.kind == LayerSpec::Kind::conv) {
      im2col(a, s, l, o, cols);
      y.noalias() = p.weights[i] * cols;
      y.colwise() += p.biases[i];
      const int ohw = o.height * o.width;
      for (Eigen::Index b = 0; b < batch; ++b)
        for (int c = 0; c < o.channels; ++c)
          z.col(b).segment(c * ohw, ohw) = y.row(c).segment(b * ohw, ohw).transpose();
      if (cache) cache->cols[i] = std::move(cols);
    } else {
      z.noalias() = p.weights[i] * a;
      z.colwise() += p.biases[i];
    }
    if (l.activation == Activation::relu) z = z.cwiseMax(Scalar(0));
    if (cache) cache->inputs[i] = std::move(a);
    a = std::move(z);
    s = o;
  }
  return a;
}

template <typename Scalar>
Scalar backward_cols(const NetworkParams<Scalar>& p, const Matrix<Scalar>& logits, const Cache<Scalar>& cache,
                     std::span<const std::uint8_t> labels, NetworkParams<Scalar>& grad) {
  const auto batch = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != batch) throw ShapeError("label count does not match batch");
  const std::vector<Shape> shapes = p.arch.shapes();

  Matrix<Scalar> d(logits.rows(), batch);
  Scalar loss = 0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    if (labels[b] > 9) throw ArgumentError("label out of range");
    const Scalar m = logits.col(b).maxCoeff();
    const Scalar lse = m + std::log((logits.col(b).array() - m).exp().sum());
    loss += lse - logits(labels[b], b);
    d.col(b) = (logits.col(b).array() - lse).exp().matrix();
    d(labels[b], b) -= Scalar(1);
  }
  d /= static_cast<Scalar>(batch);
  loss /= static_cast<Scalar>(batch);

  grad.arch = p.arch;
  grad.seed = p.seed;
  grad.weights.resize(shapes.size());
  grad.biases.resize(shapes.size());
  Matrix<Scalar> dy, dcols;
  for (std::size_t n = shapes.size(); n-- > 0;) {
    const LayerSpec& l = p.arch.layers[n];
    const Shape& o = shapes[n];
    const Shape& s = n == 0 ? p.arch.input : shapes[n - 1];
    const Matrix<Scalar>& a = cache.inputs[n];
    if (l.activation == Activation::relu) {
      // The layer output is the next layer's input (or the logits for the last layer).
      const Matrix<Scalar>& out = n + 1 < shapes.size() ? cache.inputs[n + 1] : logits;
      d = (out.array() > Scalar(0)).select(d, Scalar(0));
    }
    if (l.kind == LayerSpec::Kind::conv) {
      const int ohw = o.height * o.width;
      dy.resize(o.channels, batch * ohw);
      for (Eigen::Index b = 0; b < batch; ++b)
        for (int c = 0; c < o.channels; ++c)
          dy.row(c).segment(b * ohw, ohw) = d.col(b).segment(c * ohw, ohw).transpose();
      grad.weights[n].noalias() = dy * cache.cols[n].transpose();
      grad.biases[n] = dy.rowwise().sum();
      if (n > 0) {
        dcols.noalias() = p.weights[n].transpose() * dy;
        Matrix<Scalar> dx(s.size(), batch);
        col2im(dcols, s, l, o, dx);
        d = std::move(dx);
      }
    } else {
      grad.weights[n].noalias() = d * a.transpose();
      grad.biases[n] = d.rowwise().sum();
      if (n > 0) d = p.weights[n].transpose() * d;
    }
  }
  return loss;
}

template <typename Scalar>
Scalar loss_only_cols(const NetworkParams<Scalar>& p, const Matrix<Scalar>& x, std::span<const std::uint8_t> labels) {
  const Matrix<Scalar> logits = forward_cols<Scalar>(p, x, nullptr);
  Scalar loss = 0;
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    const Scalar m = logits.col(b).maxCoeff();
    loss += m + std::log((logits.col(b).array() - m).exp().sum()) - logits(labels[b], b);
  }
  return loss / static_cast<Scalar>(logits.cols());
}

}  // namespace detail

template <typename Scalar>
Matrix<Scalar> forward(const NetworkParams<Scalar>& params, const Matrix<Scalar>& batch) {
  detail::check_params(params);
  return detail::forward_cols<Scalar>(params, batch.transpose(), nullptr).transpose();
}

template <typename Scalar>
Matrix<Scalar> softmax(const Matrix<Scalar>& logits) {
  Matrix<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const auto e = (logits.row(r).array() - logits.row(r).maxCoeff()).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  return out;
}

template <typename Scalar>
LossAndGrad<Scalar> loss_and_grad(const NetworkParams<Scalar>& params, const Matrix<Scalar>& batch,
                                  std::span<const std::uint8_t> labels) {
  detail::check_params(params);
  if (batch.rows() == 0) throw ShapeError("empty batch");
  const Matrix<Scalar> x = batch.transpose();
  detail::Cache<Scalar> cache;
  const Matrix<Scalar> logits = detail::forward_cols<Scalar>(params, x, &cache);
  LossAndGrad<Scalar> out;
  out.loss = detail::backward_cols<Scalar>(params, logits, cache, labels, out.grad);
  return out;
}

GradientCheck gradient_check(const NetworkParams<double>& params, const Matrix<double>& batch,
                             std::span<const std::uint8_t> labels, int coordinates, double h,
                             std::uint64_t seed) {
  const LossAndGrad<double> analytic = loss_and_grad(params, batch, labels);
  const Matrix<double> x = batch.transpose();
  const std::size_t layers = params.weights.size();
  GradientCheck report;
  report.layer_errors.assign(layers, 0.0);
  report.coordinates = coordinates;
  NetworkParams<double> probe = params;
  Rng rng(seed);
  for (int i = 0; i < coordinates; ++i) {
    const std::size_t layer = static_cast<std::size_t>(i) % layers;
    const auto nw = static_cast<std::uint64_t>(probe.weights[layer].size());
    const std::uint64_t pick = rng.below(nw + static_cast<std::uint64_t>(probe.biases[layer].size()));
    double* value = pick < nw ? probe.weights[layer].data() + pick : probe.biases[layer].data() + (pick - nw);
    const double a = pick < nw ? analytic.grad.weights[layer].data()[pick]
                               : analytic.grad.biases[layer].data()[pick - nw];
    const double saved = *value;
    *value = saved + h;
    const double up = detail::loss_only_cols<double>(probe, x, labels);
    *value = saved - h;
    const double down = detail::loss_only_cols<double>(probe, x, labels);
    *value = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6);
    report.layer_errors[layer] = std::max(report.layer_errors[layer], err);
    report.max_relative_error = std::max(report.max_relative_error, err);
  }
  return report;
}

#define SPECKLE_INSTANTIATE(S)                                                                       \
  template struct NetworkParams<S>;                                                                  \
  template NetworkParams<S> init_network<S>(const Architecture&, std::uint64_t);                     \
  template Matrix<S> forward<S>(const NetworkParams<S>&, const Matrix<S>&);                          \
  template Matrix<S> softmax<S>(const Matrix<S>&);                                                   \
  template LossAndGrad<S> loss_and_grad<S>(const NetworkParams<S>&, const Matrix<S>&,                \
                                           std::span<const std::uint8_t>);                           \
  template void detail::check_params<S>(const NetworkParams<S>&);                                    \
  template Matrix<S> detail::forward_cols<S>(const NetworkParams<S>&, const Matrix<S>&,              \
                                             detail::Cache<S>*);                                     \
  template S detail::backward_cols<S>(const NetworkParams<S>&, const Matrix<S>&,                     \
                                      const detail::Cache<S>&, std::span<const std::uint8_t>,        \
                                      NetworkParams<S>&);
SPECKLE_INSTANTIATE(float)
SPECKLE_INSTANTIATE(double)
#undef SPECKLE_INSTANTIATE

template NetworkParams<double> NetworkParams<float>::cast<double>() const;
template NetworkParams<float> NetworkParams<double>::cast<float>() const;
template NetworkParams<float> NetworkParams<float>::cast<float>() const;
template NetworkParams<double> NetworkParams<double>::cast<double>() const;

}  // namespace speckle
