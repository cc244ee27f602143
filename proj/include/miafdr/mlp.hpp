#pragma once

// Minimal feed-forward classifier: dense layers, relu/tanh hidden
// activations, softmax output, cross-entropy loss, plain mini-batch SGD.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "miafdr/dataset.hpp"
#include "miafdr/error.hpp"
#include "miafdr/rng.hpp"

namespace miafdr {

enum class Activation { relu, tanh };

inline std::string_view to_string(Activation a) noexcept {
  return a == Activation::relu ? "relu" : "tanh";
}

inline Activation parse_activation(std::string_view text) {
  if (text == "relu") return Activation::relu;
  if (text == "tanh") return Activation::tanh;
  throw ContractError("unknown activation '" + std::string(text) + "'");
}

/// Layer widths from input to output, plus the hidden activation.
struct LayerSpec {
  std::vector<std::size_t> dims;
  Activation activation = Activation::relu;

  std::size_t input_dim() const { return dims.front(); }
  std::size_t output_dim() const { return dims.back(); }

  void validate() const {
    detail::require(dims.size() >= 2, "layer spec needs at least input and output widths");
    for (std::size_t d : dims) detail::require(d >= 1, "layer widths must be positive");
  }

  /// `hidden` between an input of width `in` and an output of width `out`.
  static LayerSpec with_hidden(std::size_t in, std::span<const std::size_t> hidden,
                               std::size_t out, Activation act = Activation::relu) {
    LayerSpec spec;
    spec.dims.push_back(in);
    spec.dims.insert(spec.dims.end(), hidden.begin(), hidden.end());
    spec.dims.push_back(out);
    spec.activation = act;
    return spec;
  }

  bool operator==(const LayerSpec&) const = default;
};

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> bias;     // out

  bool operator==(const DenseLayer&) const = default;
};

/// Softmax output for one input. Entries in [0, 1], summing to 1.
struct ScoreVector {
  std::vector<double> probs;

  std::size_t size() const noexcept { return probs.size(); }
  bool operator==(const ScoreVector&) const = default;
};

class MlpModel {
 public:
  MlpModel() = default;

  /// All-zero parameters with the given shape.
  explicit MlpModel(LayerSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    for (std::size_t l = 0; l + 1 < spec_.dims.size(); ++l) {
      DenseLayer layer;
      layer.in = spec_.dims[l];
      layer.out = spec_.dims[l + 1];
      layer.weights.assign(layer.in * layer.out, 0.0);
      layer.bias.assign(layer.out, 0.0);
      layers_.push_back(std::move(layer));
    }
  }

  const LayerSpec& spec() const noexcept { return spec_; }
  std::size_t input_dim() const { return spec_.input_dim(); }
  std::size_t output_dim() const { return spec_.output_dim(); }
  Activation activation() const noexcept { return spec_.activation; }

  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& l : layers_) {
      for (double w : l.weights)
        if (!std::isfinite(w)) return false;
      for (double b : l.bias)
        if (!std::isfinite(b)) return false;
    }
    return true;
  }

  /// Output-layer pre-activations.
  std::vector<double> logits(std::span<const double> x) const {
    check_input(x);
    std::vector<double> current(x.begin(), x.end());
    std::vector<double> next;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const DenseLayer& layer = layers_[l];
      next.assign(layer.bias.begin(), layer.bias.end());
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double* w = layer.weights.data() + o * layer.in;
        double acc = next[o];
        for (std::size_t i = 0; i < layer.in; ++i) acc += w[i] * current[i];
        next[o] = acc;
      }
      if (l + 1 < layers_.size()) {
        for (double& v : next) v = activate(v);
      }
      current.swap(next);
    }
    return current;
  }

  void check_input(std::span<const double> x) const {
    if (x.size() != input_dim()) {
      throw ContractError("input has dimension " + std::to_string(x.size()) + ", model expects " +
                          std::to_string(input_dim()));
    }
  }

  double activate(double z) const noexcept {
    return spec_.activation == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
  }

  bool operator==(const MlpModel&) const = default;

 private:
  LayerSpec spec_;
  std::vector<DenseLayer> layers_;
};

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double l2_penalty = 0.0;

  void validate() const {
    detail::require(learning_rate > 0.0 && std::isfinite(learning_rate),
                    "learning_rate must be positive");
    detail::require(batch_size >= 1, "batch_size must be positive");
    detail::require(l2_penalty >= 0.0 && std::isfinite(l2_penalty),
                    "l2_penalty must be non-negative");
  }
};

/// Max-subtracted softmax of `logits`, written in place.
inline void softmax_inplace(std::span<double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& v : logits) {
    v = std::exp(v - top);
    sum += v;
  }
  for (double& v : logits) v /= sum;
}

inline ScoreVector predict_softmax(const MlpModel& model, std::span<const double> x) {
  ScoreVector out{model.logits(x)};
  softmax_inplace(out.probs);
  return out;
}

/// Index of the largest entry; lowest index wins ties.
inline int argmax(std::span<const double> values) {
  detail::require(!values.empty(), "argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return static_cast<int>(best);
}

inline int predict_label(const MlpModel& model, std::span<const double> x) {
  return argmax(predict_softmax(model, x).probs);
}

inline double accuracy(const MlpModel& model, const LabeledDataset& data) {
  if (data.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    hits += predict_label(model, data.features.row(i)) == data.labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
inline MlpModel init_model(const LayerSpec& spec, std::uint64_t seed) {
  MlpModel model(spec);
  Rng rng(derive_seed(seed, stream::kInit));
  for (DenseLayer& layer : model.layers()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
    std::uniform_real_distribution<double> uni(-bound, bound);
    for (double& w : layer.weights) w = uni(rng);
    for (double& b : layer.bias) b = uni(rng);
  }
  return model;
}

namespace detail {

// Scratch buffers for one forward/backward pass.
struct Workspace {
  std::vector<std::vector<double>> pre;   // pre-activations per layer
  std::vector<std::vector<double>> post;  // post[0] = input, post[l+1] = act(pre[l])
  std::vector<double> delta;
  std::vector<double> delta_prev;

  explicit Workspace(const MlpModel& model) {
    const auto& layers = model.layers();
    pre.resize(layers.size());
    post.resize(layers.size() + 1);
    post[0].resize(model.input_dim());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      pre[l].resize(layers[l].out);
      post[l + 1].resize(layers[l].out);
    }
  }
};

inline void zero_parameters(MlpModel& m) {
  for (DenseLayer& l : m.layers()) {
    std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
}

// Accumulates d(cross-entropy)/d(params) for one sample into `grad` and
// returns the sample's cross-entropy.
inline double backprop_sample(const MlpModel& model, std::span<const double> x, int label,
                              Workspace& ws, MlpModel& grad) {
  const auto& layers = model.layers();
  const std::size_t L = layers.size();
  std::copy(x.begin(), x.end(), ws.post[0].begin());
  for (std::size_t l = 0; l < L; ++l) {
    const DenseLayer& layer = layers[l];
    const std::vector<double>& in = ws.post[l];
    std::vector<double>& z = ws.pre[l];
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double* w = layer.weights.data() + o * layer.in;
      double acc = layer.bias[o];
      for (std::size_t i = 0; i < layer.in; ++i) acc += w[i] * in[i];
      z[o] = acc;
    }
    std::vector<double>& a = ws.post[l + 1];
    if (l + 1 < L) {
      for (std::size_t o = 0; o < layer.out; ++o) a[o] = model.activate(z[o]);
    } else {
      a = z;
    }
  }

  std::vector<double>& out = ws.post[L];
  const double top = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (double v : out) sum += std::exp(v - top);
  const double log_norm = top + std::log(sum);
  const double loss = log_norm - out[static_cast<std::size_t>(label)];

  ws.delta.resize(out.size());
  for (std::size_t o = 0; o < out.size(); ++o) ws.delta[o] = std::exp(out[o] - log_norm);
  ws.delta[static_cast<std::size_t>(label)] -= 1.0;

  for (std::size_t l = L; l-- > 0;) {
    const DenseLayer& layer = layers[l];
    DenseLayer& g = grad.layers()[l];
    const std::vector<double>& in = ws.post[l];
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double d = ws.delta[o];
      g.bias[o] += d;
      double* gw = g.weights.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) gw[i] += d * in[i];
    }
    if (l == 0) break;
    ws.delta_prev.assign(layer.in, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double d = ws.delta[o];
      const double* w = layer.weights.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) ws.delta_prev[i] += w[i] * d;
    }
    const std::vector<double>& a = ws.post[l];
    const std::vector<double>& z = ws.pre[l - 1];
    for (std::size_t i = 0; i < layer.in; ++i) {
      const double slope = model.activation() == Activation::relu ? (z[i] > 0.0 ? 1.0 : 0.0)
                                                                  : 1.0 - a[i] * a[i];
      ws.delta_prev[i] *= slope;
    }
    ws.delta.swap(ws.delta_prev);
  }
  return loss;
}

inline double l2_term(const MlpModel& model, double l2) {
  if (l2 == 0.0) return 0.0;
  double sq = 0.0;
  for (const DenseLayer& l : model.layers())
    for (double w : l.weights) sq += w * w;
  return 0.5 * l2 * sq;
}

inline double batch_gradient(const MlpModel& model, const LabeledDataset& data,
                             std::span<const std::size_t> rows, double l2, Workspace& ws,
                             MlpModel& grad) {
  zero_parameters(grad);
  double loss = 0.0;
  for (std::size_t r : rows) loss += backprop_sample(model, data.features.row(r), data.labels[r], ws, grad);
  const double scale = 1.0 / static_cast<double>(rows.size());
  for (std::size_t l = 0; l < grad.layers().size(); ++l) {
    DenseLayer& g = grad.layers()[l];
    const DenseLayer& p = model.layers()[l];
    for (std::size_t i = 0; i < g.weights.size(); ++i) g.weights[i] = g.weights[i] * scale + l2 * p.weights[i];
    for (double& b : g.bias) b *= scale;
  }
  return loss * scale + l2_term(model, l2);
}

}  // namespace detail

/// Mean cross-entropy over `rows` plus 0.5 * l2 * ||W||^2 (weights only),
/// and its gradient with respect to every parameter (same shape as `model`).
inline double loss_and_gradient(const MlpModel& model, const LabeledDataset& data,
                                std::span<const std::size_t> rows, double l2, MlpModel& grad) {
  detail::require(!rows.empty(), "no rows for gradient");
  detail::require(data.dim() == model.input_dim(), "dataset dimension does not match model input");
  grad = MlpModel(model.spec());
  detail::Workspace ws(model);
  return detail::batch_gradient(model, data, rows, l2, ws, grad);
}

inline double mean_loss(const MlpModel& model, const LabeledDataset& data, double l2 = 0.0) {
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  MlpModel grad;
  return loss_and_gradient(model, data, rows, l2, grad);
}

/// Deterministic mini-batch SGD on softmax cross-entropy. Same data, spec and
/// config give a bit-identical model. With `epochs == 0` the seeded
/// initialization is returned unchanged.
inline MlpModel train_classifier(const LabeledDataset& data, const LayerSpec& arch,
                                 const TrainConfig& cfg) {
  cfg.validate();
  arch.validate();
  detail::require(!data.empty(), "training dataset is empty");
  data.validate();
  if (arch.input_dim() != data.dim()) {
    throw ContractError("architecture input width " + std::to_string(arch.input_dim()) +
                        " != data dimension " + std::to_string(data.dim()));
  }
  if (arch.output_dim() != static_cast<std::size_t>(data.num_classes)) {
    throw ContractError("architecture output width " + std::to_string(arch.output_dim()) +
                        " != class count " + std::to_string(data.num_classes));
  }

  MlpModel model = init_model(arch, cfg.seed);
  MlpModel grad(arch);
  detail::Workspace ws(model);
  Rng shuffle_rng(derive_seed(cfg.seed, stream::kShuffle));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      const double loss = detail::batch_gradient(model, data, batch, cfg.l2_penalty, ws, grad);
      if (!std::isfinite(loss)) throw TrainingError(epoch, "non-finite training loss");
      epoch_loss += loss * static_cast<double>(batch.size());
      for (std::size_t l = 0; l < model.layers().size(); ++l) {
        DenseLayer& p = model.layers()[l];
        const DenseLayer& g = grad.layers()[l];
        for (std::size_t i = 0; i < p.weights.size(); ++i) p.weights[i] -= cfg.learning_rate * g.weights[i];
        for (std::size_t i = 0; i < p.bias.size(); ++i) p.bias[i] -= cfg.learning_rate * g.bias[i];
      }
    }
    if (!std::isfinite(epoch_loss) || !model.all_finite())
      throw TrainingError(epoch, "non-finite parameters after update");
  }
  return model;
}

// Text model format, version 1:
//
//   miafdr-mlp 1
//   activation <relu|tanh>
//   dims <d0> <d1> ... <dL>
//   weights <layer> <out*in values, row-major>
//   bias <layer> <out values>
//   (weights/bias lines repeat for each layer)
//
// Numbers use the shortest decimal form that round-trips, so save/load is
// bit-exact.

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view text, double& out) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

}  // namespace detail

inline void save_model(const MlpModel& model, std::ostream& os) {
  os << "miafdr-mlp 1\n";
  os << "activation " << to_string(model.activation()) << '\n';
  os << "dims";
  for (std::size_t d : model.spec().dims) os << ' ' << d;
  os << '\n';
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    const DenseLayer& layer = model.layers()[l];
    os << "weights " << l;
    for (double w : layer.weights) os << ' ' << detail::format_double(w);
    os << "\nbias " << l;
    for (double b : layer.bias) os << ' ' << detail::format_double(b);
    os << '\n';
  }
  if (!os) throw IoError("failed writing model");
}

inline MlpModel load_model(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view expect) {
    if (!std::getline(is, line)) throw ParseError(line_no + 1, "missing '" + std::string(expect) + "' line");
    ++line_no;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key != expect) throw ParseError(line_no, "expected '" + std::string(expect) + "', got '" + key + "'");
    std::vector<std::string> tokens;
    for (std::string tok; ss >> tok;) tokens.push_back(tok);
    return tokens;
  };

  auto header = next_line("miafdr-mlp");
  if (header.size() != 1 || header[0] != "1") throw ParseError(line_no, "unsupported model version");
  auto act = next_line("activation");
  if (act.size() != 1) throw ParseError(line_no, "activation line needs one value");
  LayerSpec spec;
  try {
    spec.activation = parse_activation(act[0]);
  } catch (const ContractError& e) {
    throw ParseError(line_no, e.what());
  }
  for (const std::string& tok : next_line("dims")) {
    std::size_t d = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), d);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || d == 0)
      throw ParseError(line_no, "bad layer width '" + tok + "'");
    spec.dims.push_back(d);
  }
  if (spec.dims.size() < 2) throw ParseError(line_no, "need at least two layer widths");

  MlpModel model(spec);
  auto read_values = [&](std::string_view key, std::size_t layer, std::vector<double>& dst) {
    auto tokens = next_line(key);
    if (tokens.empty() || tokens[0] != std::to_string(layer))
      throw ParseError(line_no, "expected layer index " + std::to_string(layer));
    if (tokens.size() - 1 != dst.size())
      throw ParseError(line_no, "expected " + std::to_string(dst.size()) + " values, got " +
                                    std::to_string(tokens.size() - 1));
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (!detail::parse_double(tokens[i + 1], dst[i]) || !std::isfinite(dst[i]))
        throw ParseError(line_no, "bad parameter value '" + tokens[i + 1] + "'");
    }
  };
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    read_values("weights", l, model.layers()[l].weights);
    read_values("bias", l, model.layers()[l].bias);
  }
  return model;
}

}  // namespace miafdr
