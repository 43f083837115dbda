#include "fedtsd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedtsd {

namespace {

void check_finite(const Matrix& m, const char* what) {
  for (double v : m.data) {
    if (!std::isfinite(v)) throw ValueError(std::string(what) + " contains a non-finite value");
  }
}

void check_labels(const std::vector<int>& labels, int batch, int classes) {
  if (labels.size() != static_cast<std::size_t>(batch)) {
    throw ShapeError("expected " + std::to_string(batch) + " labels, got " +
                     std::to_string(labels.size()));
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw ValueError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

}  // namespace

LayeredWeights::LayeredWeights(std::vector<DenseLayer> layers, double split_point)
    : layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeError("a model needs at least one layer");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    if (l.weight.rows < 1 || l.weight.cols < 1) {
      throw ShapeError("layer " + std::to_string(k) + " has an empty weight matrix");
    }
    if (l.bias.size() != static_cast<std::size_t>(l.weight.rows)) {
      throw ShapeError("layer " + std::to_string(k) + " bias length " +
                       std::to_string(l.bias.size()) + " does not match " +
                       std::to_string(l.weight.rows) + " outputs");
    }
    if (k > 0 && layers_[k - 1].out_width() != l.in_width()) {
      throw ShapeError("layer " + std::to_string(k) + " expects " +
                       std::to_string(l.in_width()) + " inputs but layer " +
                       std::to_string(k - 1) + " produces " +
                       std::to_string(layers_[k - 1].out_width()));
    }
  }
  set_split_point(split_point);
}

void LayeredWeights::set_split_point(double value) {
  if (!(value >= 0.0) || value > static_cast<double>(total_layers())) {
    throw ValueError("split point " + std::to_string(value) + " outside [0, " +
                     std::to_string(total_layers()) + "]");
  }
  split_point_ = value;
}

LayeredWeights LayeredWeights::glorot_init(const std::vector<int>& widths, double split_point,
                                           RngStream& rng) {
  if (widths.size() < 2) throw ShapeError("need at least input and output widths");
  for (int w : widths) {
    if (w < 1) throw ShapeError("layer widths must be positive");
  }
  std::vector<DenseLayer> layers;
  layers.reserve(widths.size() - 1);
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    int in = widths[k];
    int out = widths[k + 1];
    DenseLayer l;
    l.weight = Matrix(out, in);
    double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& v : l.weight.data) v = rng.uniform(-limit, limit);
    l.bias.assign(static_cast<std::size_t>(out), 0.0);
    layers.push_back(std::move(l));
  }
  return LayeredWeights(std::move(layers), split_point);
}

std::vector<int> LayeredWeights::widths() const {
  std::vector<int> w;
  w.reserve(layers_.size() + 1);
  w.push_back(layers_.front().in_width());
  for (const auto& l : layers_) w.push_back(l.out_width());
  return w;
}

bool LayeredWeights::congruent_with(const LayeredWeights& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    if (!layers_[k].weight.same_shape(other.layers_[k].weight)) return false;
  }
  return true;
}

std::vector<double> LayeredWeights::flatten() const {
  return flatten_layers(total_layers());
}

std::vector<double> LayeredWeights::flatten_layers(int layer_count) const {
  if (layer_count < 0 || layer_count > total_layers()) {
    throw ValueError("cannot flatten " + std::to_string(layer_count) + " of " +
                     std::to_string(total_layers()) + " layers");
  }
  std::vector<double> flat;
  for (int k = 0; k < layer_count; ++k) {
    const auto& l = layers_[static_cast<std::size_t>(k)];
    flat.insert(flat.end(), l.weight.data.begin(), l.weight.data.end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

LayeredWeights LayeredWeights::unflatten(const std::vector<double>& flat,
                                         const std::vector<int>& widths, double split_point) {
  if (widths.size() < 2) throw ShapeError("need at least input and output widths");
  std::size_t needed = 0;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    needed += static_cast<std::size_t>(widths[k]) * static_cast<std::size_t>(widths[k + 1]) +
              static_cast<std::size_t>(widths[k + 1]);
  }
  if (flat.size() != needed) {
    throw ShapeError("flat vector of length " + std::to_string(flat.size()) +
                     " does not match " + std::to_string(needed) + " parameters");
  }
  std::vector<DenseLayer> layers;
  std::size_t pos = 0;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    int in = widths[k];
    int out = widths[k + 1];
    DenseLayer l;
    l.weight = Matrix(out, in);
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), l.weight.data.size(),
                l.weight.data.begin());
    pos += l.weight.data.size();
    l.bias.assign(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                  flat.begin() + static_cast<std::ptrdiff_t>(pos + static_cast<std::size_t>(out)));
    pos += static_cast<std::size_t>(out);
    layers.push_back(std::move(l));
  }
  return LayeredWeights(std::move(layers), split_point);
}

GradientBlock GradientBlock::zeros_like(const LayeredWeights& model) {
  GradientBlock g;
  g.layers.reserve(static_cast<std::size_t>(model.total_layers()));
  for (const auto& l : model.layers()) {
    DenseLayer z;
    z.weight = Matrix(l.out_width(), l.in_width());
    z.bias.assign(l.bias.size(), 0.0);
    g.layers.push_back(std::move(z));
  }
  return g;
}

void TrainConfig::validate() const {
  // A zero learning rate is allowed so a no-op training pass stays expressible.
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be nonnegative and finite");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
  if (local_epochs < 1) throw ConfigError("local_epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(prox_mu >= 0.0) || !std::isfinite(prox_mu)) {
    throw ConfigError("prox_mu must be nonnegative and finite");
  }
}

Matrix forward(const LayeredWeights& model, const Matrix& batch, ForwardCache* cache) {
  if (batch.rows < 1) throw ShapeError("forward needs a nonempty batch");
  if (batch.cols != model.input_width()) {
    throw ShapeError("batch has " + std::to_string(batch.cols) + " features but layer 0 expects " +
                     std::to_string(model.input_width()));
  }
  check_finite(batch, "batch");

  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(batch);
  }

  Matrix current = batch;
  int last = model.total_layers() - 1;
  for (int k = 0; k <= last; ++k) {
    const auto& l = model.layers()[static_cast<std::size_t>(k)];
    Matrix next(current.rows, l.out_width());
    for (int r = 0; r < current.rows; ++r) {
      for (int o = 0; o < l.out_width(); ++o) {
        double acc = l.bias[static_cast<std::size_t>(o)];
        for (int i = 0; i < l.in_width(); ++i) {
          acc += l.weight.at(o, i) * current.at(r, i);
        }
        next.at(r, o) = (k < last && acc < 0.0) ? 0.0 : acc;  // ReLU on hidden layers
      }
    }
    current = std::move(next);
    if (cache && k < last) cache->activations.push_back(current);
  }
  if (cache) cache->logits = current;
  return current;
}

Matrix softmax_rows(const Matrix& logits) {
  check_finite(logits, "logits");
  Matrix out(logits.rows, logits.cols);
  for (int r = 0; r < logits.rows; ++r) {
    double mx = logits.at(r, 0);
    for (int c = 1; c < logits.cols; ++c) mx = std::max(mx, logits.at(r, c));
    double sum = 0.0;
    for (int c = 0; c < logits.cols; ++c) {
      double e = std::exp(logits.at(r, c) - mx);
      out.at(r, c) = e;
      sum += e;
    }
    for (int c = 0; c < logits.cols; ++c) out.at(r, c) /= sum;
  }
  return out;
}

GradientBlock backward(const LayeredWeights& model, const ForwardCache& cache,
                       const std::vector<int>& labels) {
  int layer_count = model.total_layers();
  if (cache.activations.size() != static_cast<std::size_t>(layer_count) ||
      cache.logits.rows < 1) {
    throw ShapeError("forward cache does not match the model");
  }
  int batch = cache.logits.rows;
  int classes = model.output_width();
  check_labels(labels, batch, classes);

  GradientBlock grads = GradientBlock::zeros_like(model);

  // d(mean CE)/d(logits) = (softmax - onehot) / batch.
  Matrix delta = softmax_rows(cache.logits);
  for (int r = 0; r < batch; ++r) {
    delta.at(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
  }
  for (double& v : delta.data) v /= static_cast<double>(batch);

  for (int k = layer_count - 1; k >= 0; --k) {
    const auto& l = model.layers()[static_cast<std::size_t>(k)];
    const Matrix& input = cache.activations[static_cast<std::size_t>(k)];
    auto& g = grads.layers[static_cast<std::size_t>(k)];
    for (int o = 0; o < l.out_width(); ++o) {
      double bias_acc = 0.0;
      for (int r = 0; r < batch; ++r) bias_acc += delta.at(r, o);
      g.bias[static_cast<std::size_t>(o)] = bias_acc;
      for (int i = 0; i < l.in_width(); ++i) {
        double acc = 0.0;
        for (int r = 0; r < batch; ++r) acc += delta.at(r, o) * input.at(r, i);
        g.weight.at(o, i) = acc;
      }
    }
    if (k > 0) {
      // Push the error through the weights, gated by the ReLU mask of the
      // layer input (which is the previous layer's activation).
      Matrix prev(batch, l.in_width());
      for (int r = 0; r < batch; ++r) {
        for (int i = 0; i < l.in_width(); ++i) {
          double acc = 0.0;
          for (int o = 0; o < l.out_width(); ++o) {
            acc += delta.at(r, o) * l.weight.at(o, i);
          }
          prev.at(r, i) = input.at(r, i) > 0.0 ? acc : 0.0;
        }
      }
      delta = std::move(prev);
    }
  }
  return grads;
}

void sgd_step(LayeredWeights& model, const GradientBlock& grads, GradientBlock& velocity,
              const TrainConfig& cfg, const LayeredWeights* anchor) {
  cfg.validate();
  if (grads.layers.size() != static_cast<std::size_t>(model.total_layers()) ||
      velocity.layers.size() != grads.layers.size()) {
    throw ShapeError("gradient and velocity blocks must match the model layer for layer");
  }
  if (cfg.prox_mu > 0.0 && anchor == nullptr) {
    throw ConfigError("proximal training needs an anchor model");
  }
  if (anchor && !model.congruent_with(*anchor)) {
    throw ShapeError("anchor model shape does not match");
  }

  for (std::size_t k = 0; k < grads.layers.size(); ++k) {
    auto& w = model.layers()[k];
    const auto& g = grads.layers[k];
    auto& v = velocity.layers[k];
    if (!w.weight.same_shape(g.weight) || !w.weight.same_shape(v.weight)) {
      throw ShapeError("layer " + std::to_string(k) + " gradient shape does not match");
    }
    for (std::size_t j = 0; j < w.weight.data.size(); ++j) {
      double pull = g.weight.data[j];
      if (cfg.prox_mu > 0.0) {
        pull += cfg.prox_mu * (w.weight.data[j] - anchor->layers()[k].weight.data[j]);
      }
      v.weight.data[j] = cfg.momentum * v.weight.data[j] + pull;
      w.weight.data[j] -= cfg.learning_rate * v.weight.data[j];
    }
    for (std::size_t j = 0; j < w.bias.size(); ++j) {
      double pull = g.bias[j];
      if (cfg.prox_mu > 0.0) {
        pull += cfg.prox_mu * (w.bias[j] - anchor->layers()[k].bias[j]);
      }
      v.bias[j] = cfg.momentum * v.bias[j] + pull;
      w.bias[j] -= cfg.learning_rate * v.bias[j];
    }
  }
}

LayeredWeights local_train(const LayeredWeights& model, const LabeledDataset& data,
                           const TrainConfig& cfg, int round, RngStream& rng) {
  cfg.validate();
  if (round < 0) throw ValueError("round index must be nonnegative");
  data.validate();
  if (data.feature_count() != model.input_width() || data.class_count != model.output_width()) {
    throw ShapeError("dataset shape does not match the model");
  }

  TrainConfig step = cfg;
  step.learning_rate = cfg.learning_rate * std::pow(cfg.lr_decay, round);

  LayeredWeights current = model;
  LayeredWeights anchor = model;  // round-start weights, used when prox_mu > 0
  GradientBlock velocity = GradientBlock::zeros_like(model);

  std::vector<int> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    rng.shuffle(order);
    for (int start = 0; start < data.size(); start += cfg.batch_size) {
      int count = std::min(cfg.batch_size, data.size() - start);
      Matrix batch(count, data.feature_count());
      std::vector<int> labels(static_cast<std::size_t>(count));
      for (int r = 0; r < count; ++r) {
        int src = order[static_cast<std::size_t>(start + r)];
        for (int c = 0; c < data.feature_count(); ++c) {
          batch.at(r, c) = data.features.at(src, c);
        }
        labels[static_cast<std::size_t>(r)] = data.labels[static_cast<std::size_t>(src)];
      }
      ForwardCache cache;
      forward(current, batch, &cache);
      GradientBlock grads = backward(current, cache, labels);
      sgd_step(current, grads, velocity, step, cfg.prox_mu > 0.0 ? &anchor : nullptr);
    }
  }
  return current;
}

double mean_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  check_finite(logits, "logits");
  check_labels(labels, logits.rows, logits.cols);
  double total = 0.0;
  for (int r = 0; r < logits.rows; ++r) {
    double mx = logits.at(r, 0);
    for (int c = 1; c < logits.cols; ++c) mx = std::max(mx, logits.at(r, c));
    double sum = 0.0;
    for (int c = 0; c < logits.cols; ++c) sum += std::exp(logits.at(r, c) - mx);
    total += mx + std::log(sum) - logits.at(r, labels[static_cast<std::size_t>(r)]);
  }
  return total / static_cast<double>(logits.rows);
}

double dataset_loss(const LayeredWeights& model, const LabeledDataset& data) {
  data.validate();
  return mean_cross_entropy(forward(model, data.features), data.labels);
}

double dataset_accuracy(const LayeredWeights& model, const LabeledDataset& data) {
  data.validate();
  Matrix logits = forward(model, data.features);
  int hits = 0;
  for (int r = 0; r < logits.rows; ++r) {
    int best = 0;
    for (int c = 1; c < logits.cols; ++c) {
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    }
    if (best == data.labels[static_cast<std::size_t>(r)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows);
}

}  // namespace fedtsd
