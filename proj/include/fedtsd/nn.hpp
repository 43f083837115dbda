#pragma once

#include <vector>

#include "fedtsd/common.hpp"
#include "fedtsd/data.hpp"
#include "fedtsd/matrix.hpp"
#include "fedtsd/rng.hpp"

namespace fedtsd {

struct DenseLayer {
  Matrix weight;             // out x in
  std::vector<double> bias;  // out

  int in_width() const { return weight.cols; }
  int out_width() const { return weight.rows; }
};

// A dense multilayer perceptron: ReLU on hidden layers, identity on the
// output layer. split_point marks how many leading layers are currently
// shared with the client's cluster; it may be fractional, in which case the
// boundary layer is only partially shared.
class LayeredWeights {
 public:
  LayeredWeights(std::vector<DenseLayer> layers, double split_point);

  // Glorot-uniform weights, zero biases. widths = {in, hidden..., out}.
  static LayeredWeights glorot_init(const std::vector<int>& widths, double split_point,
                                    RngStream& rng);

  int total_layers() const { return static_cast<int>(layers_.size()); }
  double split_point() const { return split_point_; }
  void set_split_point(double value);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  int input_width() const { return layers_.front().in_width(); }
  int output_width() const { return layers_.back().out_width(); }
  std::vector<int> widths() const;

  bool congruent_with(const LayeredWeights& other) const;

  std::vector<double> flatten() const;
  // Flattens only the first `layer_count` layers (weights then bias per layer).
  std::vector<double> flatten_layers(int layer_count) const;
  static LayeredWeights unflatten(const std::vector<double>& flat,
                                  const std::vector<int>& widths, double split_point);

 private:
  std::vector<DenseLayer> layers_;
  double split_point_ = 0.0;
};

// Per-layer gradient (or velocity) buffers, shape-congruent with a model.
struct GradientBlock {
  std::vector<DenseLayer> layers;
  static GradientBlock zeros_like(const LayeredWeights& model);
};

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.5;
  double lr_decay = 0.95;  // applied per communication round
  int local_epochs = 2;
  int batch_size = 50;
  double prox_mu = 0.0;  // proximal pull toward the round anchor when > 0
  void validate() const;
};

struct ForwardCache {
  // activations[k] is the input to layer k; activations[0] is the batch.
  std::vector<Matrix> activations;
  Matrix logits;
};

// Returns logits [B x C]; fills `cache` when given (needed for backward).
Matrix forward(const LayeredWeights& model, const Matrix& batch, ForwardCache* cache = nullptr);

// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

// Gradients of the mean cross-entropy loss over the cached batch.
GradientBlock backward(const LayeredWeights& model, const ForwardCache& cache,
                       const std::vector<int>& labels);

// velocity <- momentum * velocity + grads (+ prox_mu * (w - anchor));
// w <- w - learning_rate * velocity.
void sgd_step(LayeredWeights& model, const GradientBlock& grads, GradientBlock& velocity,
              const TrainConfig& cfg, const LayeredWeights* anchor = nullptr);

// Mini-batch SGD for cfg.local_epochs epochs at learning rate
// cfg.learning_rate * lr_decay^round. The momentum buffer starts at zero;
// when prox_mu > 0 the input weights serve as the proximal anchor.
LayeredWeights local_train(const LayeredWeights& model, const LabeledDataset& data,
                           const TrainConfig& cfg, int round, RngStream& rng);

double mean_cross_entropy(const Matrix& logits, const std::vector<int>& labels);
double dataset_loss(const LayeredWeights& model, const LabeledDataset& data);
double dataset_accuracy(const LayeredWeights& model, const LabeledDataset& data);

}  // namespace fedtsd
