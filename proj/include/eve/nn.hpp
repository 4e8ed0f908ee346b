#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "eve/tensor.hpp"

namespace eve {

enum class Activation { None, Relu };

struct ConvLayer {
  int in_ch = 0, out_ch = 0, kh = 0, kw = 0, stride = 1;
  Activation act = Activation::None;
};

struct PoolLayer {
  enum class Kind { Max, Avg };
  Kind kind = Kind::Max;
  int size = 2;
};

struct FcLayer {
  int m = 0, n = 0;        // weight matrix is m x n (input dim x output dim)
  int block_x = 1, block_y = 1;
  Activation act = Activation::None;
};

using LayerDef = std::variant<ConvLayer, PoolLayer, FcLayer>;

struct NetworkDef {
  int input_ch = 1, input_h = 0, input_w = 0;
  std::vector<LayerDef> layers;

  /// (channels, height, width) entering each layer, plus the final output
  /// shape at the back. Throws if adjacent layers do not compose or an FC
  /// block size does not divide the matrix.
  std::vector<std::array<int, 3>> activation_shapes() const;
  int num_classes() const;

  static NetworkDef from_json_file(const std::string& path);
  static NetworkDef from_json_text(const std::string& text);
  std::string to_json_text() const;
};

struct TrainedModel {
  NetworkDef def;
  std::vector<Tensor> weights;  // empty tensor for pool layers
  std::vector<Tensor> biases;
  std::vector<Tensor> masks;    // 0/1, congruent with weights
};

struct Grads {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
};

struct Sample {
  Tensor input;
  int label = 0;
};

struct Dataset {
  int num_classes = 0;
  std::vector<Sample> train;
  std::vector<Sample> holdout;
};

/// Weight tensor shape for one layer: conv {out_ch,in_ch,kh,kw}, fc {m,n},
/// pool {} (no weights).
std::vector<int> weight_shape(const LayerDef& layer);
std::vector<int> bias_shape(const LayerDef& layer);

/// Fresh model with seeded normal init and all-ones masks.
TrainedModel init_model(const NetworkDef& def, uint64_t seed);

Tensor forward(const TrainedModel& model, const Tensor& input);

std::pair<double, Grads> loss_and_grads(const TrainedModel& model,
                                        const std::vector<Sample>& batch);

/// updated = old - lr * grad, only where mask == 1 and frozen_mask == 0.
/// Positions with mask == 0 stay exactly zero; frozen positions stay
/// bit-identical.
TrainedModel sgd_step_masked(const TrainedModel& model, const Grads& grads,
                             float lr, const std::vector<Tensor>& frozen_masks);

double evaluate_accuracy(const TrainedModel& model,
                         const std::vector<Sample>& holdout);

/// Class-separable Gaussian-blob images, 1 x kImageSize x kImageSize,
/// deterministic per seed. Split 3:1 train:holdout per class.
constexpr int kImageSize = 8;
Dataset make_synthetic_dataset(uint64_t seed, int num_classes,
                               int samples_per_class);

/// IDX readers (standard MNIST distribution; big-endian magic
/// 0x00000803 for images, 0x00000801 for labels).
std::vector<Tensor> read_idx_images(const std::string& path);
std::vector<int> read_idx_labels(const std::string& path);

}  // namespace eve
