#pragma once

// Training a small embedding map together with its proxy bank, plus the
// nearest-neighbour ranking used to score a trained model.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "proxydml/loss.hpp"
#include "proxydml/metrics.hpp"
#include "proxydml/synth.hpp"
#include "proxydml/tensor.hpp"

namespace pdml {

enum class ModelArch { Affine, OneHidden };
enum class ModelInit { Auto, Identity, Random };
enum class OptimizerKind { Sgd, AdamW };

const char* to_string(ModelArch arch) noexcept;
const char* to_string(ModelInit init) noexcept;
const char* to_string(OptimizerKind kind) noexcept;

struct ModelConfig {
  std::size_t embedding_dim = 16;
  ModelArch arch = ModelArch::Affine;
  std::size_t hidden_dim = 32;
  /// Auto: identity when the affine map is square, Gaussian otherwise.
  ModelInit init = ModelInit::Auto;
};

/// Affine map (optionally with one tanh hidden layer) followed by L2
/// normalization. Parameters live in one flat vector so optimizers can treat
/// them uniformly.
class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  static EmbeddingModel create(std::size_t input_dim, const ModelConfig& cfg, std::uint64_t seed);
  /// Rebuilds a model from a flat parameter vector.
  static EmbeddingModel from_parameters(ModelArch arch, std::size_t input_dim,
                                        std::size_t hidden_dim, std::size_t output_dim,
                                        std::vector<double> params);

  ModelArch arch() const noexcept { return arch_; }
  std::size_t input_dim() const noexcept { return in_; }
  std::size_t hidden_dim() const noexcept { return hidden_; }
  std::size_t output_dim() const noexcept { return out_; }

  /// Outputs before normalization, one row per feature row.
  Matrix forward_raw(const Matrix& features) const;
  /// Gradient with respect to the flat parameters given d loss / d raw output.
  std::vector<double> backward(const Matrix& features, const Matrix& d_raw) const;

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  friend bool operator==(const EmbeddingModel&, const EmbeddingModel&) = default;

 private:
  ModelArch arch_ = ModelArch::Affine;
  std::size_t in_ = 0, hidden_ = 0, out_ = 0;
  std::vector<double> params_;
};

EmbeddingBatch embed(const EmbeddingModel& model, const LabeledDataset& ds);

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::AdamW;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
};

/// Adam with decoupled weight decay, or plain SGD with L2-coupled decay.
class Optimizer {
 public:
  Optimizer(std::size_t num_params, const OptimizerSettings& settings);
  void step(std::span<double> params, std::span<const double> grads, double lr);

 private:
  OptimizerSettings s_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  LossConfig loss;
  ModelConfig model;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr_model = 3e-2;
  double lr_proxies = 1e-2;
  double lr_decay_factor = 0.5;
  std::size_t lr_decay_every = 20;
  OptimizerSettings optimizer;
  /// Project proxies back onto the unit sphere after every step.
  bool renormalize_proxies = true;
  std::uint64_t seed = 0;

  /// Throws Error(InvalidConfig) naming the offending field.
  void validate() const;
};

/// Learning rate in effect during 1-based `epoch`.
double lr_at_epoch(double base, double decay_factor, std::size_t decay_every, std::size_t epoch);

/// Uniform shuffle of [0, n) chunked into batches; the last short batch is kept.
std::vector<std::vector<std::size_t>> sample_batches(std::size_t n, std::size_t batch_size,
                                                     std::uint64_t seed, std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss_mean = 0.0;
  double regularizer = 0.0;
  double grad_norm_model = 0.0;
  double grad_norm_proxies = 0.0;
  double lr_model = 0.0;
  double lr_proxies = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;

  static constexpr const char* kCsvHeader =
      "epoch,loss_mean,regularizer,grad_norm_model,grad_norm_proxies,lr_model,lr_proxies";
  std::string to_csv() const;
};

/// Trainable state: the model, raw proxies, and the map from contiguous
/// proxy-class index to original dataset label.
struct TrainState {
  EmbeddingModel model;
  Tensor3 proxies;
  std::vector<int> class_ids;
};

TrainState initial_state(const LabeledDataset& ds, const TrainConfig& cfg);

struct StepGradients {
  double loss = 0.0;
  double regularizer = 0.0;
  std::vector<double> d_model;
  Tensor3 d_proxies;
};

/// One forward/backward pass on rows `batch` of `features`. `labels` are
/// already mapped to proxy-class indices.
StepGradients compute_step_gradients(const EmbeddingModel& model, const Tensor3& proxies,
                                     const Matrix& features, std::span<const int> labels,
                                     const LossConfig& loss);

struct TrainResult {
  TrainState state;
  TrainLog log;
};

TrainResult train(const LabeledDataset& train_set, const TrainConfig& cfg);

/// For each query, gallery items by descending inner product (ties: lower
/// gallery index first), truncated to max_k. With exclude_self the query and
/// gallery are the same set and item i is skipped for query i.
std::vector<RankedResult> knn_rank(const EmbeddingBatch& queries, const EmbeddingBatch& gallery,
                                   std::size_t max_k, bool exclude_self);

struct Checkpoint {
  TrainState state;
  std::string config_hash;
};

void save_checkpoint(const std::string& path, const TrainState& state,
                     const std::string& config_hash);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pdml
