#pragma once

// Proxy-based metric-learning losses: class similarity against a bank of
// per-class proxies, the SoftTriple and multi-proxies-anchor (MPA) objectives,
// the intra-class center regularizer, and hand-derived gradients.
//
// All functions here are pure; nothing holds mutable state.

#include <cstdint>
#include <span>
#include <vector>

#include "proxydml/tensor.hpp"

namespace pdml {

enum class LossKind { SoftTriple, MultiProxyAnchor };
enum class SimilarityMode { SoftmaxWeighted, Max, Mean };

const char* to_string(LossKind kind) noexcept;
const char* to_string(SimilarityMode mode) noexcept;

struct LossConfig {
  double gamma = 0.1;   // softmax temperature over a class's proxies
  double lambda = 20.0; // SoftTriple logit scale
  double delta = 0.1;   // margin
  double alpha = 32.0;  // MPA scale
  double tau = 0.2;     // center regularizer weight
  std::size_t proxies_per_class = 1;
  LossKind kind = LossKind::MultiProxyAnchor;
  SimilarityMode mode = SimilarityMode::SoftmaxWeighted;

  /// Throws Error(InvalidConfig) naming the offending field.
  void validate() const;
};

/// N embeddings (rows) with class labels.
struct EmbeddingBatch {
  Matrix vectors;
  std::vector<int> labels;

  std::size_t size() const noexcept { return vectors.rows(); }
  std::size_t dim() const noexcept { return vectors.cols(); }
  bool is_unit_norm(double tol = 1e-9) const;
};

/// C classes x K proxies x D dims.
struct ProxyBank {
  Tensor3 proxies;

  ProxyBank() = default;
  explicit ProxyBank(Tensor3 t) : proxies(std::move(t)) {}
  ProxyBank(std::size_t classes, std::size_t per_class, std::size_t dim)
      : proxies(classes, per_class, dim) {}

  /// Isotropic Gaussian draws, each proxy then L2-normalized.
  static ProxyBank random(std::size_t classes, std::size_t per_class, std::size_t dim,
                          std::uint64_t seed);

  std::size_t num_classes() const noexcept { return proxies.dim0(); }
  std::size_t per_class() const noexcept { return proxies.dim1(); }
  std::size_t dim() const noexcept { return proxies.dim2(); }

  MatrixView class_proxies(std::size_t c) const { return proxies.slab(c); }
  std::span<const double> proxy(std::size_t c, std::size_t k) const { return proxies.fiber(c, k); }
  std::span<double> proxy(std::size_t c, std::size_t k) { return proxies.fiber(c, k); }

  void normalize();
  bool is_unit_norm(double tol = 1e-9) const;
};

/// Entry (i, c) is S(x_i, c).
struct SimilarityMatrix {
  Matrix values;

  std::size_t rows() const noexcept { return values.rows(); }
  std::size_t cols() const noexcept { return values.cols(); }
  double operator()(std::size_t i, std::size_t c) const { return values(i, c); }
};

struct LossGradients {
  double loss_value = 0.0;
  double regularizer = 0.0;
  Matrix d_embeddings;  // N x D
  Tensor3 d_proxies;    // C x K x D
};

/// Partial derivatives of class_similarity with respect to x and each proxy.
struct SimilarityJacobian {
  std::vector<double> d_x;  // D
  Matrix d_w;               // K x D
};

/// Knobs used by the gradient checker. Production callers pass the default.
struct GradientHooks {
  /// Multiplies the similarity-loss term (value and gradient).
  double sim_loss_scale = 1.0;
  /// Deliberately perturbs the MPA gradient on positive (same-class) entries.
  bool corrupt_mpa_positive = false;
};

std::vector<double> l2_normalize(std::span<const double> v);

/// x is one embedding; class_proxies is K x D.
double class_similarity(std::span<const double> x, MatrixView class_proxies, double gamma,
                        SimilarityMode mode);

SimilarityJacobian similarity_jacobians(std::span<const double> x, MatrixView class_proxies,
                                        double gamma, SimilarityMode mode);

SimilarityMatrix similarity_matrix(const EmbeddingBatch& batch, const ProxyBank& bank,
                                   const LossConfig& cfg);

/// Batch-mean SoftTriple similarity loss.
double softtriple_sim_loss(std::span<const int> labels, const SimilarityMatrix& sims,
                           const LossConfig& cfg);

/// d(softtriple_sim_loss)/dS, including the 1/N batch-mean factor. The
/// true-class entry is negative and every other entry positive.
Matrix softtriple_grad_wrt_similarity(const SimilarityMatrix& sims, std::span<const int> labels,
                                      const LossConfig& cfg);

double mpa_sim_loss(std::span<const int> labels, const SimilarityMatrix& sims,
                    const LossConfig& cfg);

/// d(mpa_sim_loss)/dS, evaluated with max-shifted exponentials.
Matrix mpa_grad_wrt_similarity(const SimilarityMatrix& sims, std::span<const int> labels,
                               const LossConfig& cfg, const GradientHooks& hooks = {});

/// The same derivative written through similarity differences against the
/// other members of X_c^+ / X_c^-. Kept as an independent route for checking.
Matrix mpa_grad_wrt_similarity_relative(const SimilarityMatrix& sims,
                                        std::span<const int> labels, const LossConfig& cfg);

/// Mean pairwise chord distance between proxies of the same class; 0 if K == 1.
double center_regularizer(const ProxyBank& bank);
Tensor3 center_regularizer_grad(const ProxyBank& bank);

double softtriple_loss(const EmbeddingBatch& batch, const ProxyBank& bank, const LossConfig& cfg);
double mpa_loss(const EmbeddingBatch& batch, const ProxyBank& bank, const LossConfig& cfg);
/// Dispatches on cfg.kind.
double loss_value(const EmbeddingBatch& batch, const ProxyBank& bank, const LossConfig& cfg);

/// Loss of unnormalized parameters: rows of raw_embeddings and every proxy
/// fiber of raw_proxies are L2-normalized first.
double loss_forward_raw(const Matrix& raw_embeddings, std::span<const int> labels,
                        const Tensor3& raw_proxies, const LossConfig& cfg,
                        const GradientHooks& hooks = {});

/// Loss and gradients with respect to the unnormalized parameters, including
/// the Jacobian of the normalization.
LossGradients loss_backward(const Matrix& raw_embeddings, std::span<const int> labels,
                            const Tensor3& raw_proxies, const LossConfig& cfg,
                            const GradientHooks& hooks = {});

}  // namespace pdml
