#include "proxydml/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "proxydml/error.hpp"
#include "proxydml/rng.hpp"

namespace pdml {

namespace {

constexpr double kZeroNorm = 1e-12;

// log(1 + sum_j exp(a_j)), shifted so no exponent is positive.
double log1p_sum_exp(std::span<const double> a) {
  if (a.empty()) return 0.0;
  const auto top = std::max_element(a.begin(), a.end());
  if (*top <= 0.0) {
    double acc = 0.0;
    for (double v : a) acc += std::exp(v);
    return std::log1p(acc);
  }
  // The largest term becomes exactly 1; log1p keeps the remainder when it is tiny.
  double rest = std::exp(-*top);
  for (auto it = a.begin(); it != a.end(); ++it) {
    if (it != top) rest += std::exp(*it - *top);
  }
  return *top + std::log1p(rest);
}

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes) {
  if (labels.size() != rows) {
    fail(ErrorCode::ShapeMismatch, "label count " + std::to_string(labels.size()) +
                                       " does not match " + std::to_string(rows) + " rows");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      fail(ErrorCode::ShapeMismatch, "label " + std::to_string(labels[i]) + " at row " +
                                         std::to_string(i) + " outside [0, " +
                                         std::to_string(classes) + ")");
    }
  }
}

// Per-class membership lists for the batch.
struct ClassMembers {
  std::vector<std::vector<std::size_t>> positives;  // by class
  std::size_t present = 0;                           // |C+|
};

ClassMembers group_by_class(std::span<const int> labels, std::size_t classes) {
  ClassMembers m;
  m.positives.resize(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    m.positives[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  for (const auto& p : m.positives) m.present += p.empty() ? 0 : 1;
  return m;
}

std::vector<double> normalized_rows(Matrix& m, const char* what) {
  std::vector<double> norms(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double n = norm2(row);
    if (!(n >= kZeroNorm)) {
      fail(ErrorCode::ZeroVector, std::string(what) + " row " + std::to_string(r) +
                                      " has zero norm");
    }
    for (double& v : row) v /= n;
    norms[r] = n;
  }
  return norms;
}

// (I - v v^T) g / n, in place on g.
void project_tangent(std::span<const double> unit, double norm, std::span<double> g) {
  const double along = dot(unit, g);
  for (std::size_t d = 0; d < g.size(); ++d) g[d] = (g[d] - along * unit[d]) / norm;
}

}  // namespace

const char* to_string(LossKind kind) noexcept {
  switch (kind) {
    case LossKind::SoftTriple: return "softtriple";
    case LossKind::MultiProxyAnchor: return "mpa";
  }
  return "?";
}

const char* to_string(SimilarityMode mode) noexcept {
  switch (mode) {
    case SimilarityMode::SoftmaxWeighted: return "softmax";
    case SimilarityMode::Max: return "max";
    case SimilarityMode::Mean: return "mean";
  }
  return "?";
}

void LossConfig::validate() const {
  auto require = [](bool ok, const char* field, const char* rule) {
    if (!ok) fail(ErrorCode::InvalidConfig, std::string(field) + " " + rule);
  };
  require(std::isfinite(gamma) && gamma > 0.0, "gamma", "must be > 0");
  require(std::isfinite(lambda) && lambda > 0.0, "lambda", "must be > 0");
  require(std::isfinite(alpha) && alpha > 0.0, "alpha", "must be > 0");
  require(std::isfinite(tau) && tau >= 0.0, "tau", "must be >= 0");
  require(std::isfinite(delta), "delta", "must be finite");
  require(proxies_per_class >= 1, "proxies_per_class", "must be >= 1");
}

bool EmbeddingBatch::is_unit_norm(double tol) const {
  for (std::size_t r = 0; r < vectors.rows(); ++r) {
    if (std::abs(norm2(vectors.row(r)) - 1.0) > tol) return false;
  }
  return true;
}

ProxyBank ProxyBank::random(std::size_t classes, std::size_t per_class, std::size_t dim,
                            std::uint64_t seed) {
  ProxyBank bank(classes, per_class, dim);
  Rng rng(seed);
  for (double& v : bank.proxies.flat()) v = rng.normal();
  bank.normalize();
  return bank;
}

void ProxyBank::normalize() {
  for (std::size_t c = 0; c < num_classes(); ++c) {
    for (std::size_t k = 0; k < per_class(); ++k) {
      auto w = proxies.fiber(c, k);
      const double n = norm2(w);
      if (!(n >= kZeroNorm)) {
        fail(ErrorCode::ZeroVector,
             "proxy (" + std::to_string(c) + ", " + std::to_string(k) + ") has zero norm");
      }
      for (double& v : w) v /= n;
    }
  }
}

bool ProxyBank::is_unit_norm(double tol) const {
  for (std::size_t c = 0; c < num_classes(); ++c) {
    for (std::size_t k = 0; k < per_class(); ++k) {
      if (std::abs(norm2(proxy(c, k)) - 1.0) > tol) return false;
    }
  }
  return true;
}

std::vector<double> l2_normalize(std::span<const double> v) {
  const double n = norm2(v);
  if (!(n >= kZeroNorm)) fail(ErrorCode::ZeroVector, "cannot normalize a zero vector");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

double class_similarity(std::span<const double> x, MatrixView class_proxies, double gamma,
                        SimilarityMode mode) {
  const std::size_t K = class_proxies.rows;
  if (K == 0) fail(ErrorCode::ShapeMismatch, "class has no proxies");
  if (class_proxies.cols != x.size()) {
    fail(ErrorCode::ShapeMismatch, "embedding and proxy dimensions differ");
  }
  switch (mode) {
    case SimilarityMode::Max: {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < K; ++k) best = std::max(best, dot(x, class_proxies.row(k)));
      return best;
    }
    case SimilarityMode::Mean: {
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += dot(x, class_proxies.row(k));
      return s / static_cast<double>(K);
    }
    case SimilarityMode::SoftmaxWeighted: break;
  }
  if (!(gamma > 0.0)) fail(ErrorCode::InvalidConfig, "gamma must be > 0");
  std::vector<double> z(K);
  for (std::size_t k = 0; k < K; ++k) z[k] = dot(x, class_proxies.row(k));
  const double zmax = *std::max_element(z.begin(), z.end());
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double w = std::exp((z[k] - zmax) / gamma);
    num += w * z[k];
    den += w;
  }
  return num / den;
}

SimilarityJacobian similarity_jacobians(std::span<const double> x, MatrixView class_proxies,
                                        double gamma, SimilarityMode mode) {
  const std::size_t K = class_proxies.rows;
  const std::size_t D = x.size();
  if (K == 0 || class_proxies.cols != D) {
    fail(ErrorCode::ShapeMismatch, "embedding and proxy dimensions differ");
  }

  // dS/dz_k for z_k = x . w_k; then dS/dx = sum_k g_k w_k and dS/dw_k = g_k x.
  std::vector<double> g(K, 0.0);
  std::vector<double> z(K);
  for (std::size_t k = 0; k < K; ++k) z[k] = dot(x, class_proxies.row(k));
  switch (mode) {
    case SimilarityMode::Max: {
      // First index wins ties.
      std::size_t arg = 0;
      for (std::size_t k = 1; k < K; ++k) {
        if (z[k] > z[arg]) arg = k;
      }
      g[arg] = 1.0;
      break;
    }
    case SimilarityMode::Mean:
      std::fill(g.begin(), g.end(), 1.0 / static_cast<double>(K));
      break;
    case SimilarityMode::SoftmaxWeighted: {
      if (!(gamma > 0.0)) fail(ErrorCode::InvalidConfig, "gamma must be > 0");
      const double zmax = *std::max_element(z.begin(), z.end());
      std::vector<double> p(K);
      double den = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        p[k] = std::exp((z[k] - zmax) / gamma);
        den += p[k];
      }
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        p[k] /= den;
        s += p[k] * z[k];
      }
      for (std::size_t k = 0; k < K; ++k) g[k] = p[k] * (1.0 + (z[k] - s) / gamma);
      break;
    }
  }

  SimilarityJacobian jac{std::vector<double>(D, 0.0), Matrix(K, D)};
  for (std::size_t k = 0; k < K; ++k) {
    axpy(g[k], class_proxies.row(k), jac.d_x);
    axpy(g[k], x, jac.d_w.row(k));
  }
  return jac;
}

SimilarityMatrix similarity_matrix(const EmbeddingBatch& batch, const ProxyBank& bank,
                                   const LossConfig& cfg) {
  if (batch.dim() != bank.dim()) {
    fail(ErrorCode::ShapeMismatch, "embedding dim " + std::to_string(batch.dim()) +
                                       " != proxy dim " + std::to_string(bank.dim()));
  }
  if (bank.per_class() == 0) fail(ErrorCode::ShapeMismatch, "proxy bank has K = 0");
  if (cfg.mode == SimilarityMode::SoftmaxWeighted && !(cfg.gamma > 0.0)) {
    fail(ErrorCode::InvalidConfig, "gamma must be > 0");
  }
  SimilarityMatrix sims{Matrix(batch.size(), bank.num_classes())};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t c = 0; c < bank.num_classes(); ++c) {
      sims.values(i, c) =
          class_similarity(batch.vectors.row(i), bank.class_proxies(c), cfg.gamma, cfg.mode);
    }
  }
  return sims;
}

double softtriple_sim_loss(std::span<const int> labels, const SimilarityMatrix& sims,
                           const LossConfig& cfg) {
  const std::size_t N = sims.rows(), C = sims.cols();
  if (N == 0) fail(ErrorCode::EmptyBatch, "SoftTriple loss of an empty batch");
  check_labels(labels, N, C);
  std::vector<double> logits(C);
  double total = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const auto yi = static_cast<std::size_t>(labels[i]);
    for (std::size_t c = 0; c < C; ++c) {
      logits[c] = cfg.lambda * (sims(i, c) - (c == yi ? cfg.delta : 0.0));
    }
    const auto top = std::max_element(logits.begin(), logits.end());
    double rest = 0.0;
    for (auto it = logits.begin(); it != logits.end(); ++it) {
      if (it != top) rest += std::exp(*it - *top);
    }
    total += *top - logits[yi] + std::log1p(rest);
  }
  return total / static_cast<double>(N);
}

Matrix softtriple_grad_wrt_similarity(const SimilarityMatrix& sims, std::span<const int> labels,
                                      const LossConfig& cfg) {
  const std::size_t N = sims.rows(), C = sims.cols();
  if (N == 0) fail(ErrorCode::EmptyBatch, "SoftTriple gradient of an empty batch");
  check_labels(labels, N, C);
  Matrix grad(N, C);
  std::vector<double> p(C);
  const double scale = cfg.lambda / static_cast<double>(N);
  for (std::size_t i = 0; i < N; ++i) {
    const auto yi = static_cast<std::size_t>(labels[i]);
    for (std::size_t c = 0; c < C; ++c) {
      p[c] = cfg.lambda * (sims(i, c) - (c == yi ? cfg.delta : 0.0));
    }
    const double m = *std::max_element(p.begin(), p.end());
    double den = 0.0;
    for (double& v : p) {
      v = std::exp(v - m);
      den += v;
    }
    double others = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      p[c] /= den;
      if (c != yi) {
        grad(i, c) = scale * p[c];
        others += p[c];
      }
    }
    // 1 - p[yi], summed from the small terms to keep precision near saturation.
    grad(i, yi) = -scale * others;
  }
  return grad;
}

double mpa_sim_loss(std::span<const int> labels, const SimilarityMatrix& sims,
                    const LossConfig& cfg) {
  const std::size_t N = sims.rows(), C = sims.cols();
  if (N == 0) fail(ErrorCode::EmptyBatch, "MPA loss of an empty batch");
  check_labels(labels, N, C);
  const ClassMembers members = group_by_class(labels, C);

  double pos = 0.0, neg = 0.0;
  std::vector<double> terms;
  terms.reserve(N);
  for (std::size_t c = 0; c < C; ++c) {
    terms.clear();
    for (std::size_t i : members.positives[c]) {
      terms.push_back(-cfg.alpha * (sims(i, c) - cfg.delta));
    }
    pos += log1p_sum_exp(terms);

    terms.clear();
    for (std::size_t i = 0; i < N; ++i) {
      if (static_cast<std::size_t>(labels[i]) != c) {
        terms.push_back(cfg.alpha * (sims(i, c) + cfg.delta));
      }
    }
    neg += log1p_sum_exp(terms);
  }
  return pos / static_cast<double>(members.present) + neg / static_cast<double>(C);
}

Matrix mpa_grad_wrt_similarity(const SimilarityMatrix& sims, std::span<const int> labels,
                               const LossConfig& cfg, const GradientHooks& hooks) {
  const std::size_t N = sims.rows(), C = sims.cols();
  if (N == 0) fail(ErrorCode::EmptyBatch, "MPA gradient of an empty batch");
  check_labels(labels, N, C);
  const ClassMembers members = group_by_class(labels, C);
  const double pos_scale = cfg.alpha / static_cast<double>(members.present);
  const double neg_scale = cfg.alpha / static_cast<double>(C);

  Matrix grad(N, C);
  std::vector<std::size_t> idx;
  std::vector<double> a;
  // For one class: entries weight * exp(a_j) / (1 + sum exp(a)), shifted.
  auto fill = [&](std::size_t c, double weight) {
    if (idx.empty()) return;
    const double m = std::max(0.0, *std::max_element(a.begin(), a.end()));
    double den = std::exp(-m);
    for (double& v : a) {
      v = std::exp(v - m);
      den += v;
    }
    for (std::size_t j = 0; j < idx.size(); ++j) grad(idx[j], c) = weight * a[j] / den;
  };

  for (std::size_t c = 0; c < C; ++c) {
    idx.clear();
    a.clear();
    for (std::size_t i : members.positives[c]) {
      idx.push_back(i);
      a.push_back(-cfg.alpha * (sims(i, c) - cfg.delta));
    }
    fill(c, hooks.corrupt_mpa_positive ? -1.5 * pos_scale : -pos_scale);

    idx.clear();
    a.clear();
    for (std::size_t i = 0; i < N; ++i) {
      if (static_cast<std::size_t>(labels[i]) != c) {
        idx.push_back(i);
        a.push_back(cfg.alpha * (sims(i, c) + cfg.delta));
      }
    }
    fill(c, neg_scale);
  }
  return grad;
}

Matrix mpa_grad_wrt_similarity_relative(const SimilarityMatrix& sims,
                                        std::span<const int> labels, const LossConfig& cfg) {
  const std::size_t N = sims.rows(), C = sims.cols();
  if (N == 0) fail(ErrorCode::EmptyBatch, "MPA gradient of an empty batch");
  check_labels(labels, N, C);
  const ClassMembers members = group_by_class(labels, C);
  const double a = cfg.alpha;
  Matrix grad(N, C);
  for (std::size_t i = 0; i < N; ++i) {
    const auto yi = static_cast<std::size_t>(labels[i]);
    for (std::size_t c = 0; c < C; ++c) {
      const double s = sims(i, c);
      if (c == yi) {
        double den = std::exp(-a * (cfg.delta - s));
        for (std::size_t j : members.positives[c]) den += std::exp(-a * (sims(j, c) - s));
        grad(i, c) = -a / (static_cast<double>(members.present) * den);
      } else {
        double den = std::exp(-a * (s + cfg.delta));
        for (std::size_t j = 0; j < N; ++j) {
          if (static_cast<std::size_t>(labels[j]) != c) den += std::exp(a * (sims(j, c) - s));
        }
        grad(i, c) = a / (static_cast<double>(C) * den);
      }
    }
  }
  return grad;
}

// Equals sqrt(2 - 2 p.q) for unit vectors but without the cancellation, so
// coincident proxies give exactly zero.
static double proxy_distance(std::span<const double> p, std::span<const double> q) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d2 += (p[i] - q[i]) * (p[i] - q[i]);
  return std::sqrt(d2);
}

double center_regularizer(const ProxyBank& bank) {
  const std::size_t C = bank.num_classes(), K = bank.per_class();
  if (K < 2 || C == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < C; ++j) {
    for (std::size_t t = 0; t < K; ++t) {
      for (std::size_t s = t + 1; s < K; ++s) {
        sum += proxy_distance(bank.proxy(j, s), bank.proxy(j, t));
      }
    }
  }
  return sum / static_cast<double>(C * K * (K - 1));
}

Tensor3 center_regularizer_grad(const ProxyBank& bank) {
  const std::size_t C = bank.num_classes(), K = bank.per_class(), D = bank.dim();
  Tensor3 grad(C, K, D);
  if (K < 2 || C == 0) return grad;
  const double norm = static_cast<double>(C * K * (K - 1));
  for (std::size_t j = 0; j < C; ++j) {
    for (std::size_t t = 0; t < K; ++t) {
      for (std::size_t s = t + 1; s < K; ++s) {
        const double dist = proxy_distance(bank.proxy(j, s), bank.proxy(j, t));
        // Not differentiable at coincident proxies; use the zero subgradient.
        if (dist < 1e-12) continue;
        const double coef = 1.0 / (dist * norm);
        const auto ps = bank.proxy(j, s), pt = bank.proxy(j, t);
        auto gs = grad.fiber(j, s), gt = grad.fiber(j, t);
        for (std::size_t d = 0; d < D; ++d) {
          gs[d] += coef * (ps[d] - pt[d]);
          gt[d] += coef * (pt[d] - ps[d]);
        }
      }
    }
  }
  return grad;
}

double softtriple_loss(const EmbeddingBatch& batch, const ProxyBank& bank, const LossConfig& cfg) {
  const SimilarityMatrix sims = similarity_matrix(batch, bank, cfg);
  return softtriple_sim_loss(batch.labels, sims, cfg) + cfg.tau * center_regularizer(bank);
}

double mpa_loss(const EmbeddingBatch& batch, const ProxyBank& bank, const LossConfig& cfg) {
  const SimilarityMatrix sims = similarity_matrix(batch, bank, cfg);
  return mpa_sim_loss(batch.labels, sims, cfg) + cfg.tau * center_regularizer(bank);
}

double loss_value(const EmbeddingBatch& batch, const ProxyBank& bank, const LossConfig& cfg) {
  return cfg.kind == LossKind::SoftTriple ? softtriple_loss(batch, bank, cfg)
                                          : mpa_loss(batch, bank, cfg);
}

double loss_forward_raw(const Matrix& raw_embeddings, std::span<const int> labels,
                        const Tensor3& raw_proxies, const LossConfig& cfg,
                        const GradientHooks& hooks) {
  EmbeddingBatch batch{raw_embeddings, {labels.begin(), labels.end()}};
  normalized_rows(batch.vectors, "embedding");
  ProxyBank bank(raw_proxies);
  bank.normalize();
  const SimilarityMatrix sims = similarity_matrix(batch, bank, cfg);
  const double sim = cfg.kind == LossKind::SoftTriple ? softtriple_sim_loss(labels, sims, cfg)
                                                      : mpa_sim_loss(labels, sims, cfg);
  return hooks.sim_loss_scale * sim + cfg.tau * center_regularizer(bank);
}

LossGradients loss_backward(const Matrix& raw_embeddings, std::span<const int> labels,
                            const Tensor3& raw_proxies, const LossConfig& cfg,
                            const GradientHooks& hooks) {
  const std::size_t N = raw_embeddings.rows(), D = raw_embeddings.cols();
  const std::size_t C = raw_proxies.dim0(), K = raw_proxies.dim1();
  if (raw_proxies.dim2() != D) {
    fail(ErrorCode::ShapeMismatch, "embedding dim " + std::to_string(D) + " != proxy dim " +
                                       std::to_string(raw_proxies.dim2()));
  }
  if (N == 0) fail(ErrorCode::EmptyBatch, "loss of an empty batch");
  check_labels(labels, N, C);

  EmbeddingBatch batch{raw_embeddings, {labels.begin(), labels.end()}};
  const std::vector<double> emb_norms = normalized_rows(batch.vectors, "embedding");
  ProxyBank bank(raw_proxies);
  std::vector<double> proxy_norms(C * K);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < K; ++k) proxy_norms[c * K + k] = norm2(bank.proxy(c, k));
  }
  bank.normalize();

  const SimilarityMatrix sims = similarity_matrix(batch, bank, cfg);
  LossGradients out;
  out.regularizer = center_regularizer(bank);
  Matrix g_sim;
  double sim_loss = 0.0;
  if (cfg.kind == LossKind::SoftTriple) {
    sim_loss = softtriple_sim_loss(labels, sims, cfg);
    g_sim = softtriple_grad_wrt_similarity(sims, labels, cfg);
  } else {
    sim_loss = mpa_sim_loss(labels, sims, cfg);
    g_sim = mpa_grad_wrt_similarity(sims, labels, cfg, hooks);
  }
  out.loss_value = hooks.sim_loss_scale * sim_loss + cfg.tau * out.regularizer;

  out.d_embeddings = Matrix(N, D);
  out.d_proxies = Tensor3(C, K, D);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t c = 0; c < C; ++c) {
      const double g = hooks.sim_loss_scale * g_sim(i, c);
      if (g == 0.0) continue;
      const SimilarityJacobian jac =
          similarity_jacobians(batch.vectors.row(i), bank.class_proxies(c), cfg.gamma, cfg.mode);
      axpy(g, jac.d_x, out.d_embeddings.row(i));
      for (std::size_t k = 0; k < K; ++k) axpy(g, jac.d_w.row(k), out.d_proxies.fiber(c, k));
    }
  }
  if (cfg.tau != 0.0) {
    const Tensor3 reg = center_regularizer_grad(bank);
    axpy(cfg.tau, reg.flat(), out.d_proxies.flat());
  }

  for (std::size_t i = 0; i < N; ++i) {
    project_tangent(batch.vectors.row(i), emb_norms[i], out.d_embeddings.row(i));
  }
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < K; ++k) {
      project_tangent(bank.proxy(c, k), proxy_norms[c * K + k], out.d_proxies.fiber(c, k));
    }
  }
  return out;
}

}  // namespace pdml
