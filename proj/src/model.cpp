#include <cmath>

#include "proxydml/error.hpp"
#include "proxydml/rng.hpp"
#include "proxydml/trainer.hpp"

namespace pdml {

namespace {

// y = W x + b over rows; W is rows x cols stored at w.
void affine(const double* w, const double* b, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double s = b[r];
    const double* wr = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) s += wr[c] * x[c];
    y[r] = s;
  }
}

}  // namespace

const char* to_string(ModelArch arch) noexcept {
  return arch == ModelArch::Affine ? "affine" : "one_hidden";
}

const char* to_string(ModelInit init) noexcept {
  switch (init) {
    case ModelInit::Auto: return "auto";
    case ModelInit::Identity: return "identity";
    case ModelInit::Random: return "random";
  }
  return "?";
}

EmbeddingModel EmbeddingModel::create(std::size_t input_dim, const ModelConfig& cfg,
                                      std::uint64_t seed) {
  if (input_dim == 0 || cfg.embedding_dim == 0) {
    fail(ErrorCode::InvalidConfig, "model dimensions must be >= 1");
  }
  EmbeddingModel m;
  m.arch_ = cfg.arch;
  m.in_ = input_dim;
  m.out_ = cfg.embedding_dim;
  m.hidden_ = cfg.arch == ModelArch::OneHidden ? cfg.hidden_dim : 0;
  if (cfg.arch == ModelArch::OneHidden && m.hidden_ == 0) {
    fail(ErrorCode::InvalidConfig, "model.hidden_dim must be >= 1");
  }

  Rng rng(seed);
  auto gaussian = [&](double* w, std::size_t rows, std::size_t cols) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (std::size_t i = 0; i < rows * cols; ++i) w[i] = scale * rng.normal();
  };

  if (cfg.arch == ModelArch::Affine) {
    m.params_.assign(m.out_ * m.in_ + m.out_, 0.0);
    const bool square = m.out_ == m.in_;
    if (cfg.init == ModelInit::Identity && !square) {
      fail(ErrorCode::InvalidConfig, "model.init identity requires embedding_dim == input dim");
    }
    if (cfg.init == ModelInit::Identity || (cfg.init == ModelInit::Auto && square)) {
      for (std::size_t i = 0; i < m.out_; ++i) m.params_[i * m.in_ + i] = 1.0;
    } else {
      gaussian(m.params_.data(), m.out_, m.in_);
    }
  } else {
    if (cfg.init == ModelInit::Identity) {
      fail(ErrorCode::InvalidConfig, "model.init identity is only defined for the affine model");
    }
    const std::size_t n1 = m.hidden_ * m.in_ + m.hidden_;
    m.params_.assign(n1 + m.out_ * m.hidden_ + m.out_, 0.0);
    gaussian(m.params_.data(), m.hidden_, m.in_);
    gaussian(m.params_.data() + n1, m.out_, m.hidden_);
  }
  return m;
}

EmbeddingModel EmbeddingModel::from_parameters(ModelArch arch, std::size_t input_dim,
                                               std::size_t hidden_dim, std::size_t output_dim,
                                               std::vector<double> params) {
  EmbeddingModel m;
  m.arch_ = arch;
  m.in_ = input_dim;
  m.hidden_ = arch == ModelArch::OneHidden ? hidden_dim : 0;
  m.out_ = output_dim;
  const std::size_t expected =
      arch == ModelArch::Affine
          ? m.out_ * m.in_ + m.out_
          : m.hidden_ * m.in_ + m.hidden_ + m.out_ * m.hidden_ + m.out_;
  if (params.size() != expected) {
    fail(ErrorCode::ShapeMismatch, "expected " + std::to_string(expected) +
                                       " model parameters, got " + std::to_string(params.size()));
  }
  m.params_ = std::move(params);
  return m;
}

Matrix EmbeddingModel::forward_raw(const Matrix& features) const {
  if (features.cols() != in_) {
    fail(ErrorCode::ShapeMismatch, "model expects " + std::to_string(in_) +
                                       "-dim features, got " + std::to_string(features.cols()));
  }
  Matrix out(features.rows(), out_);
  const double* p = params_.data();
  if (arch_ == ModelArch::Affine) {
    for (std::size_t i = 0; i < features.rows(); ++i) {
      affine(p, p + out_ * in_, out_, in_, features.row(i), out.row(i));
    }
    return out;
  }
  const double* w2 = p + hidden_ * in_ + hidden_;
  std::vector<double> h(hidden_);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    affine(p, p + hidden_ * in_, hidden_, in_, features.row(i), h);
    for (double& v : h) v = std::tanh(v);
    affine(w2, w2 + out_ * hidden_, out_, hidden_, h, out.row(i));
  }
  return out;
}

std::vector<double> EmbeddingModel::backward(const Matrix& features, const Matrix& d_raw) const {
  if (features.rows() != d_raw.rows() || d_raw.cols() != out_ || features.cols() != in_) {
    fail(ErrorCode::ShapeMismatch, "backward shapes do not match the model");
  }
  std::vector<double> grad(params_.size(), 0.0);
  if (arch_ == ModelArch::Affine) {
    double* dw = grad.data();
    double* db = dw + out_ * in_;
    for (std::size_t i = 0; i < features.rows(); ++i) {
      const auto x = features.row(i);
      const auto g = d_raw.row(i);
      for (std::size_t r = 0; r < out_; ++r) {
        db[r] += g[r];
        for (std::size_t c = 0; c < in_; ++c) dw[r * in_ + c] += g[r] * x[c];
      }
    }
    return grad;
  }

  const std::size_t n1 = hidden_ * in_ + hidden_;
  const double* p = params_.data();
  const double* w2 = p + n1;
  double* dw1 = grad.data();
  double* db1 = dw1 + hidden_ * in_;
  double* dw2 = grad.data() + n1;
  double* db2 = dw2 + out_ * hidden_;
  std::vector<double> h(hidden_), dh(hidden_);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto x = features.row(i);
    const auto g = d_raw.row(i);
    affine(p, p + hidden_ * in_, hidden_, in_, x, h);
    for (double& v : h) v = std::tanh(v);
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t r = 0; r < out_; ++r) {
      db2[r] += g[r];
      for (std::size_t c = 0; c < hidden_; ++c) {
        dw2[r * hidden_ + c] += g[r] * h[c];
        dh[c] += g[r] * w2[r * hidden_ + c];
      }
    }
    for (std::size_t r = 0; r < hidden_; ++r) {
      const double dz = dh[r] * (1.0 - h[r] * h[r]);
      db1[r] += dz;
      for (std::size_t c = 0; c < in_; ++c) dw1[r * in_ + c] += dz * x[c];
    }
  }
  return grad;
}

EmbeddingBatch embed(const EmbeddingModel& model, const LabeledDataset& ds) {
  EmbeddingBatch batch{model.forward_raw(ds.features), ds.labels};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto row = batch.vectors.row(i);
    const double n = norm2(row);
    if (!(n >= 1e-12)) fail(ErrorCode::ZeroVector, "model output row " + std::to_string(i) + " is zero");
    for (double& v : row) v /= n;
  }
  return batch;
}

}  // namespace pdml
