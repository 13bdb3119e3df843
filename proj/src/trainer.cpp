#include "proxydml/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "proxydml/error.hpp"
#include "proxydml/rng.hpp"

namespace pdml {

namespace {

double l2(std::span<const double> v) { return norm2(v); }

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
  }
  return out;
}

void normalize_fibers(Tensor3& t) {
  for (std::size_t c = 0; c < t.dim0(); ++c) {
    for (std::size_t k = 0; k < t.dim1(); ++k) {
      auto w = t.fiber(c, k);
      const double n = norm2(w);
      if (!(n >= 1e-12)) {
        fail(ErrorCode::ZeroVector, "proxy (" + std::to_string(c) + ", " + std::to_string(k) +
                                        ") collapsed to zero");
      }
      for (double& v : w) v /= n;
    }
  }
}

}  // namespace

const char* to_string(OptimizerKind kind) noexcept {
  return kind == OptimizerKind::Sgd ? "sgd" : "adamw";
}

Optimizer::Optimizer(std::size_t num_params, const OptimizerSettings& settings)
    : s_(settings), m_(num_params, 0.0), v_(num_params, 0.0) {}

void Optimizer::step(std::span<double> params, std::span<const double> grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    fail(ErrorCode::ShapeMismatch, "optimizer state does not match the parameter count");
  }
  if (s_.kind == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i] -= lr * (grads[i] + s_.weight_decay * params[i]);
    }
    return;
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = s_.beta1 * m_[i] + (1.0 - s_.beta1) * grads[i];
    v_[i] = s_.beta2 * v_[i] + (1.0 - s_.beta2) * grads[i] * grads[i];
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] -= lr * s_.weight_decay * params[i];
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + s_.epsilon);
  }
}

void TrainConfig::validate() const {
  loss.validate();
  auto require = [](bool ok, const char* field, const char* rule) {
    if (!ok) fail(ErrorCode::InvalidConfig, std::string("train.") + field + " " + rule);
  };
  require(epochs >= 1, "epochs", "must be >= 1");
  require(batch_size >= 2, "batch_size", "must be >= 2");
  require(std::isfinite(lr_model) && lr_model >= 0.0, "lr_model", "must be >= 0");
  require(std::isfinite(lr_proxies) && lr_proxies >= 0.0, "lr_proxies", "must be >= 0");
  require(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0, "lr_decay_factor", "must lie in (0, 1]");
  require(lr_decay_every >= 1, "lr_decay_every", "must be >= 1");
  require(std::isfinite(optimizer.weight_decay) && optimizer.weight_decay >= 0.0, "optimizer.weight_decay",
          "must be >= 0");
  require(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0, "optimizer.beta1", "must lie in [0, 1)");
  require(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0, "optimizer.beta2", "must lie in [0, 1)");
  require(optimizer.epsilon > 0.0, "optimizer.epsilon", "must be > 0");
  require(model.embedding_dim >= 1, "model.embedding_dim", "must be >= 1");
}

double lr_at_epoch(double base, double decay_factor, std::size_t decay_every, std::size_t epoch) {
  if (epoch == 0 || decay_every == 0) fail(ErrorCode::InvalidArgument, "epochs are 1-based");
  const auto steps = static_cast<double>((epoch - 1) / decay_every);
  return base * std::pow(decay_factor, steps);
}

std::vector<std::vector<std::size_t>> sample_batches(std::size_t n, std::size_t batch_size,
                                                     std::uint64_t seed, std::size_t epoch) {
  if (batch_size < 2) {
    fail(ErrorCode::BatchTooSmall, "batch_size must be >= 2, got " + std::to_string(batch_size));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(mix_seed(seed, 20), epoch));
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<long>(start),
                         order.begin() + static_cast<long>(end));
  }
  return batches;
}

std::string TrainLog::to_csv() const {
  std::ostringstream out;
  out << kCsvHeader << '\n' << std::setprecision(17);
  for (const EpochRecord& r : epochs) {
    out << r.epoch << ',' << r.loss_mean << ',' << r.regularizer << ',' << r.grad_norm_model << ','
        << r.grad_norm_proxies << ',' << r.lr_model << ',' << r.lr_proxies << '\n';
  }
  return out.str();
}

TrainState initial_state(const LabeledDataset& ds, const TrainConfig& cfg) {
  TrainState state;
  state.class_ids = ds.classes();
  if (state.class_ids.size() < 2) {
    fail(ErrorCode::TooFewClasses, "training needs >= 2 classes, have " +
                                       std::to_string(state.class_ids.size()));
  }
  state.model = EmbeddingModel::create(ds.dim(), cfg.model, mix_seed(cfg.seed, 10));
  state.proxies = ProxyBank::random(state.class_ids.size(), cfg.loss.proxies_per_class,
                                    cfg.model.embedding_dim, mix_seed(cfg.seed, 11))
                      .proxies;
  return state;
}

StepGradients compute_step_gradients(const EmbeddingModel& model, const Tensor3& proxies,
                                     const Matrix& features, std::span<const int> labels,
                                     const LossConfig& loss) {
  const Matrix raw = model.forward_raw(features);
  LossGradients g = loss_backward(raw, labels, proxies, loss);
  StepGradients out;
  out.loss = g.loss_value;
  out.regularizer = g.regularizer;
  out.d_model = model.backward(features, g.d_embeddings);
  out.d_proxies = std::move(g.d_proxies);
  return out;
}

TrainResult train(const LabeledDataset& train_set, const TrainConfig& cfg) {
  cfg.validate();
  TrainResult result;
  result.state = initial_state(train_set, cfg);
  TrainState& st = result.state;

  std::map<int, int> to_index;
  for (std::size_t i = 0; i < st.class_ids.size(); ++i) to_index[st.class_ids[i]] = static_cast<int>(i);
  std::vector<int> mapped(train_set.size());
  for (std::size_t i = 0; i < train_set.size(); ++i) mapped[i] = to_index.at(train_set.labels[i]);

  Optimizer model_opt(st.model.parameters().size(), cfg.optimizer);
  Optimizer proxy_opt(st.proxies.flat().size(), cfg.optimizer);

  std::vector<int> batch_labels;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr_model = lr_at_epoch(cfg.lr_model, cfg.lr_decay_factor, cfg.lr_decay_every, epoch);
    rec.lr_proxies = lr_at_epoch(cfg.lr_proxies, cfg.lr_decay_factor, cfg.lr_decay_every, epoch);

    const auto batches = sample_batches(train_set.size(), cfg.batch_size, cfg.seed, epoch);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Matrix features = gather_rows(train_set.features, batches[b]);
      batch_labels.clear();
      for (std::size_t idx : batches[b]) batch_labels.push_back(mapped[idx]);

      StepGradients g = compute_step_gradients(st.model, st.proxies, features, batch_labels, cfg.loss);
      if (!std::isfinite(g.loss)) {
        fail(ErrorCode::NonFiniteLoss, "non-finite loss at epoch " + std::to_string(epoch) +
                                           ", batch " + std::to_string(b));
      }
      rec.loss_mean += g.loss;
      rec.regularizer += g.regularizer;
      rec.grad_norm_model += l2(g.d_model);
      rec.grad_norm_proxies += l2(g.d_proxies.flat());

      model_opt.step(st.model.parameters(), g.d_model, rec.lr_model);
      proxy_opt.step(st.proxies.flat(), g.d_proxies.flat(), rec.lr_proxies);
      // With a zero step the proxies have not moved and stay bit-identical.
      if (cfg.renormalize_proxies && rec.lr_proxies > 0.0) normalize_fibers(st.proxies);
    }
    const auto nb = static_cast<double>(batches.size());
    rec.loss_mean /= nb;
    rec.regularizer /= nb;
    rec.grad_norm_model /= nb;
    rec.grad_norm_proxies /= nb;
    result.log.epochs.push_back(rec);
  }
  return result;
}

void save_checkpoint(const std::string& path, const TrainState& state,
                     const std::string& config_hash) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write checkpoint: " + path);
  const EmbeddingModel& m = state.model;
  out << "proxydml-checkpoint 1\n";
  out << "config_hash " << config_hash << '\n';
  out << "model " << to_string(m.arch()) << ' ' << m.input_dim() << ' ' << m.hidden_dim() << ' '
      << m.output_dim() << '\n';
  out << std::setprecision(17);
  out << "params " << m.parameters().size() << '\n';
  for (double v : m.parameters()) out << v << '\n';
  const Tensor3& p = state.proxies;
  out << "proxies " << p.dim0() << ' ' << p.dim1() << ' ' << p.dim2() << '\n';
  for (double v : p.flat()) out << v << '\n';
  out << "classes " << state.class_ids.size();
  for (int c : state.class_ids) out << ' ' << c;
  out << '\n';
  if (!out) fail(ErrorCode::IoError, "write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open checkpoint: " + path);
  auto expect = [&](const char* word) {
    std::string tok;
    if (!(in >> tok) || tok != word) {
      fail(ErrorCode::ParseError, "checkpoint " + path + ": expected '" + word + "'");
    }
  };
  expect("proxydml-checkpoint");
  int version = 0;
  if (!(in >> version) || version != 1) fail(ErrorCode::ParseError, "unsupported checkpoint version");

  Checkpoint ck;
  expect("config_hash");
  in >> ck.config_hash;
  expect("model");
  std::string arch;
  std::size_t din = 0, dh = 0, dout = 0, count = 0;
  in >> arch >> din >> dh >> dout;
  expect("params");
  in >> count;
  std::vector<double> params(count);
  for (double& v : params) in >> v;
  if (!in) fail(ErrorCode::ParseError, "checkpoint " + path + ": truncated model parameters");
  if (arch != "affine" && arch != "one_hidden") {
    fail(ErrorCode::ParseError, "checkpoint " + path + ": unknown model arch " + arch);
  }
  ck.state.model = EmbeddingModel::from_parameters(
      arch == "affine" ? ModelArch::Affine : ModelArch::OneHidden, din, dh, dout, std::move(params));

  expect("proxies");
  std::size_t c = 0, k = 0, d = 0;
  in >> c >> k >> d;
  ck.state.proxies = Tensor3(c, k, d);
  for (double& v : ck.state.proxies.flat()) in >> v;
  expect("classes");
  in >> count;
  ck.state.class_ids.resize(count);
  for (int& id : ck.state.class_ids) in >> id;
  if (!in) fail(ErrorCode::ParseError, "checkpoint " + path + ": truncated");
  return ck;
}

}  // namespace pdml
