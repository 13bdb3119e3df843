#include "proxydml/proxydml.h"

#include <algorithm>
#include <exception>
#include <new>
#include <string>
#include <vector>

#include "proxydml/error.hpp"
#include "proxydml/experiment.hpp"
#include "proxydml/loss.hpp"
#include "proxydml/metrics.hpp"
#include "proxydml/synth.hpp"

struct pdml_dataset {
  pdml::LabeledDataset data;
};

struct pdml_report {
  std::string json;
  std::string text;
};

namespace {

thread_local std::string g_last_error;

pdml_status to_status(pdml::ErrorCode code) {
  using pdml::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument: return PDML_ERR_INVALID_ARGUMENT;
    case ErrorCode::InvalidConfig: return PDML_ERR_INVALID_CONFIG;
    case ErrorCode::ShapeMismatch: return PDML_ERR_SHAPE_MISMATCH;
    case ErrorCode::ZeroVector: return PDML_ERR_ZERO_VECTOR;
    case ErrorCode::EmptyBatch: return PDML_ERR_EMPTY_BATCH;
    case ErrorCode::InvalidK: return PDML_ERR_INVALID_K;
    case ErrorCode::NoPositives: return PDML_ERR_NO_POSITIVES;
    case ErrorCode::EmptyResultSet: return PDML_ERR_EMPTY_RESULT_SET;
    case ErrorCode::SpecInfeasible: return PDML_ERR_SPEC_INFEASIBLE;
    case ErrorCode::TooFewClasses: return PDML_ERR_TOO_FEW_CLASSES;
    case ErrorCode::ParseError: return PDML_ERR_PARSE;
    case ErrorCode::DimensionMismatch: return PDML_ERR_DIMENSION_MISMATCH;
    case ErrorCode::IoError: return PDML_ERR_IO;
    case ErrorCode::BatchTooSmall: return PDML_ERR_BATCH_TOO_SMALL;
    case ErrorCode::NonFiniteLoss: return PDML_ERR_NON_FINITE;
    case ErrorCode::EmptyGallery: return PDML_ERR_EMPTY_GALLERY;
  }
  return PDML_ERR_INTERNAL;
}

template <class Fn>
pdml_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    return fn();
  } catch (const pdml::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return PDML_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PDML_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown exception";
    return PDML_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) pdml::fail(pdml::ErrorCode::InvalidArgument, what);
}

pdml::LossConfig to_core(const pdml_loss_config* cfg, std::size_t proxies_per_class) {
  require(cfg != nullptr, "loss config is null");
  pdml::LossConfig out;
  out.gamma = cfg->gamma;
  out.lambda = cfg->lambda;
  out.delta = cfg->delta;
  out.alpha = cfg->alpha;
  out.tau = cfg->tau;
  out.proxies_per_class = proxies_per_class;
  switch (cfg->loss_kind) {
    case PDML_LOSS_SOFTTRIPLE: out.kind = pdml::LossKind::SoftTriple; break;
    case PDML_LOSS_MPA: out.kind = pdml::LossKind::MultiProxyAnchor; break;
    default: pdml::fail(pdml::ErrorCode::InvalidConfig, "unknown loss kind " + std::to_string(cfg->loss_kind));
  }
  switch (cfg->similarity_mode) {
    case PDML_SIM_SOFTMAX: out.mode = pdml::SimilarityMode::SoftmaxWeighted; break;
    case PDML_SIM_MAX: out.mode = pdml::SimilarityMode::Max; break;
    case PDML_SIM_MEAN: out.mode = pdml::SimilarityMode::Mean; break;
    default:
      pdml::fail(pdml::ErrorCode::InvalidConfig,
                 "unknown similarity mode " + std::to_string(cfg->similarity_mode));
  }
  out.validate();
  return out;
}

struct RawInputs {
  pdml::Matrix embeddings;
  std::vector<int> labels;
  pdml::Tensor3 proxies;
};

RawInputs copy_inputs(const double* embeddings, const int32_t* labels, std::size_t n,
                      std::size_t dim, const double* proxies, std::size_t classes,
                      std::size_t per_class) {
  require(n == 0 || (embeddings != nullptr && labels != nullptr), "embeddings or labels is null");
  require(proxies != nullptr, "proxies is null");
  require(dim > 0 && classes > 0 && per_class > 0, "dim, num_classes and proxies_per_class must be > 0");
  RawInputs in{pdml::Matrix(n, dim, std::vector<double>(embeddings, embeddings + n * dim)),
               std::vector<int>(labels, labels + n), pdml::Tensor3(classes, per_class, dim)};
  std::copy(proxies, proxies + classes * per_class * dim, in.proxies.flat().begin());
  return in;
}

pdml::RunOptions to_core(const pdml_run_options* opts) {
  pdml::RunOptions out;
  if (opts == nullptr) return out;
  if (opts->out_dir != nullptr) out.out_dir = opts->out_dir;
  out.jobs = std::max<std::size_t>(1, opts->jobs);
  out.write_files = opts->write_files != 0;
  return out;
}

pdml::ExperimentConfig load_config(const char* json, const pdml_run_options* opts) {
  require(json != nullptr, "config text is null");
  pdml::ExperimentConfig cfg = pdml::parse_experiment_config(json);
  if (opts != nullptr && opts->has_seed) {
    cfg.train.seed = opts->seed;
    if (cfg.synth) cfg.synth->seed = opts->seed;
  }
  return cfg;
}

pdml_status emit(const pdml::Outcome& outcome, pdml_report** out) {
  auto* report = new pdml_report{outcome.report.dump(2), outcome.summary};
  *out = report;
  if (!outcome.passed) {
    g_last_error = "check failed";
    return PDML_ERR_CHECK_FAILED;
  }
  return PDML_OK;
}

}  // namespace

extern "C" {

const char* pdml_version(void) { return PDML_VERSION_STRING; }

const char* pdml_status_string(pdml_status status) {
  switch (status) {
    case PDML_OK: return "ok";
    case PDML_ERR_INVALID_ARGUMENT: return "invalid argument";
    case PDML_ERR_INVALID_CONFIG: return "invalid config";
    case PDML_ERR_SHAPE_MISMATCH: return "shape mismatch";
    case PDML_ERR_ZERO_VECTOR: return "zero vector";
    case PDML_ERR_EMPTY_BATCH: return "empty batch";
    case PDML_ERR_INVALID_K: return "invalid k";
    case PDML_ERR_NO_POSITIVES: return "no positives";
    case PDML_ERR_EMPTY_RESULT_SET: return "empty result set";
    case PDML_ERR_SPEC_INFEASIBLE: return "spec infeasible";
    case PDML_ERR_TOO_FEW_CLASSES: return "too few classes";
    case PDML_ERR_PARSE: return "parse error";
    case PDML_ERR_DIMENSION_MISMATCH: return "dimension mismatch";
    case PDML_ERR_IO: return "i/o error";
    case PDML_ERR_BATCH_TOO_SMALL: return "batch too small";
    case PDML_ERR_NON_FINITE: return "non-finite loss";
    case PDML_ERR_EMPTY_GALLERY: return "empty gallery";
    case PDML_ERR_CHECK_FAILED: return "check failed";
    case PDML_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* pdml_last_error(void) { return g_last_error.c_str(); }

void pdml_loss_config_default(pdml_loss_config* cfg) {
  if (cfg == nullptr) return;
  const pdml::LossConfig d;
  *cfg = pdml_loss_config{d.gamma, d.lambda, d.delta, d.alpha, d.tau, PDML_LOSS_MPA, PDML_SIM_SOFTMAX};
}

pdml_status pdml_loss_forward(const pdml_loss_config* cfg, const double* embeddings,
                              const int32_t* labels, size_t n, size_t dim, const double* proxies,
                              size_t num_classes, size_t proxies_per_class, double* loss_out) {
  return guarded([&] {
    require(loss_out != nullptr, "loss_out is null");
    const pdml::LossConfig core = to_core(cfg, proxies_per_class);
    const RawInputs in = copy_inputs(embeddings, labels, n, dim, proxies, num_classes, proxies_per_class);
    *loss_out = pdml::loss_forward_raw(in.embeddings, in.labels, in.proxies, core);
    return PDML_OK;
  });
}

pdml_status pdml_loss_backward(const pdml_loss_config* cfg, const double* embeddings,
                               const int32_t* labels, size_t n, size_t dim, const double* proxies,
                               size_t num_classes, size_t proxies_per_class, double* loss_out,
                               double* d_embeddings, double* d_proxies) {
  return guarded([&] {
    require(d_embeddings != nullptr && d_proxies != nullptr, "gradient buffer is null");
    const pdml::LossConfig core = to_core(cfg, proxies_per_class);
    const RawInputs in = copy_inputs(embeddings, labels, n, dim, proxies, num_classes, proxies_per_class);
    const pdml::LossGradients g = pdml::loss_backward(in.embeddings, in.labels, in.proxies, core);
    if (loss_out != nullptr) *loss_out = g.loss_value;
    std::copy(g.d_embeddings.flat().begin(), g.d_embeddings.flat().end(), d_embeddings);
    std::copy(g.d_proxies.flat().begin(), g.d_proxies.flat().end(), d_proxies);
    return PDML_OK;
  });
}

pdml_status pdml_center_regularizer(const double* proxies, size_t num_classes,
                                    size_t proxies_per_class, size_t dim, double* out) {
  return guarded([&] {
    require(proxies != nullptr && out != nullptr, "null pointer argument");
    require(num_classes > 0 && proxies_per_class > 0 && dim > 0, "sizes must be > 0");
    pdml::ProxyBank bank(pdml::Tensor3(num_classes, proxies_per_class, dim));
    std::copy(proxies, proxies + num_classes * proxies_per_class * dim, bank.proxies.flat().begin());
    if (!bank.is_unit_norm(1e-6)) pdml::fail(pdml::ErrorCode::InvalidArgument, "proxies must be unit-norm");
    *out = pdml::center_regularizer(bank);
    return PDML_OK;
  });
}

pdml_status pdml_metric_value(int metric, const uint8_t* relevance, size_t length,
                              size_t total_positives, size_t k, double* out) {
  return guarded([&] {
    require(out != nullptr, "out is null");
    require(length == 0 || relevance != nullptr, "relevance is null");
    pdml::RankedResult r{std::vector<std::uint8_t>(relevance, relevance + length), total_positives};
    for (auto& b : r.relevance) b = b != 0;
    switch (metric) {
      case PDML_METRIC_RECALL: *out = pdml::recall_at_k(r, k); break;
      case PDML_METRIC_PRECISION: *out = pdml::precision_at_k(r, k); break;
      case PDML_METRIC_MAP_AT_K: *out = pdml::map_at_k(r, k); break;
      case PDML_METRIC_MAP_AT_R: *out = pdml::map_at_r(r); break;
      case PDML_METRIC_NDCG: *out = pdml::ndcg_at_k(r, k); break;
      default: pdml::fail(pdml::ErrorCode::InvalidArgument, "unknown metric " + std::to_string(metric));
    }
    return PDML_OK;
  });
}

void pdml_synth_spec_default(pdml_synth_spec* spec) {
  if (spec == nullptr) return;
  const pdml::SynthSpec d;
  *spec = pdml_synth_spec{d.num_classes,   d.centers_per_class, d.samples_per_center, d.dim,
                          d.center_spread, d.cluster_noise,     d.seed,               0};
}

pdml_status pdml_dataset_generate(const pdml_synth_spec* spec, pdml_dataset** out) {
  return guarded([&] {
    require(spec != nullptr && out != nullptr, "null pointer argument");
    pdml::SynthSpec s;
    s.num_classes = spec->num_classes;
    s.centers_per_class = spec->centers_per_class;
    s.samples_per_center = spec->samples_per_center;
    s.dim = spec->dim;
    s.center_spread = spec->center_spread;
    s.cluster_noise = spec->cluster_noise;
    s.seed = spec->seed;
    s.layout = spec->antipodal ? pdml::CenterLayout::Antipodal : pdml::CenterLayout::Random;
    *out = new pdml_dataset{pdml::generate(s)};
    return PDML_OK;
  });
}

pdml_status pdml_dataset_load(const char* path, pdml_dataset** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "null pointer argument");
    *out = new pdml_dataset{pdml::load_embeddings(path)};
    return PDML_OK;
  });
}

pdml_status pdml_dataset_save(const pdml_dataset* ds, const char* path) {
  return guarded([&] {
    require(ds != nullptr && path != nullptr, "null pointer argument");
    pdml::save_embeddings(ds->data, path);
    return PDML_OK;
  });
}

size_t pdml_dataset_rows(const pdml_dataset* ds) { return ds == nullptr ? 0 : ds->data.size(); }

size_t pdml_dataset_dim(const pdml_dataset* ds) { return ds == nullptr ? 0 : ds->data.dim(); }

pdml_status pdml_dataset_copy(const pdml_dataset* ds, double* features, int32_t* labels) {
  return guarded([&] {
    require(ds != nullptr, "dataset is null");
    if (features != nullptr) {
      std::copy(ds->data.features.flat().begin(), ds->data.features.flat().end(), features);
    }
    if (labels != nullptr) std::copy(ds->data.labels.begin(), ds->data.labels.end(), labels);
    return PDML_OK;
  });
}

void pdml_dataset_free(pdml_dataset* ds) { delete ds; }

void pdml_run_options_default(pdml_run_options* opts) {
  if (opts == nullptr) return;
  *opts = pdml_run_options{nullptr, 1, 0, 0, 1};
}

pdml_status pdml_run(const char* config_json, const pdml_run_options* opts, pdml_report** out) {
  return guarded([&] {
    require(out != nullptr, "out is null");
    *out = nullptr;
    const pdml::ExperimentConfig cfg = load_config(config_json, opts);
    return emit(pdml::run_experiment(cfg, to_core(opts)), out);
  });
}

pdml_status pdml_ksweep(const char* config_json, const size_t* k_values, size_t num_k_values,
                        size_t num_seeds, const pdml_run_options* opts, pdml_report** out) {
  return guarded([&] {
    require(out != nullptr, "out is null");
    require(num_k_values == 0 || k_values != nullptr, "k_values is null");
    *out = nullptr;
    pdml::ExperimentConfig cfg = load_config(config_json, opts);
    if (num_seeds > 0) cfg.num_seeds = num_seeds;
    std::vector<std::size_t> ks(k_values, k_values + num_k_values);
    return emit(pdml::run_ksweep(cfg, std::move(ks), to_core(opts)), out);
  });
}

void pdml_gradcheck_options_default(pdml_gradcheck_options* opts) {
  if (opts == nullptr) return;
  const pdml::GradcheckOptions d;
  *opts = pdml_gradcheck_options{d.seed, d.dim, d.step, d.tolerance, 0};
}

pdml_status pdml_gradcheck(const pdml_gradcheck_options* opts, pdml_report** out) {
  return guarded([&] {
    require(out != nullptr, "out is null");
    *out = nullptr;
    pdml::GradcheckOptions core;
    if (opts != nullptr) {
      core.seed = opts->seed;
      core.dim = opts->dim;
      core.step = opts->step;
      core.tolerance = opts->tolerance;
      core.corrupt_mpa_positive = opts->corrupt_mpa_positive != 0;
    }
    return emit(pdml::run_gradcheck(core), out);
  });
}

pdml_status pdml_table1(pdml_report** out) {
  return guarded([&] {
    require(out != nullptr, "out is null");
    *out = nullptr;
    return emit(pdml::run_table1(), out);
  });
}

pdml_status pdml_eval(const char* relevance_path, const char* embeddings_path, const size_t* ks,
                      size_t num_ks, const pdml_run_options* opts, pdml_report** out) {
  return guarded([&] {
    require(out != nullptr, "out is null");
    *out = nullptr;
    if ((relevance_path == nullptr) == (embeddings_path == nullptr)) {
      pdml::fail(pdml::ErrorCode::InvalidConfig, "give exactly one of a relevance file or an embeddings file");
    }
    std::vector<std::size_t> k_list{1, 2, 4, 8};
    if (num_ks > 0) {
      require(ks != nullptr, "ks is null");
      k_list.assign(ks, ks + num_ks);
    }
    const pdml::RunOptions core = to_core(opts);
    return emit(relevance_path != nullptr ? pdml::evaluate_relevance_source(relevance_path, k_list, core)
                                          : pdml::evaluate_embeddings_source(embeddings_path, k_list, core),
                out);
  });
}

const char* pdml_report_json(const pdml_report* report) {
  return report == nullptr ? "" : report->json.c_str();
}

const char* pdml_report_text(const pdml_report* report) {
  return report == nullptr ? "" : report->text.c_str();
}

void pdml_report_free(pdml_report* report) { delete report; }

}  // extern "C"
