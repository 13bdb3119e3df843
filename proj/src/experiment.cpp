#include "proxydml/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "proxydml/error.hpp"

#ifndef PDML_VERSION_STRING
#define PDML_VERSION_STRING "dev"
#endif

namespace pdml {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config reading: every accessor knows its dotted path so errors cite it.

class Fields {
 public:
  Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) bad(path_.empty() ? "config" : path_, "must be an object");
  }
  ~Fields() = default;

  template <class T>
  void read(const char* key, T& target) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    assign(*it, full(key), target);
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string full(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void reject_unknown() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) bad(full(it.key().c_str()), "is not a recognized field");
    }
  }

  [[noreturn]] static void bad(const std::string& field, const std::string& why) {
    fail(ErrorCode::InvalidConfig, field + " " + why);
  }

 private:
  static void assign(const json& v, const std::string& where, double& out) {
    if (!v.is_number()) bad(where, "must be a number");
    out = v.get<double>();
  }
  static void assign(const json& v, const std::string& where, std::uint64_t& out) {
    if (!v.is_number_unsigned()) bad(where, "must be a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  static void assign(const json& v, const std::string& where, bool& out) {
    if (!v.is_boolean()) bad(where, "must be true or false");
    out = v.get<bool>();
  }
  static void assign(const json& v, const std::string& where, std::string& out) {
    if (!v.is_string()) bad(where, "must be a string");
    out = v.get<std::string>();
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class Enum>
Enum parse_enum(const std::string& where, const std::string& value,
                std::initializer_list<std::pair<const char*, Enum>> options) {
  std::string allowed;
  for (const auto& [name, e] : options) {
    if (value == name) return e;
    allowed += allowed.empty() ? name : std::string("|") + name;
  }
  Fields::bad(where, "must be one of " + allowed + ", got '" + value + "'");
}

template <class Enum>
void read_enum(Fields& f, const char* key, Enum& target,
               std::initializer_list<std::pair<const char*, Enum>> options) {
  std::string text;
  f.read(key, text);
  if (!text.empty()) target = parse_enum(f.full(key), text, options);
}

void parse_loss(const json& node, const std::string& path, LossConfig& loss) {
  Fields f(node, path);
  f.read("gamma", loss.gamma);
  f.read("lambda", loss.lambda);
  f.read("delta", loss.delta);
  f.read("alpha", loss.alpha);
  f.read("tau", loss.tau);
  f.read("proxies_per_class", loss.proxies_per_class);
  read_enum(f, "kind", loss.kind,
            {{"softtriple", LossKind::SoftTriple}, {"mpa", LossKind::MultiProxyAnchor}});
  read_enum(f, "mode", loss.mode,
            {{"softmax", SimilarityMode::SoftmaxWeighted},
             {"max", SimilarityMode::Max},
             {"mean", SimilarityMode::Mean}});
  f.reject_unknown();
  try {
    loss.validate();
  } catch (const Error& e) {
    fail(e.code(), path + "." + e.what());
  }
}

void parse_train(const json& node, TrainConfig& t) {
  Fields f(node, "train");
  if (const json* loss = f.child("loss")) parse_loss(*loss, "train.loss", t.loss);
  if (const json* model = f.child("model")) {
    Fields m(*model, "train.model");
    m.read("embedding_dim", t.model.embedding_dim);
    m.read("hidden_dim", t.model.hidden_dim);
    read_enum(m, "arch", t.model.arch,
              {{"affine", ModelArch::Affine}, {"one_hidden", ModelArch::OneHidden}});
    read_enum(m, "init", t.model.init,
              {{"auto", ModelInit::Auto}, {"identity", ModelInit::Identity}, {"random", ModelInit::Random}});
    m.reject_unknown();
  }
  if (const json* opt = f.child("optimizer")) {
    Fields o(*opt, "train.optimizer");
    read_enum(o, "kind", t.optimizer.kind, {{"adamw", OptimizerKind::AdamW}, {"sgd", OptimizerKind::Sgd}});
    o.read("beta1", t.optimizer.beta1);
    o.read("beta2", t.optimizer.beta2);
    o.read("epsilon", t.optimizer.epsilon);
    o.read("weight_decay", t.optimizer.weight_decay);
    o.reject_unknown();
  }
  f.read("epochs", t.epochs);
  f.read("batch_size", t.batch_size);
  f.read("lr_model", t.lr_model);
  f.read("lr_proxies", t.lr_proxies);
  f.read("lr_decay_factor", t.lr_decay_factor);
  f.read("lr_decay_every", t.lr_decay_every);
  f.read("renormalize_proxies", t.renormalize_proxies);
  f.read("seed", t.seed);
  f.reject_unknown();
}

void parse_synth(const json& node, SynthSpec& s) {
  Fields f(node, "synth");
  f.read("num_classes", s.num_classes);
  f.read("centers_per_class", s.centers_per_class);
  f.read("samples_per_center", s.samples_per_center);
  f.read("dim", s.dim);
  f.read("center_spread", s.center_spread);
  f.read("cluster_noise", s.cluster_noise);
  f.read("seed", s.seed);
  f.read("max_attempts", s.max_attempts);
  read_enum(f, "layout", s.layout, {{"random", CenterLayout::Random}, {"antipodal", CenterLayout::Antipodal}});
  f.reject_unknown();
}

// ---------------------------------------------------------------------------
// Small statistics helpers over per-seed values.

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

json metrics_json(const MetricReport& r) {
  json out = json::object();
  for (const auto& name : r.names) out[name] = r.means.at(name);
  return out;
}

std::string timestamp_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string resolve_out_dir(const ExperimentConfig* cfg, const RunOptions& options) {
  if (!options.out_dir.empty()) return options.out_dir;
  return cfg ? cfg->output_dir : std::string("out");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::IoError, "write failed: " + path.string());
}

// Re-raise with the pipeline stage prepended, keeping the error code.
template <class Fn>
auto staged(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("stage ") + stage + ": " + e.what());
  }
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads; on_done(i, result) is
// called in index order on the calling thread.
template <class T>
void ordered_parallel(std::size_t n, std::size_t jobs, const std::function<T(std::size_t)>& fn,
                      const std::function<void(std::size_t, T&)>& on_done) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      T r = fn(i);
      on_done(i, r);
    }
    return;
  }
  std::vector<std::promise<T>> promises(n);
  std::vector<std::future<T>> futures;
  for (auto& p : promises) futures.push_back(p.get_future());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        if (abort) {
          promises[i].set_exception(std::make_exception_ptr(Error(ErrorCode::InvalidArgument, "aborted")));
          continue;
        }
        try {
          promises[i].set_value(fn(i));
        } catch (...) {
          abort = true;
          promises[i].set_exception(std::current_exception());
        }
      }
    });
  }
  std::exception_ptr first_error;
  for (std::size_t i = 0; i < n && !first_error; ++i) {
    try {
      T r = futures[i].get();
      on_done(i, r);
    } catch (...) {
      first_error = std::current_exception();
      abort = true;
    }
  }
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (synth && !embeddings_path.empty()) {
    Fields::bad("synth", "and embeddings_path are mutually exclusive");
  }
  if (!synth && embeddings_path.empty()) Fields::bad("synth", "or embeddings_path is required");
  if (synth) synth->validate();
  if (!embeddings_path.empty() && !std::filesystem::exists(embeddings_path)) {
    Fields::bad("embeddings_path", "does not exist: " + embeddings_path);
  }
  train.validate();
  if (ks.empty()) Fields::bad("ks", "must not be empty");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] < 1) Fields::bad("ks", "entries must be >= 1");
    if (i > 0 && ks[i] <= ks[i - 1]) Fields::bad("ks", "must be strictly ascending");
  }
  if (!(split.train_fraction > 0.0 && split.train_fraction < 1.0)) {
    Fields::bad("split.train_fraction", "must lie in (0, 1)");
  }
  if (num_seeds && *num_seeds < 1) Fields::bad("num_seeds", "must be >= 1");
  if (run_label.empty()) Fields::bad("run_label", "must not be empty");
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  Fields f(root, "");
  if (const json* s = f.child("synth")) {
    cfg.synth = SynthSpec{};
    parse_synth(*s, *cfg.synth);
  }
  f.read("embeddings_path", cfg.embeddings_path);
  if (!cfg.synth && cfg.embeddings_path.empty()) cfg.synth = SynthSpec{};
  if (const json* s = f.child("split")) {
    Fields sp(*s, "split");
    sp.read("class_disjoint", cfg.split.class_disjoint);
    sp.read("train_fraction", cfg.split.train_fraction);
    sp.reject_unknown();
  }
  if (const json* t = f.child("train")) parse_train(*t, cfg.train);
  if (const json* ks = f.child("ks")) {
    if (!ks->is_array()) Fields::bad("ks", "must be an array of integers");
    cfg.ks.clear();
    for (const auto& k : *ks) {
      if (!k.is_number_unsigned() || k.get<std::size_t>() < 1) Fields::bad("ks", "entries must be integers >= 1");
      cfg.ks.push_back(k.get<std::size_t>());
    }
  }
  f.read("output_dir", cfg.output_dir);
  f.read("run_label", cfg.run_label);
  if (f.child("num_seeds")) {
    std::size_t n = 0;
    f.read("num_seeds", n);
    cfg.num_seeds = n;
  }
  f.read("vary_data_seed", cfg.vary_data_seed);
  f.reject_unknown();
  cfg.validate();
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  if (cfg.synth) {
    const SynthSpec& s = *cfg.synth;
    j["synth"] = {{"num_classes", s.num_classes},
                  {"centers_per_class", s.centers_per_class},
                  {"samples_per_center", s.samples_per_center},
                  {"dim", s.dim},
                  {"center_spread", s.center_spread},
                  {"cluster_noise", s.cluster_noise},
                  {"seed", s.seed},
                  {"max_attempts", s.max_attempts},
                  {"layout", s.layout == CenterLayout::Antipodal ? "antipodal" : "random"}};
  } else {
    j["embeddings_path"] = cfg.embeddings_path;
  }
  j["split"] = {{"class_disjoint", cfg.split.class_disjoint},
                {"train_fraction", cfg.split.train_fraction}};
  const TrainConfig& t = cfg.train;
  j["train"] = {
      {"loss",
       {{"gamma", t.loss.gamma},
        {"lambda", t.loss.lambda},
        {"delta", t.loss.delta},
        {"alpha", t.loss.alpha},
        {"tau", t.loss.tau},
        {"proxies_per_class", t.loss.proxies_per_class},
        {"kind", to_string(t.loss.kind)},
        {"mode", to_string(t.loss.mode)}}},
      {"model",
       {{"embedding_dim", t.model.embedding_dim},
        {"arch", to_string(t.model.arch)},
        {"hidden_dim", t.model.hidden_dim},
        {"init", to_string(t.model.init)}}},
      {"optimizer",
       {{"kind", to_string(t.optimizer.kind)},
        {"beta1", t.optimizer.beta1},
        {"beta2", t.optimizer.beta2},
        {"epsilon", t.optimizer.epsilon},
        {"weight_decay", t.optimizer.weight_decay}}},
      {"epochs", t.epochs},
      {"batch_size", t.batch_size},
      {"lr_model", t.lr_model},
      {"lr_proxies", t.lr_proxies},
      {"lr_decay_factor", t.lr_decay_factor},
      {"lr_decay_every", t.lr_decay_every},
      {"renormalize_proxies", t.renormalize_proxies},
      {"seed", t.seed}};
  j["ks"] = cfg.ks;
  j["output_dir"] = cfg.output_dir;
  j["run_label"] = cfg.run_label;
  if (cfg.num_seeds) j["num_seeds"] = *cfg.num_seeds;
  j["vary_data_seed"] = cfg.vary_data_seed;
  return j;
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string canonical = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

SeedRun run_single(const ExperimentConfig& cfg, std::size_t repeat) {
  SeedRun run;
  run.seed = cfg.train.seed + repeat;
  const std::uint64_t base_data_seed = cfg.synth ? cfg.synth->seed : 0;
  run.data_seed = base_data_seed + (cfg.vary_data_seed ? repeat : 0);

  LabeledDataset ds = staged("data", [&] {
    if (cfg.synth) {
      SynthSpec spec = *cfg.synth;
      spec.seed = run.data_seed;
      return generate(spec);
    }
    return load_embeddings(cfg.embeddings_path);
  });
  auto [train_set, test_set] = staged("split", [&] {
    return train_test_split(ds, cfg.split.class_disjoint, run.data_seed, cfg.split.train_fraction);
  });

  TrainConfig tcfg = cfg.train;
  tcfg.seed = run.seed;
  run.training = staged("train", [&] { return train(train_set, tcfg); });

  run.metrics = staged("evaluate", [&] {
    const EmbeddingBatch test_emb = embed(run.training.state.model, test_set);
    const auto ranked = knn_rank(test_emb, test_emb, test_emb.size(), /*exclude_self=*/true);
    return evaluate_all(ranked, cfg.ks);
  });
  return run;
}

Outcome run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  cfg.validate();
  const std::size_t repeats = cfg.num_seeds.value_or(1);
  std::vector<SeedRun> runs(repeats);
  ordered_parallel<SeedRun>(
      repeats, options.jobs, [&](std::size_t i) { return run_single(cfg, i); },
      [&](std::size_t i, SeedRun& r) { runs[i] = std::move(r); });

  const std::vector<std::string>& names = runs.front().metrics.names;
  json report;
  report["schema"] = "proxydml.report.v1";
  report["command"] = "run";
  report["version"] = PDML_VERSION_STRING;
  report["run_label"] = cfg.run_label;
  report["config_hash"] = config_hash(cfg);
  report["config"] = to_json(cfg);
  json mean = json::object(), median = json::object(), stddev = json::object();
  for (const auto& name : names) {
    std::vector<double> values;
    for (const auto& r : runs) values.push_back(r.metrics.at(name));
    mean[name] = mean_of(values);
    median[name] = median_of(values);
    stddev[name] = stddev_of(values);
  }
  report["metrics"] = mean;
  report["metrics_median"] = median;
  report["metrics_std"] = stddev;
  json per_seed = json::array();
  for (const auto& r : runs) {
    const auto& last = r.training.log.epochs.back();
    per_seed.push_back({{"seed", r.seed},
                        {"data_seed", r.data_seed},
                        {"metrics", metrics_json(r.metrics)},
                        {"num_queries", r.metrics.num_queries},
                        {"epochs", r.training.log.epochs.size()},
                        {"final_train_loss", last.loss_mean}});
  }
  report["per_seed"] = per_seed;
  if (options.include_timestamp) report["timestamp"] = timestamp_now();

  if (options.write_files) {
    const std::filesystem::path dir = resolve_out_dir(&cfg, options);
    staged("write", [&] {
      write_text(dir / "report.json", report.dump(2) + "\n");
      std::ostringstream csv;
      csv << "seed," << TrainLog::kCsvHeader << '\n';
      for (const auto& r : runs) {
        const std::string body = r.training.log.to_csv();
        std::istringstream lines(body);
        std::string line;
        std::getline(lines, line);  // header
        while (std::getline(lines, line)) csv << r.seed << ',' << line << '\n';
      }
      write_text(dir / "train_log.csv", csv.str());
      for (const auto& r : runs) {
        save_checkpoint((dir / ("checkpoint_seed" + std::to_string(r.seed) + ".txt")).string(),
                        r.training.state, report["config_hash"].get<std::string>());
      }
      return 0;
    });
  }

  std::ostringstream text;
  text << "run '" << cfg.run_label << "' config " << report["config_hash"].get<std::string>() << ", "
       << repeats << " seed(s)\n";
  for (const auto& name : names) {
    text << "  " << std::left << std::setw(10) << name << format_fixed(mean[name].get<double>(), 2);
    if (repeats > 1) text << "  (sd " << format_fixed(stddev[name].get<double>(), 2) << ")";
    text << '\n';
  }
  return {report, text.str(), true};
}

Outcome run_ksweep(const ExperimentConfig& cfg, std::vector<std::size_t> k_values,
                   const RunOptions& options) {
  cfg.validate();
  if (k_values.empty()) Fields::bad("k_values", "must not be empty");
  std::vector<std::string> warnings;
  std::vector<std::size_t> unique;
  for (std::size_t k : k_values) {
    if (k < 1) Fields::bad("k_values", "entries must be >= 1");
    if (std::find(unique.begin(), unique.end(), k) != unique.end()) {
      warnings.push_back("duplicate K=" + std::to_string(k) + " ignored");
      continue;
    }
    unique.push_back(k);
  }
  const std::size_t repeats = cfg.num_seeds.value_or(3);
  const std::filesystem::path dir = resolve_out_dir(&cfg, options);

  struct Cell {
    std::size_t k = 0;
    std::uint64_t seed = 0;
    MetricReport metrics;
  };
  std::vector<Cell> cells;
  std::vector<std::string> names;
  std::ofstream csv;
  if (options.write_files) {
    std::filesystem::create_directories(dir);
    csv.open(dir / "ksweep.csv");
    if (!csv) fail(ErrorCode::IoError, "cannot write " + (dir / "ksweep.csv").string());
    csv << std::setprecision(17);
  }

  ordered_parallel<Cell>(
      unique.size() * repeats, options.jobs,
      [&](std::size_t idx) {
        ExperimentConfig sub = cfg;
        sub.train.loss.proxies_per_class = unique[idx / repeats];
        SeedRun r = run_single(sub, idx % repeats);
        return Cell{unique[idx / repeats], r.seed, std::move(r.metrics)};
      },
      [&](std::size_t, Cell& c) {
        if (names.empty()) {
          names = c.metrics.names;
          if (csv.is_open()) {
            csv << "K,seed";
            for (const auto& n : names) csv << ',' << n;
            csv << '\n';
          }
        }
        if (csv.is_open()) {
          csv << c.k << ',' << c.seed;
          for (const auto& n : names) csv << ',' << c.metrics.at(n);
          csv << '\n' << std::flush;
        }
        cells.push_back(std::move(c));
      });

  json summary = json::array();
  std::ostringstream text;
  for (const auto& w : warnings) text << "warning: " << w << '\n';
  text << "K sweep, " << repeats << " seed(s) per K\n";
  const std::string lead = "R@" + std::to_string(cfg.ks.front());
  text << "  K    median " << std::left << std::setw(8) << lead << "sd " << std::setw(6) << lead;
  for (std::size_t k : cfg.ks) text << "   median nDCG@" << k;
  text << '\n';
  for (std::size_t k : unique) {
    json entry;
    entry["K"] = k;
    json med = json::object(), sd = json::object(), mean = json::object();
    for (const auto& n : names) {
      std::vector<double> v;
      for (const auto& c : cells) {
        if (c.k == k) v.push_back(c.metrics.at(n));
      }
      med[n] = median_of(v);
      sd[n] = stddev_of(v);
      mean[n] = mean_of(v);
    }
    entry["median"] = med;
    entry["std"] = sd;
    entry["mean"] = mean;
    summary.push_back(entry);
    text << "  " << std::left << std::setw(5) << k << std::setw(13)
         << format_fixed(med[lead].get<double>(), 2) << std::setw(9)
         << format_fixed(sd[lead].get<double>(), 2);
    for (std::size_t kk : cfg.ks) {
      text << "   " << std::setw(14) << format_fixed(med["nDCG@" + std::to_string(kk)].get<double>(), 2);
    }
    text << '\n';
  }

  json report;
  report["schema"] = "proxydml.ksweep.v1";
  report["command"] = "ksweep";
  report["version"] = PDML_VERSION_STRING;
  report["run_label"] = cfg.run_label;
  report["config_hash"] = config_hash(cfg);
  report["config"] = to_json(cfg);
  report["k_values"] = unique;
  report["seeds_per_k"] = repeats;
  report["warnings"] = warnings;
  report["summary"] = summary;
  if (options.include_timestamp) report["timestamp"] = timestamp_now();
  if (options.write_files) write_text(dir / "ksweep_summary.json", report.dump(2) + "\n");
  return {report, text.str(), true};
}

namespace {

Outcome eval_report(const std::vector<RankedResult>& ranked, const std::vector<std::size_t>& ks,
                    const std::string& source, const char* kind, const RunOptions& options) {
  const MetricReport m = evaluate_all(ranked, ks);
  json report;
  report["schema"] = "proxydml.eval.v1";
  report["command"] = "eval";
  report["version"] = PDML_VERSION_STRING;
  report["source"] = source;
  report["source_kind"] = kind;
  report["ks"] = ks;
  report["num_queries"] = m.num_queries;
  report["metrics"] = metrics_json(m);
  if (options.include_timestamp) report["timestamp"] = timestamp_now();
  if (options.write_files) {
    write_text(std::filesystem::path(resolve_out_dir(nullptr, options)) / "report.json",
               report.dump(2) + "\n");
  }
  std::ostringstream text;
  text << "eval " << source << " (" << m.num_queries << " queries)\n";
  for (const auto& n : m.names) {
    text << "  " << std::left << std::setw(10) << n << format_fixed(m.means.at(n), 2) << '\n';
  }
  return {report, text.str(), true};
}

void check_eval_ks(const std::vector<std::size_t>& ks) {
  if (ks.empty()) Fields::bad("ks", "must not be empty");
  for (std::size_t k : ks) {
    if (k < 1) Fields::bad("ks", "entries must be >= 1");
  }
}

}  // namespace

Outcome evaluate_relevance_source(const std::string& path, const std::vector<std::size_t>& ks,
                                  const RunOptions& options) {
  check_eval_ks(ks);
  return eval_report(load_relevance_file(path), ks, path, "relevance", options);
}

Outcome evaluate_embeddings_source(const std::string& path, const std::vector<std::size_t>& ks,
                                   const RunOptions& options) {
  check_eval_ks(ks);
  LabeledDataset ds = load_embeddings(path);
  EmbeddingBatch batch{ds.features, ds.labels};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto normalized = l2_normalize(batch.vectors.row(i));
    std::copy(normalized.begin(), normalized.end(), batch.vectors.row(i).begin());
  }
  const auto ranked = knn_rank(batch, batch, batch.size(), /*exclude_self=*/true);
  return eval_report(ranked, ks, path, "embeddings", options);
}

const std::array<ReferenceRow, 5>& metric_reference_table() {
  static const std::array<ReferenceRow, 5> rows{{
      {{1, 0, 0, 0, 0, 0, 0, 0, 0, 0}, {100, 10, 25.0, 10.0, 39.0}},
      {{1, 0, 0, 0, 0, 0, 0, 0, 0, 1}, {100, 20, 25.0, 12.0, 50.3}},
      {{1, 0, 1, 0, 0, 0, 0, 0, 0, 0}, {100, 20, 41.7, 16.7, 58.6}},
      {{1, 0, 1, 0, 0, 0, 1, 0, 0, 1}, {100, 40, 41.7, 25.0, 82.9}},
      {{1, 1, 1, 1, 0, 0, 0, 0, 0, 0}, {100, 40, 100.0, 40.0, 100.0}},
  }};
  return rows;
}

Outcome run_table1(double tolerance) {
  static const char* kColumns[5] = {"Recall@10", "Precision@10", "MAP@R", "MAP@10", "nDCG@10"};
  std::ostringstream text, diffs;
  text << std::left << std::setw(24) << "ranking";
  for (const char* c : kColumns) text << std::right << std::setw(14) << c;
  text << '\n';

  json rows = json::array();
  bool ok = true;
  for (const ReferenceRow& ref : metric_reference_table()) {
    RankedResult r{{ref.relevance.begin(), ref.relevance.end()}, kReferencePositives};
    const std::array<double, 5> got{recall_at_k(r, kReferenceK), precision_at_k(r, kReferenceK),
                                    map_at_r(r), map_at_k(r, kReferenceK), ndcg_at_k(r, kReferenceK)};
    std::string label = "[";
    for (std::size_t i = 0; i < ref.relevance.size(); ++i) {
      label += (i ? "," : "") + std::to_string(ref.relevance[i]);
    }
    label += "]";
    text << std::left << std::setw(24) << label;
    json cells = json::object();
    for (std::size_t c = 0; c < 5; ++c) {
      text << std::right << std::setw(14) << format_fixed(got[c], 1);
      const double diff = got[c] - ref.published[c];
      cells[kColumns[c]] = {{"computed", got[c]}, {"published", ref.published[c]}, {"diff", diff}};
      if (std::abs(diff) > tolerance) {
        ok = false;
        diffs << "  " << label << " " << kColumns[c] << ": computed " << format_fixed(got[c], 3)
              << ", published " << format_fixed(ref.published[c], 1) << ", diff "
              << format_fixed(diff, 3) << '\n';
      }
    }
    text << '\n';
    rows.push_back({{"relevance", label}, {"cells", cells}});
  }
  text << (ok ? "all 25 cells within " : "cells outside ") << format_fixed(tolerance, 2) << '\n';
  if (!ok) text << diffs.str();

  json report;
  report["schema"] = "proxydml.table1.v1";
  report["command"] = "table1";
  report["total_positives"] = kReferencePositives;
  report["k"] = kReferenceK;
  report["tolerance"] = tolerance;
  report["rows"] = rows;
  report["passed"] = ok;
  return {report, text.str(), ok};
}

}  // namespace pdml
