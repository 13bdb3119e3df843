// pdml: command-line front end over the proxydml C API.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "proxydml/proxydml.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string out_dir;
};

int exit_code_for(pdml_status st) {
  switch (st) {
    case PDML_OK: return kExitOk;
    case PDML_ERR_INVALID_CONFIG: return kExitConfig;
    default: return kExitFailure;
  }
}

bool read_file(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return true;
}

pdml_run_options make_options(const Common& c) {
  pdml_run_options opts;
  pdml_run_options_default(&opts);
  opts.out_dir = c.out_dir.empty() ? nullptr : c.out_dir.c_str();
  opts.jobs = c.jobs;
  if (c.seed) {
    opts.has_seed = 1;
    opts.seed = *c.seed;
  }
  return opts;
}

// Prints the report (if any) and the diagnostic, and maps the status to an
// exit code. The report is taken by reference so it is read after the call
// that fills it.
int finish(const char* command, pdml_status st, pdml_report*& slot) {
  pdml_report* report = slot;
  slot = nullptr;
  if (report != nullptr) {
    std::cout << pdml_report_text(report);
    std::cout.flush();
    pdml_report_free(report);
  }
  if (st != PDML_OK && st != PDML_ERR_CHECK_FAILED) {
    std::cerr << "pdml " << command << ": " << pdml_status_string(st) << ": " << pdml_last_error() << '\n';
  } else if (st == PDML_ERR_CHECK_FAILED) {
    std::cerr << "pdml " << command << ": check failed\n";
  }
  return exit_code_for(st);
}

int load_config(const Common& c, std::string& text) {
  if (c.config_path.empty()) {
    text = "{}";
    return kExitOk;
  }
  if (!read_file(c.config_path, text)) {
    std::cerr << "pdml: cannot read config file: " << c.config_path << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

void add_common(CLI::App* sub, Common& c, bool with_config) {
  if (with_config) sub->add_option("--config", c.config_path, "JSON experiment config");
  sub->add_option("--seed", c.seed, "Override the training and data seeds");
  sub->add_option("--jobs", c.jobs, "Parallel sub-runs")->check(CLI::PositiveNumber);
  sub->add_option("--out", c.out_dir, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-proxy metric learning experiments"};
  app.set_version_flag("--version", std::string(pdml_version()));
  app.require_subcommand(1);

  Common run_opts;
  auto* run = app.add_subcommand("run", "Train and evaluate one configuration");
  add_common(run, run_opts, true);

  Common grad_opts;
  std::size_t grad_dim = 0;
  double grad_tol = 0.0;
  std::string inject;
  auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  grad->add_option("--seed", grad_opts.seed, "Instance seed");
  grad->add_option("--dim", grad_dim, "Embedding dimension of the test instances");
  grad->add_option("--tolerance", grad_tol, "Maximum relative error");
  grad->add_option("--inject-fault", inject, "Corrupt a gradient branch (test hook)")
      ->check(CLI::IsMember({"mpa-positive"}));

  auto* table = app.add_subcommand("table1", "Reproduce the reference metric table");

  Common sweep_opts;
  std::vector<std::size_t> k_values;
  std::size_t sweep_seeds = 0;
  auto* sweep = app.add_subcommand("ksweep", "Sweep the number of proxies per class");
  add_common(sweep, sweep_opts, true);
  sweep->add_option("--k-values", k_values, "Proxy counts, comma separated")
      ->delimiter(',')
      ->required();
  sweep->add_option("--seeds", sweep_seeds, "Repeats per K (default 3)");

  Common eval_opts;
  std::string relevance_path;
  std::string embeddings_path;
  std::vector<std::size_t> ks;
  auto* eval = app.add_subcommand("eval", "Evaluate a relevance file or an embedding file");
  add_common(eval, eval_opts, false);
  eval->add_option("--relevance", relevance_path, "Relevance lists, one 'R bits' line per query");
  eval->add_option("--embeddings", embeddings_path, "Labeled embeddings CSV");
  eval->add_option("--ks", ks, "Metric cutoffs, comma separated")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  pdml_report* report = nullptr;

  if (*run) {
    std::string text;
    if (int rc = load_config(run_opts, text); rc != kExitOk) return rc;
    const pdml_run_options opts = make_options(run_opts);
    return finish("run", pdml_run(text.c_str(), &opts, &report), report);
  }

  if (*grad) {
    pdml_gradcheck_options opts;
    pdml_gradcheck_options_default(&opts);
    if (grad_opts.seed) opts.seed = *grad_opts.seed;
    if (grad_dim > 0) opts.dim = grad_dim;
    if (grad_tol > 0.0) opts.tolerance = grad_tol;
    opts.corrupt_mpa_positive = inject == "mpa-positive";
    return finish("gradcheck", pdml_gradcheck(&opts, &report), report);
  }

  if (*table) return finish("table1", pdml_table1(&report), report);

  if (*sweep) {
    std::string text;
    if (int rc = load_config(sweep_opts, text); rc != kExitOk) return rc;
    const pdml_run_options opts = make_options(sweep_opts);
    return finish("ksweep",
                  pdml_ksweep(text.c_str(), k_values.data(), k_values.size(), sweep_seeds, &opts, &report),
                  report);
  }

  if (*eval) {
    if (relevance_path.empty() == embeddings_path.empty()) {
      std::cerr << "pdml eval: give exactly one of --relevance or --embeddings\n";
      return kExitConfig;
    }
    const pdml_run_options opts = make_options(eval_opts);
    const pdml_status st = pdml_eval(relevance_path.empty() ? nullptr : relevance_path.c_str(),
                                     embeddings_path.empty() ? nullptr : embeddings_path.c_str(),
                                     ks.data(), ks.size(), &opts, &report);
    return finish("eval", st, report);
  }
  return kExitConfig;
}
