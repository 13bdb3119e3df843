#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

#include "proxydml/error.hpp"
#include "proxydml/experiment.hpp"
#include "proxydml/rng.hpp"

namespace pdml {

namespace {

constexpr double kRelativeFloor = 1e-5;
constexpr double kFormGapTolerance = 1e-10;
constexpr std::size_t kMaxListedFailures = 25;
// Max-mode instances need a clear winner among each class's proxies, or the
// stencil straddles the kink where the argmax switches.
constexpr double kMinArgmaxGap = 1e-2;
constexpr std::size_t kMaxRedraws = 1000;

struct Instance {
  Matrix embeddings;
  Tensor3 proxies;
  std::vector<int> labels;
};

Instance make_instance(std::uint64_t seed, std::size_t n, std::size_t c, std::size_t k, std::size_t d) {
  Rng rng(seed);
  Instance inst{Matrix(n, d), Tensor3(c, k, d), std::vector<int>(n)};
  for (double& v : inst.embeddings.flat()) v = rng.normal();
  for (double& v : inst.proxies.flat()) v = rng.normal();
  for (int& y : inst.labels) y = static_cast<int>(rng.uniform_index(c));
  return inst;
}

SimilarityMatrix normalized_sims(const Instance& inst, const LossConfig& cfg) {
  EmbeddingBatch batch{inst.embeddings, inst.labels};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto u = l2_normalize(batch.vectors.row(i));
    std::copy(u.begin(), u.end(), batch.vectors.row(i).begin());
  }
  ProxyBank bank(inst.proxies);
  bank.normalize();
  return similarity_matrix(batch, bank, cfg);
}

// Smallest gap between the best and second-best proxy score over all
// (sample, class) pairs; infinite when K = 1.
double min_argmax_gap(const Instance& inst) {
  double gap = std::numeric_limits<double>::infinity();
  const std::size_t k = inst.proxies.dim1();
  if (k < 2) return gap;
  ProxyBank bank(inst.proxies);
  bank.normalize();
  for (std::size_t i = 0; i < inst.embeddings.rows(); ++i) {
    const auto x = l2_normalize(inst.embeddings.row(i));
    for (std::size_t c = 0; c < inst.proxies.dim0(); ++c) {
      std::vector<double> z(k);
      for (std::size_t j = 0; j < k; ++j) z[j] = dot(x, bank.proxy(c, j));
      std::partial_sort(z.begin(), z.begin() + 2, z.end(), std::greater<>());
      gap = std::min(gap, z[0] - z[1]);
    }
  }
  return gap;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

// Fourth-order central difference; error O(h^4) plus roundoff O(eps / h).
template <class Fn>
double derivative(Fn&& f, double& x, double h) {
  const double x0 = x;
  x = x0 + 2 * h;
  const double p2 = f();
  x = x0 + h;
  const double p1 = f();
  x = x0 - h;
  const double m1 = f();
  x = x0 - 2 * h;
  const double m2 = f();
  x = x0;
  return (-p2 + 8 * p1 - 8 * m1 + m2) / (12 * h);
}

struct Tally {
  double max_rel = 0.0;
  std::size_t instances = 0;
};

}  // namespace

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kRelativeFloor});
  return std::abs(analytic - numeric) / scale;
}

Outcome run_gradcheck(const GradcheckOptions& options) {
  if (!(options.step > 0.0)) fail(ErrorCode::InvalidConfig, "gradcheck step must be > 0");
  if (options.dim < 1) fail(ErrorCode::InvalidConfig, "gradcheck dim must be >= 1");
  options.loss.validate();

  const LossKind kinds[] = {LossKind::SoftTriple, LossKind::MultiProxyAnchor};
  const SimilarityMode modes[] = {SimilarityMode::SoftmaxWeighted, SimilarityMode::Max,
                                  SimilarityMode::Mean};
  Tally tallies[2][3];
  std::vector<std::string> failures;
  std::size_t failure_count = 0;
  double form_gap = 0.0;
  bool sign_ok = true;
  std::size_t instance_index = 0;
  std::size_t redraws = 0;
  const double h = options.step;
  GradientHooks hooks;
  hooks.corrupt_mpa_positive = options.corrupt_mpa_positive;

  auto record = [&](const std::string& line) {
    ++failure_count;
    if (failures.size() < kMaxListedFailures) failures.push_back(line);
  };

  for (std::size_t n : options.batch_sizes) {
    for (std::size_t c : options.class_counts) {
      for (std::size_t k : options.proxy_counts) {
        if (n == 0 || c == 0 || k == 0) fail(ErrorCode::InvalidConfig, "gradcheck sizes must be >= 1");
        for (std::size_t ki = 0; ki < 2; ++ki) {
          for (std::size_t mi = 0; mi < 3; ++mi) {
            LossConfig cfg = options.loss;
            cfg.kind = kinds[ki];
            cfg.mode = modes[mi];
            cfg.proxies_per_class = k;
            std::uint64_t seed = mix_seed(options.seed, instance_index++);
            Instance inst = make_instance(seed, n, c, k, options.dim);
            for (std::size_t attempt = 1; cfg.mode == SimilarityMode::Max && min_argmax_gap(inst) < kMinArgmaxGap;
                 ++attempt) {
              if (attempt > kMaxRedraws) fail(ErrorCode::SpecInfeasible, "no max-mode instance away from ties");
              seed = mix_seed(seed, attempt);
              inst = make_instance(seed, n, c, k, options.dim);
              ++redraws;
            }
            const bool mpa = cfg.kind == LossKind::MultiProxyAnchor;
            std::ostringstream tag_stream;
            tag_stream << to_string(cfg.kind) << "/" << to_string(cfg.mode) << " N=" << n << " C=" << c
                       << " K=" << k << " instance " << instance_index - 1;
            const std::string tag = tag_stream.str();
            Tally& tally = tallies[ki][mi];
            ++tally.instances;

            // Loss gradient with respect to the similarity matrix.
            const SimilarityMatrix sims = normalized_sims(inst, cfg);
            const Matrix g_sim = mpa ? mpa_grad_wrt_similarity(sims, inst.labels, cfg, hooks)
                                     : softtriple_grad_wrt_similarity(sims, inst.labels, cfg);
            auto sim_loss = [&](const SimilarityMatrix& s) {
              return mpa ? mpa_sim_loss(inst.labels, s, cfg) : softtriple_sim_loss(inst.labels, s, cfg);
            };
            SimilarityMatrix probe = sims;
            for (std::size_t i = 0; i < n; ++i) {
              for (std::size_t cc = 0; cc < c; ++cc) {
                const double numeric = derivative([&] { return sim_loss(probe); }, probe.values(i, cc), h);
                const double rel = relative_error(g_sim(i, cc), numeric);
                tally.max_rel = std::max(tally.max_rel, rel);
                if (rel >= options.tolerance) {
                  const bool positive = static_cast<std::size_t>(inst.labels[i]) == cc;
                  record(tag + ": dL/dS[" + std::to_string(i) + "][" + std::to_string(cc) + "] (" +
                         (mpa ? "MPA " : "SoftTriple ") + (positive ? "positive" : "negative") +
                         " branch) analytic " + fmt(g_sim(i, cc)) + " numeric " + fmt(numeric) +
                         " rel " + fmt(rel));
                }
              }
            }

            // Sign structure of the similarity gradient.
            for (std::size_t i = 0; i < n; ++i) {
              const auto yi = static_cast<std::size_t>(inst.labels[i]);
              for (std::size_t cc = 0; cc < c; ++cc) {
                const double g = g_sim(i, cc);
                const bool good = cc == yi ? g <= 0.0 : g >= 0.0;
                if (!good) {
                  sign_ok = false;
                  record(tag + ": sign violation at dL/dS[" + std::to_string(i) + "][" +
                         std::to_string(cc) + "] = " + fmt(g));
                }
              }
            }

            if (mpa) {
              const Matrix alt = mpa_grad_wrt_similarity_relative(sims, inst.labels, cfg);
              const Matrix ref = mpa_grad_wrt_similarity(sims, inst.labels, cfg);
              for (std::size_t idx = 0; idx < alt.flat().size(); ++idx) {
                form_gap = std::max(form_gap, std::abs(alt.flat()[idx] - ref.flat()[idx]));
              }
            }

            // Full gradient with respect to the unnormalized parameters.
            const LossGradients grads = loss_backward(inst.embeddings, inst.labels, inst.proxies, cfg, hooks);
            Matrix emb = inst.embeddings;
            for (std::size_t i = 0; i < n; ++i) {
              for (std::size_t d = 0; d < options.dim; ++d) {
                const double numeric = derivative(
                    [&] { return loss_forward_raw(emb, inst.labels, inst.proxies, cfg); }, emb(i, d), h);
                const double rel = relative_error(grads.d_embeddings(i, d), numeric);
                tally.max_rel = std::max(tally.max_rel, rel);
                if (rel >= options.tolerance) {
                  record(tag + ": d_embeddings[" + std::to_string(i) + "][" + std::to_string(d) +
                         "] analytic " + fmt(grads.d_embeddings(i, d)) + " numeric " + fmt(numeric) +
                         " rel " + fmt(rel));
                }
              }
            }
            Tensor3 prox = inst.proxies;
            for (std::size_t cc = 0; cc < c; ++cc) {
              for (std::size_t kk = 0; kk < k; ++kk) {
                for (std::size_t d = 0; d < options.dim; ++d) {
                  const double numeric = derivative(
                      [&] { return loss_forward_raw(inst.embeddings, inst.labels, prox, cfg); },
                      prox(cc, kk, d), h);
                  const double rel = relative_error(grads.d_proxies(cc, kk, d), numeric);
                  tally.max_rel = std::max(tally.max_rel, rel);
                  if (rel >= options.tolerance) {
                    record(tag + ": d_proxies[" + std::to_string(cc) + "][" + std::to_string(kk) + "][" +
                           std::to_string(d) + "] analytic " + fmt(grads.d_proxies(cc, kk, d)) +
                           " numeric " + fmt(numeric) + " rel " + fmt(rel));
                  }
                }
              }
            }
          }
        }
      }
    }
  }

  bool passed = failure_count == 0 && sign_ok && form_gap <= kFormGapTolerance;
  std::ostringstream text;
  nlohmann::json entries = nlohmann::json::array();
  text << "gradient check: " << instance_index << " instances, step " << fmt(h) << ", tolerance "
       << fmt(options.tolerance) << "\n";
  text << "  loss        mode      instances  max rel err\n";
  for (std::size_t ki = 0; ki < 2; ++ki) {
    for (std::size_t mi = 0; mi < 3; ++mi) {
      const Tally& t = tallies[ki][mi];
      text << "  " << std::left << std::setw(12) << to_string(kinds[ki]) << std::setw(10)
           << to_string(modes[mi]) << std::setw(11) << t.instances << fmt(t.max_rel)
           << (t.max_rel < options.tolerance ? "  ok" : "  FAIL") << '\n';
      entries.push_back({{"loss", to_string(kinds[ki])},
                         {"mode", to_string(modes[mi])},
                         {"instances", t.instances},
                         {"max_relative_error", t.max_rel}});
    }
  }
  text << "  MPA gradient forms max |difference|: " << fmt(form_gap)
       << (form_gap <= kFormGapTolerance ? "  ok" : "  FAIL") << '\n';
  text << "  max-mode instances redrawn away from ties: " << redraws << '\n';
  text << "  sign structure: " << (sign_ok ? "ok" : "FAIL") << '\n';
  if (failure_count > 0) {
    text << failure_count << " failing coordinate(s)";
    if (failure_count > failures.size()) text << " (first " << failures.size() << " listed)";
    text << ":\n";
    for (const auto& f : failures) text << "  " << f << '\n';
  }

  nlohmann::json report;
  report["schema"] = "proxydml.gradcheck.v1";
  report["command"] = "gradcheck";
  report["seed"] = options.seed;
  report["instances"] = instance_index;
  report["step"] = h;
  report["tolerance"] = options.tolerance;
  report["entries"] = entries;
  report["mpa_form_gap"] = form_gap;
  report["sign_structure_ok"] = sign_ok;
  report["max_mode_redraws"] = redraws;
  report["failure_count"] = failure_count;
  report["failures"] = failures;
  report["passed"] = passed;
  return {report, text.str(), passed};
}

}  // namespace pdml
