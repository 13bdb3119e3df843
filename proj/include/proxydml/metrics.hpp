#pragma once

// Ranking metrics over binary-relevance result lists. Every "@k" metric and
// MAP@R is reported on a 0..100 scale; dcg/ideal_dcg are raw gains.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace pdml {

/// Position 0 is the nearest neighbour. total_positives counts every
/// positive for the query in the gallery, ranked or not.
struct RankedResult {
  std::vector<std::uint8_t> relevance;
  std::size_t total_positives = 0;
};

double dcg(const RankedResult& result, std::size_t k);
double ideal_dcg(std::size_t total_positives, std::size_t k);

double ndcg_at_k(const RankedResult& result, std::size_t k);
double recall_at_k(const RankedResult& result, std::size_t k);
double precision_at_k(const RankedResult& result, std::size_t k);
/// Sum of precision at each hit rank <= k, divided by k.
double map_at_k(const RankedResult& result, std::size_t k);
/// map_at_k with the cutoff and denominator set to total_positives.
double map_at_r(const RankedResult& result);

struct EvalOptions {
  /// Drop queries with no positives instead of scoring them as 0.
  bool exclude_no_positive = false;
};

struct MetricReport {
  std::vector<std::string> names;  // stable output order
  std::map<std::string, double> means;
  std::map<std::string, std::vector<double>> per_query;
  std::size_t num_queries = 0;

  double at(const std::string& name) const;
};

/// Metrics for each k: R@k, P@k, MAP@k, nDCG@k; then MAP@R.
MetricReport evaluate_all(std::span<const RankedResult> results, std::span<const std::size_t> ks,
                          const EvalOptions& options = {});

/// Parse "R relevance-string" lines, e.g. "4 1010000000". Blank lines and
/// lines starting with '#' are skipped.
std::vector<RankedResult> parse_relevance_text(const std::string& text);
std::vector<RankedResult> load_relevance_file(const std::string& path);

}  // namespace pdml
