#include "proxydml/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "proxydml/error.hpp"

namespace pdml {

namespace {

void check_k(std::size_t k) {
  if (k < 1) fail(ErrorCode::InvalidK, "k must be >= 1");
}

bool hit(const RankedResult& r, std::size_t pos) {
  return pos < r.relevance.size() && r.relevance[pos] != 0;
}

// Average-precision numerator over the first `cutoff` ranks.
double precision_sum(const RankedResult& r, std::size_t cutoff) {
  double sum = 0.0;
  std::size_t hits = 0;
  const std::size_t end = std::min(cutoff, r.relevance.size());
  for (std::size_t i = 0; i < end; ++i) {
    if (r.relevance[i] != 0) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum;
}

}  // namespace

double dcg(const RankedResult& result, std::size_t k) {
  check_k(k);
  double sum = 0.0;
  const std::size_t end = std::min(k, result.relevance.size());
  for (std::size_t i = 0; i < end; ++i) {
    const double gain = std::exp2(static_cast<double>(result.relevance[i])) - 1.0;
    sum += gain / std::log2(static_cast<double>(i + 2));
  }
  return sum;
}

double ideal_dcg(std::size_t total_positives, std::size_t k) {
  check_k(k);
  double sum = 0.0;
  const std::size_t end = std::min(total_positives, k);
  for (std::size_t i = 0; i < end; ++i) sum += 1.0 / std::log2(static_cast<double>(i + 2));
  return sum;
}

double ndcg_at_k(const RankedResult& result, std::size_t k) {
  const double best = ideal_dcg(result.total_positives, k);
  if (best == 0.0) return 0.0;
  return 100.0 * dcg(result, k) / best;
}

double recall_at_k(const RankedResult& result, std::size_t k) {
  check_k(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (hit(result, i)) return 100.0;
  }
  return 0.0;
}

double precision_at_k(const RankedResult& result, std::size_t k) {
  check_k(k);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) hits += hit(result, i) ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(k);
}

double map_at_k(const RankedResult& result, std::size_t k) {
  check_k(k);
  return 100.0 * precision_sum(result, k) / static_cast<double>(k);
}

double map_at_r(const RankedResult& result) {
  const std::size_t r = result.total_positives;
  if (r == 0) fail(ErrorCode::NoPositives, "MAP@R needs at least one positive");
  return 100.0 * precision_sum(result, r) / static_cast<double>(r);
}

double MetricReport::at(const std::string& name) const {
  auto it = means.find(name);
  if (it == means.end()) fail(ErrorCode::InvalidArgument, "no metric named " + name);
  return it->second;
}

MetricReport evaluate_all(std::span<const RankedResult> results, std::span<const std::size_t> ks,
                          const EvalOptions& options) {
  if (results.empty()) fail(ErrorCode::EmptyResultSet, "no queries to evaluate");
  for (std::size_t k : ks) check_k(k);

  MetricReport report;
  for (std::size_t k : ks) {
    const std::string s = std::to_string(k);
    for (const char* prefix : {"R@", "P@", "MAP@", "nDCG@"}) report.names.push_back(prefix + s);
  }
  report.names.push_back("MAP@R");
  for (const auto& n : report.names) report.per_query[n];

  for (const RankedResult& r : results) {
    if (r.total_positives == 0 && options.exclude_no_positive) continue;
    std::size_t col = 0;
    auto push = [&](double v) { report.per_query[report.names[col++]].push_back(v); };
    for (std::size_t k : ks) {
      const bool none = r.total_positives == 0;
      push(none ? 0.0 : recall_at_k(r, k));
      push(none ? 0.0 : precision_at_k(r, k));
      push(none ? 0.0 : map_at_k(r, k));
      push(none ? 0.0 : ndcg_at_k(r, k));
    }
    push(r.total_positives == 0 ? 0.0 : map_at_r(r));
    ++report.num_queries;
  }
  if (report.num_queries == 0) {
    fail(ErrorCode::EmptyResultSet, "every query was excluded for having no positives");
  }
  for (const auto& n : report.names) {
    const auto& v = report.per_query[n];
    double sum = 0.0;
    for (double x : v) sum += x;
    report.means[n] = sum / static_cast<double>(v.size());
  }
  return report;
}

std::vector<RankedResult> parse_relevance_text(const std::string& text) {
  std::vector<RankedResult> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    long long r = -1;
    std::string bits;
    if (!(fields >> r) || r < 0 || !(fields >> bits)) {
      fail(ErrorCode::ParseError,
           "line " + std::to_string(line_no) + ": expected '<R> <relevance bits>'");
    }
    RankedResult result;
    result.total_positives = static_cast<std::size_t>(r);
    for (char ch : bits) {
      if (ch == '0' || ch == '1') {
        result.relevance.push_back(static_cast<std::uint8_t>(ch - '0'));
      } else if (ch != ',') {
        fail(ErrorCode::ParseError, "line " + std::to_string(line_no) +
                                        ": relevance must be 0/1, got '" + ch + "'");
      }
    }
    if (result.relevance.empty()) {
      fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": empty relevance list");
    }
    const auto hits = static_cast<std::size_t>(
        std::count(result.relevance.begin(), result.relevance.end(), std::uint8_t{1}));
    if (hits > result.total_positives) {
      fail(ErrorCode::ParseError, "line " + std::to_string(line_no) +
                                      ": more hits than total positives R");
    }
    out.push_back(std::move(result));
  }
  return out;
}

std::vector<RankedResult> load_relevance_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open relevance file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_relevance_text(buf.str());
}

}  // namespace pdml
