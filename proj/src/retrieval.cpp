#include <algorithm>
#include <numeric>

#include "proxydml/error.hpp"
#include "proxydml/trainer.hpp"

namespace pdml {

std::vector<RankedResult> knn_rank(const EmbeddingBatch& queries, const EmbeddingBatch& gallery,
                                   std::size_t max_k, bool exclude_self) {
  if (gallery.size() == 0) fail(ErrorCode::EmptyGallery, "gallery is empty");
  if (queries.dim() != gallery.dim()) {
    fail(ErrorCode::ShapeMismatch, "query and gallery dimensions differ");
  }
  if (exclude_self && queries.size() != gallery.size()) {
    fail(ErrorCode::ShapeMismatch, "exclude_self requires queries and gallery to be the same set");
  }

  std::vector<RankedResult> out(queries.size());
  std::vector<std::size_t> order;
  std::vector<double> sims(gallery.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto x = queries.vectors.row(q);
    order.clear();
    std::size_t positives = 0;
    for (std::size_t g = 0; g < gallery.size(); ++g) {
      if (exclude_self && g == q) continue;
      sims[g] = dot(x, gallery.vectors.row(g));
      order.push_back(g);
      positives += gallery.labels[g] == queries.labels[q] ? 1 : 0;
    }
    const std::size_t keep = std::min(max_k, order.size());
    auto before = [&](std::size_t a, std::size_t b) {
      return sims[a] != sims[b] ? sims[a] > sims[b] : a < b;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(keep), order.end(), before);

    RankedResult& r = out[q];
    r.total_positives = positives;
    r.relevance.resize(keep);
    for (std::size_t j = 0; j < keep; ++j) {
      r.relevance[j] = gallery.labels[order[j]] == queries.labels[q] ? 1 : 0;
    }
  }
  return out;
}

}  // namespace pdml
