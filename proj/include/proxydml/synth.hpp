#pragma once

// Synthetic labelled data whose classes have several local centers, plus the
// CSV embedding format used to move datasets in and out of the tools.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "proxydml/tensor.hpp"

namespace pdml {

enum class CenterLayout {
  Random,     // rejection-sampled unit directions
  Antipodal,  // exactly two centers, u and -u
};

struct SynthSpec {
  std::size_t num_classes = 8;
  std::size_t centers_per_class = 3;
  std::size_t samples_per_center = 30;
  std::size_t dim = 16;
  /// Minimum angle (radians) between any two true centers.
  double center_spread = 1.0471975511965976;
  /// Std-dev of the isotropic noise added to a center before normalizing.
  double cluster_noise = 0.15;
  std::uint64_t seed = 0;
  CenterLayout layout = CenterLayout::Random;
  /// Total draw budget for placing all centers.
  std::size_t max_attempts = 100000;

  void validate() const;
};

enum class SplitTag { Full, Train, Test };

struct LabeledDataset {
  Matrix features;
  std::vector<int> labels;
  SplitTag split = SplitTag::Full;
  /// Free-form provenance (generator parameters, RNG algorithm, source path).
  std::map<std::string, std::string> metadata;

  std::size_t size() const noexcept { return features.rows(); }
  std::size_t dim() const noexcept { return features.cols(); }
  /// Distinct labels, ascending.
  std::vector<int> classes() const;
};

struct GeneratedData {
  LabeledDataset dataset;
  Matrix centers;                   // (C*M) x D, class-major
  std::vector<std::size_t> origin;  // generating center row per sample
};

GeneratedData generate_with_centers(const SynthSpec& spec);
LabeledDataset generate(const SynthSpec& spec);

std::pair<LabeledDataset, LabeledDataset> train_test_split(const LabeledDataset& ds,
                                                           bool class_disjoint,
                                                           std::uint64_t seed,
                                                           double train_fraction = 0.5);

LabeledDataset parse_embeddings_text(const std::string& text);
LabeledDataset load_embeddings(const std::string& path);

/// Writes `label,v1,...,vD` rows with '#' header lines, and the metadata as a
/// JSON sidecar at `<path>.meta.json`.
void save_embeddings(const LabeledDataset& ds, const std::string& path);

}  // namespace pdml
