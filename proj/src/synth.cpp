#include "proxydml/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <numbers>
#include <set>
#include <sstream>

#include "proxydml/error.hpp"
#include "proxydml/rng.hpp"

namespace pdml {

namespace {

std::vector<double> random_direction(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double n = 0.0;
  do {
    for (double& x : v) x = rng.normal();
    n = norm2(v);
  } while (n < 1e-12);
  for (double& x : v) x /= n;
  return v;
}

std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

void SynthSpec::validate() const {
  auto require = [](bool ok, const char* field, const char* rule) {
    if (!ok) fail(ErrorCode::InvalidConfig, std::string("synth.") + field + " " + rule);
  };
  require(num_classes >= 1, "num_classes", "must be >= 1");
  require(centers_per_class >= 1, "centers_per_class", "must be >= 1");
  require(samples_per_center >= 1, "samples_per_center", "must be >= 1");
  require(dim >= 2, "dim", "must be >= 2");
  require(std::isfinite(cluster_noise) && cluster_noise > 0.0, "cluster_noise", "must be > 0");
  require(center_spread >= 0.0 && center_spread <= std::numbers::pi, "center_spread",
          "must lie in [0, pi]");
  require(layout != CenterLayout::Antipodal || num_classes * centers_per_class == 2, "layout",
          "antipodal requires exactly two centers in total");
  require(max_attempts >= 1, "max_attempts", "must be >= 1");
}

std::vector<int> LabeledDataset::classes() const {
  std::set<int> s(labels.begin(), labels.end());
  return {s.begin(), s.end()};
}

GeneratedData generate_with_centers(const SynthSpec& spec) {
  spec.validate();
  const std::size_t C = spec.num_classes, M = spec.centers_per_class, D = spec.dim;
  Rng center_rng(mix_seed(spec.seed, 1));
  Rng noise_rng(mix_seed(spec.seed, 2));

  GeneratedData out;
  out.centers = Matrix(C * M, D);
  if (spec.layout == CenterLayout::Antipodal) {
    const auto u = random_direction(center_rng, D);
    for (std::size_t d = 0; d < D; ++d) {
      out.centers(0, d) = u[d];
      out.centers(1, d) = -u[d];
    }
  } else {
    const double max_cos = std::cos(spec.center_spread);
    std::size_t attempts = 0;
    for (std::size_t placed = 0; placed < C * M;) {
      if (attempts++ >= spec.max_attempts) {
        fail(ErrorCode::SpecInfeasible,
             "placed " + std::to_string(placed) + " of " + std::to_string(C * M) +
                 " centers with pairwise angle >= " + format_double(spec.center_spread) +
                 " rad within the budget of " + std::to_string(spec.max_attempts) + " draws");
      }
      const auto u = random_direction(center_rng, D);
      bool ok = true;
      for (std::size_t j = 0; j < placed && ok; ++j) ok = dot(u, out.centers.row(j)) < max_cos;
      if (!ok) continue;
      std::copy(u.begin(), u.end(), out.centers.row(placed).begin());
      ++placed;
    }
  }

  const std::size_t n = spec.samples_per_center;
  LabeledDataset& ds = out.dataset;
  ds.features = Matrix(C * M * n, D);
  ds.labels.resize(C * M * n);
  out.origin.resize(C * M * n);
  std::size_t row = 0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t m = 0; m < M; ++m) {
      const auto center = out.centers.row(c * M + m);
      for (std::size_t s = 0; s < n; ++s, ++row) {
        auto x = ds.features.row(row);
        for (std::size_t d = 0; d < D; ++d) x[d] = center[d] + spec.cluster_noise * noise_rng.normal();
        const double norm = norm2(x);
        for (double& v : x) v /= norm;
        ds.labels[row] = static_cast<int>(c);
        out.origin[row] = c * M + m;
      }
    }
  }

  ds.metadata = {
      {"generator", "multi-center-sphere"},
      {"rng", Rng::kAlgorithm},
      {"seed", std::to_string(spec.seed)},
      {"num_classes", std::to_string(C)},
      {"centers_per_class", std::to_string(M)},
      {"samples_per_center", std::to_string(n)},
      {"dim", std::to_string(D)},
      {"center_spread", format_double(spec.center_spread)},
      {"cluster_noise", format_double(spec.cluster_noise)},
      {"layout", spec.layout == CenterLayout::Antipodal ? "antipodal" : "random"},
  };
  return out;
}

LabeledDataset generate(const SynthSpec& spec) { return generate_with_centers(spec).dataset; }

std::pair<LabeledDataset, LabeledDataset> train_test_split(const LabeledDataset& ds,
                                                           bool class_disjoint,
                                                           std::uint64_t seed,
                                                           double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    fail(ErrorCode::InvalidConfig, "split.train_fraction must lie in (0, 1)");
  }
  const std::vector<int> classes = ds.classes();
  Rng rng(mix_seed(seed, 3));
  std::vector<char> to_train(ds.size(), 0);

  if (class_disjoint) {
    if (classes.size() < 2) {
      fail(ErrorCode::TooFewClasses, "class-disjoint split needs >= 2 classes, have " +
                                         std::to_string(classes.size()));
    }
    std::vector<int> order = classes;
    rng.shuffle(std::span<int>(order));
    const auto n_train = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(order.size()))),
        1, order.size() - 1);
    std::set<int> train_classes(order.begin(), order.begin() + static_cast<long>(n_train));
    for (std::size_t i = 0; i < ds.size(); ++i) to_train[i] = train_classes.count(ds.labels[i]) ? 1 : 0;
  } else {
    for (int c : classes) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels[i] == c) members.push_back(i);
      }
      rng.shuffle(std::span<std::size_t>(members));
      auto n_train =
          static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
      if (members.size() >= 2) n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 1);
      for (std::size_t j = 0; j < n_train && j < members.size(); ++j) to_train[members[j]] = 1;
    }
  }

  auto take = [&](char which, SplitTag tag) {
    LabeledDataset part;
    std::size_t count = static_cast<std::size_t>(std::count(to_train.begin(), to_train.end(), which));
    part.features = Matrix(count, ds.dim());
    part.split = tag;
    part.metadata = ds.metadata;
    std::size_t r = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (to_train[i] != which) continue;
      std::copy(ds.features.row(i).begin(), ds.features.row(i).end(), part.features.row(r).begin());
      part.labels.push_back(ds.labels[i]);
      ++r;
    }
    return part;
  };
  return {take(1, SplitTag::Train), take(0, SplitTag::Test)};
}

LabeledDataset parse_embeddings_text(const std::string& text) {
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t dim = 0;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;

    std::vector<std::string_view> fields;
    for (std::size_t start = 0;;) {
      const auto comma = view.find(',', start);
      fields.push_back(trim(view.substr(start, comma == std::string_view::npos ? view.npos : comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    auto where = [&] { return "line " + std::to_string(line_no); };
    if (fields.size() < 2) fail(ErrorCode::ParseError, where() + ": expected label and at least one value");

    int label = 0;
    auto lf = fields[0];
    auto [lp, lec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (lec != std::errc() || lp != lf.data() + lf.size() || label < 0) {
      fail(ErrorCode::ParseError, where() + ": bad label '" + std::string(lf) + "'");
    }
    const std::size_t row_dim = fields.size() - 1;
    if (dim == 0) {
      dim = row_dim;
    } else if (row_dim != dim) {
      fail(ErrorCode::DimensionMismatch, where() + ": expected " + std::to_string(dim) +
                                             " values, found " + std::to_string(row_dim));
    }
    for (std::size_t f = 1; f < fields.size(); ++f) {
      double v = 0.0;
      auto [p, ec] = std::from_chars(fields[f].data(), fields[f].data() + fields[f].size(), v);
      if (ec != std::errc() || p != fields[f].data() + fields[f].size() || !std::isfinite(v)) {
        fail(ErrorCode::ParseError, where() + ": bad value '" + std::string(fields[f]) + "'");
      }
      values.push_back(v);
    }
    labels.push_back(label);
  }
  if (labels.empty()) fail(ErrorCode::ParseError, "no data rows in embedding file");

  LabeledDataset ds;
  ds.features = Matrix(labels.size(), dim, std::move(values));
  ds.labels = std::move(labels);
  return ds;
}

LabeledDataset load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open embedding file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  LabeledDataset ds = parse_embeddings_text(buf.str());
  ds.metadata["source"] = path;
  return ds;
}

void save_embeddings(const LabeledDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write embedding file: " + path);
  out << "# proxydml embeddings: label,v1,...,v" << ds.dim() << "\n";
  for (const auto& [key, value] : ds.metadata) out << "# " << key << "=" << value << "\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.labels[i];
    for (double v : ds.features.row(i)) out << ',' << v;
    out << '\n';
  }
  if (!out) fail(ErrorCode::IoError, "write failed: " + path);

  nlohmann::json meta = nlohmann::json::object();
  for (const auto& [key, value] : ds.metadata) meta[key] = value;
  meta["rows"] = ds.size();
  meta["dim"] = ds.dim();
  std::ofstream side(path + ".meta.json");
  if (!side) fail(ErrorCode::IoError, "cannot write metadata sidecar: " + path + ".meta.json");
  side << meta.dump(2) << "\n";
}

}  // namespace pdml
