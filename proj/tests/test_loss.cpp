#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "proxydml/error.hpp"
#include "proxydml/loss.hpp"

using namespace pdml;

namespace {

LossConfig config(LossKind kind, SimilarityMode mode = SimilarityMode::SoftmaxWeighted) {
  LossConfig cfg;
  cfg.kind = kind;
  cfg.mode = mode;
  return cfg;
}

Matrix rows(std::initializer_list<std::vector<double>> r) {
  Matrix m(r.size(), r.begin()->size());
  std::size_t i = 0;
  for (const auto& v : r) std::copy(v.begin(), v.end(), m.row(i++).begin());
  return m;
}

SimilarityMatrix sims_of(std::initializer_list<std::vector<double>> r) { return {rows(r)}; }

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

constexpr SimilarityMode kModes[] = {SimilarityMode::SoftmaxWeighted, SimilarityMode::Max,
                                     SimilarityMode::Mean};

}  // namespace

TEST_CASE("l2_normalize") {
  const std::vector<double> v{3, 4};
  const auto u = l2_normalize(v);
  CHECK(u[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(u[1] == doctest::Approx(0.8).epsilon(1e-15));
  const std::vector<double> e{1, 0, 0};
  CHECK(l2_normalize(e) == e);
  const std::vector<double> z{0, 0};
  CHECK(code_of([&] { l2_normalize(z); }) == ErrorCode::ZeroVector);
}

TEST_CASE("class_similarity reference values") {
  SUBCASE("single proxy returns the inner product") {
    const std::vector<double> x{1, 0};
    const Matrix w = rows({{0.7, std::sqrt(1 - 0.49)}});
    for (double g : {0.01, 0.1, 5.0}) CHECK(class_similarity(x, w.view(), g, SimilarityMode::SoftmaxWeighted) == doctest::Approx(0.7));
  }
  SUBCASE("identical proxies") {
    const std::vector<double> x{1, 0, 0};
    const std::vector<double> p{0.4, std::sqrt(1 - 0.16), 0};
    const Matrix w = rows({p, p, p});
    CHECK(class_similarity(x, w.view(), 0.1, SimilarityMode::SoftmaxWeighted) == doctest::Approx(0.4));
  }
  SUBCASE("two proxies against an extended-precision evaluation") {
    const std::vector<double> x{1, 0, 0};
    const Matrix w = rows({{0.9, std::sqrt(1 - 0.81), 0}, {-0.1, 0, std::sqrt(1 - 0.01)}});
    const double got = class_similarity(x, w.view(), 0.1, SimilarityMode::SoftmaxWeighted);
    const long double e1 = std::exp(0.9L / 0.1L), e2 = std::exp(-0.1L / 0.1L);
    const long double expected = (e1 * 0.9L + e2 * -0.1L) / (e1 + e2);
    CHECK(std::abs(got - static_cast<double>(expected)) < 1e-14);
    CHECK(got > 0.89);
  }
  SUBCASE("gamma must be positive") {
    const std::vector<double> x{1, 0};
    const Matrix w = rows({{1, 0}, {0, 1}});
    CHECK(code_of([&] { class_similarity(x, w.view(), 0.0, SimilarityMode::SoftmaxWeighted); }) ==
          ErrorCode::InvalidConfig);
  }
}

TEST_CASE("similarity_matrix") {
  SUBCASE("self similarity") {
    EmbeddingBatch b{rows({{0, 1, 0}}), {0}};
    ProxyBank bank(1, 1, 3);
    bank.proxy(0, 0)[1] = 1.0;
    CHECK(similarity_matrix(b, bank, LossConfig{})(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("orthogonal basis") {
    EmbeddingBatch b{rows({{1, 0}, {0, 1}}), {0, 1}};
    ProxyBank bank(2, 1, 2);
    bank.proxy(0, 0)[0] = 1.0;
    bank.proxy(1, 0)[1] = 1.0;
    const auto s = similarity_matrix(b, bank, LossConfig{});
    CHECK(s(0, 0) == 1.0);
    CHECK(s(1, 1) == 1.0);
    CHECK(s(0, 1) == 0.0);
    CHECK(s(1, 0) == 0.0);
  }
  SUBCASE("loop oracle on a random instance") {
    const auto inst = oracle::random_instance(0, 5, 3, 4, 6);
    for (auto mode : kModes) {
      const LossConfig cfg = config(LossKind::MultiProxyAnchor, mode);
      const auto s = similarity_matrix(inst.batch, inst.bank, cfg);
      const auto ref = oracle::similarity_table(inst.batch, inst.bank, cfg);
      for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(s(i, c) - static_cast<double>(ref[i][c])) < 1e-12);
      }
    }
  }
  SUBCASE("dimension mismatch") {
    EmbeddingBatch b{rows({{1, 0}}), {0}};
    ProxyBank bank(1, 1, 3);
    bank.proxy(0, 0)[0] = 1.0;
    CHECK(code_of([&] { similarity_matrix(b, bank, LossConfig{}); }) == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("softtriple_sim_loss") {
  const LossConfig cfg = config(LossKind::SoftTriple);
  const std::vector<int> y{0};
  SUBCASE("well separated pair") {
    const double got = softtriple_sim_loss(y, sims_of({{1.0, -1.0}}), cfg);
    const long double a = std::exp(20.0L * 0.9L), b = std::exp(-20.0L);
    CHECK(std::abs(got - static_cast<double>(std::log1p(b / a))) < 1e-20);
    CHECK(got < 1e-7);
    CHECK(got > 0.0);
  }
  SUBCASE("symmetric two-way softmax") {
    LossConfig c0 = cfg;
    c0.delta = 0.0;
    CHECK(softtriple_sim_loss(y, sims_of({{0.3, 0.3}}), c0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  }
  SUBCASE("naive formula on a random instance") {
    const auto inst = oracle::random_instance(1, 4, 3, 2, 6);
    const auto s = similarity_matrix(inst.batch, inst.bank, cfg);
    const auto ref = oracle::softtriple(inst.batch.labels, oracle::similarity_table(inst.batch, inst.bank, cfg), cfg);
    CHECK(std::abs(softtriple_sim_loss(inst.batch.labels, s, cfg) - static_cast<double>(ref)) < 1e-10);
  }
  SUBCASE("empty batch") {
    CHECK(code_of([&] { softtriple_sim_loss({}, SimilarityMatrix{Matrix(0, 2)}, cfg); }) == ErrorCode::EmptyBatch);
  }
}

TEST_CASE("center_regularizer") {
  SUBCASE("coincident proxies give zero") {
    pdml::Rng rng(9);
    ProxyBank bank(3, 4, 5);
    for (std::size_t c = 0; c < 3; ++c) {
      const auto u = oracle::random_unit(rng, 5);
      for (std::size_t k = 0; k < 4; ++k) std::copy(u.begin(), u.end(), bank.proxy(c, k).begin());
    }
    CHECK(center_regularizer(bank) == 0.0);
  }
  SUBCASE("antipodal pair gives one") {
    ProxyBank bank(1, 2, 3);
    bank.proxy(0, 0)[2] = 1.0;
    bank.proxy(0, 1)[2] = -1.0;
    CHECK(center_regularizer(bank) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("pairwise loop oracle") {
    pdml::Rng rng(2);
    const auto bank = oracle::random_bank(rng, 2, 3, 7);
    CHECK(std::abs(center_regularizer(bank) - static_cast<double>(oracle::center_regularizer(bank))) < 1e-12);
  }
  SUBCASE("single proxy per class") {
    pdml::Rng rng(2);
    CHECK(center_regularizer(oracle::random_bank(rng, 4, 1, 3)) == 0.0);
  }
}

TEST_CASE("full losses are component sums") {
  const auto inst1 = oracle::random_instance(1, 4, 3, 2, 6);
  const auto inst4 = oracle::random_instance(4, 6, 3, 2, 6);
  for (LossKind kind : {LossKind::SoftTriple, LossKind::MultiProxyAnchor}) {
    const auto& inst = kind == LossKind::SoftTriple ? inst1 : inst4;
    LossConfig cfg = config(kind);
    const auto s = similarity_matrix(inst.batch, inst.bank, cfg);
    auto sim_loss = [&](const LossConfig& c) {
      return kind == LossKind::SoftTriple ? softtriple_sim_loss(inst.batch.labels, s, c)
                                          : mpa_sim_loss(inst.batch.labels, s, c);
    };
    auto full = [&](const EmbeddingBatch& b, const ProxyBank& bank, const LossConfig& c) {
      return kind == LossKind::SoftTriple ? softtriple_loss(b, bank, c) : mpa_loss(b, bank, c);
    };
    cfg.tau = 0.0;
    CHECK(full(inst.batch, inst.bank, cfg) == sim_loss(cfg));
    cfg.tau = 0.2;
    CHECK(std::abs(full(inst.batch, inst.bank, cfg) - (sim_loss(cfg) + 0.2 * center_regularizer(inst.bank))) <
          1e-12);
    CHECK(loss_value(inst.batch, inst.bank, cfg) == full(inst.batch, inst.bank, cfg));

    ProxyBank same = inst.bank;
    for (std::size_t c = 0; c < same.num_classes(); ++c) {
      std::vector<double> first(same.proxy(c, 0).begin(), same.proxy(c, 0).end());
      std::copy(first.begin(), first.end(), same.proxy(c, 1).begin());
    }
    const auto s_same = similarity_matrix(inst.batch, same, cfg);
    const double sim_same = kind == LossKind::SoftTriple ? softtriple_sim_loss(inst.batch.labels, s_same, cfg)
                                                         : mpa_sim_loss(inst.batch.labels, s_same, cfg);
    CHECK(full(inst.batch, same, cfg) == sim_same);
  }
}

TEST_CASE("softtriple gradient with respect to similarities") {
  const LossConfig cfg = config(LossKind::SoftTriple);
  SUBCASE("symmetric pair") {
    LossConfig c0 = cfg;
    c0.delta = 0.0;
    const Matrix g = softtriple_grad_wrt_similarity(sims_of({{0.2, 0.2}}), std::vector<int>{1}, c0);
    CHECK(std::abs(g(0, 0)) == doctest::Approx(c0.lambda / 2));
    CHECK(std::abs(g(0, 1)) == doctest::Approx(c0.lambda / 2));
  }
  SUBCASE("sign structure and finite differences") {
    const auto inst = oracle::random_instance(3, 6, 4, 3, 5);
    SimilarityMatrix s = similarity_matrix(inst.batch, inst.bank, cfg);
    const Matrix g = softtriple_grad_wrt_similarity(s, inst.batch.labels, cfg);
    for (std::size_t i = 0; i < s.rows(); ++i) {
      int negatives = 0;
      for (std::size_t c = 0; c < s.cols(); ++c) {
        if (g(i, c) < 0) {
          ++negatives;
          CHECK(static_cast<int>(c) == inst.batch.labels[i]);
        }
      }
      CHECK(negatives == 1);
    }
    for (std::size_t i = 0; i < s.rows(); ++i) {
      for (std::size_t c = 0; c < s.cols(); ++c) {
        const double fd = oracle::central_difference(
            [&] { return softtriple_sim_loss(inst.batch.labels, s, cfg); }, s.values(i, c), 1e-5);
        CHECK(oracle::rel_err(g(i, c), fd) < 1e-4);
      }
    }
  }
}

TEST_CASE("mpa_sim_loss") {
  const LossConfig cfg = config(LossKind::MultiProxyAnchor);
  SUBCASE("single datum single class") {
    const double s = 0.37;
    const double expected = std::log1p(std::exp(-cfg.alpha * (s - cfg.delta)));
    CHECK(mpa_sim_loss(std::vector<int>{0}, sims_of({{s}}), cfg) == doctest::Approx(expected).epsilon(1e-14));
  }
  SUBCASE("perfect separation drives the loss to zero") {
    LossConfig big = cfg;
    big.alpha = 200.0;
    const double l = mpa_sim_loss(std::vector<int>{0, 1}, sims_of({{1.0, -1.0}, {-1.0, 1.0}}), big);
    CHECK(l >= 0.0);
    CHECK(l < 1e-60);
  }
  SUBCASE("naive formula on a random instance") {
    const auto inst = oracle::random_instance(4, 6, 3, 2, 6);
    for (auto mode : kModes) {
      const LossConfig c = config(LossKind::MultiProxyAnchor, mode);
      const auto s = similarity_matrix(inst.batch, inst.bank, c);
      const auto ref = oracle::mpa(inst.batch.labels, oracle::similarity_table(inst.batch, inst.bank, c), c);
      CHECK(std::abs(mpa_sim_loss(inst.batch.labels, s, c) - static_cast<double>(ref)) < 1e-10);
    }
  }
  SUBCASE("large logits stay finite") {
    const double l = mpa_sim_loss(std::vector<int>{0, 0, 0}, sims_of({{-1.0, 1.0}, {-1.0, 1.0}, {-1.0, 1.0}}), cfg);
    CHECK(std::isfinite(l));
    CHECK(l > 30.0);
  }
  SUBCASE("empty batch") {
    CHECK(code_of([&] { mpa_sim_loss({}, SimilarityMatrix{Matrix(0, 2)}, cfg); }) == ErrorCode::EmptyBatch);
  }
}

TEST_CASE("mpa gradient with respect to similarities") {
  const LossConfig cfg = config(LossKind::MultiProxyAnchor);
  SUBCASE("single positive datum") {
    const double s = 0.25;
    const Matrix g = mpa_grad_wrt_similarity(sims_of({{s, -0.2}}), std::vector<int>{0}, cfg);
    const double u = std::exp(-cfg.alpha * (s - cfg.delta));
    CHECK(g(0, 0) == doctest::Approx(-cfg.alpha * u / (1 + u)).epsilon(1e-13));
    CHECK(std::abs(g(0, 0)) < cfg.alpha);
  }
  SUBCASE("signs, both forms, and finite differences") {
    const auto inst = oracle::random_instance(5, 8, 4, 3, 5);
    SimilarityMatrix s = similarity_matrix(inst.batch, inst.bank, cfg);
    const Matrix g = mpa_grad_wrt_similarity(s, inst.batch.labels, cfg);
    const Matrix g_rel = mpa_grad_wrt_similarity_relative(s, inst.batch.labels, cfg);
    for (std::size_t i = 0; i < s.rows(); ++i) {
      for (std::size_t c = 0; c < s.cols(); ++c) {
        if (static_cast<int>(c) == inst.batch.labels[i]) {
          CHECK(g(i, c) < 0.0);
        } else {
          CHECK(g(i, c) > 0.0);
        }
        CHECK(std::abs(g(i, c) - g_rel(i, c)) < 1e-10);
        const double fd = oracle::central_difference(
            [&] { return mpa_sim_loss(inst.batch.labels, s, cfg); }, s.values(i, c), 1e-5);
        CHECK(oracle::rel_err(g(i, c), fd) < 1e-4);
      }
    }
  }
}

TEST_CASE("similarity_jacobians") {
  SUBCASE("single proxy is bilinear") {
    const std::vector<double> x{0.6, 0.8, 0.0};
    const Matrix w = rows({{0.0, 0.6, 0.8}});
    const auto j = similarity_jacobians(x, w.view(), 0.1, SimilarityMode::SoftmaxWeighted);
    for (std::size_t d = 0; d < 3; ++d) {
      CHECK(j.d_x[d] == doctest::Approx(w(0, d)));
      CHECK(j.d_w(0, d) == doctest::Approx(x[d]));
    }
  }
  SUBCASE("mean mode averages proxies") {
    pdml::Rng rng(6);
    const auto x = oracle::random_unit(rng, 4);
    const Matrix w = oracle::random_unit_rows(rng, 3, 4);
    const auto j = similarity_jacobians(x, w.view(), 0.1, SimilarityMode::Mean);
    for (std::size_t d = 0; d < 4; ++d) {
      CHECK(j.d_x[d] == doctest::Approx((w(0, d) + w(1, d) + w(2, d)) / 3.0).epsilon(1e-14));
    }
  }
  SUBCASE("softmax mode against finite differences") {
    pdml::Rng rng(6);
    std::vector<double> x = oracle::random_unit(rng, 5);
    Matrix w = oracle::random_unit_rows(rng, 3, 5);
    const double gamma = 0.1;
    const auto j = similarity_jacobians(x, w.view(), gamma, SimilarityMode::SoftmaxWeighted);
    auto f = [&] { return class_similarity(x, w.view(), gamma, SimilarityMode::SoftmaxWeighted); };
    for (std::size_t d = 0; d < 5; ++d) CHECK(oracle::rel_err(j.d_x[d], oracle::central_difference(f, x[d], 1e-5)) < 1e-4);
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t d = 0; d < 5; ++d) {
        CHECK(oracle::rel_err(j.d_w(k, d), oracle::central_difference(f, w(k, d), 1e-5)) < 1e-4);
      }
    }
  }
}

TEST_CASE("loss_backward") {
  SUBCASE("descent direction for a single pair") {
    LossConfig cfg = config(LossKind::MultiProxyAnchor);
    cfg.tau = 0.0;
    const std::vector<double> x{0.6, 0.8, 0.0};
    Tensor3 w(1, 1, 3);
    w(0, 0, 0) = 1.0;
    const auto g = loss_backward(Matrix(1, 3, x), std::vector<int>{0}, w, cfg);
    // Tangent component of x at w is x - (x.w) w.
    const std::vector<double> tangent{0.0, 0.8, 0.0};
    double along = 0.0;
    for (std::size_t d = 0; d < 3; ++d) along += -g.d_proxies(0, 0, d) * tangent[d];
    CHECK(along > 0.0);
  }
  SUBCASE("exhaustive finite differences over raw parameters") {
    pdml::Rng rng(7);
    Matrix emb(4, 5);
    Tensor3 prox(3, 2, 5);
    for (double& v : emb.flat()) v = rng.normal();
    for (double& v : prox.flat()) v = rng.normal();
    const auto labels = oracle::random_labels(rng, 4, 3);
    for (LossKind kind : {LossKind::SoftTriple, LossKind::MultiProxyAnchor}) {
      for (auto mode : kModes) {
        const LossConfig cfg = config(kind, mode);
        const auto g = loss_backward(emb, labels, prox, cfg);
        CHECK(g.loss_value == doctest::Approx(loss_forward_raw(emb, labels, prox, cfg)).epsilon(1e-14));
        auto f = [&] { return loss_forward_raw(emb, labels, prox, cfg); };
        for (std::size_t i = 0; i < emb.flat().size(); ++i) {
          CHECK(oracle::rel_err(g.d_embeddings.flat()[i], oracle::central_difference(f, emb.flat()[i], 1e-5)) < 1e-4);
        }
        for (std::size_t i = 0; i < prox.flat().size(); ++i) {
          CHECK(oracle::rel_err(g.d_proxies.flat()[i], oracle::central_difference(f, prox.flat()[i], 1e-5)) < 1e-4);
        }
      }
    }
  }
  SUBCASE("regularizer gradient alone") {
    pdml::Rng rng(8);
    Matrix emb(3, 4);
    Tensor3 prox(2, 3, 4);
    for (double& v : emb.flat()) v = rng.normal();
    for (double& v : prox.flat()) v = rng.normal();
    const std::vector<int> labels{0, 1, 1};
    LossConfig cfg = config(LossKind::MultiProxyAnchor);
    cfg.tau = 1.0;
    GradientHooks hooks;
    hooks.sim_loss_scale = 0.0;
    const auto g = loss_backward(emb, labels, prox, cfg, hooks);
    for (double v : g.d_embeddings.flat()) CHECK(v == 0.0);
    auto reg = [&] {
      ProxyBank b(prox);
      b.normalize();
      return static_cast<double>(oracle::center_regularizer(b));
    };
    CHECK(g.loss_value == doctest::Approx(reg()).epsilon(1e-12));
    for (std::size_t i = 0; i < prox.flat().size(); ++i) {
      CHECK(oracle::rel_err(g.d_proxies.flat()[i], oracle::central_difference(reg, prox.flat()[i], 1e-5)) < 1e-4);
    }
  }
  SUBCASE("zero embedding") {
    Tensor3 w(1, 1, 2);
    w(0, 0, 0) = 1.0;
    CHECK(code_of([&] { loss_backward(Matrix(1, 2), std::vector<int>{0}, w, LossConfig{}); }) ==
          ErrorCode::ZeroVector);
  }
  SUBCASE("label out of range") {
    Tensor3 w(1, 1, 2);
    w(0, 0, 0) = 1.0;
    CHECK(code_of([&] { loss_backward(Matrix(1, 2, 1.0), std::vector<int>{3}, w, LossConfig{}); }) ==
          ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("similarity properties on random instances") {
  for (std::uint64_t seed = 100; seed < 130; ++seed) {
    const auto inst = oracle::random_instance(seed, 6, 4, 5, 8);
    LossConfig cfg;
    const auto soft = similarity_matrix(inst.batch, inst.bank, cfg);
    cfg.mode = SimilarityMode::Max;
    const auto mx = similarity_matrix(inst.batch, inst.bank, cfg);
    cfg.mode = SimilarityMode::Mean;
    const auto mean = similarity_matrix(inst.batch, inst.bank, cfg);
    cfg.mode = SimilarityMode::SoftmaxWeighted;
    cfg.gamma = 1e-4;
    const auto cold = similarity_matrix(inst.batch, inst.bank, cfg);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t c = 0; c < 4; ++c) {
        for (double v : {soft(i, c), mx(i, c), mean(i, c)}) {
          CHECK(v >= -1 - 1e-9);
          CHECK(v <= 1 + 1e-9);
        }
        CHECK(mean(i, c) <= soft(i, c) + 1e-12);
        CHECK(soft(i, c) <= mx(i, c) + 1e-12);
        CHECK(std::abs(cold(i, c) - mx(i, c)) < 1e-3);
      }
    }
  }
}

TEST_CASE("loss values are invariant to batch order") {
  for (std::uint64_t seed = 200; seed < 210; ++seed) {
    const auto inst = oracle::random_instance(seed, 7, 3, 2, 5);
    std::vector<std::size_t> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    pdml::Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(perm));
    EmbeddingBatch shuffled{Matrix(7, 5), std::vector<int>(7)};
    for (std::size_t i = 0; i < 7; ++i) {
      std::copy(inst.batch.vectors.row(perm[i]).begin(), inst.batch.vectors.row(perm[i]).end(),
                shuffled.vectors.row(i).begin());
      shuffled.labels[i] = inst.batch.labels[perm[i]];
    }
    for (LossKind kind : {LossKind::SoftTriple, LossKind::MultiProxyAnchor}) {
      const LossConfig cfg = config(kind);
      CHECK(std::abs(loss_value(inst.batch, inst.bank, cfg) - loss_value(shuffled, inst.bank, cfg)) < 1e-12);
    }
  }
}

TEST_CASE("regularizer stays in range and vanishes only for coincident proxies") {
  for (std::uint64_t seed = 300; seed < 340; ++seed) {
    pdml::Rng rng(seed);
    const auto bank = oracle::random_bank(rng, 3, 1 + seed % 4, 4);
    const double r = center_regularizer(bank);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
    if (bank.per_class() > 1) CHECK(r > 0.0);
  }
}

TEST_CASE("one proxy per class without regularizer is an anchor loss on x.w") {
  const auto inst = oracle::random_instance(11, 9, 4, 1, 6);
  LossConfig cfg = config(LossKind::MultiProxyAnchor);
  cfg.tau = 0.0;
  std::vector<std::vector<long double>> direct(9, std::vector<long double>(4));
  for (std::size_t i = 0; i < 9; ++i) {
    for (std::size_t c = 0; c < 4; ++c) direct[i][c] = oracle::dotl(inst.batch.vectors.row(i), inst.bank.proxy(c, 0));
  }
  for (auto mode : kModes) {
    cfg.mode = mode;
    CHECK(std::abs(mpa_loss(inst.batch, inst.bank, cfg) -
                   static_cast<double>(oracle::mpa(inst.batch.labels, direct, cfg))) < 1e-10);
  }
}
