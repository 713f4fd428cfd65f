// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "finetype/e2e_model.hpp"
#include "finetype/errors.hpp"
#include "finetype/mention_model.hpp"
#include "support.hpp"

using namespace finetype;
using namespace finetype::testing;

namespace {

ContextTriple triple(std::vector<double> l, std::vector<double> r, std::vector<double> m) {
  return {std::move(l), std::move(r), std::move(m), 10};
}

MentionBatch batch_of(const std::vector<ContextTriple>& ts) { return MentionBatch::from_triples(std::span(ts)); }

void randomize(ParamStore& s, Rng& rng, double scale = 0.5) {
  for (auto& e : s)
    for (auto& x : e.value.data()) x = rng.uniform(-scale, scale);
}

ScalarGru gru_oracle(const ParamStore& s, const std::string& prefix) {
  auto m = [&](const std::string& n) { return to_mat(s.value(prefix + "." + n)); };
  auto v = [&](const std::string& n) {
    const auto& t = s.value(prefix + "." + n);
    return std::vector<double>(t.data().begin(), t.data().end());
  };
  return {m("W_z"), m("W_r"), m("W_h"), m("U_z"), m("U_r"), m("U_h"), v("b_z"), v("b_r"), v("b_h")};
}

}  // namespace

TEST_CASE("attention weights") {
  Rng rng(3);
  const std::vector<ContextTriple> ts{triple({1, 2}, {3, 4}, {0.5, -0.5}), triple({1, 2}, {3, 4}, {2, 1}),
                                      triple({0, 0}, {0, 0}, {0.5, -0.5})};
  SUBCASE("scalar attention at zero is uniform") {
    MentionModel m({2, 4, 3, AttentionKind::scalar}, rng);
    const auto w = m.attention_weights(batch_of(ts));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(w(i, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("dynamic attention") {
    MentionModel m({2, 4, 3, AttentionKind::dynamic}, rng);
    m.params().value("mention.att_W").fill(0.0);
    m.params().value("mention.att_b") = Tensor::vector({std::log(2.0), 0, 0});
    const auto w = m.attention_weights(batch_of(ts));
    CHECK(w(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(w(0, 1) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(w(0, 2) == doctest::Approx(0.25).epsilon(1e-15));
    m.params().value("mention.att_W") = Tensor::matrix({{1, -1, 0.5}, {0.3, 0.2, -2}});
    const auto v = m.attention_weights(batch_of(ts));
    CHECK(v(0, 0) != v(1, 0));
    for (std::size_t j = 0; j < 3; ++j) CHECK(v(0, j) == v(2, j));
  }
  SUBCASE("no attention has no weights") {
    MentionModel m({2, 4, 3, AttentionKind::none}, rng);
    CHECK_THROWS_AS(m.attention_weights(batch_of(ts)), StateError);
  }
}

TEST_CASE("mention model forward") {
  Rng rng(5);
  const std::vector<ContextTriple> ts{triple({1, -2}, {0.3, 4}, {0.5, 0.1}), triple({1, -2}, {0.3, 4}, {0.5, 0.1})};
  SUBCASE("zero parameters give 0.5 everywhere") {
    MentionModel m({2, 4, 3, AttentionKind::dynamic}, rng);
    for (auto& e : m.params()) e.value.fill(0.0);
    const auto s = m.score(batch_of(ts));
    for (double x : s.data()) CHECK(x == 0.5);
  }
  SUBCASE("identical triples give identical rows") {
    MentionModel m({2, 4, 3, AttentionKind::dynamic}, rng);
    randomize(m.params(), rng);
    const auto s = m.score(batch_of(ts));
    for (std::size_t j = 0; j < 3; ++j) CHECK(s(0, j) == s(1, j));
  }
  SUBCASE("uniform scalar attention equals no attention with W1 scaled by 1/3") {
    MentionModel none({2, 5, 3, AttentionKind::none}, rng);
    randomize(none.params(), rng);
    MentionModel scalar({2, 5, 3, AttentionKind::scalar}, rng);
    for (const char* n : {"mention.b1", "mention.W2", "mention.b2"})
      scalar.params().value(n) = none.params().value(n);
    // Scalar attention scales c_c by 1/3; multiplying W1 by 3 undoes it.
    Tensor w1 = none.params().value("mention.W1");
    for (auto& x : w1.data()) x *= 3.0;
    scalar.params().value("mention.W1") = w1;
    const std::vector<ContextTriple> batch{triple({1, -2}, {0.3, 4}, {0.5, 0.1}), triple({-1, 0.2}, {3, 1}, {2, 2})};
    const auto a = none.score(batch_of(batch));
    const auto b = scalar.score(batch_of(batch));
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-13));
  }
  SUBCASE("eval mode ignores dropout; train mode applies it") {
    MentionModel m({2, 16, 3, AttentionKind::none}, rng);
    randomize(m.params(), rng);
    m.set_dropout(0.5);
    Rng d1(1), d2(1);
    CHECK(m.forward(batch_of(ts), nn::Mode::eval, d1) == m.score(batch_of(ts)));
    CHECK_FALSE(m.forward(batch_of(ts), nn::Mode::train, d2) == m.score(batch_of(ts)));
  }
  SUBCASE("dimension mismatch") {
    MentionModel m({3, 4, 2, AttentionKind::none}, rng);
    CHECK_THROWS_AS(m.score(batch_of(ts)), DimensionError);
  }
}

TEST_CASE("mention prediction") {
  CHECK(mention_predict(std::vector<double>{0.7, 0.2, 0.6}) == std::vector<std::size_t>{0, 2});
  CHECK(mention_predict(std::vector<double>{0.4, 0.3, 0.2}) == std::vector<std::size_t>{0});
  CHECK(mention_predict(std::vector<double>{0.4, 0.4, 0.1}) == std::vector<std::size_t>{0});
  CHECK(mention_predict(std::vector<double>{0.5, 0.1}) == std::vector<std::size_t>{0});
  CHECK(mention_predict(std::vector<double>{0.1, 0.5}) == std::vector<std::size_t>{1});
  Rng rng(21);
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> s(1 + rng.below(12));
    for (auto& x : s) x = rng.uniform();
    const auto p = mention_predict(s);
    REQUIRE_FALSE(p.empty());
    // Oracle: threshold set, else the first maximum.
    std::vector<std::size_t> want;
    for (std::size_t j = 0; j < s.size(); ++j)
      if (s[j] > 0.5) want.push_back(j);
    if (want.empty()) want.push_back(std::size_t(std::max_element(s.begin(), s.end()) - s.begin()));
    REQUIRE(p == want);
  }
}

TEST_CASE("mention loss") {
  CHECK(mention_loss(Tensor::matrix({{1 - 1e-12, 1e-12}}), Tensor::matrix({{1, 0}})) < 1e-10);
  CHECK(mention_loss(Tensor({3, 4}, 0.5), Tensor::matrix({{1, 0, 0, 1}, {0, 0, 0, 0}, {1, 1, 1, 1}})) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const double l1 = mention_loss(Tensor::matrix({{0.9, 0.3}}), Tensor::matrix({{1, 0}}));
  const double l2 = mention_loss(Tensor::matrix({{0.2, 0.6}}), Tensor::matrix({{1, 1}}));
  CHECK(mention_loss(Tensor::matrix({{0.9, 0.3}, {0.2, 0.6}}), Tensor::matrix({{1, 0}, {1, 1}})) ==
        doctest::Approx((l1 + l2) / 2).epsilon(1e-14));
}

TEST_CASE("e2e model forward") {
  Rng rng(9);
  SUBCASE("zero parameters give 0.5 everywhere") {
    E2EModel m({3, 4, 2}, rng);
    for (auto& e : m.params()) e.value.fill(0.0);
    const Tensor s = m.score_sentence(random_tensor({5, 3}, rng));
    for (double x : s.data()) CHECK(x == 0.5);
  }
  SUBCASE("random T=4 against scalar loops") {
    E2EModel m({3, 4, 2}, rng);
    randomize(m.params(), rng);
    const Tensor x = random_tensor({4, 3}, rng);
    const auto got = m.score_sentence(x);
    const auto xs = to_mat(x);
    const auto fw = gru_oracle(m.params(), "e2e.gru_fwd").run(xs, false);
    const auto bw = gru_oracle(m.params(), "e2e.gru_bwd").run(xs, true);
    const auto w = to_mat(m.params().value("e2e.W_out"));
    const auto& b = m.params().value("e2e.b_out");
    for (std::size_t t = 0; t < 4; ++t) {
      std::vector<double> feat = fw[t];
      feat.insert(feat.end(), bw[t].begin(), bw[t].end());
      for (std::size_t n = 0; n < 2; ++n) {
        double z = b[n];
        for (std::size_t k = 0; k < feat.size(); ++k) z += feat[k] * w[k][n];
        CHECK(std::abs(got(t, n) - oracle_sigmoid(z)) < 1e-12);
      }
    }
  }
  SUBCASE("single wordpiece is one Bi-GRU step and the head") {
    E2EModel m({3, 2, 2}, rng);
    randomize(m.params(), rng);
    const Tensor x = random_tensor({1, 3}, rng);
    const auto got = m.score_sentence(x);
    const auto hf = nn::gru_cell_forward(x, Tensor({1, 2}), m.params(), nn::GruCellParams::bind(m.params(), "e2e.gru_fwd"));
    const auto hb = nn::gru_cell_forward(x, Tensor({1, 2}), m.params(), nn::GruCellParams::bind(m.params(), "e2e.gru_bwd"));
    const Tensor feat = Tensor::matrix({{hf[0], hf[1], hb[0], hb[1]}});
    const auto want = nn::activate(nn::linear_forward(feat, m.params().value("e2e.W_out"), m.params().value("e2e.b_out")),
                                   nn::Activation::sigmoid);
    CHECK(got == want);
  }
  SUBCASE("batching with padding leaves per-sentence scores unchanged") {
    E2EModel m({3, 4, 2}, rng);
    randomize(m.params(), rng);
    const std::vector<Tensor> sents{random_tensor({5, 3}, rng), random_tensor({2, 3}, rng)};
    const auto batch = E2EBatch::pack(std::span(sents));
    const auto scores = m.score(batch);
    for (std::size_t b = 0; b < 2; ++b) {
      const auto alone = m.score_sentence(sents[b]);
      for (std::size_t t = 0; t < sents[b].rows(); ++t)
        for (std::size_t n = 0; n < 2; ++n) CHECK(scores(batch.row(t, b), n) == alone(t, n));
    }
  }
  SUBCASE("dimension mismatch") {
    E2EModel m({3, 4, 2}, rng);
    CHECK_THROWS_AS(m.score_sentence(Tensor({2, 5})), DimensionError);
  }
}

TEST_CASE("e2e loss") {
  const std::vector<unsigned char> all{1, 1, 1};
  CHECK(e2e_loss(Tensor({3, 2}, 0.5), Tensor::matrix({{1, 0}, {0, 0}, {1, 1}}), all) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const Tensor s = Tensor::matrix({{0.9, 0.2}, {0.4, 0.7}});
  const Tensor y = Tensor::matrix({{1, 0}, {0, 1}});
  const double l1 = nn::bce_loss(Tensor::matrix({{0.9, 0.2}}), Tensor::matrix({{1, 0}}));
  const double l2 = nn::bce_loss(Tensor::matrix({{0.4, 0.7}}), Tensor::matrix({{0, 1}}));
  const std::vector<unsigned char> two{1, 1};
  CHECK(e2e_loss(s, y, two) == doctest::Approx((l1 + l2) / 2).epsilon(1e-14));
  const Tensor sp = Tensor::matrix({{0.9, 0.2}, {0.4, 0.7}, {0.01, 0.99}, {0.3, 0.3}});
  const Tensor yp = Tensor::matrix({{1, 0}, {0, 1}, {1, 0}, {0, 0}});
  const std::vector<unsigned char> padded{1, 1, 0, 0};
  CHECK(e2e_loss(sp, yp, padded) == e2e_loss(s, y, two));
}

TEST_CASE("concatenation layer") {
  const std::vector<unsigned char> nopad3{0, 0, 0};
  CHECK(concat_layer(Tensor::matrix({{0.2, 0.8}, {0.4, 0.6}}), std::vector<std::size_t>{0, 0},
                     std::vector<unsigned char>{0, 0}, 1)
            .data()[0] == doctest::Approx(0.3));
  const auto two = concat_layer(Tensor::matrix({{0.2, 0.8}, {0.4, 0.6}}), std::vector<std::size_t>{0, 0},
                                std::vector<unsigned char>{0, 0}, 1);
  CHECK(two(0, 1) == doctest::Approx(0.7));
  const auto single = concat_layer(Tensor::matrix({{0.25, 0.125}}), std::vector<std::size_t>{0},
                                   std::vector<unsigned char>{0}, 1);
  CHECK(single == Tensor::matrix({{0.25, 0.125}}));
  const auto three = concat_layer(Tensor::matrix({{0.9, 0.0}, {0.6, 0.3}, {0.0, 0.9}}), std::vector<std::size_t>{0, 0, 0},
                                  nopad3, 1);
  CHECK(three(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(three(0, 1) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK_THROWS_AS(concat_layer(Tensor::matrix({{0.1}, {0.2}}), std::vector<std::size_t>{0, 2},
                               std::vector<unsigned char>{0, 0}, 3),
                  StateError);
}

TEST_CASE("e2e prediction") {
  const auto p = e2e_predict(Tensor::matrix({{0.6, 0.7}, {0.4, 0.3}}));
  CHECK(p.word_labels[0] == std::vector<std::size_t>{0, 1});
  CHECK(p.word_labels[1].empty());
  Rng rng(4);
  const Tensor s = random_tensor({12, 5}, rng);
  Tensor probs(s.shape());
  for (std::size_t i = 0; i < s.numel(); ++i) probs[i] = (s[i] + 1) / 2;
  const auto q = e2e_predict(probs);
  for (std::size_t t = 0; t < 12; ++t) {
    std::vector<std::size_t> want;
    for (std::size_t n = 0; n < 5; ++n)
      if (probs(t, n) > 0.5) want.push_back(n);
    CHECK(q.word_labels[t] == want);
  }
}
