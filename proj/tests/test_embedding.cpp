#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "lbkt/embedding.hpp"

using namespace lbkt;
using lbkt::test::make_batch;
using lbkt::test::random_matrix;

namespace {

EmbeddingParams<double> random_tables(Rng& rng, int q, int b, int d, bool rasch) {
  EmbeddingParams<double> p;
  p.question = random_matrix<double>(rng, q + 2, d);
  p.question.row(q).setZero();
  if (rasch) p.difficulty = random_matrix<double>(rng, b, d);
  p.response = random_matrix<double>(rng, kNumResponseTokens, d);
  return p;
}

}  // namespace

TEST_SUITE("rasch_embedding") {

TEST_CASE("sinusoid table values") {
  const Matrix<double> pe = positional_encoding<double>(3, 4);
  CHECK(pe(0, 0) == doctest::Approx(0.0));
  CHECK(pe(0, 1) == doctest::Approx(1.0));
  CHECK(pe(0, 2) == doctest::Approx(0.0));
  CHECK(pe(0, 3) == doctest::Approx(1.0));
  CHECK(pe(1, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-14));
  CHECK(pe(1, 1) == doctest::Approx(std::cos(1.0)).epsilon(1e-14));
  CHECK(pe(1, 2) == doctest::Approx(std::sin(0.01)).epsilon(1e-14));
  CHECK(pe(1, 3) == doctest::Approx(std::cos(0.01)).epsilon(1e-14));
  CHECK(pe(2, 2) == doctest::Approx(std::sin(0.02)).epsilon(1e-14));
  CHECK_THROWS(positional_encoding<double>(3, 5));
  CHECK_THROWS(positional_encoding<double>(0, 4));
}

TEST_CASE("sinusoid pairs lie on the unit circle") {
  const Matrix<double> pe = positional_encoding<double>(64, 16);
  for (int p = 0; p < 64; ++p) {
    for (int i = 0; i < 8; ++i) CHECK(std::hypot(pe(p, 2 * i), pe(p, 2 * i + 1)) == doctest::Approx(1.0));
  }
}

TEST_CASE("rasch combination identities") {
  RowVector<double> ed(2), eq(2);
  ed << 1, 2;
  eq << 3, -1;
  const RowVector<double> r = rasch_combine(ed, eq);
  CHECK(r(0) == doctest::Approx(4.0));
  CHECK(r(1) == doctest::Approx(0.0));
  CHECK(rasch_combine<double>(RowVector<double>::Zero(2), eq).isZero());
  CHECK(rasch_combine<double>(ed, RowVector<double>::Zero(2)) == ed);
  CHECK(rasch_combine<double>(ed, RowVector<double>::Ones(2)) == 2.0 * ed);
  CHECK_THROWS(rasch_combine<double>(ed, RowVector<double>::Zero(3)));
}

TEST_CASE("rasch term is linear in the bucket vector") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const RowVector<double> a = random_matrix<double>(rng, 1, 6);
    const RowVector<double> b = random_matrix<double>(rng, 1, 6);
    const RowVector<double> q = random_matrix<double>(rng, 1, 6);
    const double s = rng.normal();
    const RowVector<double> lhs = rasch_combine<double>(a + s * b, q);
    const RowVector<double> rhs = rasch_combine<double>(a, q) + s * rasch_combine<double>(b, q);
    CHECK((lhs - rhs).norm() < 1e-12);
  }
}

TEST_CASE("composed embedding is the sum of its parts") {
  Rng rng(6);
  const int Q = 5, B = 3, d = 6;
  for (bool rasch : {true, false}) {
    const auto p = random_tables(rng, Q, B, d, rasch);
    const auto batch = make_batch({{0, 4, 6, 5}}, {{2, 1, 0, 2}}, {{1, 0, 2, 0}}, {{1, 1, 1, 0}}, Q);
    const Matrix<double> pe = positional_encoding<double>(8, d);
    const Matrix<double> e = compose_sequence(batch, 0, 4, p, pe, rasch);
    for (int t = 0; t < 3; ++t) {
      const int q = batch.question_ids[t];
      RowVector<double> want = p.question.row(q) + p.response.row(batch.prev_responses[t]) + pe.row(t);
      if (rasch) {
        const RowVector<double> ed = p.difficulty.row(batch.difficulty_buckets[t]);
        want += rasch_combine<double>(ed, p.question.row(q));
      }
      CHECK((e.row(t) - want).norm() < 1e-12);
    }
    CHECK(e.row(3).isZero());
  }
}

TEST_CASE("without the rasch term the difficulty bucket is ignored") {
  Rng rng(7);
  const auto p = random_tables(rng, 4, 3, 4, false);
  const Matrix<double> pe = positional_encoding<double>(4, 4);
  const auto a = make_batch({{0, 1, 2}}, {{2, 1, 1}}, {{0, 0, 0}}, {{1, 1, 1}}, 4);
  const auto b = make_batch({{0, 1, 2}}, {{2, 1, 1}}, {{2, 1, 2}}, {{1, 1, 1}}, 4);
  CHECK(compose_sequence(a, 0, 3, p, pe, false) == compose_sequence(b, 0, 3, p, pe, false));
}

TEST_CASE("padded and all-padding rows are zero") {
  Rng rng(8);
  const auto p = random_tables(rng, 4, 3, 4, true);
  const Matrix<double> pe = positional_encoding<double>(4, 4);
  const auto batch = make_batch({{1, 4, 4}, {4, 4, 4}}, {{2, 2, 2}, {2, 2, 2}}, {{0, 1, 1}, {1, 1, 1}},
                                {{1, 0, 0}, {0, 0, 0}}, 4);
  const auto rows = compose_input(batch, p, pe, true);
  CHECK(rows[0].bottomRows(2).isZero());
  CHECK(rows[1].isZero());
}

TEST_CASE("labels never reach the input and responses arrive one step late") {
  Rng rng(9);
  const auto p = random_tables(rng, 4, 3, 4, true);
  const Matrix<double> pe = positional_encoding<double>(4, 4);
  auto batch = make_batch({{0, 1, 2, 3}}, {{2, 1, 0, 1}}, {{0, 1, 2, 0}}, {{1, 1, 1, 1}}, 4, {{1, 0, 1, 1}});
  const Matrix<double> base = compose_sequence(batch, 0, 4, p, pe, true);
  auto flipped = batch;
  for (auto& y : flipped.labels) y = static_cast<std::uint8_t>(1 - y);
  CHECK(compose_sequence(flipped, 0, 4, p, pe, true) == base);
  // The response answered at step 1 is the prev token of step 2 only.
  auto later = batch;
  later.prev_responses[2] = 1 - later.prev_responses[2];
  const Matrix<double> changed = compose_sequence(later, 0, 4, p, pe, true);
  for (int t = 0; t < 4; ++t) CHECK((changed.row(t) == base.row(t)) == (t != 2));
}

TEST_CASE("out-of-table indices throw") {
  Rng rng(10);
  const auto p = random_tables(rng, 4, 3, 4, true);
  const Matrix<double> pe = positional_encoding<double>(4, 4);
  CHECK_THROWS_AS(compose_sequence(make_batch({{6}}, {{2}}, {{0}}, {{1}}, 4), 0, 1, p, pe, true), std::out_of_range);
  CHECK_THROWS_AS(compose_sequence(make_batch({{0}}, {{3}}, {{0}}, {{1}}, 4), 0, 1, p, pe, true), std::out_of_range);
  CHECK_THROWS_AS(compose_sequence(make_batch({{0}}, {{2}}, {{3}}, {{1}}, 4), 0, 1, p, pe, true), std::out_of_range);
  CHECK_THROWS_AS(compose_sequence(make_batch({{0, 0, 0, 0, 0}}, {{2, 0, 0, 0, 0}}, {{0, 0, 0, 0, 0}},
                                              {{1, 1, 1, 1, 1}}, 4),
                                   0, 5, p, pe, true),
                  std::out_of_range);
}

TEST_CASE("backward matches finite differences of a linear probe") {
  Rng rng(12);
  const int Q = 4, B = 3, d = 4;
  for (bool rasch : {true, false}) {
    auto p = random_tables(rng, Q, B, d, rasch);
    const Matrix<double> pe = positional_encoding<double>(5, d);
    const auto batch = make_batch({{0, 2, 2, 5, 4}}, {{2, 1, 0, 0, 2}}, {{1, 2, 1, 0, 0}}, {{1, 1, 1, 1, 0}}, Q);
    const Matrix<double> probe = random_matrix<double>(rng, 5, d);
    const auto f = [&] { return compose_sequence(batch, 0, 5, p, pe, rasch).cwiseProduct(probe).sum(); };
    EmbeddingParams<double> g;
    g.question = Matrix<double>::Zero(p.question.rows(), d);
    g.difficulty = Matrix<double>::Zero(p.difficulty.rows(), p.difficulty.cols());
    g.response = Matrix<double>::Zero(p.response.rows(), d);
    compose_sequence_backward(batch, 0, probe, p, rasch, g);
    for (auto [table, grad] : {std::pair{&p.question, &g.question}, std::pair{&p.difficulty, &g.difficulty},
                               std::pair{&p.response, &g.response}}) {
      for (Eigen::Index i = 0; i < table->size(); ++i) {
        const double keep = table->data()[i];
        table->data()[i] = keep + 1e-6;
        const double up = f();
        table->data()[i] = keep - 1e-6;
        const double down = f();
        table->data()[i] = keep;
        const bool pad_entry = table == &p.question && i / d == Q;
        const double numeric = pad_entry ? 0.0 : (up - down) / 2e-6;
        CHECK(grad->data()[i] == doctest::Approx(numeric).epsilon(1e-6));
      }
    }
  }
}

}  // TEST_SUITE
