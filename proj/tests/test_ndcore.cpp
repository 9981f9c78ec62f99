#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "mhcl/sparse.hpp"
#include "mhcl/tape.hpp"
#include "test_util.hpp"

using namespace mhcl;
using testutil::fd_check;
using testutil::random_matrix;

TEST_CASE("matmul identity and triple-loop oracle") {
  Matrix a(2, 2, {1, 2, 3, 4});
  Matrix p = matmul(a, Matrix::identity(2));
  CHECK(p.data == std::vector<double>({1, 2, 3, 4}));

  Matrix col(2, 1, {5, 7});
  Matrix q = matmul(Matrix::identity(2), col);
  CHECK(q.data == std::vector<double>({5, 7}));

  Rng rng(7);
  Matrix x = random_matrix(3, 4, rng), y = random_matrix(4, 2, rng);
  Matrix z = matmul(x, y);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 4; ++k) s += x(i, k) * y(k, j);
      CHECK(z(i, j) == doctest::Approx(s).epsilon(1e-12));
    }
  Matrix bad(3, 3);
  CHECK_THROWS_AS((void)matmul(a, bad), Error);
}

TEST_CASE("matmul is deterministic across worker counts") {
  Rng rng(11);
  Matrix a = random_matrix(200, 40, rng), b = random_matrix(40, 30, rng);
  set_worker_count(1);
  Matrix one = matmul(a, b);
  for (std::size_t w : {2, 3, 7}) {
    set_worker_count(w);
    CHECK(matmul(a, b).data == one.data);
  }
  set_worker_count(1);
}

TEST_CASE("rowwise softmax values") {
  Tape t;
  Var x = t.leaf(Matrix(2, 3, {0, 0, 0, 1, 2, 3}));
  const Matrix& s = t.value(t.rowwise_softmax(x, 1.0));
  CHECK(s(0, 0) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int j = 0; j < 3; ++j)
    CHECK(s(1, j) == doctest::Approx(std::exp(1.0 + j) / z).epsilon(1e-12));

  // rows sum to one, entries in (0,1), stable under huge inputs
  Tape t2;
  Rng rng(3);
  Matrix big = random_matrix(4, 5, rng, -800, 800);
  const Matrix& p = t2.value(t2.rowwise_softmax(t2.leaf(big), 0.5));
  for (std::size_t i = 0; i < 4; ++i) {
    double rowsum = 0;
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(p(i, j) >= 0.0);
      CHECK(p(i, j) <= 1.0);
      rowsum += p(i, j);
    }
    CHECK(rowsum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("leaky relu and simple elementwise values") {
  Tape t;
  Var x = t.leaf(Matrix(1, 3, {5, -10, 0}));
  const Matrix& y = t.value(t.leaky_relu(x, 0.2));
  CHECK(y.data == std::vector<double>({5, -2, 0}));

  CHECK(t.value(t.frobenius_sq(t.leaf(Matrix(2, 2, {1, 2, 3, 4})))).item() == 30.0);
  CHECK(t.value(t.frobenius_sq(t.leaf(Matrix::zeros(3, 3)))).item() == 0.0);

  Var c = t.concat_cols({t.leaf(Matrix::zeros(2, 3)), t.leaf(Matrix::zeros(2, 4))});
  CHECK(t.value(c).cols == 7);
  CHECK_THROWS_AS((void)t.log(t.leaf(Matrix(1, 1, {-1.0}))), Error);

  // softplus survives large inputs
  const Matrix& sp = t.value(t.softplus(t.leaf(Matrix(1, 2, {1000, -1000}))));
  CHECK(sp(0, 0) == doctest::Approx(1000.0).epsilon(1e-12));
  CHECK(sp(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("trivial backward cases") {
  Tape t;
  Var w = t.leaf(Matrix(1, 1, {3.0}));
  t.backward(t.frobenius_sq(w));
  CHECK(t.grad(w)(0, 0) == 6.0);

  // node not on the path to the loss gets zero gradient
  Tape t2;
  Var a = t2.leaf(Matrix(1, 1, {2.0}));
  Var unused = t2.leaf(Matrix(1, 1, {5.0}));
  t2.backward(t2.frobenius_sq(a));
  CHECK(t2.grad(unused)(0, 0) == 0.0);

  // non-scalar loss refused
  Tape t3;
  Var m = t3.leaf(Matrix(2, 2));
  CHECK_THROWS_AS(t3.backward(m), Error);
}

TEST_CASE("gradients match finite differences for every op") {
  Rng rng(42);
  auto m34 = [&] { return random_matrix(3, 4, rng); };

  CHECK(fd_check({m34(), random_matrix(4, 2, rng)}, [](Tape& t, const std::vector<Var>& v) {
          return t.reduce_sum(t.matmul(v[0], v[1]));
        }) < 1e-4);
  CHECK(fd_check({m34(), m34()}, [](Tape& t, const std::vector<Var>& v) {
          return t.reduce_sum(t.mul(t.add(v[0], v[1]), t.sub(v[0], v[1])));
        }) < 1e-4);
  CHECK(fd_check({m34()}, [](Tape& t, const std::vector<Var>& v) {
          return t.reduce_sum(t.scalar_mul(t.add_const(v[0], 0.3), -1.7));
        }) < 1e-4);
  CHECK(fd_check({m34(), m34()}, [](Tape& t, const std::vector<Var>& v) {
          return t.frobenius_sq(t.concat_cols({v[0], v[1]}));
        }) < 1e-4);
  CHECK(fd_check({m34(), m34()}, [](Tape& t, const std::vector<Var>& v) {
          return t.frobenius_sq(t.concat_rows({v[0], v[1]}));
        }) < 1e-4);
  CHECK(fd_check({m34()}, [](Tape& t, const std::vector<Var>& v) {
          return t.frobenius_sq(t.slice_rows(v[0], 1, 2));
        }) < 1e-4);
  CHECK(fd_check({m34()}, [](Tape& t, const std::vector<Var>& v) {
          return t.frobenius_sq(t.slice_cols(v[0], 1, 3));
        }) < 1e-4);
  CHECK(fd_check({random_matrix(3, 4, rng, 0.5, 2.0)},
                 [](Tape& t, const std::vector<Var>& v) {
                   return t.reduce_sum(t.log(v[0]));
                 }) < 1e-4);
  CHECK(fd_check({random_matrix(3, 4, rng, 0.5, 2.0)},
                 [](Tape& t, const std::vector<Var>& v) {
                   return t.reduce_sum(t.log_clamped(v[0]));
                 }) < 1e-4);
  CHECK(fd_check({m34()}, [](Tape& t, const std::vector<Var>& v) {
          return t.reduce_sum(t.exp(v[0]));
        }) < 1e-4);
  CHECK(fd_check({m34()}, [](Tape& t, const std::vector<Var>& v) {
          return t.frobenius_sq(t.tanh(v[0]));
        }) < 1e-4);
  CHECK(fd_check({m34()}, [](Tape& t, const std::vector<Var>& v) {
          return t.reduce_sum(t.softplus(v[0]));
        }) < 1e-4);
  CHECK(fd_check({m34()}, [](Tape& t, const std::vector<Var>& v) {
          return t.frobenius_sq(t.leaky_relu(v[0], 0.2));
        }) < 1e-4);
  CHECK(fd_check({m34()}, [](Tape& t, const std::vector<Var>& v) {
          return t.frobenius_sq(t.rowwise_softmax(v[0], 0.7));
        }) < 1e-4);
  CHECK(fd_check({m34()}, [](Tape& t, const std::vector<Var>& v) {
          return t.frobenius_sq(t.add_const(t.l2_normalize_rows(v[0]), 0.1));
        }) < 1e-4);
  CHECK(fd_check({m34()}, [](Tape& t, const std::vector<Var>& v) {
          return t.frobenius_sq(t.transpose(v[0]));
        }) < 1e-4);
  CHECK(fd_check({m34()}, [](Tape& t, const std::vector<Var>& v) {
          return t.frobenius_sq(t.col_sum(v[0]));
        }) < 1e-4);
  CHECK(fd_check({m34(), random_matrix(3, 1, rng)},
                 [](Tape& t, const std::vector<Var>& v) {
                   return t.frobenius_sq(t.row_scale(v[0], v[1]));
                 }) < 1e-4);
  CHECK(fd_check({random_matrix(3, 4, rng, 0.5, 2.0)},
                 [](Tape& t, const std::vector<Var>& v) {
                   return t.reduce_sum(t.recip(v[0]));
                 }) < 1e-4);
  CHECK(fd_check({m34(), m34()}, [](Tape& t, const std::vector<Var>& v) {
          return t.frobenius_sq(t.row_dot(v[0], v[1]));
        }) < 1e-4);

  auto idx = std::make_shared<const std::vector<std::size_t>>(
      std::vector<std::size_t>{2, 0, 2, 1});
  CHECK(fd_check({m34()}, [idx](Tape& t, const std::vector<Var>& v) {
          return t.frobenius_sq(t.gather_rows(v[0], idx));
        }) < 1e-4);
}

TEST_CASE("gradients for sparse and fused ops") {
  Rng rng(99);
  auto sp = std::make_shared<SparseMatrix>(SparseMatrix::from_triplets(
      5, 5, {0, 1, 2, 3, 4}, {1, 0, 3, 2, 4}, {0.5, 0.5, 1.25, 1.25, 2.0}));
  CHECK(fd_check({random_matrix(5, 3, rng)}, [sp](Tape& t, const std::vector<Var>& v) {
          return t.frobenius_sq(t.spmm(sp, v[0]));
        }) < 1e-4);

  CHECK(fd_check({random_matrix(5, 4, rng), random_matrix(5, 4, rng)},
                 [](Tape& t, const std::vector<Var>& v) {
                   return t.infonce(t.l2_normalize_rows(v[0]), t.l2_normalize_rows(v[1]), 0.3);
                 }) < 1e-4);

  auto pairs = std::make_shared<const std::vector<Pair>>(
      std::vector<Pair>{{0, 0}, {1, 2}, {2, 1}, {0, 2}});
  CHECK(fd_check({random_matrix(6, 3, rng), random_matrix(3, 3, rng), random_matrix(3, 3, rng)},
                 [pairs](Tape& t, const std::vector<Var>& v) {
                   Var logits = t.bilinear_logits(v[0], {v[1], v[2]}, pairs, 3);
                   return t.frobenius_sq(t.rowwise_softmax(logits, 1.0));
                 }) < 1e-4);
}

TEST_CASE("backward twice is pure") {
  Rng rng(5);
  Tape t;
  Var a = t.leaf(random_matrix(3, 3, rng));
  Var b = t.leaf(random_matrix(3, 3, rng));
  Var loss = t.frobenius_sq(t.tanh(t.matmul(a, b)));
  t.backward(loss);
  Matrix first = t.grad(a);
  t.backward(loss);
  CHECK(t.grad(a).data == first.data);
}

TEST_CASE("adam oracle") {
  // zero gradient leaves parameters untouched
  Matrix p(1, 1, {2.5}), g0(1, 1, {0.0});
  AdamState st;
  st.lr = 0.1;
  adam_step({&p}, {&g0}, st);
  CHECK(p(0, 0) == 2.5);

  // first step with g=1 moves by ~lr in the negative direction
  Matrix q(1, 1, {0.0}), g1(1, 1, {1.0});
  AdamState st2;
  st2.lr = 0.1;
  adam_step({&q}, {&g1}, st2);
  CHECK(q(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));

  // a few steps against a scalar hand implementation
  double theta = 1.3, m = 0, v = 0;
  Matrix pp(1, 1, {1.3});
  AdamState st3;
  st3.lr = 0.05;
  for (int step = 1; step <= 4; ++step) {
    double grad = 2.0 * theta;  // d/dθ θ²
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    double mh = m / (1 - std::pow(0.9, step));
    double vh = v / (1 - std::pow(0.999, step));
    theta -= 0.05 * mh / (std::sqrt(vh) + 1e-8);

    Matrix gg(1, 1, {2.0 * pp(0, 0)});
    adam_step({&pp}, {&gg}, st3);
    CHECK(pp(0, 0) == doctest::Approx(theta).epsilon(1e-10));
  }
  CHECK(st3.step == 4);
}

TEST_CASE("xavier initialization") {
  Matrix a = xavier_init(20, 30, 123);
  Matrix b = xavier_init(20, 30, 123);
  CHECK(a.data == b.data);
  double bound = std::sqrt(6.0 / 50.0);
  for (double x : a.data) CHECK(std::abs(x) <= bound);

  Matrix wide = xavier_init(100, 100, 7);
  double mean = 0;
  for (double x : wide.data) mean += x;
  mean /= wide.numel();
  CHECK(std::abs(mean) < 0.01);
}

TEST_CASE("rng stream is stable") {
  Rng r1(2024), r2(2024);
  for (int i = 0; i < 100; ++i) CHECK(r1.uniform() == r2.uniform());
  std::vector<int> v1{1, 2, 3, 4, 5, 6}, v2 = v1;
  r1.shuffle(v1);
  r2.shuffle(v2);
  CHECK(v1 == v2);
}
