#include <doctest.h>

#include "plte/tensor.hpp"
#include "testutil.hpp"

#include <cmath>

using namespace plte;
using test::gradient_check;
using test::random_tensor;
using test::weighted_sum;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("matmul identity and zero") {
  Rng rng(7);
  Tensor a = random_tensor({3, 3}, rng);
  Mat eye = Mat::Identity(3, 3);
  Tensor i = Tensor::from_matrix(eye);
  CHECK((matmul(a, i).mat() - a.mat()).cwiseAbs().maxCoeff() == 0.0);
  Tensor z = Tensor::zeros({3, 4});
  CHECK(matmul(a, z).values().abs().maxCoeff() == 0.0);
}

TEST_CASE("matmul equals triple loop") {
  Rng rng(11);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  Tensor c = matmul(a, b);
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 2; ++j) {
      Scalar ref = 0;
      for (Index k = 0; k < 4; ++k) ref += a.mat()(i, k) * b.mat()(k, j);
      CHECK(std::abs(c.mat()(i, j) - ref) < 1e-12);
    }
  }
}

TEST_CASE("matmul shape mismatch") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  CHECK_THROWS(matmul(a, b));
}

TEST_CASE("softmax_rows basics") {
  Tensor x = Tensor::zeros({1, 4});
  Tensor y = softmax_rows(x);
  for (Index j = 0; j < 4; ++j) CHECK(y.values()(j) == doctest::Approx(0.25));

  Tensor x2 = Tensor::zeros({1, 2});
  BoolArr mask(1, 2);
  mask << true, false;
  Tensor y2 = softmax_rows(x2, &mask);
  CHECK(y2.values()(0) == 1.0);
  CHECK(y2.values()(1) == 0.0);

  BoolArr dead = BoolArr::Constant(1, 2, false);
  CHECK_THROWS(softmax_rows(x2, &dead));
}

TEST_CASE("softmax_rows rows sum to one over unmasked") {
  Rng rng(3);
  Tensor x = random_tensor({6, 5}, rng, 4.0);
  BoolArr mask(6, 5);
  std::bernoulli_distribution coin(0.6);
  for (Index i = 0; i < 6; ++i) {
    bool any = false;
    for (Index j = 0; j < 5; ++j) {
      mask(i, j) = coin(rng);
      any = any || mask(i, j);
    }
    if (!any) mask(i, 0) = true;
  }
  Tensor y = softmax_rows(x, &mask);
  for (Index i = 0; i < 6; ++i) {
    Scalar sum = 0;
    for (Index j = 0; j < 5; ++j) {
      if (mask(i, j)) {
        sum += y.mat()(i, j);
      } else {
        CHECK(y.mat()(i, j) == 0.0);
      }
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("masked softmax entries get zero gradient") {
  Rng rng(5);
  Tensor x = random_tensor({3, 4}, rng);
  BoolArr mask = BoolArr::Constant(3, 4, true);
  mask(0, 2) = false;
  mask(2, 0) = false;
  Tape tape;
  Tensor loss = weighted_sum(softmax_rows(x, &mask));
  backward(loss);
  CHECK(x.grad()(0 * 4 + 2) == 0.0);
  CHECK(x.grad()(2 * 4 + 0) == 0.0);
}

TEST_CASE("relation_score_bias hand cases") {
  Tensor q0 = Tensor::zeros({2, 3});
  Tensor rk0 = Tensor::zeros({2, 2, 3});
  CHECK(relation_score_bias(q0, rk0).values().abs().maxCoeff() == 0.0);

  Tensor q = Tensor::from_flat({2, 1}, [] { ArrX v(2); v << 2, 3; return v; }());
  Tensor rk = Tensor::full({2, 2, 1}, 1.0);
  Tensor out = relation_score_bias(q, rk);
  CHECK(out.mat()(0, 0) == 2.0);
  CHECK(out.mat()(0, 1) == 2.0);
  CHECK(out.mat()(1, 0) == 3.0);
  CHECK(out.mat()(1, 1) == 3.0);
}

TEST_CASE("relation_score_bias equals triple loop") {
  Rng rng(17);
  const Index n = 5, dk = 7;
  Tensor q = random_tensor({n, dk}, rng);
  Tensor rk = random_tensor({n, n, dk}, rng);
  Tensor out = relation_score_bias(q, rk);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      Scalar ref = 0;
      for (Index k = 0; k < dk; ++k)
        ref += q.values()(i * dk + k) * rk.values()((i * n + j) * dk + k);
      CHECK(std::abs(out.mat()(i, j) - ref) < 1e-12);
    }
  }
}

TEST_CASE("relation_value_bias hand cases") {
  const Index n = 3, dv = 2;
  Tensor alpha = Tensor::from_matrix(Mat::Identity(n, n));
  Rng rng(23);
  Tensor rv = random_tensor({n, n, dv}, rng);
  Tensor out = relation_value_bias(alpha, rv);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < dv; ++j)
      CHECK(out.mat()(i, j) == rv.values()((i * n + i) * dv + j));

  // rows of alpha summing to 1 against all-ones values give all ones
  Tensor a2 = Tensor::full({n, n}, 1.0 / n);
  Tensor rv2 = Tensor::full({n, n, dv}, 1.0);
  Tensor out2 = relation_value_bias(a2, rv2);
  for (Index i = 0; i < out2.size(); ++i) CHECK(out2.values()(i) == doctest::Approx(1.0));
}

TEST_CASE("relation_value_bias equals triple loop") {
  Rng rng(29);
  const Index n = 5, dv = 6;
  Tensor alpha = random_tensor({n, n}, rng);
  Tensor rv = random_tensor({n, n, dv}, rng);
  Tensor out = relation_value_bias(alpha, rv);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < dv; ++j) {
      Scalar ref = 0;
      for (Index k = 0; k < n; ++k)
        ref += alpha.mat()(i, k) * rv.values()((i * n + k) * dv + j);
      CHECK(std::abs(out.mat()(i, j) - ref) < 1e-12);
    }
  }
}

TEST_CASE("elementwise basics") {
  Tensor z = Tensor::zeros({1, 1});
  CHECK(sigmoid(z).item() == 0.5);
  CHECK(plte::tanh(z).item() == 0.0);

  Rng rng(31);
  Tensor x = random_tensor({2, 3}, rng);
  Tensor same = dropout(x, 0.0, true, rng);
  CHECK(same.same_storage(x));
  Tensor eval_same = dropout(x, 0.5, false, rng);
  CHECK(eval_same.same_storage(x));
  CHECK_THROWS(dropout(x, 1.0, true, rng));
  CHECK_THROWS(dropout(x, -0.1, true, rng));
}

TEST_CASE("backward basics") {
  Rng rng(37);
  Tensor x = random_tensor({2, 3}, rng);
  {
    Tape tape;
    Tensor loss = sum_all(x);
    backward(loss);
    for (Index i = 0; i < x.size(); ++i) CHECK(x.grad()(i) == 1.0);
  }
  x.zero_grad();
  Tensor s = Tensor::leaf({1, 1}, ArrX::Constant(1, 3.0), true);
  {
    Tape tape;
    Tensor loss = mul(s, s);
    backward(loss);
    CHECK(s.grad()(0) == 6.0);
  }
}

TEST_CASE("backward without tape or scalar") {
  Tensor x = Tensor::leaf({1, 1}, ArrX::Constant(1, 1.0), true);
  CHECK_THROWS(backward(x));  // no active tape
  Tape tape;
  Tensor v = random_tensor({2, 2}, *[] { static Rng r(1); return &r; }());
  Tensor y = add(v, v);
  CHECK_THROWS(backward(y));  // not a scalar
}

TEST_CASE("repeated backward accumulates") {
  Rng rng(41);
  Tensor x = random_tensor({2, 2}, rng);
  Tape tape;
  Tensor loss = sum_all(x);
  backward(loss);
  backward(loss);
  for (Index i = 0; i < x.size(); ++i) CHECK(x.grad()(i) == 2.0);
}

TEST_CASE("backward deterministic across runs") {
  auto run = [] {
    Rng rng(99);
    Tensor a = random_tensor({4, 3}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    Tape tape;
    Tensor loss = weighted_sum(sigmoid(matmul(a, b)));
    Tensor d = dropout(plte::tanh(matmul(a, b)), 0.3, true, rng);
    loss = add(loss, weighted_sum(d));
    backward(loss);
    ArrX out(a.grad().size() + b.grad().size());
    out << a.grad(), b.grad();
    return out;
  };
  ArrX g1 = run();
  ArrX g2 = run();
  CHECK((g1 == g2).all());
}

TEST_CASE("finite differences: every differentiable op") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    Rng rng(seed);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    Tensor m = random_tensor({4, 2}, rng);
    Tensor row = random_tensor({1, 4}, rng);
    Tensor col = random_tensor({3, 1}, rng);
    Tensor sq = random_tensor({4, 4}, rng);
    Tensor t3 = random_tensor({3, 3, 4}, rng);
    Tensor q3 = random_tensor({3, 4}, rng);
    Tensor av = random_tensor({3, 3}, rng);
    Tensor gain = random_tensor({1, 4}, rng, 0.5);
    Tensor bias = random_tensor({1, 4}, rng, 0.5);

    auto check = [&](std::vector<Tensor> params, std::function<Tensor()> f) {
      CHECK(gradient_check(std::move(params), f) < 1e-4);
    };

    check({a, b}, [&] { return weighted_sum(add(a, b)); });
    check({a, b}, [&] { return weighted_sum(sub(a, b)); });
    check({a, b}, [&] { return weighted_sum(mul(a, b)); });
    check({a}, [&] { return weighted_sum(scale(a, -1.7)); });
    check({a}, [&] { return weighted_sum(sigmoid(a)); });
    check({a}, [&] { return weighted_sum(plte::tanh(a)); });
    check({a, m}, [&] { return weighted_sum(matmul(a, m)); });
    check({a}, [&] { return weighted_sum(transpose(a)); });
    check({a, row}, [&] { return weighted_sum(add_rowvec(a, row)); });
    check({a, col}, [&] { return weighted_sum(add_colvec(a, col)); });
    check({a}, [&] {
      Vec c(3);
      c << 0.5, -1.25, 2.0;
      return weighted_sum(mul_colvec(a, c));
    });
    check({a, b}, [&] {
      std::vector<Tensor> parts = {a, b};
      return weighted_sum(concat(parts, 0));
    });
    check({a, b}, [&] {
      std::vector<Tensor> parts = {a, b};
      return weighted_sum(concat(parts, 1));
    });
    check({a}, [&] { return weighted_sum(rows(a, 1, 2)); });
    check({a}, [&] { return weighted_sum(cols(a, 1, 2)); });
    check({a}, [&] { return weighted_sum(reshape(a, {4, 3})); });
    check({a}, [&] { return weighted_sum(mean_rows(a)); });
    check({a}, [&] { return sum_all(a); });
    check({a}, [&] { return weighted_sum(softmax_rows(a)); });
    check({a}, [&] {
      BoolArr mask = BoolArr::Constant(3, 4, true);
      mask(0, 1) = false;
      mask(2, 3) = false;
      return weighted_sum(softmax_rows(a, &mask));
    });
    check({a}, [&] { return weighted_sum(logsumexp_rows(a)); });
    check({av, sq}, [&] {
      return weighted_sum(logsumexp_bilinear(av, cols(rows(sq, 0, 3), 0, 3)));
    });
    check({sq}, [&] {
      std::vector<Index> ids = {2, 0, 3, 3, 1};
      return weighted_sum(gather_rows(sq, ids));
    });
    check({sq}, [&] {
      std::vector<Index> r = {0, 1, 3, 3};
      std::vector<Index> c = {2, 0, 1, 1};
      return weighted_sum(pick(sq, r, c));
    });
    check({q3, t3}, [&] { return weighted_sum(relation_score_bias(q3, t3)); });
    check({av, t3}, [&] { return weighted_sum(relation_value_bias(av, t3)); });
    check({a, gain, bias}, [&] { return weighted_sum(layernorm_rows(a, gain, bias)); });
    check({a}, [&] {
      Rng drop_rng(1234);
      return weighted_sum(dropout(a, 0.4, true, drop_rng));
    });
  }
}

TEST_SUITE_END();
