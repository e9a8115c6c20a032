#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "vitc/error.hpp"
#include "vitc/ops.hpp"

using namespace vitc;
using vitc::testing::grad_check;
using vitc::testing::random_tensor;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("matmul hand cases") {
  const Tensor id({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Rng rng(1);
  const Tensor m = random_tensor({3, 4}, rng, 1.0f, false);
  CHECK(testing::to_vector(matmul(id, m)) == testing::to_vector(m));

  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor ones({2, 1}, {1, 1});
  const Tensor r = matmul(a, ones);
  CHECK(r.shape() == Shape{2, 1});
  CHECK(r.at(0) == 3.0f);
  CHECK(r.at(1) == 7.0f);

  CHECK(code_of([] { matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("matmul gradients match finite differences") {
  Rng rng(2);
  Tensor a = random_tensor({4, 5}, rng);
  Tensor b = random_tensor({5, 3}, rng);
  CHECK(grad_check([&] { return matmul(a, b); }, {a, b}).max_rel_error < 1e-3);

  Tensor x = random_tensor({2, 3, 4}, rng);
  Tensor w = random_tensor({4, 2}, rng);
  CHECK(grad_check([&] { return matmul(x, w); }, {x, w}).max_rel_error < 1e-3);
}

TEST_CASE("bmm and its transposed form") {
  Rng rng(3);
  Tensor a = random_tensor({2, 3, 4}, rng);
  Tensor b = random_tensor({2, 4, 5}, rng);
  Tensor c = random_tensor({2, 5, 4}, rng);
  CHECK(grad_check([&] { return bmm(a, b); }, {a, b}).max_rel_error < 1e-3);
  CHECK(grad_check([&] { return bmm(a, c, true); }, {a, c}).max_rel_error < 1e-3);

  // (a c^T)[0] against a plain loop.
  const Tensor r = bmm(a, c, true);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 4; ++k) acc += a.at(i * 4 + k) * c.at(j * 4 + k);
      CHECK(r.at(i * 5 + j) == doctest::Approx(acc).epsilon(1e-6));
    }
}

TEST_CASE("gelu reference values") {
  const Tensor x({3}, {0.0f, 10.0f, 1.0f});
  const Tensor y = gelu(x);
  CHECK(y.at(0) == 0.0f);
  CHECK(y.at(1) == doctest::Approx(10.0).epsilon(1e-6));
  // 0.5 * (1 + erf(1/sqrt 2)) in double.
  CHECK(y.at(2) == doctest::Approx(0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)))).epsilon(1e-6));
  CHECK(y.at(2) == doctest::Approx(0.8413).epsilon(1e-4));

  Rng rng(4);
  Tensor z = random_tensor({3, 7}, rng);
  CHECK(grad_check([&] { return gelu(z); }, {z}).max_rel_error < 1e-3);
}

TEST_CASE("softmax rows") {
  const Tensor c = softmax_rows(Tensor::full({2, 4}, 3.0f));
  for (float v : c.values()) CHECK(v == doctest::Approx(0.25));

  const Tensor big = softmax_rows(Tensor({2}, {1000.0f, 0.0f}));
  CHECK(std::isfinite(big.at(0)));
  CHECK(std::abs(big.at(0) - 1.0f) < 1e-6);
  CHECK(std::abs(big.at(1)) < 1e-6);

  Rng rng(5);
  Tensor x = random_tensor({4, 6}, rng, 2.0f);
  const Tensor s = softmax_rows(x);
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(s.at(r * 6 + j) >= 0.0f);
      total += s.at(r * 6 + j);
    }
    CHECK(std::abs(total - 1.0) < 1e-5);
  }
  CHECK(grad_check([&] { return softmax_rows(x); }, {x}).max_rel_error < 1e-3);
}

TEST_CASE("layer norm") {
  const Tensor g = Tensor::full({4}, 1.0f);
  const Tensor b = Tensor::zeros({4});
  const Tensor flat = layer_norm(Tensor::full({1, 4}, 5.0f), g, b);
  for (float v : flat.values()) CHECK(v == 0.0f);

  const Tensor pair = layer_norm(Tensor({1, 2}, {1.0f, -1.0f}), Tensor::full({2}, 1.0f), Tensor::zeros({2}));
  CHECK(pair.at(0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(pair.at(1) == doctest::Approx(-1.0).epsilon(1e-4));

  CHECK(code_of([&] { layer_norm(Tensor::zeros({2, 3}), g, b); }) == ErrorCode::DimensionMismatch);

  Rng rng(6);
  Tensor x = random_tensor({3, 8}, rng);
  Tensor gain = random_tensor({8}, rng);
  Tensor bias = random_tensor({8}, rng);
  CHECK(grad_check([&] { return layer_norm(x, gain, bias); }, {x, gain, bias}).max_rel_error < 1e-3);

  // Narrowed output keeps full-row statistics.
  const std::vector<int> keep = {1, 4, 6};
  Tensor kg = random_tensor({3}, rng);
  Tensor kb = random_tensor({3}, rng);
  const Tensor narrow = layer_norm(x, kg, kb, kLayerNormEps, keep);
  const Tensor full = layer_norm(x, Tensor::full({8}, 1.0f), Tensor::zeros({8}));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < keep.size(); ++j) {
      const float expect = full.at(r * 8 + static_cast<std::size_t>(keep[j])) * kg.at(j) + kb.at(j);
      CHECK(narrow.at(r * 3 + j) == doctest::Approx(expect).epsilon(1e-6));
    }
  CHECK(grad_check([&] { return layer_norm(x, kg, kb, kLayerNormEps, keep); }, {x, kg, kb}).max_rel_error < 1e-3);
}

TEST_CASE("dropout") {
  Rng rng(7);
  const Tensor x = Tensor::full({100000}, 1.0f);
  CHECK(dropout(x, 0.0f, true, rng).same_storage(x));
  CHECK(dropout(x, 0.5f, false, rng).same_storage(x));

  const Tensor y = dropout(x, 0.1f, true, rng);
  const auto zeros = std::count(y.values().begin(), y.values().end(), 0.0f);
  const double frac = static_cast<double>(zeros) / 100000.0;
  CHECK(frac >= 0.09);
  CHECK(frac <= 0.11);
  for (float v : y.values())
    if (v != 0.0f) CHECK(v == doctest::Approx(1.0 / 0.9));

  Rng a(11), b(11);
  CHECK(testing::to_vector(dropout(x, 0.3f, true, a)) == testing::to_vector(dropout(x, 0.3f, true, b)));

  CHECK(code_of([&] { dropout(x, 1.5f, true, rng); }) == ErrorCode::InvalidProbability);
  CHECK(code_of([&] { dropout(x, -0.1f, true, rng); }) == ErrorCode::InvalidProbability);
}

TEST_CASE("cross entropy") {
  const std::vector<int> labels = {3, 7};
  CHECK(cross_entropy_loss(Tensor::zeros({2, 10}), labels).item() == doctest::Approx(std::log(10.0)).epsilon(1e-6));

  std::vector<float> onehot(20, 0.0f);
  onehot[3] = 1e4f;
  onehot[10 + 7] = 1e4f;
  CHECK(std::abs(cross_entropy_loss(Tensor({2, 10}, onehot), labels).item()) < 1e-6);

  const std::vector<int> bad = {3, 10};
  CHECK(code_of([&] { cross_entropy_loss(Tensor::zeros({2, 10}), bad); }) == ErrorCode::LabelOutOfRange);

  Rng rng(8);
  Tensor logits = random_tensor({4, 5}, rng);
  const std::vector<int> l4 = {0, 4, 2, 2};
  CHECK(grad_check([&] { return cross_entropy_loss(logits, l4); }, {logits}).max_rel_error < 1e-3);
}

TEST_CASE("backward basics") {
  Tensor x({3}, {1.0f, -2.0f, 0.5f}, true);
  backward(sum(x));
  for (float g : x.grad()) CHECK(g == 1.0f);

  // Accumulates until cleared.
  backward(sum(x));
  for (float g : x.grad()) CHECK(g == 2.0f);
  x.zero_grad();

  backward(sum(mul(x, x)));
  for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == 2.0f * x.at(i));

  CHECK(code_of([&] { backward(x); }) == ErrorCode::NotScalar);
}

TEST_CASE("no-grad guard records nothing") {
  Tensor x({2}, {1.0f, 2.0f}, true);
  Tensor y;
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    y = mul(x, x);
  }
  CHECK(grad_enabled());
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("elementwise, reductions and shape ops pass gradient checks") {
  Rng rng(9);
  Tensor a = random_tensor({2, 3, 4}, rng);
  Tensor b = random_tensor({2, 3, 4}, rng);
  Tensor bias = random_tensor({4}, rng);
  Tensor table = random_tensor({3, 4}, rng);
  CHECK(grad_check([&] { return add(a, b); }, {a, b}).max_rel_error < 1e-3);
  CHECK(grad_check([&] { return add(a, bias); }, {a, bias}).max_rel_error < 1e-3);
  CHECK(grad_check([&] { return add(a, table); }, {a, table}).max_rel_error < 1e-3);
  CHECK(grad_check([&] { return mul(a, b); }, {a, b}).max_rel_error < 1e-3);
  CHECK(grad_check([&] { return mul(a, bias); }, {a, bias}).max_rel_error < 1e-3);
  CHECK(grad_check([&] { return scale(a, -0.7f); }, {a}).max_rel_error < 1e-3);
  CHECK(grad_check([&] { return sum(a); }, {a}).max_rel_error < 1e-3);
  CHECK(grad_check([&] { return abs_sum(a); }, {a}).max_rel_error < 1e-3);
  CHECK(grad_check([&] { return slice_last(a, 1, 2); }, {a}).max_rel_error < 1e-3);
  CHECK(grad_check([&] { return concat_last({slice_last(a, 2, 2), b}); }, {a, b}).max_rel_error < 1e-3);
  CHECK(grad_check([&] { return select_token(a, 1); }, {a}).max_rel_error < 1e-3);
  Tensor token = random_tensor({4}, rng);
  CHECK(grad_check([&] { return prepend_token(a, token); }, {a, token}).max_rel_error < 1e-3);

  CHECK(code_of([&] { add(a, Tensor::zeros({3})); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("abs_sum subgradient is zero at zero") {
  Tensor x({3}, {0.0f, 2.0f, -1.0f}, true);
  backward(abs_sum(x));
  CHECK(x.grad()[0] == 0.0f);
  CHECK(x.grad()[1] == 1.0f);
  CHECK(x.grad()[2] == -1.0f);
}

TEST_CASE("shared subexpression gradients accumulate through the graph") {
  Rng rng(10);
  Tensor x = random_tensor({3, 3}, rng);
  CHECK(grad_check([&] {
          const Tensor y = gelu(x);
          return add(matmul(y, y), y);
        },
                   {x})
            .max_rel_error < 1e-3);
}
