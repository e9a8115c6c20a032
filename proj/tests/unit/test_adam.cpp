#include <cmath>

#include "doctest.h"
#include "vitc/adam.hpp"
#include "vitc/error.hpp"
#include "vitc/ops.hpp"

using namespace vitc;

namespace {

// Textbook Adam on one scalar, all in double.
struct ScalarAdam {
  double lr, b1, b2, eps;
  double m = 0.0, v = 0.0;
  int t = 0;

  double step(double x, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return x - lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace

TEST_CASE("zero gradient leaves parameters unchanged") {
  Tensor p({3}, {1.0f, -2.0f, 3.5f}, true);
  p.mutable_grad();
  Adam adam({p});
  adam.step();
  CHECK(p.at(0) == 1.0f);
  CHECK(p.at(1) == -2.0f);
  CHECK(p.at(2) == 3.5f);
  CHECK(adam.step_count() == 1);
}

TEST_CASE("first step with unit gradient moves by lr") {
  Tensor p = Tensor::scalar(0.5f, true);
  p.mutable_grad()[0] = 1.0f;
  Adam adam({p});
  adam.step();
  CHECK(p.item() == doctest::Approx(0.5 - 1e-4).epsilon(1e-7));
}

TEST_CASE("five steps on a quadratic follow the scalar oracle") {
  Tensor p = Tensor::scalar(2.0f, true);
  Adam adam({p}, AdamOptions{0.05f});
  ScalarAdam ref{0.05, 0.9, 0.999, 1e-8};
  double x = 2.0;
  for (int i = 0; i < 5; ++i) {
    adam.zero_grad();
    backward(mul(p, p));
    adam.step();
    x = ref.step(x, 2.0 * x);
    CHECK(std::abs(p.item() - x) < 1e-6);
  }
  CHECK(adam.step_count() == 5);
  CHECK(adam.first_moment(0).size() == 1);
}

TEST_CASE("missing gradient is an error") {
  Tensor p({2}, {1.0f, 2.0f}, true);
  Adam adam({p});
  CHECK_THROWS_AS(adam.step(), Error);
  try {
    adam.step();
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingGrad);
  }
}

TEST_CASE("identical runs give identical trajectories") {
  auto run = [] {
    Tensor p({4}, {0.1f, -0.2f, 0.3f, 0.4f}, true);
    const Tensor target({4}, {1.0f, 2.0f, -1.0f, 0.0f});
    Adam adam({p}, AdamOptions{1e-2f});
    for (int i = 0; i < 20; ++i) {
      adam.zero_grad();
      const Tensor d = add(p, scale(target, -1.0f));
      backward(sum(mul(d, d)));
      adam.step();
    }
    return std::vector<float>(p.values().begin(), p.values().end());
  };
  CHECK(run() == run());
}
