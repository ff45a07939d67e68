#include "emos/errors.hpp"
#include "emos/grad_check.hpp"
#include "emos/ops.hpp"

#include <doctest.h>

using namespace emos;

TEST_CASE("tensor views and reshape") {
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m.matrix()(1, 0) == 4.0);
  CHECK(Tensor::vector({1, 2, 3}).rows() == 1);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK(m.reshaped({3, 2}).matrix()(2, 1) == 6.0);
  CHECK_THROWS_AS(m.reshaped({4, 2}), DimensionError);
  CHECK_THROWS_AS(m.item(), ArgumentError);
  Tensor c(Shape{2, 3, 4});
  CHECK(c.rows() == 2);
  CHECK(c.cols() == 12);
}

TEST_CASE("backward accumulates fan-out") {
  Tape tape;
  const Var x = tape.variable(Tensor::scalar(3.0));
  const Var y = add(mul(x, x), x);  // x^2 + x
  tape.backward(y);
  CHECK(tape.grad(x).item() == doctest::Approx(7.0));
}

TEST_CASE("backward needs a scalar root and runs once") {
  Tape tape;
  const Var x = tape.variable(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(tape.backward(x), ArgumentError);
  const Var s = sum(x);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), ArgumentError);
}

TEST_CASE("parameters accumulate gradients across tapes") {
  Parameter p("p", Tensor::vector({1.0, -2.0}));
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    const Var v = tape.parameter(p);
    CHECK(tape.parameter(p).id() == v.id());
    tape.backward(sum(mul(v, v)));
  }
  CHECK(p.grad[0] == 4.0);
  CHECK(p.grad[1] == -8.0);
  p.zero_grad();
  CHECK(p.grad.flat().isZero());
}

TEST_CASE("grad-disabled tapes record values only") {
  Parameter p("p", Tensor::vector({1.0}));
  Tape tape;
  tape.set_grad_enabled(false);
  const Var v = tape.parameter(p);
  CHECK_FALSE(v.requires_grad());
  CHECK_FALSE(relu(v).requires_grad());
  CHECK(tape.count("relu") == 1);
}

TEST_CASE("mixing tapes is rejected") {
  Tape a, b;
  const Var x = a.variable(Tensor::scalar(1.0));
  const Var y = b.variable(Tensor::scalar(1.0));
  CHECK_THROWS_AS(add(x, y), ArgumentError);
}

TEST_CASE("grad_check rejects non-scalar functions") {
  CHECK_THROWS_AS(grad_check([](Var x) { return x; }, Tensor::vector({1, 2})), ArgumentError);
}

TEST_CASE("grad_check flags a wrong derivative") {
  // relu at a kink: one-sided slopes differ, central difference gives 0.5
  const double err = grad_check([](Var x) { return sum(relu(x)); }, Tensor::vector({0.0}));
  CHECK(err > 0.1);
}
