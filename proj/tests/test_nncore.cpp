#include <doctest.h>

#include <cmath>

#include "fishdet/errors.hpp"
#include "fishdet/rng.hpp"
#include "fishdet/tensor.hpp"

using namespace fishdet;
using namespace fishdet::nn;

TEST_CASE("matmul identity and shape errors") {
  Tape<float> tape;
  auto eye = tape.constant(Tensor<float>({2, 2}, {1, 0, 0, 1}));
  auto b = tape.constant(Tensor<float>({2, 3}, {1, 2, 3, 4, 5, 6}));
  auto c = tape.matmul(eye, b);
  CHECK(tape.value(c).shape == Shape{2, 3});
  CHECK(tape.value(c).data == tape.value(b).data);
  try {
    tape.matmul(b, b);
    FAIL("expected shape error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
  }
  CHECK_THROWS_AS(tape.add(eye, b), std::invalid_argument);
}

TEST_CASE("activation values") {
  Tape<float> tape;
  auto z = tape.constant(Tensor<float>({3}, {0.0f, -3.0f, 2.0f}));
  CHECK(tape.value(tape.sigmoid(z)).data[0] == 0.5f);
  CHECK(tape.value(tape.tanh(z)).data[0] == 0.0f);
  CHECK(tape.value(tape.relu(z)).data[1] == 0.0f);
  CHECK(tape.value(tape.relu(z)).data[2] == 2.0f);
  CHECK(sigmoid_scalar(-1000.0) == doctest::Approx(0.0));
  CHECK(sigmoid_scalar(1000.0) == 1.0);
}

TEST_CASE("dropout") {
  Rng rng(1);
  Tape<float> tape;
  auto x = tape.constant(Tensor<float>({1000}, 1.0f));
  CHECK(tape.dropout(x, 0.0, true, rng).id == x.id);
  CHECK(tape.dropout(x, 0.5, false, rng).id == x.id);
  const auto& d = tape.value(tape.dropout(x, 0.25, true, rng));
  std::size_t dropped = 0;
  for (float v : d.data) {
    if (v == 0.0f) {
      ++dropped;
    } else {
      CHECK(v == doctest::Approx(1.0f / 0.75f));
    }
  }
  CHECK(dropped > 180);
  CHECK(dropped < 320);
  CHECK_THROWS_AS(tape.dropout(x, 1.0, true, rng), std::invalid_argument);
}

TEST_CASE("linear map gradient") {
  Parameter<double> W("W", Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}));
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>({3, 1}, {0.5, -1.0, 2.0}));
  tape.backward(tape.sum(tape.matmul(tape.param(W), x)));
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(W.grad.at(r, 0) == 0.5);
    CHECK(W.grad.at(r, 1) == -1.0);
    CHECK(W.grad.at(r, 2) == 2.0);
  }
}

TEST_CASE("sigmoid derivative at zero") {
  Parameter<double> z("z", Tensor<double>({1}, {0.0}));
  Tape<double> tape;
  tape.backward(tape.sum(tape.sigmoid(tape.param(z))));
  CHECK(z.grad.data[0] == doctest::Approx(0.25));
}

TEST_CASE("gradients accumulate additively") {
  Parameter<double> a("a", Tensor<double>({3}, {0.3, -0.2, 0.9}));
  auto loss1 = [&](Tape<double>& t) { return t.sum(t.tanh(t.param(a))); };
  auto loss2 = [&](Tape<double>& t) { return t.mean(t.mul(t.param(a), t.param(a))); };

  a.zero_grad();
  { Tape<double> t; t.backward(t.add(loss1(t), loss2(t))); }
  const auto together = a.grad.data;

  a.zero_grad();
  { Tape<double> t; t.backward(loss1(t)); }
  { Tape<double> t; t.backward(loss2(t)); }
  for (std::size_t i = 0; i < 3; ++i) CHECK(a.grad.data[i] == doctest::Approx(together[i]));
}

TEST_CASE("backward errors") {
  Tape<float> tape;
  CHECK_THROWS_AS(tape.backward(Var{0}), StateError);
  auto v = tape.constant(Tensor<float>({2}, {1, 2}));
  CHECK_THROWS_AS(tape.backward(v), std::invalid_argument);
}

TEST_CASE("non-finite values trip a numeric fault") {
  Tape<float> tape;
  auto big = tape.constant(Tensor<float>({1}, {3e38f}));
  CHECK_THROWS_AS(tape.scale(big, 10.0f), NumericFault);
  CHECK_THROWS_AS(tape.constant(Tensor<float>({1}, {NAN})), NumericFault);
}

TEST_CASE("bce_with_logits is stable") {
  Tape<double> tape;
  auto z = tape.constant(Tensor<double>({3}, {0.0, 800.0, -800.0}));
  const std::vector<double> y = {1.0, 1.0, 0.0};
  CHECK(tape.value(tape.bce_with_logits(z, y)).data[0] == doctest::Approx(std::log(2.0) / 3.0));
}

TEST_CASE("row ops and gathers backpropagate") {
  Parameter<double> t("t", Tensor<double>({3, 2}, {1, 2, 3, 4, 5, 6}));
  Tape<double> tape;
  const std::vector<int> rows = {2, 2, 0};
  auto g = tape.gather_rows(tape.param(t), rows);
  CHECK(tape.value(g).data == std::vector<double>{5, 6, 5, 6, 1, 2});
  tape.backward(tape.sum(g));
  CHECK(t.grad.data == std::vector<double>{1, 1, 0, 0, 2, 2});
}
