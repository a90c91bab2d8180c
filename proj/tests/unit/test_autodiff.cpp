#include <cmath>
#include <limits>

#include "doctest.h"
#include "gradcheck.hpp"
#include "mcrfm/error.hpp"
#include "mcrfm/geometry.hpp"

using namespace mcrfm;
using testing::max_grad_error;
using testing::random_param;
using Vars = std::vector<ad::Var>;

namespace {

constexpr double kTol = 1e-4;

// Random-weight readout so every output entry gets a distinct gradient.
ad::Var readout(ad::Tape& t, ad::Var x, std::uint64_t key) {
  CounterRng rng(key);
  Matrix w(x.rows(), x.cols());
  for (double& v : w.data) v = rng.uniform(-1.0, 1.0);
  return ad::sum_all(ad::mul(x, t.constant(std::move(w))));
}

}  // namespace

TEST_CASE("squared norm has gradient 2p") {
  ad::ParamTensor p = random_param("p", 2, 3, -1.0, 1.0, 1);
  ad::Tape tape;
  ad::Var v = tape.param(p);
  tape.backward(ad::sum_all(ad::square(v)));
  for (std::size_t k = 0; k < p.value.size(); ++k) CHECK(p.grad.data[k] == doctest::Approx(2.0 * p.value.data[k]));
}

TEST_CASE("backward requires a finite scalar") {
  ad::ParamTensor p = random_param("p", 2, 2, -1.0, 1.0, 2);
  ad::Tape tape;
  ad::Var v = tape.param(p);
  CHECK_THROWS_AS(tape.backward(v), InvalidArgument);
  ad::Var bad = ad::scale(ad::sum_all(ad::square(v)), std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(tape.backward(bad), DivergenceError);
}

TEST_CASE("gradients accumulate across backward passes") {
  ad::ParamTensor p("p", Matrix(1, 1, 3.0));
  for (int i = 0; i < 2; ++i) {
    ad::Tape tape;
    tape.backward(ad::square(tape.param(p)));
  }
  CHECK(p.grad.data[0] == doctest::Approx(12.0));
}

TEST_CASE("elementwise and broadcasting ops match finite differences") {
  std::vector<ad::ParamTensor> in = {random_param("a", 3, 4, -1.0, 1.0, 3), random_param("row", 1, 4, 0.5, 1.5, 4),
                                     random_param("col", 3, 1, 0.5, 1.5, 5), random_param("s", 1, 1, 0.5, 1.5, 6)};
  CHECK(max_grad_error(in, [](ad::Tape& t, Vars& v) {
          ad::Var x = ad::add(ad::mul(v[0], v[1]), ad::div(v[0], v[2]));
          x = ad::sub(x, ad::mul(v[3], v[0]));
          x = ad::add_scalar(ad::scale(ad::neg(x), 0.7), 0.1);
          return readout(t, x, 7);
        }) <= kTol);
}

TEST_CASE("unary maps match finite differences") {
  std::vector<ad::ParamTensor> in = {random_param("a", 3, 3, 0.2, 2.0, 8)};
  CHECK(max_grad_error(in, [](ad::Tape& t, Vars& v) {
          const ad::Var parts[] = {ad::tanh(v[0]), ad::sigmoid(v[0]), ad::softplus(v[0]), ad::silu(v[0]),
                                   ad::square(v[0]), ad::sqrt_safe(v[0]), ad::log(v[0])};
          return readout(t, ad::concat_cols(parts), 9);
        }) <= kTol);
}

TEST_CASE("linear algebra ops match finite differences") {
  std::vector<ad::ParamTensor> in = {random_param("x", 4, 3, -1.0, 1.0, 10), random_param("w", 5, 3, -1.0, 1.0, 11),
                                     random_param("b", 1, 5, -1.0, 1.0, 12), random_param("m", 5, 2, -1.0, 1.0, 13)};
  CHECK(max_grad_error(in, [](ad::Tape& t, Vars& v) {
          ad::Var y = ad::linear(v[0], v[1], v[2]);
          return readout(t, ad::matmul(y, v[3]), 14);
        }) <= kTol);
}

TEST_CASE("reductions and reshaping match finite differences") {
  std::vector<ad::ParamTensor> in = {random_param("a", 4, 3, -1.0, 1.0, 15), random_param("b", 4, 2, -1.0, 1.0, 16)};
  CHECK(max_grad_error(in, [](ad::Tape& t, Vars& v) {
          const ad::Var cols[] = {v[0], v[1]};
          ad::Var c = ad::concat_cols(cols);
          ad::Var g = ad::gather_rows(c, {3, 0, 0, 2, 1});
          const ad::Var rows[] = {g, ad::mean_rows(c)};
          ad::Var r = ad::concat_rows(rows);
          ad::Var s = ad::slice_cols(r, 1, 3);
          ad::Var total = ad::add(readout(t, ad::reshape(s, 9, 2), 17), ad::sum_all(ad::row_sum(ad::square(s))));
          total = ad::add(total, ad::mean_all(ad::square(c)));
          return ad::add(total, ad::max_all(ad::square(g)));
        }) <= kTol);
}

TEST_CASE("stop_gradient blocks the backward pass") {
  ad::ParamTensor p = random_param("p", 2, 2, -1.0, 1.0, 18);
  ad::Tape tape;
  ad::Var v = tape.param(p);
  tape.backward(ad::add(ad::sum_all(ad::stop_gradient(ad::square(v))), ad::sum_all(v)));
  for (double g : p.grad.data) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("layer norm and softmax match finite differences") {
  std::vector<ad::ParamTensor> in = {random_param("a", 3, 5, -2.0, 2.0, 19)};
  CHECK(max_grad_error(in, [](ad::Tape& t, Vars& v) {
          const ad::Var parts[] = {ad::layer_norm(v[0]), ad::softmax_rows(v[0]), ad::log_softmax_rows(v[0])};
          return readout(t, ad::concat_cols(parts), 20);
        }) <= kTol);
}

TEST_CASE("layer norm is shift invariant") {
  ad::ParamTensor p = random_param("p", 1, 6, -1.0, 1.0, 21);
  ad::Tape tape;
  ad::Var v = tape.param(p);
  ad::Var y = ad::layer_norm(v);
  ad::Var y2 = ad::layer_norm(ad::add_scalar(v, 3.25));
  for (std::size_t k = 0; k < 6; ++k) CHECK(y.value().data[k] == doctest::Approx(y2.value().data[k]).epsilon(1e-12));
  // The gradient of any readout is orthogonal to the all-ones direction.
  tape.backward(readout(tape, y, 22));
  double s = 0.0;
  for (double g : p.grad.data) s += g;
  CHECK(std::abs(s) <= 1e-12);
}

TEST_CASE("ball maps match finite differences away from the boundary") {
  for (double c : {0.5, 1.0, 2.0}) {
    std::vector<ad::ParamTensor> in = {random_param("u", 3, 4, -0.4, 0.4, 23), random_param("y", 3, 4, -0.2, 0.2, 24)};
    CHECK(max_grad_error(in, [c](ad::Tape& t, Vars& v) {
            ad::Var x = ad::exp0(v[0], c);
            ad::Var back = ad::log0(x, c);
            ad::Var sum = ad::mobius_add_raw(x, v[1], c);
            const ad::Var parts[] = {x, back, sum, ad::ball_sq_norm_dist(sum, c)};
            return readout(t, ad::concat_cols(parts), 25);
          }) <= kTol);
  }
}

TEST_CASE("ball maps near the origin use the series branch") {
  std::vector<ad::ParamTensor> in = {random_param("u", 2, 3, -1e-6, 1e-6, 26)};
  CHECK(max_grad_error(in, [](ad::Tape& t, Vars& v) {
          ad::Var x = ad::exp0(v[0], 1.0);
          const ad::Var parts[] = {x, ad::log0(x, 1.0), ad::ball_sq_norm_dist(x, 1.0)};
          return readout(t, ad::concat_cols(parts), 27);
        }) <= kTol);
}

TEST_CASE("project_ball: identity inside, radial rescale Jacobian outside") {
  std::vector<ad::ParamTensor> inside = {random_param("x", 2, 3, -0.3, 0.3, 28)};
  CHECK(max_grad_error(inside, [](ad::Tape& t, Vars& v) { return readout(t, ad::project_ball(v[0], 1.0, 1e-5), 29); }) <=
        kTol);
  std::vector<ad::ParamTensor> outside = {random_param("x", 2, 3, 1.0, 2.0, 30)};
  CHECK(max_grad_error(outside, [](ad::Tape& t, Vars& v) { return readout(t, ad::project_ball(v[0], 1.0, 1e-5), 31); }) <=
        kTol);
  ad::Tape tape;
  ad::Var big = tape.constant(Matrix(1, 2, 5.0));
  const Matrix& p = ad::project_ball(big, 2.0, 1e-5).value();
  CHECK(std::sqrt(2.0) * std::hypot(p.data[0], p.data[1]) <= 1.0 - 1e-5);
  ad::Var nan = tape.constant(Matrix(1, 1, std::numeric_limits<double>::quiet_NaN()));
  CHECK_THROWS_AS(ad::project_ball(nan, 1.0, 1e-5), DivergenceError);
}

TEST_CASE("differentiable maps agree with the value API") {
  ad::Tape tape;
  const geo::Vec u{0.5, -0.25, 0.1};
  const Matrix x = ad::exp0(tape.constant(Matrix::row_vector(u)), 2.0).value();
  const geo::BallPoint ref = geo::exp0({u}, geo::Curvature(2.0));
  for (std::size_t k = 0; k < 3; ++k) CHECK(x.data[k] == ref.coords()[k]);
}

TEST_CASE("shape errors") {
  ad::Tape tape;
  ad::Var a = tape.constant(Matrix(2, 3));
  ad::Var b = tape.constant(Matrix(3, 2));
  CHECK_THROWS_AS(ad::add(a, b), InvalidArgument);
  CHECK_THROWS_AS(ad::matmul(a, a), InvalidArgument);
  CHECK_THROWS_AS(ad::linear(a, b), InvalidArgument);
  CHECK_THROWS_AS(ad::reshape(a, 4, 2), InvalidArgument);
  CHECK_THROWS_AS(ad::slice_cols(a, 2, 2), InvalidArgument);
  CHECK_THROWS_AS(ad::gather_rows(a, {5}), InvalidArgument);
}
