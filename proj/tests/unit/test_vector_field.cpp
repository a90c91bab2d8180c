#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "mcrfm/error.hpp"
#include "mcrfm/vector_field.hpp"

using namespace mcrfm;

TEST_CASE("time embedding") {
  const std::vector<double> e0 = field::time_embed(0.0, 8, 1000.0);
  for (std::size_t j = 0; j < 8; ++j) CHECK(e0[j] == (j % 2 == 0 ? 0.0 : 1.0));
  const std::vector<double> e = field::time_embed(0.5, 8, 1000.0);
  CHECK(e[0] == doctest::Approx(0.4794255386).epsilon(1e-9));
  CHECK(e[1] == doctest::Approx(0.8775825619).epsilon(1e-9));
  CHECK(e[6] == doctest::Approx(std::sin(500.0)).epsilon(1e-9));
  const Matrix m = field::time_embed(Matrix(2, 1, std::vector<double>{0.0, 0.5}), 8, 1000.0);
  for (std::size_t j = 0; j < 8; ++j) CHECK(m(1, j) == e[j]);
}

TEST_CASE("untrained field is identically zero") {
  ModelConfig cfg = testing::small_model();
  CounterRng rng(3);
  field::VectorFieldParams p = field::VectorFieldParams::make(cfg, rng);
  ad::Tape tape;
  const field::Bound b = field::bind(tape, p);
  const pm::Batch z{tape.constant(testing::random_matrix(5, 4, 1, -0.3, 0.3)),
                    tape.constant(testing::random_matrix(5, 3, 2))};
  const pm::Velocity v =
      field::eval_field(b, z, testing::random_matrix(5, 1, 3, 0.0, 1.0), tape.constant(Matrix(1, 6, 0.7)), cfg);
  CHECK(v.v_h.rows() == 5);
  CHECK(v.v_h.cols() == 4);
  CHECK(v.v_e.cols() == 3);
  for (double x : v.v_h.value().data) CHECK(x == 0.0);
  for (double x : v.v_e.value().data) CHECK(x == 0.0);
  CHECK_THROWS_AS(field::eval_field(b, z, Matrix(4, 1), tape.constant(Matrix(1, 6)), cfg), InvalidArgument);
  CHECK_THROWS_AS(field::eval_field(b, z, Matrix(5, 1), tape.constant(Matrix(1, 5)), cfg), InvalidArgument);
}

TEST_CASE("field output depends on the context") {
  ModelConfig cfg = testing::small_model();
  CounterRng rng(4);
  field::VectorFieldParams p = field::VectorFieldParams::make(cfg, rng);
  for (double& w : p.head_e.weight.value.data) w = 0.3;
  ad::Tape tape;
  const field::Bound b = field::bind(tape, p);
  const pm::Batch z{tape.constant(Matrix(1, 4, 0.1)), tape.constant(Matrix(1, 3, 0.2))};
  const Matrix t(1, 1, 0.4);
  const double a = field::eval_field(b, z, t, tape.constant(Matrix(1, 6, 0.0)), cfg).v_e.value().data[0];
  const double c = field::eval_field(b, z, t, tape.constant(Matrix(1, 6, 1.0)), cfg).v_e.value().data[0];
  CHECK(a != c);
}
