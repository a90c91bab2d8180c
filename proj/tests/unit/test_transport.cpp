#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "mcrfm/error.hpp"
#include "mcrfm/geometry.hpp"
#include "mcrfm/transport.hpp"

using namespace mcrfm;

namespace {

transport::Field constant_field(ad::Tape& tape, Matrix vh, Matrix ve) {
  return [&tape, vh, ve](const pm::Batch&, const Matrix&) {
    return pm::Velocity{tape.constant(vh), tape.constant(ve)};
  };
}

}  // namespace

TEST_CASE("zero field leaves the state unchanged") {
  ad::Tape tape;
  const Matrix zh = testing::random_matrix(3, 4, 1, -0.4, 0.4);
  const Matrix ze = testing::random_matrix(3, 2, 2);
  const transport::Result r = transport::integrate({tape.constant(zh), tape.constant(ze)},
                                                   constant_field(tape, Matrix(3, 4), Matrix(3, 2)), 1.0,
                                                   {.nfe = 5, .record_trajectory = true});
  for (std::size_t k = 0; k < zh.size(); ++k) CHECK(r.state.z_h.value().data[k] == doctest::Approx(zh.data[k]).epsilon(1e-12));
  CHECK(r.state.z_e.value() == ze);
  CHECK(r.gaps.size() == 6);
}

TEST_CASE("constant field integrates exactly in the chart") {
  ad::Tape tape;
  const geo::Curvature c(1.0);
  Matrix vh(1, 2, std::vector<double>{0.3, -0.1});
  Matrix ve(1, 1, 2.0);
  for (int nfe : {1, 3, 8}) {
    const transport::Result r = transport::integrate({tape.constant(Matrix(1, 2)), tape.constant(Matrix(1, 1))},
                                                     constant_field(tape, vh, ve), 1.0, {.nfe = nfe});
    const geo::BallPoint ref = geo::exp0({{0.3, -0.1}}, c);
    CHECK(r.state.z_h.value().data[0] == doctest::Approx(ref.coords()[0]).epsilon(1e-12));
    CHECK(r.state.z_e.value().data[0] == doctest::Approx(2.0).epsilon(1e-12));
  }
}

TEST_CASE("enormous chart velocities stay inside the ball") {
  ad::Tape tape;
  for (double cv : {0.5, 1.0, 2.0}) {
    for (int nfe = 1; nfe <= 64; nfe += 7) {
      const Matrix vh = testing::random_matrix(4, 3, 100 + nfe, -1e6, 1e6);
      const transport::Result r =
          transport::integrate({tape.constant(testing::random_matrix(4, 3, nfe, -0.3, 0.3)), tape.constant(Matrix(4, 0))},
                               constant_field(tape, vh, Matrix(4, 0)), cv, {.nfe = nfe, .record_trajectory = true});
      for (const auto& step : r.gaps) {
        for (double g : step) CHECK(g >= 1e-5 - 1e-15);
      }
    }
  }
}

TEST_CASE("non-finite velocity is reported as divergence") {
  ad::Tape tape;
  const transport::Result ok = transport::integrate({tape.constant(Matrix(1, 1)), tape.constant(Matrix(1, 1))},
                                                    constant_field(tape, Matrix(1, 1), Matrix(1, 1)), 1.0, {});
  CHECK(ok.gaps.empty());
  CHECK_THROWS_WITH_AS(transport::integrate({tape.constant(Matrix(1, 1)), tape.constant(Matrix(1, 1))},
                                            constant_field(tape, Matrix(1, 1, NAN), Matrix(1, 1)), 1.0, {.nfe = 2}),
                       doctest::Contains("step"), DivergenceError);
}

TEST_CASE("boundary gaps") {
  const std::vector<double> g = transport::boundary_gaps(Matrix(2, 2, std::vector<double>{0.0, 0.0, 0.6, 0.0}), 1.0);
  CHECK(g[0] == 1.0);
  CHECK(g[1] == doctest::Approx(0.4));
}
