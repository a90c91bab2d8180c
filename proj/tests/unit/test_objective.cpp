#include <cmath>
#include <limits>

#include "doctest.h"
#include "gradcheck.hpp"
#include "mcrfm/error.hpp"
#include "mcrfm/objective.hpp"

using namespace mcrfm;

namespace {

ad::Var row(ad::Tape& t, std::vector<double> v) { return t.constant(Matrix::row_vector(std::move(v))); }

heads::Gate unit_gate(ad::Tape& t) {
  return {t.constant(Matrix(1, 1, 0.5)), t.constant(Matrix(1, 1, 1.0)), t.constant(Matrix(1, 1, 1.0))};
}

}  // namespace

TEST_CASE("smoothed cross-entropy example") {
  ad::Tape t;
  ad::Var logits = row(t, {1.0, 0.0, 0.0});
  CHECK(objective::ce_loss(logits, {0}, 0.1).scalar() == doctest::Approx(0.65144471393).epsilon(1e-10));
  CHECK(objective::ce_value(logits.value(), {0}, 0.1) == doctest::Approx(0.65144471393).epsilon(1e-10));
  ad::Var flat = row(t, {0.0, 0.0});
  CHECK(objective::ce_loss(flat, {1}, 0.0).scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("cross-entropy argument checks") {
  ad::Tape t;
  ad::Var logits = row(t, {1.0, 0.0, 0.0});
  CHECK_THROWS_AS(objective::ce_loss(logits, {3}, 0.1), InvalidArgument);
  CHECK_THROWS_AS(objective::ce_loss(logits, {-1}, 0.1), InvalidArgument);
  CHECK_THROWS_AS(objective::ce_loss(logits, {0, 1}, 0.1), InvalidArgument);
  CHECK_THROWS_AS(objective::ce_loss(logits, {0}, 1.0), InvalidArgument);
  CHECK_THROWS_AS(objective::ce_loss(row(t, {1.0}), {0}, 0.0), InvalidArgument);
}

TEST_CASE("cross-entropy gradient matches finite differences") {
  std::vector<ad::ParamTensor> in = {testing::random_param("z", 4, 5, -2.0, 2.0, 1)};
  CHECK(testing::max_grad_error(in, [](ad::Tape&, std::vector<ad::Var>& v) {
          return objective::ce_loss(v[0], {0, 4, 2, 2}, 0.1);
        }) <= 1e-4);
}

TEST_CASE("ramp") {
  CHECK(objective::ramp(0, 10) == doctest::Approx(0.1));
  CHECK(objective::ramp(4, 10) == doctest::Approx(0.5));
  CHECK(objective::ramp(9, 10) == 1.0);
  CHECK(objective::ramp(30, 10) == 1.0);
  CHECK(objective::ramp(0, 0) == 1.0);
}

TEST_CASE("flow-matching terms") {
  ad::Tape t;
  const pm::Velocity pred{t.constant(Matrix(2, 2, std::vector<double>{1, 0, 0, 0})),
                          t.constant(Matrix(2, 1, std::vector<double>{3, 1}))};
  const pm::Velocity target{t.constant(Matrix(2, 2)), t.constant(Matrix(2, 1))};
  const objective::FmTerms a = objective::fm_loss(pred, target, unit_gate(t), 1.0, 1.0);
  CHECK(a.l_h.scalar() == doctest::Approx(0.5));
  CHECK(a.l_e.scalar() == doctest::Approx(5.0));
  const objective::FmTerms z = objective::fm_loss(pred, pred, unit_gate(t), 1.0, 1.0);
  CHECK(z.l_h.scalar() == 0.0);
  CHECK(z.l_e.scalar() == 0.0);
  const objective::FmTerms w = objective::fm_loss(pred, target, unit_gate(t), 0.1, 0.5);
  CHECK(w.l_h.scalar() == doctest::Approx(0.05));
  CHECK(w.l_e.scalar() == doctest::Approx(2.5));

  const pm::Velocity no_h{t.constant(Matrix(2, 0)), pred.v_e};
  const pm::Velocity no_h_t{t.constant(Matrix(2, 0)), target.v_e};
  CHECK(objective::fm_loss(no_h, no_h_t, unit_gate(t), 1.0, 1.0).l_h.scalar() == 0.0);
}

TEST_CASE("total loss and breakdown") {
  ad::Tape t;
  const objective::FmTerms fm{t.constant(Matrix(1, 1, 0.25)), t.constant(Matrix(1, 1, 2.0))};
  const objective::Total tot = objective::total_loss(fm, t.constant(Matrix(1, 1, 1.5)), 0.5);
  CHECK(tot.loss.scalar() == doctest::Approx(0.25 + 2.0 + 0.75));
  CHECK(tot.breakdown.l_fm == doctest::Approx(2.25));
  CHECK(tot.breakdown.l_total == doctest::Approx(3.0));
  const nlohmann::json j = objective::to_json(tot.breakdown);
  for (const char* k : {"L_fm_h", "L_fm_e", "L_fm", "L_ce", "L_total", "lambda_cls"}) CHECK(j.contains(k));

  const objective::FmTerms bad{t.constant(Matrix(1, 1, std::numeric_limits<double>::infinity())), fm.l_e};
  CHECK_THROWS_WITH_AS(objective::total_loss(bad, t.constant(Matrix(1, 1, 1.0)), 1.0), doctest::Contains("L_fm_h"),
                       DivergenceError);
}
