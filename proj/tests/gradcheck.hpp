#pragma once

// Central finite-difference checks for the tape.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mcrfm/autodiff.hpp"
#include "mcrfm/rng.hpp"

namespace testing {

inline double rel_err(double a, double f) {
  return std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-6});
}

/// Builds the graph from `inputs` (bound as parameters) and returns a scalar.
using Graph = std::function<mcrfm::ad::Var(mcrfm::ad::Tape&, std::vector<mcrfm::ad::Var>&)>;

/// Max relative error between analytic and central-difference gradients.
inline double max_grad_error(std::vector<mcrfm::ad::ParamTensor>& inputs, const Graph& graph, double h = 1e-5) {
  using namespace mcrfm;
  auto eval = [&](bool backward) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (ad::ParamTensor& p : inputs) vars.push_back(tape.param(p));
    ad::Var out = graph(tape, vars);
    if (backward) tape.backward(out);
    return out.scalar();
  };
  for (ad::ParamTensor& p : inputs) p.zero_grad();
  eval(true);
  double worst = 0.0;
  for (ad::ParamTensor& p : inputs) {
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double x = p.value.data[k];
      p.value.data[k] = x + h;
      const double fp = eval(false);
      p.value.data[k] = x - h;
      const double fm = eval(false);
      p.value.data[k] = x;
      worst = std::max(worst, rel_err(p.grad.data[k], (fp - fm) / (2.0 * h)));
    }
  }
  return worst;
}

inline mcrfm::ad::ParamTensor random_param(const char* name, std::size_t r, std::size_t c, double lo, double hi,
                                           std::uint64_t key) {
  mcrfm::CounterRng rng(key);
  mcrfm::Matrix m(r, c);
  for (double& v : m.data) v = rng.uniform(lo, hi);
  return {name, std::move(m)};
}

}  // namespace testing
