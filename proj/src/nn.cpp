#include "mcrfm/nn.hpp"

#include <cmath>

#include "mcrfm/error.hpp"

namespace mcrfm::nn {

Dense Dense::make(const std::string& name, std::size_t in, std::size_t out, CounterRng& rng,
                  bool zero_init, bool with_bias) {
  Dense d;
  Matrix w(out, in);
  if (!zero_init && in > 0) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w.data) v = rng.uniform(-bound, bound);
  }
  d.weight = ad::ParamTensor(name + ".weight", std::move(w));
  d.has_bias = with_bias;
  if (with_bias) d.bias = ad::ParamTensor(name + ".bias", Matrix(1, out));
  return d;
}

Dense::Bound Dense::bind(ad::Tape& tape) {
  Bound b;
  b.w = tape.param(weight);
  b.has_bias = has_bias;
  if (has_bias) b.b = tape.param(bias);
  return b;
}

void Dense::collect(ParamList& out) {
  out.push_back(&weight);
  if (has_bias) out.push_back(&bias);
}

ad::ParamTensor constant_param(const std::string& name, std::size_t rows, std::size_t cols, double value) {
  return {name, Matrix(rows, cols, value)};
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw InvalidArgument("softplus_inverse: target must be positive");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("logit: argument must lie in (0, 1)");
  return std::log(p / (1.0 - p));
}

}  // namespace mcrfm::nn
