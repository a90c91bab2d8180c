#pragma once

#include <string>
#include <vector>

#include "mcrfm/autodiff.hpp"
#include "mcrfm/rng.hpp"

namespace mcrfm::nn {

using ParamList = std::vector<ad::ParamTensor*>;

/// Affine layer y = x W^T + b. Weights are fan-in uniform U(-1/sqrt(in), 1/sqrt(in))
/// unless zero-initialized; biases start at zero.
struct Dense {
  ad::ParamTensor weight;
  ad::ParamTensor bias;
  bool has_bias = true;

  static Dense make(const std::string& name, std::size_t in, std::size_t out, CounterRng& rng,
                    bool zero_init = false, bool with_bias = true);

  struct Bound {
    ad::Var w;
    ad::Var b;
    bool has_bias = true;
    ad::Var operator()(ad::Var x) const { return has_bias ? ad::linear(x, w, b) : ad::linear(x, w); }
  };
  Bound bind(ad::Tape& tape);
  void collect(ParamList& out);
};

ad::ParamTensor constant_param(const std::string& name, std::size_t rows, std::size_t cols, double value);

/// Inverse of softplus for positive targets.
double softplus_inverse(double y);
/// Inverse of the logistic function on (0, 1).
double logit(double p);

}  // namespace mcrfm::nn
